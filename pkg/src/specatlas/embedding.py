"""Embedding/generation providers and the exact cosine vector index.

The mock embedder and the null generator make every downstream module fully
offline and deterministic; remote providers speak a minimal JSON-over-HTTP
contract (``POST /embed {"texts": [...]}`` -> ``{"vectors": [[...]]}``,
``POST /generate {"prompt": ...}`` -> ``{"text": ...}``). Vendor APIs are
expected to be adapted to this contract by a gateway process.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from .errors import ProviderError, PromptTooLargeError

logger = logging.getLogger(__name__)

#: Environment variable whose value is passed through as a bearer token.
API_KEY_ENV = "SPECATLAS_API_KEY"

EMBED_KINDS = ("mock-embed", "remote-embed")
GENERATE_KINDS = ("null-generate", "remote-generate")

#: Citation tag rendered in front of every context chunk in generation
#: prompts. The null generator echoes the tagged uids, which gives golden
#: end-to-end tests a deterministic "answer".
_CITE_TAG_RE = re.compile(r"\[cite:\s*([^\]]+)\]")


def format_citation_tag(item_uid: str) -> str:
    return f"[cite: {item_uid}]"


@dataclass(frozen=True)
class ProviderConfig:
    """Configuration for one embedding or generation backend."""

    kind: str
    endpoint: str = ""
    model_name: str = ""
    dim: int = 0
    timeout: float = 30.0
    retry_count: int = 2
    max_prompt_chars: int = 200_000

    def __post_init__(self) -> None:
        if self.kind not in EMBED_KINDS + GENERATE_KINDS:
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind.startswith("remote") and not self.endpoint:
            raise ValueError(f"{self.kind} provider requires an endpoint")
        if self.kind == "mock-embed" and self.dim <= 0:
            raise ValueError("mock-embed provider requires dim > 0")

    @classmethod
    def mock_embed(cls, dim: int = 64) -> "ProviderConfig":
        return cls(kind="mock-embed", dim=dim)

    @classmethod
    def null_generate(cls) -> "ProviderConfig":
        return cls(kind="null-generate")


@dataclass(frozen=True)
class ScoredHit:
    """One retrieval hit. Hit lists are sorted by descending score, ties
    broken by ascending item_uid."""

    item_uid: str
    score: float

    def to_record(self) -> dict:
        return {"item_uid": self.item_uid, "score": self.score}


def _tokenize(text: str) -> list[str]:
    return re.findall(r"[0-9a-z]+", text.lower())


def _token_bucket(token: str, dim: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % dim


def _mock_embed_one(text: str, dim: int) -> np.ndarray:
    tokens = _tokenize(text)
    if not tokens:
        raise ValueError(f"cannot embed empty text (no tokens): {text!r}")
    vec = np.zeros(dim, dtype=np.float32)
    for token in tokens:
        vec[_token_bucket(token, dim)] += 1.0
    return vec / np.linalg.norm(vec)


def _auth_headers() -> dict[str, str]:
    key = os.environ.get(API_KEY_ENV)
    return {"Authorization": f"Bearer {key}"} if key else {}


def _post_with_retries(provider: ProviderConfig, path: str, payload: dict) -> dict:
    url = provider.endpoint.rstrip("/") + path
    attempts = provider.retry_count + 1
    last_status: int | None = None
    last_error = ""
    for attempt in range(attempts):
        if attempt:
            time.sleep(min(0.1 * 2 ** (attempt - 1), 2.0))
        try:
            response = httpx.post(
                url, json=payload, timeout=provider.timeout, headers=_auth_headers()
            )
        except httpx.HTTPError as exc:
            last_status, last_error = None, str(exc)
            continue
        if response.status_code == 200:
            return response.json()
        last_status, last_error = response.status_code, response.text[:200]
    raise ProviderError(
        f"{url} failed after {attempts} attempts: {last_error}", status_code=last_status
    )


def embed(texts: list[str], provider: ProviderConfig) -> np.ndarray:
    """Embed texts into unit-normalized float32 vectors, one row per text."""
    if not texts:
        raise ValueError("embed() requires at least one text")
    if provider.kind == "mock-embed":
        return np.stack([_mock_embed_one(t, provider.dim) for t in texts])
    if provider.kind == "remote-embed":
        for t in texts:
            if not t.strip():
                raise ValueError("cannot embed empty text")
        data = _post_with_retries(provider, "/embed", {"texts": texts})
        matrix = np.asarray(data["vectors"], dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(texts):
            raise ProviderError(f"backend returned {matrix.shape} for {len(texts)} texts")
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        if not np.all(norms > 0):
            raise ProviderError("backend returned a zero vector")
        return matrix / norms
    raise ValueError(f"{provider.kind} is not an embedding provider")


def generate(prompt: str, provider: ProviderConfig) -> str:
    """Run a generation backend on a prompt.

    The null generator returns the uids of all [cite: ...] tags in the
    prompt, joined by commas, so pipelines stay testable offline.
    """
    if provider.kind not in GENERATE_KINDS:
        raise ValueError(f"{provider.kind} is not a generation provider")
    if not prompt.strip():
        raise ValueError("empty prompt")
    if len(prompt) > provider.max_prompt_chars:
        raise PromptTooLargeError(
            f"prompt is {len(prompt)} chars, budget {provider.max_prompt_chars}"
        )
    if provider.kind == "null-generate":
        return ",".join(_CITE_TAG_RE.findall(prompt))
    data = _post_with_retries(provider, "/generate", {"prompt": prompt})
    return data["text"]


_VECTOR_MAGIC = b"SPECVEC1"


def write_vectors(path: str | Path, matrix: np.ndarray) -> None:
    """Persist vectors: 16-byte header (magic, dim, count as little-endian
    int32) followed by row-major little-endian float32 data."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    count, dim = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_VECTOR_MAGIC)
        fh.write(struct.pack("<ii", dim, count))
        fh.write(matrix.tobytes())


def read_vectors(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _VECTOR_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        dim, count = struct.unpack("<ii", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != dim * count:
        raise ValueError(f"{path}: expected {dim * count} floats, found {data.size}")
    return data.reshape(count, dim)


@dataclass
class VectorIndex:
    """In-memory exact cosine-similarity index.

    Search is brute force over all (unit-normalized) rows, so rankings are
    reproducible; there is no approximate structure. Safe for concurrent
    reads once building is done.
    """

    dim: int
    _uids: list[str] = field(default_factory=list)
    _rows: dict[str, np.ndarray] = field(default_factory=dict)
    _matrix: np.ndarray | None = None

    def add(self, item_uid: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise ValueError(f"vector shape {vector.shape} does not match dim {self.dim}")
        if item_uid in self._rows:
            logger.warning("replacing vector for duplicate item_uid %s", item_uid)
        else:
            self._uids.append(item_uid)
        self._rows[item_uid] = vector
        self._matrix = None

    def __len__(self) -> int:
        return len(self._uids)

    def __contains__(self, item_uid: str) -> bool:
        return item_uid in self._rows

    @property
    def uids(self) -> list[str]:
        return list(self._uids)

    def vector(self, item_uid: str) -> np.ndarray:
        return self._rows[item_uid]

    def _stacked(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = (
                np.stack([self._rows[u] for u in self._uids])
                if self._uids
                else np.zeros((0, self.dim), dtype=np.float32)
            )
        return self._matrix

    def search(
        self,
        query_vector: np.ndarray,
        top_k: int,
        restrict_to: set[str] | None = None,
    ) -> list[ScoredHit]:
        """Exact top-k by cosine similarity, ties broken by ascending uid.

        ``restrict_to`` limits candidates to a uid subset (used for
        version-policy and metadata filtering before ranking).
        """
        if top_k < 0:
            raise ValueError("top_k must be >= 0")
        query_vector = np.asarray(query_vector, dtype=np.float32)
        if query_vector.shape != (self.dim,):
            raise ValueError(
                f"query shape {query_vector.shape} does not match dim {self.dim}"
            )
        if top_k == 0 or not self._uids:
            return []
        scores = self._stacked() @ query_vector
        candidates = [
            (-float(scores[i]), uid)
            for i, uid in enumerate(self._uids)
            if restrict_to is None or uid in restrict_to
        ]
        candidates.sort()
        return [ScoredHit(uid, -neg) for neg, uid in candidates[:top_k]]
