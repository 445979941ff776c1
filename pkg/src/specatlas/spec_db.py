"""The clause store: exact metadata lookup plus dense retrieval over chunks.

Chunks are embedded with their identifiers and heading prepended so the
vector space carries metadata signal. At query time retrieval first picks one
chunk per (spec, clause) under a version policy, then ranks that candidate
set, so multiple versions of the same clause never compete for the k budget.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .corpus import ClauseChunk, ClauseId, SpecId, SpecVersion, canonical_chunk_order
from .embedding import (
    ProviderConfig,
    ScoredHit,
    VectorIndex,
    embed,
    read_vectors,
    write_vectors,
)
from .errors import BuildError, NotFoundError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VersionPolicy:
    """Selects which version of a clause a query sees."""

    kind: str  # "latest" | "at_or_before" | "exact"
    date: date | None = None
    version: SpecVersion | None = None

    @classmethod
    def latest(cls) -> "VersionPolicy":
        return cls("latest")

    @classmethod
    def at_or_before(cls, cutoff: date) -> "VersionPolicy":
        return cls("at_or_before", date=cutoff)

    @classmethod
    def exact(cls, version: SpecVersion) -> "VersionPolicy":
        return cls("exact", version=version)


LATEST = VersionPolicy.latest()


def embedding_text(chunk: ClauseChunk) -> str:
    return f"{chunk.spec_id} {chunk.clause_id} {chunk.heading}\n" + "\n".join(chunk.body)


class SpecDb:
    """Read-only after build; safe for concurrent queries."""

    def __init__(
        self,
        chunks: list[ClauseChunk],
        provider: ProviderConfig,
        vectors: np.ndarray | None = None,
    ):
        chunks = canonical_chunk_order(chunks)
        collisions = {}
        for chunk in chunks:
            key = (str(chunk.spec_id), str(chunk.clause_id), chunk.version.triple)
            collisions.setdefault(key, []).append(chunk.chunk_uid)
        duplicated = {k: v for k, v in collisions.items() if len(v) > 1}
        if duplicated:
            raise BuildError(f"duplicate (spec, clause, version) chunks: {duplicated}")

        self.provider = provider
        self.chunks: dict[str, ClauseChunk] = {c.chunk_uid: c for c in chunks}
        self._order = [c.chunk_uid for c in chunks]

        # (spec, clause) -> chunk uids sorted ascending by version
        self.meta_index: dict[tuple[str, str], list[str]] = {}
        for chunk in chunks:
            key = (str(chunk.spec_id), str(chunk.clause_id))
            self.meta_index.setdefault(key, []).append(chunk.chunk_uid)
        for key, uids in self.meta_index.items():
            uids.sort(key=lambda uid: self.chunks[uid].version.sort_key)

        if vectors is None:
            texts = [embedding_text(self.chunks[uid]) for uid in self._order]
            vectors = (
                embed(texts, provider)
                if texts
                else np.zeros((0, provider.dim), dtype=np.float32)
            )
        if vectors.shape[0] != len(self._order):
            raise BuildError(
                f"{vectors.shape[0]} vectors for {len(self._order)} chunks"
            )
        dim = vectors.shape[1] if vectors.size else provider.dim
        self.index = VectorIndex(dim)
        for uid, row in zip(self._order, vectors):
            self.index.add(uid, row)

    def __len__(self) -> int:
        return len(self.chunks)

    def chunk(self, chunk_uid: str) -> ClauseChunk:
        return self.chunks[chunk_uid]

    def _select(self, uids: list[str], policy: VersionPolicy) -> str | None:
        """Pick the uid selected by the policy from a version-ascending list."""
        if policy.kind == "latest":
            return uids[-1] if uids else None
        if policy.kind == "at_or_before":
            best = None
            for uid in uids:
                ts = self.chunks[uid].version.timestamp
                if ts is not None and ts <= policy.date:
                    best = uid
            return best
        if policy.kind == "exact":
            for uid in uids:
                if self.chunks[uid].version.triple == policy.version.triple:
                    return uid
            return None
        raise ValueError(f"unknown version policy {policy.kind!r}")

    def lookup_clause(
        self,
        spec_id: SpecId | str,
        clause_id: ClauseId | str,
        policy: VersionPolicy = LATEST,
    ) -> ClauseChunk:
        spec = str(SpecId.parse(spec_id) if isinstance(spec_id, str) else spec_id)
        clause = str(ClauseId.parse(clause_id) if isinstance(clause_id, str) else clause_id)
        uids = self.meta_index.get((spec, clause))
        if not uids:
            raise NotFoundError(spec, clause)
        selected = self._select(uids, policy)
        if selected is None:
            raise NotFoundError(spec, clause, f"no version under policy {policy.kind}")
        return self.chunks[selected]

    def candidate_uids(self, policy: VersionPolicy = LATEST) -> set[str]:
        """One chunk uid per (spec, clause) under the policy."""
        out = set()
        for uids in self.meta_index.values():
            selected = self._select(uids, policy)
            if selected is not None:
                out.add(selected)
        return out

    def semantic_search(
        self, query_text: str, top_k: int, policy: VersionPolicy = LATEST
    ) -> list[ScoredHit]:
        if top_k < 0:
            raise ValueError("top_k must be >= 0")
        if top_k == 0 or not self.chunks:
            return []
        query = embed([query_text], self.provider)[0]
        return self.index.search(query, top_k, restrict_to=self.candidate_uids(policy))

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "chunks.jsonl", "w", encoding="utf-8") as fh:
            for uid in self._order:
                fh.write(json.dumps(self.chunks[uid].to_record(), ensure_ascii=False))
                fh.write("\n")
        matrix = (
            np.stack([self.index.vector(uid) for uid in self._order])
            if self._order
            else np.zeros((0, self.index.dim), dtype=np.float32)
        )
        write_vectors(directory / "vectors.bin", matrix)

    @classmethod
    def load(cls, directory: str | Path, provider: ProviderConfig) -> "SpecDb":
        directory = Path(directory)
        chunks = []
        with open(directory / "chunks.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    chunks.append(ClauseChunk.from_record(json.loads(line)))
        vectors = read_vectors(directory / "vectors.bin")
        return cls(chunks, provider, vectors=vectors)


def build_specdb(chunks: list[ClauseChunk], embed_provider: ProviderConfig) -> SpecDb:
    return SpecDb(chunks, embed_provider)
