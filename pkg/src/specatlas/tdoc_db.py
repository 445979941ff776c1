"""Change Request (CR) parsing and the rationale store.

CR cover sheets arrive as labeled-section text files (``tdocs/<tdoc_id>.txt``):

    Spec: 38.214
    CR: 0456
    Meeting: RAN1#111
    Date: 2022-11-14
    Summary of change:
    - first change
    - second change
    Reason for change: ...
    Consequences if not approved: ...
    Clauses affected: 5.1, 7.4.1.1.2

Each enumerated change becomes its own chunk, paired with the CR's full
reason and consequence, so retrieval can surface the rationale behind one
specific change.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .corpus import ClauseId, SpecId
from .embedding import (
    ProviderConfig,
    ScoredHit,
    VectorIndex,
    embed,
    read_vectors,
    write_vectors,
)
from .errors import BuildError, ParseError

logger = logging.getLogger(__name__)

_SECTION_LABELS = {
    "spec": "spec",
    "cr": "cr",
    "meeting": "meeting",
    "date": "date",
    "status": "status",
    "title": "title",
    "summary of change": "summary",
    "reason for change": "reason",
    "consequences if not approved": "consequence",
    "clauses affected": "clauses",
}
_LABEL_RE = re.compile(
    r"^(" + "|".join(re.escape(label) for label in _SECTION_LABELS) + r")\s*:\s*(.*)$",
    re.IGNORECASE,
)
_BULLET_RE = re.compile(r"^\s*(?:[-*]|\d+\))\s+(.*)$")


@dataclass(frozen=True)
class CrDocument:
    """One parsed Change Request cover sheet."""

    tdoc_id: str
    spec_id: SpecId
    cr_number: str
    meeting: str
    date: date | None
    summary_items: tuple[str, ...]
    reason: str
    consequence: str
    clauses_affected: tuple[ClauseId, ...]
    status: str = ""


@dataclass(frozen=True)
class CrChunk:
    """One enumerated change with its parent CR's rationale attached."""

    chunk_uid: str
    tdoc_id: str
    spec_id: SpecId
    date: date | None
    change_text: str
    reason: str
    consequence: str

    def embedding_text(self) -> str:
        return (
            f"{self.spec_id} {self.change_text}\n"
            f"Reason: {self.reason}\n"
            f"Consequence: {self.consequence}"
        )

    def to_record(self) -> dict:
        return {
            "chunk_uid": self.chunk_uid,
            "tdoc_id": self.tdoc_id,
            "spec_id": str(self.spec_id),
            "date": self.date.isoformat() if self.date else None,
            "change_text": self.change_text,
            "reason": self.reason,
            "consequence": self.consequence,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CrChunk":
        return cls(
            chunk_uid=record["chunk_uid"],
            tdoc_id=record["tdoc_id"],
            spec_id=SpecId.parse(record["spec_id"]),
            date=date.fromisoformat(record["date"]) if record.get("date") else None,
            change_text=record["change_text"],
            reason=record["reason"],
            consequence=record["consequence"],
        )


def _split_sections(text: str) -> dict[str, str]:
    """Collect section text by label; unlabeled lines extend the current
    section. Labels match case-insensitively at line start."""
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        m = _LABEL_RE.match(line.strip())
        if m:
            current = _SECTION_LABELS[m.group(1).lower()]
            sections.setdefault(current, [])
            remainder = m.group(2).strip()
            if remainder:
                sections[current].append(remainder)
        elif current is not None and line.strip():
            sections[current].append(line.rstrip())
    return {name: "\n".join(lines).strip() for name, lines in sections.items()}


def _split_summary_items(summary: str) -> list[str]:
    """Split a summary on bullet/numbered markers ("-", "*", "N)").

    Continuation lines join the preceding item; a summary with no markers is
    a single item.
    """
    items: list[str] = []
    current: list[str] = []
    bulleted = False
    for line in summary.splitlines():
        m = _BULLET_RE.match(line)
        if m:
            if current:
                items.append(" ".join(current))
            current = [m.group(1).strip()]
            bulleted = True
        elif line.strip():
            current.append(line.strip())
    if current:
        items.append(" ".join(current))
    if not bulleted and items:
        items = [" ".join(items)]
    return [item for item in items if item]


def parse_cr(text: str, tdoc_id: str, source: str = "") -> CrDocument:
    """Parse a normalized CR text file into a CrDocument.

    Missing ``Spec:`` or a missing/empty summary section is fatal; missing
    reason/consequence degrade to empty text with a warning.
    """
    where = source or tdoc_id
    sections = _split_sections(text)
    if not sections.get("spec"):
        raise ParseError(f"{where}: missing 'Spec:' section")
    summary_items = _split_summary_items(sections.get("summary", ""))
    if not summary_items:
        raise ParseError(f"{where}: missing 'Summary of change:' section")

    for label, name in (("Reason for change", "reason"), ("Consequences if not approved", "consequence")):
        if name not in sections:
            logger.warning("%s: missing '%s:' section", where, label)

    parsed_date: date | None = None
    if sections.get("date"):
        try:
            parsed_date = date.fromisoformat(sections["date"].split()[0])
        except ValueError:
            logger.warning("%s: unparseable date %r", where, sections["date"])

    clauses: list[ClauseId] = []
    for token in re.split(r"[,\s]+", sections.get("clauses", "")):
        if not token:
            continue
        try:
            clauses.append(ClauseId.parse(token))
        except ParseError:
            logger.warning("%s: skipping bad clause id %r in clauses affected", where, token)

    return CrDocument(
        tdoc_id=tdoc_id,
        spec_id=SpecId.parse(sections["spec"]),
        cr_number=sections.get("cr", ""),
        meeting=sections.get("meeting", ""),
        date=parsed_date,
        summary_items=tuple(summary_items),
        reason=sections.get("reason", ""),
        consequence=sections.get("consequence", ""),
        clauses_affected=tuple(clauses),
        status=sections.get("status", ""),
    )


def _word_count(text: str) -> int:
    return len(text.split())


def is_trivial_cr(cr: CrDocument, word_limit: int = 200) -> bool:
    """True when summary, reason, and consequence are all below the word
    limit; such CRs are usually minor editorial corrections."""
    return (
        _word_count(" ".join(cr.summary_items)) < word_limit
        and _word_count(cr.reason) < word_limit
        and _word_count(cr.consequence) < word_limit
    )


def ingest_tdocs(
    directory: str | Path,
    drop_trivial: bool = False,
    trivial_word_limit: int = 200,
) -> list[CrDocument]:
    """Parse every ``*.txt`` CR in a directory; the filename stem is the
    tdoc id. Unparseable files are skipped with a warning."""
    directory = Path(directory)
    crs: list[CrDocument] = []
    for path in sorted(directory.glob("*.txt")):
        try:
            cr = parse_cr(path.read_text(encoding="utf-8"), path.stem, str(path))
        except ParseError as exc:
            logger.warning("skipping CR %s: %s", path, exc)
            continue
        if drop_trivial and is_trivial_cr(cr, trivial_word_limit):
            logger.info("dropping trivial CR %s", cr.tdoc_id)
            continue
        crs.append(cr)
    return crs


class TdocDb:
    """Read-only after build. Chunks are filterable by spec id and ranked by
    cosine similarity over their change+rationale embedding text."""

    def __init__(
        self,
        chunks: list[CrChunk],
        provider: ProviderConfig,
        vectors: np.ndarray | None = None,
    ):
        chunks = sorted(chunks, key=lambda c: c.chunk_uid)
        self.provider = provider
        self.chunks: dict[str, CrChunk] = {}
        self.by_spec: dict[str, list[str]] = {}
        self._order: list[str] = []
        for chunk in chunks:
            if chunk.chunk_uid in self.chunks:
                raise BuildError(f"duplicate CR chunk uid {chunk.chunk_uid}")
            self.chunks[chunk.chunk_uid] = chunk
            self.by_spec.setdefault(str(chunk.spec_id), []).append(chunk.chunk_uid)
            self._order.append(chunk.chunk_uid)

        if vectors is None:
            texts = [self.chunks[uid].embedding_text() for uid in self._order]
            vectors = (
                embed(texts, provider)
                if texts
                else np.zeros((0, provider.dim), dtype=np.float32)
            )
        dim = vectors.shape[1] if vectors.size else provider.dim
        self.index = VectorIndex(dim)
        for uid, row in zip(self._order, vectors):
            self.index.add(uid, row)

    def __len__(self) -> int:
        return len(self.chunks)

    def chunk(self, chunk_uid: str) -> CrChunk:
        return self.chunks[chunk_uid]

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
    def load(cls, directory: str | Path, provider: ProviderConfig) -> "TdocDb":
        directory = Path(directory)
        chunks = []
        with open(directory / "chunks.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    chunks.append(CrChunk.from_record(json.loads(line)))
        vectors = read_vectors(directory / "vectors.bin")
        return cls(chunks, provider, vectors=vectors)


def build_tdocdb(crs: list[CrDocument], embed_provider: ProviderConfig) -> TdocDb:
    seen: set[str] = set()
    chunks: list[CrChunk] = []
    for cr in crs:
        if cr.tdoc_id in seen:
            raise BuildError(f"duplicate tdoc id {cr.tdoc_id}")
        seen.add(cr.tdoc_id)
        for i, item in enumerate(cr.summary_items):
            chunks.append(
                CrChunk(
                    chunk_uid=f"{cr.tdoc_id}#{i}",
                    tdoc_id=cr.tdoc_id,
                    spec_id=cr.spec_id,
                    date=cr.date,
                    change_text=item,
                    reason=cr.reason,
                    consequence=cr.consequence,
                )
            )
    return TdocDb(chunks, embed_provider)


def filter_and_rank_tdocs(
    db: TdocDb,
    spec_ids: list[SpecId],
    query_like_text: str,
    top_k: int,
) -> list[ScoredHit]:
    """Rank CR chunks by similarity to the query-like text, restricted to the
    given spec ids (an empty list means no filter)."""
    if top_k < 0:
        raise ValueError("top_k must be >= 0")
    if top_k == 0 or not db.chunks:
        return []
    if spec_ids:
        allowed: set[str] = set()
        for spec in spec_ids:
            allowed.update(db.by_spec.get(str(spec), []))
        if not allowed:
            return []
    else:
        allowed = None
    query = embed([query_like_text], db.provider)[0]
    return db.index.search(query, top_k, restrict_to=allowed)
