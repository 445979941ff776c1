"""Line-level diffs between adjacent versions of each clause.

For every (spec, clause) the observed versions are sorted by timestamp and
diffed pairwise; corpus gaps are simply absent from the chain. The first
observed version becomes an initial-addition entry, and a clause that
disappears from the next observed document version gets a removal entry.
Each entry keeps positional hunks so a version chain can be replayed
byte-exactly, plus flat added/removed/modified views used for embedding.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
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
from .errors import BuildError

logger = logging.getLogger(__name__)

DEFAULT_LINE_BUDGET = 200

INITIAL_ADDITION = "initial_addition"
MODIFICATION = "modification"
REMOVAL = "removal"


@dataclass(frozen=True)
class Hunk:
    """Replace ``old[old_start : old_start + len(removed)]`` with ``added``."""

    old_start: int
    removed: tuple[str, ...]
    added: tuple[str, ...]


@dataclass(frozen=True)
class LineDiff:
    added: tuple[str, ...]
    removed: tuple[str, ...]
    modified: tuple[tuple[str, str], ...]
    hunks: tuple[Hunk, ...]

    @property
    def is_empty(self) -> bool:
        return not self.hunks


def _lcs_table(old: list[str], new: list[str]) -> list[list[int]]:
    n, m = len(old), len(new)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        row, prev = dp[i], dp[i - 1]
        oi = old[i - 1]
        for j in range(1, m + 1):
            if oi == new[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                a, b = prev[j], row[j - 1]
                row[j] = a if a >= b else b
    return dp


def diff_lines(old: list[str], new: list[str]) -> LineDiff:
    """LCS line diff. Lines are compared byte-exact after trailing-whitespace
    strip. Within each contiguous replacement hunk the i-th removed line is
    paired with the i-th added line into ``modified``; leftovers stay in
    ``removed``/``added``.
    """
    old_keys = [line.rstrip() for line in old]
    new_keys = [line.rstrip() for line in new]

    # Trim the common prefix/suffix before the quadratic LCS.
    lo = 0
    while lo < len(old) and lo < len(new) and old_keys[lo] == new_keys[lo]:
        lo += 1
    hi_old, hi_new = len(old), len(new)
    while hi_old > lo and hi_new > lo and old_keys[hi_old - 1] == new_keys[hi_new - 1]:
        hi_old -= 1
        hi_new -= 1

    mid_old = old_keys[lo:hi_old]
    mid_new = new_keys[lo:hi_new]
    dp = _lcs_table(mid_old, mid_new)

    # Backtrack into contiguous hunks; on LCS ties prefer consuming old lines
    # first so output is deterministic.
    hunks: list[Hunk] = []
    rem: list[str] = []
    add: list[str] = []

    def close_hunk(old_pos: int) -> None:
        if rem or add:
            hunks.append(Hunk(lo + old_pos, tuple(reversed(rem)), tuple(reversed(add))))
            rem.clear()
            add.clear()

    i, j = len(mid_old), len(mid_new)
    while i > 0 or j > 0:
        if i > 0 and j > 0 and mid_old[i - 1] == mid_new[j - 1]:
            close_hunk(i)
            i -= 1
            j -= 1
        elif j > 0 and (i == 0 or dp[i][j - 1] >= dp[i - 1][j]):
            add.append(new[lo + j - 1])
            j -= 1
        else:
            rem.append(old[lo + i - 1])
            i -= 1
    close_hunk(0)
    hunks.reverse()

    added: list[str] = []
    removed: list[str] = []
    modified: list[tuple[str, str]] = []
    for hunk in hunks:
        paired = min(len(hunk.removed), len(hunk.added))
        modified.extend(zip(hunk.removed[:paired], hunk.added[:paired]))
        removed.extend(hunk.removed[paired:])
        added.extend(hunk.added[paired:])
    return LineDiff(tuple(added), tuple(removed), tuple(modified), tuple(hunks))


def apply_hunks(old: list[str], hunks: tuple[Hunk, ...]) -> list[str]:
    out: list[str] = []
    pos = 0
    for hunk in hunks:
        out.extend(old[pos : hunk.old_start])
        out.extend(hunk.added)
        pos = hunk.old_start + len(hunk.removed)
    out.extend(old[pos:])
    return out


def _capped(lines: list[str], budget: int) -> tuple[str, ...]:
    if len(lines) <= budget:
        return tuple(lines)
    return tuple(lines[:budget]) + (f"[... {len(lines) - budget} more lines]",)


@dataclass(frozen=True)
class ChangeEntry:
    """One transition of one clause between adjacent observed versions.

    ``from_version`` is None exactly for initial additions. The flat
    added/removed/modified views are capped at a per-entry line budget (with
    an overflow marker) so embedding texts stay bounded; ``hunks`` keep the
    full edit and drive replay.
    """

    spec_id: SpecId
    clause_id: ClauseId
    from_version: SpecVersion | None
    to_version: SpecVersion
    kind: str
    heading: str
    added: tuple[str, ...]
    removed: tuple[str, ...]
    modified: tuple[tuple[str, str], ...]
    hunks: tuple[Hunk, ...]

    @property
    def entry_uid(self) -> str:
        return f"chg:{self.spec_id}/{self.clause_id}@{self.to_version.short()}"

    @property
    def from_date(self) -> date | None:
        return self.from_version.timestamp if self.from_version else None

    @property
    def to_date(self) -> date | None:
        return self.to_version.timestamp

    def embedding_text(self) -> str:
        from_str = self.from_version.short() if self.from_version else "none"
        parts = [
            f"{self.spec_id} {self.clause_id} {self.heading} "
            f"change {from_str}→{self.to_version.short()}"
        ]
        parts.extend(f"+ {line}" for line in self.added)
        parts.extend(f"- {line}" for line in self.removed)
        parts.extend(f"~ {old} → {new}" for old, new in self.modified)
        return "\n".join(parts)

    def to_record(self) -> dict:
        return {
            "entry_uid": self.entry_uid,
            "spec_id": str(self.spec_id),
            "clause_id": str(self.clause_id),
            "from_version": self.from_version.short() if self.from_version else None,
            "to_version": self.to_version.short(),
            "from_date": self.from_date.isoformat() if self.from_date else None,
            "to_date": self.to_date.isoformat() if self.to_date else None,
            "kind": self.kind,
            "heading": self.heading,
            "added": list(self.added),
            "removed": list(self.removed),
            "modified": [list(pair) for pair in self.modified],
            "hunks": [
                {"old_start": h.old_start, "removed": list(h.removed), "added": list(h.added)}
                for h in self.hunks
            ],
        }

    @classmethod
    def from_record(cls, record: dict) -> "ChangeEntry":
        def _version(short: str | None, iso: str | None) -> SpecVersion | None:
            if short is None:
                return None
            ts = date.fromisoformat(iso) if iso else None
            return SpecVersion.parse(short, ts)

        return cls(
            spec_id=SpecId.parse(record["spec_id"]),
            clause_id=ClauseId.parse(record["clause_id"]),
            from_version=_version(record["from_version"], record["from_date"]),
            to_version=_version(record["to_version"], record["to_date"]),
            kind=record["kind"],
            heading=record["heading"],
            added=tuple(record["added"]),
            removed=tuple(record["removed"]),
            modified=tuple(tuple(pair) for pair in record["modified"]),
            hunks=tuple(
                Hunk(h["old_start"], tuple(h["removed"]), tuple(h["added"]))
                for h in record["hunks"]
            ),
        )


def _entries_for_clause(
    spec_versions: list[SpecVersion],
    by_version: dict[tuple[int, int, int], ClauseChunk],
    line_budget: int,
) -> list[ChangeEntry]:
    entries: list[ChangeEntry] = []
    prev_chunk: ClauseChunk | None = None
    prev_version: SpecVersion | None = None  # last doc version walked
    seen_first = False
    for version in spec_versions:
        chunk = by_version.get(version.triple)
        if chunk is not None and prev_chunk is None:
            body = list(chunk.body)
            if not seen_first:
                entries.append(
                    ChangeEntry(
                        chunk.spec_id,
                        chunk.clause_id,
                        None,
                        chunk.version,
                        INITIAL_ADDITION,
                        chunk.heading,
                        added=_capped(body, line_budget),
                        removed=(),
                        modified=(),
                        hunks=(Hunk(0, (), tuple(body)),),
                    )
                )
                seen_first = True
            else:
                # Reappearance after a removal: a modification from empty body.
                entries.append(
                    ChangeEntry(
                        chunk.spec_id,
                        chunk.clause_id,
                        prev_version,
                        chunk.version,
                        MODIFICATION,
                        chunk.heading,
                        added=_capped(body, line_budget),
                        removed=(),
                        modified=(),
                        hunks=(Hunk(0, (), tuple(body)),),
                    )
                )
        elif chunk is not None and prev_chunk is not None:
            diff = diff_lines(list(prev_chunk.body), list(chunk.body))
            if not diff.is_empty:
                entries.append(
                    ChangeEntry(
                        chunk.spec_id,
                        chunk.clause_id,
                        prev_chunk.version,
                        chunk.version,
                        MODIFICATION,
                        chunk.heading,
                        added=_capped(list(diff.added), line_budget),
                        removed=_capped(list(diff.removed), line_budget),
                        modified=diff.modified[:line_budget],
                        hunks=diff.hunks,
                    )
                )
        elif chunk is None and prev_chunk is not None:
            body = list(prev_chunk.body)
            entries.append(
                ChangeEntry(
                    prev_chunk.spec_id,
                    prev_chunk.clause_id,
                    prev_chunk.version,
                    version,
                    REMOVAL,
                    prev_chunk.heading,
                    added=(),
                    removed=_capped(body, line_budget),
                    modified=(),
                    hunks=(Hunk(0, tuple(body), ()),),
                )
            )
        prev_chunk = chunk
        prev_version = version
    return entries


class ChangeDb:
    """Read-only after build; per-clause entry chains ordered by to_version."""

    def __init__(
        self,
        entries: list[ChangeEntry],
        provider: ProviderConfig,
        vectors: np.ndarray | None = None,
    ):
        entries = sorted(
            entries,
            key=lambda e: (str(e.spec_id), e.clause_id.sort_key, e.to_version.sort_key),
        )
        self.provider = provider
        self.entries: dict[str, ChangeEntry] = {}
        self.by_clause: dict[tuple[str, str], list[str]] = {}
        self._order: list[str] = []
        for entry in entries:
            if entry.entry_uid in self.entries:
                raise BuildError(f"duplicate change entry {entry.entry_uid}")
            self.entries[entry.entry_uid] = entry
            self.by_clause.setdefault(
                (str(entry.spec_id), str(entry.clause_id)), []
            ).append(entry.entry_uid)
            self._order.append(entry.entry_uid)

        if vectors is None:
            texts = [self.entries[uid].embedding_text() for uid in self._order]
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
        return len(self.entries)

    def entry(self, entry_uid: str) -> ChangeEntry:
        return self.entries[entry_uid]

    def clause_entries(self, spec_id: SpecId | str, clause_id: ClauseId | str) -> list[ChangeEntry]:
        key = (str(spec_id), str(clause_id))
        return [self.entries[uid] for uid in self.by_clause.get(key, [])]

    def replay(self, spec_id: SpecId | str, clause_id: ClauseId | str) -> list[tuple[SpecVersion, list[str]]]:
        """Replay the entry chain, yielding the body after each entry."""
        states: list[tuple[SpecVersion, list[str]]] = []
        body: list[str] = []
        for entry in self.clause_entries(spec_id, clause_id):
            body = apply_hunks(body, entry.hunks)
            states.append((entry.to_version, list(body)))
        return states

    def search(self, query_text: str, top_k: int) -> list[ScoredHit]:
        if top_k < 0:
            raise ValueError("top_k must be >= 0")
        if top_k == 0 or not self.entries:
            return []
        query = embed([query_text], self.provider)[0]
        return self.index.search(query, top_k)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "entries.jsonl", "w", encoding="utf-8") as fh:
            for uid in self._order:
                fh.write(json.dumps(self.entries[uid].to_record(), ensure_ascii=False))
                fh.write("\n")
        matrix = (
            np.stack([self.index.vector(uid) for uid in self._order])
            if self._order
            else np.zeros((0, self.index.dim), dtype=np.float32)
        )
        write_vectors(directory / "vectors.bin", matrix)

    @classmethod
    def load(cls, directory: str | Path, provider: ProviderConfig) -> "ChangeDb":
        directory = Path(directory)
        entries = []
        with open(directory / "entries.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(ChangeEntry.from_record(json.loads(line)))
        vectors = read_vectors(directory / "vectors.bin")
        return cls(entries, provider, vectors=vectors)


def build_changedb(
    chunks: list[ClauseChunk],
    embed_provider: ProviderConfig,
    line_budget: int = DEFAULT_LINE_BUDGET,
) -> ChangeDb:
    chunks = canonical_chunk_order(chunks)

    # Document versions observed per spec (any clause present counts).
    spec_versions: dict[str, dict[tuple[int, int, int], SpecVersion]] = {}
    for chunk in chunks:
        spec_versions.setdefault(str(chunk.spec_id), {})[chunk.version.triple] = chunk.version

    clause_versions: dict[tuple[str, str], dict[tuple[int, int, int], ClauseChunk]] = {}
    for chunk in chunks:
        key = (str(chunk.spec_id), str(chunk.clause_id))
        clause_versions.setdefault(key, {})[chunk.version.triple] = chunk

    entries: list[ChangeEntry] = []
    for (spec, _clause), by_version in clause_versions.items():
        versions = sorted(spec_versions[spec].values(), key=lambda v: v.sort_key)
        entries.extend(_entries_for_clause(versions, by_version, line_budget))
    return ChangeDb(entries, embed_provider)


def search_changes(db: ChangeDb, query_text: str, top_k: int) -> list[ScoredHit]:
    return db.search(query_text, top_k)
