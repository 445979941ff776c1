"""Citation extraction and recursive cross-reference resolution.

Specification text cites other clauses with a small set of phrasings
("See clause 5.1.6.4 of TS 38.214", "TS 38.331 [12], clause 5.3.3", bare
"clause 6.3.2" for the same document, bare "TS 38.321" for a whole
document). References are extracted with regular expressions over those
pattern families and resolved breadth-first through the clause store's
metadata index, with per-(spec, clause) dedup so traces always terminate.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .corpus import ClauseChunk, ClauseId, SpecId
from .embedding import ScoredHit, embed
from .errors import NotFoundError, ParseError
from .spec_db import LATEST, SpecDb, VersionPolicy

logger = logging.getLogger(__name__)

_CL = r"\d+(?:\.\d+)*|[A-Z](?:\.\d+)+"
_SP = r"\d{2}\.\d{3}"

# Order matters: cross-document families first so they consume the whole
# phrase before the bare-clause / bare-TS fallbacks can fire.
_REFERENCE_RE = re.compile(
    rf"(?:sub)?clauses?\s+(?P<cl_a>{_CL})\s+(?:of|in)\s+TS\s*(?P<sp_a>{_SP})(?!\d)"
    rf"|TS\s*(?P<sp_b>{_SP})(?!\d)\s*(?:\[\d+\])?\s*,?\s+(?:sub)?clauses?\s+(?P<cl_b>{_CL})"
    rf"|(?:sub)?clauses?\s+(?P<cl_c>{_CL})"
    rf"|TS\s*(?P<sp_d>{_SP})(?!\d)\s*(?:\[\d+\])?",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Reference:
    """An extracted <spec_id, clause_id> citation.

    ``clause_id`` is None for document-level citations ("TS 38.321" with no
    clause). ``span`` is (line_index, start, end) into the source chunk's
    lines, where line 0 is the heading and body lines start at 1.
    """

    spec_id: SpecId
    clause_id: ClauseId | None
    source_chunk_uid: str
    span: tuple[int, int, int]

    @property
    def pair(self) -> tuple[str, str | None]:
        return (str(self.spec_id), str(self.clause_id) if self.clause_id else None)

    def to_record(self) -> dict:
        return {
            "spec_id": str(self.spec_id),
            "clause_id": str(self.clause_id) if self.clause_id else None,
            "source_chunk_uid": self.source_chunk_uid,
            "span": list(self.span),
        }


def _parse_match(m: re.Match) -> tuple[str, str | None]:
    if m.group("cl_a"):
        return m.group("sp_a"), m.group("cl_a")
    if m.group("cl_b"):
        return m.group("sp_b"), m.group("cl_b")
    if m.group("cl_c"):
        return None, m.group("cl_c")  # same-document reference
    return m.group("sp_d"), None


def extract_references(chunk: ClauseChunk) -> list[Reference]:
    """Extract citations from a chunk's heading and body.

    Duplicate (spec, clause) pairs keep the first span, self-references are
    dropped, and a document-level citation is subsumed when the chunk also
    cites a specific clause of the same spec.
    """
    found: dict[tuple[str, str | None], Reference] = {}
    own_pair = (str(chunk.spec_id), str(chunk.clause_id))

    for line_index, line in enumerate((chunk.heading,) + chunk.body):
        for m in _REFERENCE_RE.finditer(line):
            spec_text, clause_text = _parse_match(m)
            try:
                spec = SpecId.parse(spec_text) if spec_text else chunk.spec_id
                clause = ClauseId.parse(clause_text) if clause_text else None
            except ParseError:
                continue
            pair = (str(spec), str(clause) if clause else None)
            if pair == own_pair or pair in found:
                continue
            found[pair] = Reference(
                spec, clause, chunk.chunk_uid, (line_index, m.start(), m.end())
            )

    clause_bearing_specs = {spec for spec, clause in found if clause is not None}
    return [
        ref
        for (spec, clause), ref in found.items()
        if clause is not None or spec not in clause_bearing_specs
    ]


@dataclass(frozen=True)
class TraceNode:
    chunk_uid: str
    depth: int
    parent_chunk_uid: str | None
    via: Reference | None

    def to_record(self) -> dict:
        return {
            "chunk_uid": self.chunk_uid,
            "depth": self.depth,
            "parent_chunk_uid": self.parent_chunk_uid,
            "via": self.via.to_record() if self.via else None,
        }


@dataclass
class ResolutionTrace:
    """A forest of resolved references rooted at the depth-0 seeds."""

    nodes: list[TraceNode] = field(default_factory=list)
    max_depth_used: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def seed_uids(self) -> list[str]:
        return [n.chunk_uid for n in self.nodes if n.depth == 0]

    @property
    def referenced_uids(self) -> list[str]:
        return [n.chunk_uid for n in self.nodes if n.depth > 0]

    def to_record(self) -> dict:
        return {
            "max_depth_used": self.max_depth_used,
            "nodes": [n.to_record() for n in self.nodes],
            "warnings": list(self.warnings),
        }


def resolve_references(
    db: SpecDb,
    seeds: list[ClauseChunk],
    max_depth: int = 2,
    policy: VersionPolicy = LATEST,
) -> ResolutionTrace:
    """Breadth-first reference resolution from the seed chunks.

    Depth d+1 nodes are the resolved targets of references extracted from
    depth d nodes. A (spec, clause) already in the trace (seeds included) is
    never re-added, so resolution terminates on cyclic citation graphs.
    Document-level references are not expanded; lookups that miss become
    warnings, since citations of specs outside the corpus are expected.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    trace = ResolutionTrace()
    visited: set[tuple[str, str]] = set()
    frontier: list[ClauseChunk] = []

    for seed in seeds:
        key = (str(seed.spec_id), str(seed.clause_id))
        if key in visited:
            continue
        visited.add(key)
        trace.nodes.append(TraceNode(seed.chunk_uid, 0, None, None))
        frontier.append(seed)

    for depth in range(1, max_depth + 1):
        next_frontier: list[ClauseChunk] = []
        for parent in frontier:
            for ref in extract_references(parent):
                if ref.clause_id is None:
                    continue
                key = (str(ref.spec_id), str(ref.clause_id))
                if key in visited:
                    continue
                visited.add(key)
                try:
                    target = db.lookup_clause(ref.spec_id, ref.clause_id, policy)
                except NotFoundError:
                    trace.warnings.append(
                        f"unresolved reference {key[0]} clause {key[1]} "
                        f"(cited by {parent.chunk_uid})"
                    )
                    continue
                trace.nodes.append(
                    TraceNode(target.chunk_uid, depth, parent.chunk_uid, ref)
                )
                trace.max_depth_used = depth
                next_frontier.append(target)
        frontier = next_frontier
        if not frontier:
            break
    return trace


def rank_referenced(
    db: SpecDb,
    trace: ResolutionTrace,
    query_like_text: str,
    top_k: int | None,
) -> list[ScoredHit]:
    """Rank the trace's non-seed chunks by similarity to the query text.

    ``top_k`` of None means no cut (used by the evaluation harness for
    unbounded budgets).
    """
    candidates = set(trace.referenced_uids)
    if not candidates:
        return []
    if top_k is None:
        top_k = len(candidates)
    if top_k < 0:
        raise ValueError("top_k must be >= 0")
    if top_k == 0:
        return []
    query = embed([query_like_text], db.provider)[0]
    return db.index.search(query, top_k, restrict_to=candidates)
