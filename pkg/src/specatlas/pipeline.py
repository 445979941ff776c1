"""End-to-end answer flow: HyDE, retrieval, resolution, evolution, generation.

The stages mirror how an expert works the corpus: retrieve the most relevant
clauses, chase their citations, then pull the change history and the Change
Requests that explain why things changed. The three context sections are
assembled in a fixed order (initial, referenced, evolution) and the whole
flow is deterministic under the mock embedder and null generator.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from importlib import resources

from .change_db import ChangeDb, search_changes
from .corpus import SpecId
from .crossref import ResolutionTrace, rank_referenced, resolve_references
from .embedding import ProviderConfig, ScoredHit, format_citation_tag, generate
from .errors import ParseError, ProviderError, PromptTooLargeError
from .spec_db import LATEST, SpecDb, VersionPolicy
from .tdoc_db import TdocDb, filter_and_rank_tdocs

logger = logging.getLogger(__name__)

HYDE_TEMPLATE = (
    "Write a short technical passage, in the style of a 5G specification, "
    "that would answer: {query}"
)

_SPEC_MENTION_RE = re.compile(
    r"(?:TS\s*)?(?<![\d.])(\d{2})\.(\d{3})(?!\d)|\b(\d{2})(\d{3})\b"
)

SECTION_INITIAL = "initial"
SECTION_REFERENCED = "referenced"
SECTION_EVOLUTION = "evolution"


@dataclass(frozen=True)
class RetrievalConfig:
    """Retrieval budgets: k1 initial clauses, k2 referenced clauses, k3
    rationale chunks, plus the reference-resolution depth limit."""

    k1: int = 4
    k2: int = 3
    k3: int = 3
    max_depth: int = 2
    hyde_enabled: bool = True
    version_policy: VersionPolicy = LATEST

    def __post_init__(self) -> None:
        if min(self.k1, self.k2, self.k3, self.max_depth) < 0:
            raise ValueError("retrieval parameters must be >= 0")


@dataclass(frozen=True)
class ContextChunk:
    section: str
    chunk_uid: str
    score: float

    def to_record(self) -> dict:
        return {"section": self.section, "chunk_uid": self.chunk_uid, "score": self.score}


@dataclass
class QueryResult:
    """Answer plus full retrieval provenance for one query.

    ``timings`` (per-stage seconds) are excluded from the canonical JSON so
    repeated runs with deterministic providers serialize byte-identically;
    pass include_timings=True to embed them.
    """

    question: str
    answer: str | None
    hyde_text: str | None
    context_chunks: list[ContextChunk]
    resolution_trace: ResolutionTrace
    change_hits: list[ScoredHit]
    tdoc_hits: list[ScoredHit]
    warnings: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def to_record(self, include_timings: bool = False) -> dict:
        record = {
            "question": self.question,
            "answer": self.answer,
            "hyde_text": self.hyde_text,
            "context_chunks": [c.to_record() for c in self.context_chunks],
            "resolution_trace": self.resolution_trace.to_record(),
            "change_hits": [h.to_record() for h in self.change_hits],
            "tdoc_hits": [h.to_record() for h in self.tdoc_hits],
            "warnings": list(self.warnings),
        }
        if include_timings:
            record["timings"] = dict(self.timings)
        return record

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(
            self.to_record(include_timings), ensure_ascii=False, indent=2
        )


def default_prompt_template() -> str:
    return (
        resources.files("specatlas").joinpath("templates/answer_prompt.txt").read_text("utf-8")
    )


def hyde_expand(
    query: str,
    gen_provider: ProviderConfig,
    warnings: list[str] | None = None,
) -> str:
    """Expand a query into a hypothetical specification passage.

    With the null generator (generation disabled) the query passes through
    unchanged; a failing backend also degrades to passthrough, with a warning
    recorded in the given sink.
    """
    if not query.strip():
        raise ValueError("empty query")
    if gen_provider.kind == "null-generate":
        return query
    try:
        return generate(HYDE_TEMPLATE.format(query=query), gen_provider)
    except (ProviderError, PromptTooLargeError) as exc:
        logger.warning("HyDE generation failed, using raw query: %s", exc)
        if warnings is not None:
            warnings.append(f"hyde: {exc}")
        return query


def extract_spec_mentions(query: str, extra_extractor=None) -> list[SpecId]:
    """Find explicit spec-id mentions ("TS 38.213", "38.213", "38213"),
    deduplicated in order of appearance.

    ``extra_extractor`` (query -> list[SpecId]) may augment the rule-based
    result, never replace it.
    """
    out: list[SpecId] = []
    seen: set[str] = set()
    for m in _SPEC_MENTION_RE.finditer(query):
        series = m.group(1) or m.group(3)
        number = m.group(2) or m.group(4)
        spec = SpecId(series, number)
        if str(spec) not in seen:
            seen.add(str(spec))
            out.append(spec)
    if extra_extractor is not None:
        try:
            for spec in extra_extractor(query):
                if str(spec) not in seen:
                    seen.add(str(spec))
                    out.append(spec)
        except Exception as exc:  # hook failures must not break the rule-based path
            logger.warning("spec-mention extractor hook failed: %s", exc)
    return out


def evolution_retrieve(
    query: str,
    config: RetrievalConfig,
    change_db: ChangeDb,
    tdoc_db: TdocDb,
    gen_provider: ProviderConfig,
    hyde_text: str | None = None,
    warnings: list[str] | None = None,
) -> tuple[list[ScoredHit], list[ScoredHit]]:
    """Locate change entries and CR rationale chunks for a query.

    A query that names a spec id skips the change store entirely and filters
    CRs by that spec; otherwise the top change hit supplies the spec filter.
    """
    if config.k3 == 0:
        return [], []
    if hyde_text is None:
        hyde_text = hyde_expand(query, gen_provider, warnings)

    spec_ids = extract_spec_mentions(query)
    change_hits: list[ScoredHit] = []
    if not spec_ids:
        change_hits = search_changes(change_db, hyde_text, config.k3)
        if change_hits:
            top_entry = change_db.entry(change_hits[0].item_uid)
            spec_ids = [top_entry.spec_id]
    tdoc_hits = filter_and_rank_tdocs(tdoc_db, spec_ids, hyde_text, config.k3)
    return change_hits, tdoc_hits


def _render_clause(db: SpecDb, hit: ScoredHit) -> str:
    chunk = db.chunk(hit.item_uid)
    header = (
        f"{format_citation_tag(chunk.chunk_uid)} TS {chunk.spec_id} "
        f"clause {chunk.clause_id} (v{chunk.version.short()}) {chunk.heading}".rstrip()
    )
    return "\n".join([header, *chunk.body])


def _render_tdoc(db: TdocDb, hit: ScoredHit) -> str:
    chunk = db.chunk(hit.item_uid)
    header = (
        f"{format_citation_tag(chunk.chunk_uid)} TS {chunk.spec_id} "
        f"CR {chunk.tdoc_id} ({chunk.date.isoformat() if chunk.date else 'undated'})"
    )
    return "\n".join(
        [
            header,
            f"Change: {chunk.change_text}",
            f"Reason: {chunk.reason}",
            f"Consequence: {chunk.consequence}",
        ]
    )


def _render_section(blocks: list[str]) -> str:
    return "\n\n".join(blocks) if blocks else "(none)"


def assemble_prompt(
    template: str,
    question: str,
    spec_db: SpecDb,
    tdoc_db: TdocDb,
    initial_hits: list[ScoredHit],
    referenced_hits: list[ScoredHit],
    tdoc_hits: list[ScoredHit],
) -> str:
    return template.format(
        question=question,
        initial_context=_render_section([_render_clause(spec_db, h) for h in initial_hits]),
        referenced_context=_render_section([_render_clause(spec_db, h) for h in referenced_hits]),
        evolution_context=_render_section([_render_tdoc(tdoc_db, h) for h in tdoc_hits]),
    )


def answer_query(
    question: str,
    config: RetrievalConfig,
    spec_db: SpecDb,
    change_db: ChangeDb,
    tdoc_db: TdocDb,
    gen_provider: ProviderConfig,
    prompt_template: str | None = None,
) -> QueryResult:
    """Run the full pipeline and return the answer with provenance.

    Generation failures yield a partial result: context and trace present,
    answer None, with the failure recorded in warnings.
    """
    if not question.strip():
        raise ValueError("empty question")
    if prompt_template is None:
        prompt_template = default_prompt_template()
    warnings: list[str] = []
    timings: dict[str, float] = {}
    started = time.perf_counter()

    t0 = time.perf_counter()
    if config.hyde_enabled:
        hyde_text = hyde_expand(question, gen_provider, warnings)
    else:
        hyde_text = question
    timings["hyde"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    initial_hits = spec_db.semantic_search(hyde_text, config.k1, config.version_policy)
    timings["initial_retrieval"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    seeds = [spec_db.chunk(h.item_uid) for h in initial_hits]
    trace = resolve_references(spec_db, seeds, config.max_depth, config.version_policy)
    # Referenced chunks are ranked against the original question, not the
    # HyDE passage, so chained definitions stay anchored to what was asked.
    referenced_hits = rank_referenced(spec_db, trace, question, config.k2)
    timings["reference_resolution"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    change_hits, tdoc_hits = evolution_retrieve(
        question, config, change_db, tdoc_db, gen_provider, hyde_text, warnings
    )
    timings["evolution"] = time.perf_counter() - t0

    context = (
        [ContextChunk(SECTION_INITIAL, h.item_uid, h.score) for h in initial_hits]
        + [ContextChunk(SECTION_REFERENCED, h.item_uid, h.score) for h in referenced_hits]
        + [ContextChunk(SECTION_EVOLUTION, h.item_uid, h.score) for h in tdoc_hits]
    )

    t0 = time.perf_counter()
    prompt = assemble_prompt(
        prompt_template, question, spec_db, tdoc_db, initial_hits, referenced_hits, tdoc_hits
    )
    answer: str | None
    try:
        answer = generate(prompt, gen_provider)
    except (ProviderError, PromptTooLargeError) as exc:
        logger.warning("generation failed: %s", exc)
        warnings.append(f"generation: {exc}")
        answer = None
    timings["generation"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - started

    return QueryResult(
        question=question,
        answer=answer,
        hyde_text=hyde_text if hyde_text != question else None,
        context_chunks=context,
        resolution_trace=trace,
        change_hits=change_hits,
        tdoc_hits=tdoc_hits,
        warnings=warnings,
        timings=timings,
    )
