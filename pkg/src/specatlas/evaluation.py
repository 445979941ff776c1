"""Cross-reference retrieval scoring against a gold set of helpful references.

The gold file is a CSV with header ``source_chunk_uid,spec_id,clause_id,label``
where label is "helpful" or "unhelpful". For each gold source chunk the
microbenchmark runs the standalone resolver (semantic seeds, reference
resolution, reference ranking) and collects every citation pair extracted
from the seed and ranked chunks; those pairs are scored per source against
the helpful rows. Both macro (per-source mean) and micro (count-summed)
aggregates are reported.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

from .corpus import ClauseId, SpecId
from .crossref import extract_references, rank_referenced, resolve_references
from .errors import ParseError
from .spec_db import LATEST, SpecDb, VersionPolicy, embedding_text

logger = logging.getLogger(__name__)

HELPFUL = "helpful"
UNHELPFUL = "unhelpful"

Pair = tuple[str, str | None]


@dataclass(frozen=True)
class GoldReference:
    source_chunk_uid: str
    spec_id: str
    clause_id: str | None
    label: str


@dataclass
class GoldReferenceSet:
    rows: list[GoldReference]

    def __post_init__(self) -> None:
        seen: set[tuple[str, Pair]] = set()
        for row in self.rows:
            if row.label not in (HELPFUL, UNHELPFUL):
                raise ParseError(f"bad label {row.label!r} for {row.source_chunk_uid}")
            key = (row.source_chunk_uid, (row.spec_id, row.clause_id))
            if key in seen:
                raise ParseError(f"duplicate gold row {key}")
            seen.add(key)

    @property
    def sources(self) -> list[str]:
        out: list[str] = []
        for row in self.rows:
            if row.source_chunk_uid not in out:
                out.append(row.source_chunk_uid)
        return out

    def helpful_pairs(self, source_chunk_uid: str) -> set[Pair]:
        return {
            (row.spec_id, row.clause_id)
            for row in self.rows
            if row.source_chunk_uid == source_chunk_uid and row.label == HELPFUL
        }

    @classmethod
    def from_csv(cls, path: str | Path) -> "GoldReferenceSet":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls._from_reader(fh, str(path))

    @classmethod
    def from_csv_text(cls, text: str) -> "GoldReferenceSet":
        return cls._from_reader(io.StringIO(text), "<text>")

    @classmethod
    def _from_reader(cls, fh, where: str) -> "GoldReferenceSet":
        reader = csv.DictReader(fh)
        expected = ["source_chunk_uid", "spec_id", "clause_id", "label"]
        if reader.fieldnames != expected:
            raise ParseError(f"{where}: expected header {expected}, got {reader.fieldnames}")
        rows: list[GoldReference] = []
        for raw in reader:
            clause = raw["clause_id"].strip()
            rows.append(
                GoldReference(
                    source_chunk_uid=raw["source_chunk_uid"].strip(),
                    spec_id=str(SpecId.parse(raw["spec_id"])),
                    clause_id=str(ClauseId.parse(clause)) if clause else None,
                    label=raw["label"].strip().lower(),
                )
            )
        return cls(rows)


@dataclass(frozen=True)
class SourceScore:
    source_chunk_uid: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class PrfReport:
    per_source: list[SourceScore]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_tp: int
    micro_fp: int
    micro_fn: int
    micro_precision: float
    micro_recall: float
    micro_f1: float

    def to_record(self) -> dict:
        return {
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "micro_tp": self.micro_tp,
            "micro_fp": self.micro_fp,
            "micro_fn": self.micro_fn,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "per_source": [
                {
                    "source_chunk_uid": s.source_chunk_uid,
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                }
                for s in self.per_source
            ],
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp == fp == fn == 0:
        # Nothing retrieved and nothing to retrieve: vacuously perfect.
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def score_crossref(
    retrieved: dict[str, list[Pair]], gold: GoldReferenceSet
) -> PrfReport:
    """Score retrieved (spec_id, clause_id) pairs per source against the
    helpful gold rows. Retrieved sources must all appear in the gold set;
    gold sources with no retrieval score zero (when they have helpful rows).
    """
    sources = gold.sources
    extras = set(retrieved) - set(sources)
    if extras:
        raise ValueError(f"retrieved sources not in gold set: {sorted(extras)}")

    per_source: list[SourceScore] = []
    total_tp = total_fp = total_fn = 0
    for source in sources:
        pairs = retrieved.get(source, [])
        unique: list[Pair] = []
        for pair in pairs:
            if pair in unique:
                logger.warning("duplicate retrieved pair %s for %s", pair, source)
            else:
                unique.append(pair)
        helpful = gold.helpful_pairs(source)
        tp = sum(1 for pair in unique if pair in helpful)
        fp = len(unique) - tp
        fn = len(helpful) - tp
        precision, recall, f1 = _prf(tp, fp, fn)
        per_source.append(SourceScore(source, tp, fp, fn, precision, recall, f1))
        total_tp += tp
        total_fp += fp
        total_fn += fn

    if per_source:
        macro_p = sum(s.precision for s in per_source) / len(per_source)
        macro_r = sum(s.recall for s in per_source) / len(per_source)
        macro_f1 = sum(s.f1 for s in per_source) / len(per_source)
    else:
        macro_p = macro_r = macro_f1 = 1.0
    micro_p, micro_r, micro_f1 = _prf(total_tp, total_fp, total_fn)
    return PrfReport(
        per_source=per_source,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f1,
        micro_tp=total_tp,
        micro_fp=total_fp,
        micro_fn=total_fn,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f1,
    )


@dataclass(frozen=True)
class CrossrefBudget:
    """Resolver budget for the microbenchmark. k2 None = unbounded."""

    k1: int = 3
    k2: int | None = 2
    max_depth: int = 2
    version_policy: VersionPolicy = LATEST


def retrieved_pairs_for_source(
    db: SpecDb, source_chunk_uid: str, budget: CrossrefBudget
) -> list[Pair]:
    """Run the standalone resolver for one source chunk and collect every
    citation pair extracted from its seed and ranked referenced chunks."""
    source = db.chunk(source_chunk_uid)
    query_text = embedding_text(source)
    seed_hits = db.semantic_search(query_text, budget.k1, budget.version_policy)
    seeds = [db.chunk(h.item_uid) for h in seed_hits]
    trace = resolve_references(db, seeds, budget.max_depth, budget.version_policy)
    ranked = rank_referenced(db, trace, query_text, budget.k2)
    pool = seeds + [db.chunk(h.item_uid) for h in ranked]

    pairs: list[Pair] = []
    for chunk in pool:
        for ref in extract_references(chunk):
            if ref.pair not in pairs:
                pairs.append(ref.pair)
    return pairs


def run_microbenchmark(
    db: SpecDb, gold: GoldReferenceSet, budget: CrossrefBudget | None = None
) -> PrfReport:
    """Score the resolver over every gold source at the given budget."""
    budget = budget or CrossrefBudget()
    retrieved = {
        source: retrieved_pairs_for_source(db, source, budget)
        for source in gold.sources
    }
    return score_crossref(retrieved, gold)


#: Prompt for the optional gold-set helper. It asks a generation backend to
#: judge one reference; outputs are model-dependent and NOT deterministic.
JUDGE_PROMPT_TEMPLATE = """\
You are reviewing citations inside 5G technical specifications.

Source passage:
{source_text}

Cited passage:
{target_text}

Question: does the cited passage supply detail that a reader needs in order
to fully understand the source passage?

Reply with exactly one word: helpful or unhelpful.
"""


def judge_prompt(source_text: str, target_text: str) -> str:
    return JUDGE_PROMPT_TEMPLATE.format(source_text=source_text, target_text=target_text)
