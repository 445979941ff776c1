"""FastAPI service wrapping the engine.

The service loads built databases (at startup from the SPECATLAS_DB
environment variable, or later via POST /load) and serves queries, traces,
per-clause diffs, and evaluation runs to any number of clients. Build is
also exposed for server-local corpus paths.
"""

from __future__ import annotations

import logging
import os
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import engine as engine_mod
from .config import AppConfig, load_config
from .errors import NotFoundError, ParseError, SpecAtlasError
from .evaluation import CrossrefBudget, GoldReferenceSet, run_microbenchmark
from .pipeline import RetrievalConfig
from .crossref import resolve_references

logger = logging.getLogger(__name__)


class BuildRequest(BaseModel):
    corpus_dir: str
    tdocs_dir: Optional[str] = None
    out_dir: str
    drop_trivial_crs: bool = False


class BuildResponse(BaseModel):
    documents: int
    clause_chunks: int
    change_entries: int
    cr_documents: int
    cr_chunks: int
    out_dir: str
    seconds: float


class LoadRequest(BaseModel):
    db_dir: str


class StatusResponse(BaseModel):
    status: str
    loaded: bool
    clause_chunks: int = 0
    change_entries: int = 0
    cr_chunks: int = 0


class QueryRequest(BaseModel):
    question: str = Field(min_length=1)
    k1: Optional[int] = None
    k2: Optional[int] = None
    k3: Optional[int] = None
    depth: Optional[int] = None
    hyde: Optional[bool] = None
    include_timings: bool = False


class ContextChunkModel(BaseModel):
    section: Literal["initial", "referenced", "evolution"]
    chunk_uid: str
    score: float


class ReferenceModel(BaseModel):
    spec_id: str
    clause_id: Optional[str]
    source_chunk_uid: str
    span: list[int]


class TraceNodeModel(BaseModel):
    chunk_uid: str
    depth: int
    parent_chunk_uid: Optional[str]
    via: Optional[ReferenceModel]


class TraceModel(BaseModel):
    max_depth_used: int
    nodes: list[TraceNodeModel]
    warnings: list[str]


class ScoredHitModel(BaseModel):
    item_uid: str
    score: float


class QueryResponse(BaseModel):
    question: str
    answer: Optional[str]
    hyde_text: Optional[str]
    context_chunks: list[ContextChunkModel]
    resolution_trace: TraceModel
    change_hits: list[ScoredHitModel]
    tdoc_hits: list[ScoredHitModel]
    warnings: list[str]
    timings: Optional[dict[str, float]] = None


class TraceRequest(BaseModel):
    question: Optional[str] = None
    spec_id: Optional[str] = None
    clause_id: Optional[str] = None
    k1: Optional[int] = None
    depth: Optional[int] = None


class DiffRequest(BaseModel):
    spec_id: str
    clause_id: str


class ChangeEntryModel(BaseModel):
    entry_uid: str
    spec_id: str
    clause_id: str
    from_version: Optional[str]
    to_version: str
    from_date: Optional[str]
    to_date: Optional[str]
    kind: str
    heading: str
    added: list[str]
    removed: list[str]
    modified: list[list[str]]


class DiffResponse(BaseModel):
    entries: list[ChangeEntryModel]


class EvalRequest(BaseModel):
    gold_csv: str = Field(description="Contents of the gold reference CSV")
    k1: int = 3
    k2: Optional[int] = 2
    depth: int = 2


class SourceScoreModel(BaseModel):
    source_chunk_uid: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


class EvalResponse(BaseModel):
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_tp: int
    micro_fp: int
    micro_fn: int
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_source: list[SourceScoreModel]


def _merged_retrieval(base: RetrievalConfig, req) -> RetrievalConfig:
    return RetrievalConfig(
        k1=req.k1 if getattr(req, "k1", None) is not None else base.k1,
        k2=req.k2 if getattr(req, "k2", None) is not None else base.k2,
        k3=req.k3 if getattr(req, "k3", None) is not None else base.k3,
        max_depth=req.depth if getattr(req, "depth", None) is not None else base.max_depth,
        hyde_enabled=req.hyde if getattr(req, "hyde", None) is not None else base.hyde_enabled,
        version_policy=base.version_policy,
    )


def create_app(config: AppConfig | None = None, db_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="specatlas", version="0.1.0")
    app.state.config = config or load_config(os.environ.get("SPECATLAS_CONFIG"))
    app.state.engine = None

    startup_db = db_dir or os.environ.get("SPECATLAS_DB")
    if startup_db:
        app.state.engine = engine_mod.load_engine(startup_db, app.state.config)

    def require_engine() -> engine_mod.Engine:
        if app.state.engine is None:
            raise HTTPException(status_code=409, detail="no databases loaded; POST /load first")
        return app.state.engine

    @app.get("/health", response_model=StatusResponse)
    def health() -> StatusResponse:
        eng = app.state.engine
        if eng is None:
            return StatusResponse(status="ok", loaded=False)
        return StatusResponse(
            status="ok",
            loaded=True,
            clause_chunks=len(eng.spec_db),
            change_entries=len(eng.change_db),
            cr_chunks=len(eng.tdoc_db),
        )

    @app.post("/build", response_model=BuildResponse)
    def build(req: BuildRequest) -> BuildResponse:
        try:
            stats = engine_mod.build_databases(
                req.corpus_dir,
                req.tdocs_dir,
                req.out_dir,
                app.state.config,
                drop_trivial_crs=req.drop_trivial_crs,
            )
        except (ParseError, SpecAtlasError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return BuildResponse(**stats)

    @app.post("/load", response_model=StatusResponse)
    def load(req: LoadRequest) -> StatusResponse:
        try:
            app.state.engine = engine_mod.load_engine(req.db_dir, app.state.config)
        except (OSError, SpecAtlasError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return health()

    @app.post("/query", response_model=QueryResponse, response_model_exclude_none=False)
    def query(req: QueryRequest) -> QueryResponse:
        eng = require_engine()
        try:
            result = eng.answer(req.question, _merged_retrieval(eng.retrieval, req))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return QueryResponse(**result.to_record(include_timings=req.include_timings))

    @app.post("/trace", response_model=TraceModel)
    def trace(req: TraceRequest) -> TraceModel:
        eng = require_engine()
        depth = req.depth if req.depth is not None else eng.retrieval.max_depth
        if req.spec_id and req.clause_id:
            try:
                seed = eng.spec_db.lookup_clause(req.spec_id, req.clause_id)
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            except ParseError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            seeds = [seed]
        elif req.question:
            k1 = req.k1 if req.k1 is not None else eng.retrieval.k1
            hits = eng.spec_db.semantic_search(req.question, k1)
            seeds = [eng.spec_db.chunk(h.item_uid) for h in hits]
        else:
            raise HTTPException(
                status_code=400, detail="provide either question or spec_id+clause_id"
            )
        result = resolve_references(eng.spec_db, seeds, depth)
        return TraceModel(**result.to_record())

    @app.post("/diff", response_model=DiffResponse)
    def diff(req: DiffRequest) -> DiffResponse:
        eng = require_engine()
        try:
            entries = eng.change_db.clause_entries(req.spec_id, req.clause_id)
        except ParseError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if not entries:
            raise HTTPException(
                status_code=404, detail=f"no change entries for ({req.spec_id}, {req.clause_id})"
            )
        models = []
        for entry in entries:
            record = entry.to_record()
            record.pop("hunks")
            models.append(ChangeEntryModel(**record))
        return DiffResponse(entries=models)

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        eng = require_engine()
        try:
            gold = GoldReferenceSet.from_csv_text(req.gold_csv)
            report = run_microbenchmark(
                eng.spec_db,
                gold,
                CrossrefBudget(k1=req.k1, k2=req.k2, max_depth=req.depth),
            )
        except (ParseError, KeyError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return EvalResponse(**report.to_record())

    return app


app = create_app()
