"""Build and load the three stores; bundle them behind one query surface."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .change_db import ChangeDb, build_changedb
from .config import AppConfig
from .corpus import ingest_corpus, segment_clauses
from .embedding import ProviderConfig
from .pipeline import QueryResult, RetrievalConfig, answer_query
from .spec_db import SpecDb, build_specdb
from .tdoc_db import TdocDb, build_tdocdb, ingest_tdocs

logger = logging.getLogger(__name__)

SPECDB_DIR = "specdb"
CHANGEDB_DIR = "changedb"
TDOCDB_DIR = "tdocdb"
META_FILE = "meta.json"


@dataclass
class Engine:
    """The loaded stores plus providers; immutable and safe to share across
    concurrent queries."""

    spec_db: SpecDb
    change_db: ChangeDb
    tdoc_db: TdocDb
    gen_provider: ProviderConfig
    retrieval: RetrievalConfig
    prompt_template: str

    def answer(self, question: str, config: RetrievalConfig | None = None) -> QueryResult:
        return answer_query(
            question,
            config or self.retrieval,
            self.spec_db,
            self.change_db,
            self.tdoc_db,
            self.gen_provider,
            self.prompt_template,
        )


def build_databases(
    corpus_dir: str | Path,
    tdocs_dir: str | Path | None,
    out_dir: str | Path,
    config: AppConfig,
    drop_trivial_crs: bool = False,
) -> dict:
    """Ingest a corpus (and optional CR directory), build all three stores,
    and persist them under ``out_dir``. Returns build statistics."""
    out_dir = Path(out_dir)
    started = time.perf_counter()

    documents = ingest_corpus(corpus_dir)
    chunks = [chunk for doc in documents for chunk in segment_clauses(doc)]
    spec_db = build_specdb(chunks, config.embed_provider)
    change_db = build_changedb(chunks, config.embed_provider)

    crs = ingest_tdocs(tdocs_dir, drop_trivial=drop_trivial_crs) if tdocs_dir else []
    tdoc_db = build_tdocdb(crs, config.embed_provider)

    spec_db.save(out_dir / SPECDB_DIR)
    change_db.save(out_dir / CHANGEDB_DIR)
    tdoc_db.save(out_dir / TDOCDB_DIR)
    meta = {"embed_provider": dataclasses.asdict(config.embed_provider)}
    (out_dir / META_FILE).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    stats = {
        "documents": len(documents),
        "clause_chunks": len(spec_db),
        "change_entries": len(change_db),
        "cr_documents": len(crs),
        "cr_chunks": len(tdoc_db),
        "out_dir": str(out_dir),
        "seconds": round(time.perf_counter() - started, 3),
    }
    logger.info("built databases: %s", stats)
    return stats


def load_engine(db_dir: str | Path, config: AppConfig) -> Engine:
    """Load persisted stores. The embedding provider stored at build time is
    reused so query vectors live in the same space as the index."""
    db_dir = Path(db_dir)
    meta_path = db_dir / META_FILE
    embed_provider = config.embed_provider
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        embed_provider = ProviderConfig(**meta["embed_provider"])
    return Engine(
        spec_db=SpecDb.load(db_dir / SPECDB_DIR, embed_provider),
        change_db=ChangeDb.load(db_dir / CHANGEDB_DIR, embed_provider),
        tdoc_db=TdocDb.load(db_dir / TDOCDB_DIR, embed_provider),
        gen_provider=config.gen_provider,
        retrieval=config.retrieval,
        prompt_template=config.prompt_template(),
    )
