"""specatlas: clause-level retrieval over versioned specification corpora.

Three stores back the engine: a clause store (metadata lookup plus dense
retrieval), a change store (line-level diffs between adjacent versions), and
a rationale store (Change Request chunks). Queries run through HyDE
expansion, initial retrieval, recursive cross-reference resolution, and
evolution reasoning before answer generation.
"""

from .change_db import ChangeDb, ChangeEntry, build_changedb, diff_lines, search_changes
from .config import AppConfig, load_config
from .corpus import (
    ClauseChunk,
    ClauseId,
    RawDocument,
    SpecId,
    SpecVersion,
    decode_version,
    encode_version,
    ingest_corpus,
    segment_clauses,
)
from .crossref import (
    Reference,
    ResolutionTrace,
    extract_references,
    rank_referenced,
    resolve_references,
)
from .embedding import ProviderConfig, ScoredHit, VectorIndex, embed, generate
from .engine import Engine, build_databases, load_engine
from .errors import (
    BuildError,
    NotFoundError,
    ParseError,
    PromptTooLargeError,
    ProviderError,
    SpecAtlasError,
)
from .evaluation import (
    CrossrefBudget,
    GoldReferenceSet,
    PrfReport,
    run_microbenchmark,
    score_crossref,
)
from .pipeline import (
    QueryResult,
    RetrievalConfig,
    answer_query,
    evolution_retrieve,
    extract_spec_mentions,
    hyde_expand,
)
from .spec_db import LATEST, SpecDb, VersionPolicy, build_specdb
from .tdoc_db import (
    CrChunk,
    CrDocument,
    TdocDb,
    build_tdocdb,
    filter_and_rank_tdocs,
    ingest_tdocs,
    parse_cr,
)

__version__ = "0.1.0"
