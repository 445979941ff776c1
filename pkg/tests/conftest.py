from __future__ import annotations

import json
from pathlib import Path

import pytest

from specatlas.change_db import build_changedb
from specatlas.config import AppConfig
from specatlas.corpus import ingest_corpus, segment_clauses
from specatlas.embedding import ProviderConfig
from specatlas.engine import build_databases, load_engine
from specatlas.spec_db import build_specdb
from specatlas.tdoc_db import build_tdocdb, ingest_tdocs

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mock_provider() -> ProviderConfig:
    return ProviderConfig.mock_embed(dim=64)


@pytest.fixture(scope="session")
def null_gen() -> ProviderConfig:
    return ProviderConfig.null_generate()


@pytest.fixture(scope="session")
def corpus_documents():
    return ingest_corpus(FIXTURES / "corpus")


@pytest.fixture(scope="session")
def corpus_chunks(corpus_documents):
    return [chunk for doc in corpus_documents for chunk in segment_clauses(doc)]


@pytest.fixture(scope="session")
def spec_db(corpus_chunks, mock_provider):
    return build_specdb(corpus_chunks, mock_provider)


@pytest.fixture(scope="session")
def change_db(corpus_chunks, mock_provider):
    return build_changedb(corpus_chunks, mock_provider)


@pytest.fixture(scope="session")
def tdoc_db(mock_provider):
    return build_tdocdb(ingest_tdocs(FIXTURES / "tdocs"), mock_provider)


@pytest.fixture(scope="session")
def built_db_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("dbs")
    build_databases(FIXTURES / "corpus", FIXTURES / "tdocs", out, AppConfig())
    return out


@pytest.fixture(scope="session")
def engine(built_db_dir):
    return load_engine(built_db_dir, AppConfig())


@pytest.fixture(scope="session")
def citation_rows(fixtures_dir):
    rows = []
    with open(fixtures_dir / "citations.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows
