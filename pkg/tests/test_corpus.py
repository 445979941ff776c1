from __future__ import annotations

import itertools
import json
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specatlas.corpus import (
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
from specatlas.errors import ParseError


def _doc(lines: list[str], spec: str = "38.211", version: str = "17.0.0") -> RawDocument:
    return RawDocument(
        SpecId.parse(spec),
        SpecVersion.parse(version, date(2022, 3, 25)),
        tuple(lines),
    )


class TestSpecId:
    @pytest.mark.parametrize("raw", ["TS 38.214", "38214", "TS38.214", "38.214", "ts 38.214"])
    def test_normalization(self, raw):
        assert str(SpecId.parse(raw)) == "38.214"

    @pytest.mark.parametrize("raw", ["38.21", "382.14", "TS", "3x214", "38.2140"])
    def test_rejects_bad_forms(self, raw):
        with pytest.raises(ParseError):
            SpecId.parse(raw)


class TestClauseId:
    def test_parse_and_str(self):
        assert str(ClauseId.parse("7.4.1.1.2")) == "7.4.1.1.2"
        assert str(ClauseId.parse("A.3")) == "A.3"

    @pytest.mark.parametrize("raw", ["", "5.", ".5", "5..1", "AB.3"])
    def test_rejects_bad_forms(self, raw):
        with pytest.raises(ParseError):
            ClauseId.parse(raw)

    def test_numeric_before_letter_and_numeric_by_value(self):
        assert ClauseId.parse("10.5") < ClauseId.parse("A.3")
        assert ClauseId.parse("2") < ClauseId.parse("10")
        assert ClauseId.parse("5.1") < ClauseId.parse("5.1.1")
        assert ClauseId.parse("A.3") < ClauseId.parse("B.1")

    def test_strict_total_order_on_fixture_ids(self):
        raw = [
            "0", "1", "2", "2.1", "2.10", "2.2", "3", "5", "5.1", "5.1.1",
            "5.1.2", "5.1.6", "5.1.6.4", "5.1.6.5", "5.2", "5.3.3", "6",
            "6.3", "6.3.1", "6.3.2", "7", "7.4.1.1.2", "10", "11.2",
            "A", "A.1", "A.3", "B", "B.2",
        ]
        ids = [ClauseId.parse(r) for r in raw]
        for a, b in itertools.permutations(ids, 2):
            assert (a < b) != (b < a) or a == b  # antisymmetry
        for a, b, c in itertools.permutations(ids, 3):
            if a < b and b < c:
                assert a < c  # transitivity


class TestSpecVersion:
    def test_decode_examples(self):
        assert decode_version("h40").triple == (17, 4, 0)
        assert decode_version("f00").triple == (15, 0, 0)
        assert decode_version("i21").triple == (18, 2, 1)

    def test_decode_rejects_bad_tags(self):
        with pytest.raises(ParseError, match="'H'"):
            decode_version("H40")
        with pytest.raises(ParseError, match="3 characters"):
            decode_version("h4")

    @given(
        st.integers(min_value=0, max_value=35),
        st.integers(min_value=0, max_value=35),
        st.integers(min_value=0, max_value=35),
    )
    def test_decode_encode_roundtrip(self, major, minor, patch):
        tag = encode_version(SpecVersion(major, minor, patch))
        assert decode_version(tag).triple == (major, minor, patch)

    def test_ordering_timestamp_first_then_triple(self):
        older = SpecVersion.parse("18.0.0", date(2022, 6, 1))
        newer = SpecVersion.parse("17.4.0", date(2023, 6, 1))
        assert older < newer
        a = SpecVersion.parse("17.1.0", date(2022, 6, 1))
        b = SpecVersion.parse("17.2.0", date(2022, 6, 1))
        assert a < b


class TestSegmentClauses:
    def test_paper_style_heading(self):
        doc = _doc(
            [
                "7.4.1.1.2 Mapping to physical resource",
                "Symbols map to physical resource blocks.",
                "The bundling size follows the configured indication.",
                "Power allocation is uniform per layer.",
            ]
        )
        chunks = segment_clauses(doc)
        assert len(chunks) == 1
        assert str(chunks[0].clause_id) == "7.4.1.1.2"
        assert chunks[0].heading == "Mapping to physical resource"
        assert len(chunks[0].body) == 3

    def test_empty_document(self):
        assert segment_clauses(_doc([])) == []

    def test_two_sibling_clauses(self):
        doc = _doc(["5.1 Alpha", "line one", "line two", "5.2 Beta", "line three"])
        chunks = segment_clauses(doc)
        assert [str(c.clause_id) for c in chunks] == ["5.1", "5.2"]
        assert [len(c.body) for c in chunks] == [2, 1]

    def test_no_headings_gets_prologue_chunk_and_warning(self, caplog):
        doc = _doc(["plain text only", "still plain"])
        with caplog.at_level("WARNING"):
            chunks = segment_clauses(doc)
        assert len(chunks) == 1
        assert str(chunks[0].clause_id) == "0"
        assert chunks[0].body == ("plain text only", "still plain")
        assert "no headings" in caplog.text

    def test_prologue_before_first_heading(self):
        doc = _doc(["intro line", "1 Scope", "scope body"])
        chunks = segment_clauses(doc)
        assert [str(c.clause_id) for c in chunks] == ["0", "1"]

    @pytest.mark.parametrize(
        "line",
        [
            "5.1 dB is the required margin",  # unit token
            "5.1 2-step procedure",  # title must start with a letter
            "5.1 Alpha, beta,",  # ends mid-sentence
            "A Title without a dotted annex id",  # bare letter is not a heading
        ],
    )
    def test_non_headings_stay_in_body(self, line):
        doc = _doc(["1 Scope", line])
        chunks = segment_clauses(doc)
        assert [str(c.clause_id) for c in chunks] == ["1"]
        assert chunks[0].body == (line,)

    def test_non_leaf_headings_own_only_their_lines(self):
        doc = _doc(
            ["5 Parent", "parent intro", "5.1 Child", "child body", "6 Next", "next body"]
        )
        chunks = segment_clauses(doc)
        assert [str(c.clause_id) for c in chunks] == ["5", "5.1", "6"]
        assert chunks[0].body == ("parent intro",)
        assert chunks[1].body == ("child body",)

    @given(
        st.lists(
            st.one_of(
                st.sampled_from(
                    ["5.1 Alpha", "5.1.1 Beta", "6 Gamma", "A.1 Delta", "2.3 Epsilon"]
                ),
                st.text(
                    alphabet="abcdefghij xyz",
                    min_size=1,
                    max_size=20,
                ).map(lambda s: "text " + s.strip()),
            ),
            max_size=30,
        )
    )
    @settings(max_examples=60)
    def test_partition_no_loss_no_duplication(self, lines):
        lines = [line.rstrip() for line in lines]
        doc = _doc(lines)
        chunks = segment_clauses(doc)
        rebuilt: list[str] = []
        for chunk in chunks:
            if chunk.heading:
                rebuilt.append(f"{chunk.clause_id} {chunk.heading}")
            rebuilt.extend(chunk.body)
        assert sorted(rebuilt) == sorted(lines)


class TestChunkRecords:
    def test_round_trip_all_fixture_chunks(self, corpus_chunks):
        assert corpus_chunks
        for chunk in corpus_chunks:
            again = ClauseChunk.from_record(json.loads(json.dumps(chunk.to_record())))
            assert again == chunk
            assert again.chunk_uid == chunk.chunk_uid

    def test_uid_is_deterministic(self):
        a = _doc(["5.1 Alpha", "x"])
        chunks1 = segment_clauses(a)
        chunks2 = segment_clauses(a)
        assert chunks1[0].chunk_uid == chunks2[0].chunk_uid == "38.211/5.1@17.0.0"


class TestIngestCorpus:
    def test_bundled_corpus(self, corpus_documents):
        assert len(corpus_documents) == 9
        by_spec = {}
        for doc in corpus_documents:
            by_spec.setdefault(str(doc.spec_id), []).append(doc.version.short())
        assert by_spec == {
            "38.211": ["17.0.0", "17.4.0", "18.0.0"],
            "38.214": ["17.0.0", "17.4.0", "18.0.0"],
            "38.331": ["17.0.0", "17.4.0", "18.0.0"],
        }
        assert all(doc.version.timestamp is not None for doc in corpus_documents)

    def test_filename_decoding(self, tmp_path):
        (tmp_path / "38214-h40.txt").write_text("1 Scope\nbody\n")
        (tmp_path / "38214-h50.txt").write_text("1 Scope\nbody\n")
        docs = ingest_corpus(tmp_path)
        assert [d.version.short() for d in docs] == ["17.4.0", "17.5.0"]
        assert {str(d.spec_id) for d in docs} == {"38.214"}

    def test_empty_directory(self, tmp_path):
        assert ingest_corpus(tmp_path) == []

    def test_manifest_overrides_nonconforming_name(self, tmp_path):
        (tmp_path / "weird name.txt").write_text("1 Scope\nbody\n")
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text(
            json.dumps(
                {
                    "path": "weird name.txt",
                    "spec_id": "38.214",
                    "version": "17.4.0",
                    "date": "2022-12-16",
                }
            )
            + "\n"
        )
        docs = ingest_corpus(tmp_path)
        assert len(docs) == 1
        assert str(docs[0].spec_id) == "38.214"
        assert docs[0].version.short() == "17.4.0"
        assert docs[0].version.timestamp == date(2022, 12, 16)

    def test_unparseable_name_skipped_with_warning(self, tmp_path, caplog):
        (tmp_path / "not-a-spec.txt").write_text("text\n")
        (tmp_path / "38214-h40.txt").write_text("1 Scope\nbody\n")
        with caplog.at_level("WARNING"):
            docs = ingest_corpus(tmp_path)
        assert len(docs) == 1
        assert "skipping" in caplog.text

    def test_mtime_fallback_warns(self, tmp_path, caplog):
        (tmp_path / "38214-h40.txt").write_text("1 Scope\nbody\n")
        with caplog.at_level("WARNING"):
            docs = ingest_corpus(tmp_path)
        assert docs[0].version.timestamp is not None
        assert "mtime" in caplog.text

    def test_sidecar_dates(self, tmp_path):
        (tmp_path / "38214-h40.txt").write_text("1 Scope\nbody\n")
        (tmp_path / "dates.json").write_text('{"38214-h40.txt": "2022-12-16"}')
        docs = ingest_corpus(tmp_path)
        assert docs[0].version.timestamp == date(2022, 12, 16)
