"""Corpus data model: spec/clause/version identifiers, clause segmentation, ingestion.

Input is pre-converted plain text. A corpus directory holds one file per
document version, named ``<series><number>-<versiontag>.txt`` (for example
``38214-h40.txt``), where the three-character tag encodes (major, minor,
patch) in base 36. Version dates come from ``manifest.jsonl`` rows when
present, else from a ``dates.json`` sidecar, else from file modification
time (with a warning).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import date, datetime, timezone
from functools import total_ordering
from pathlib import Path

from .errors import ParseError

logger = logging.getLogger(__name__)

_SPEC_ID_RE = re.compile(r"^(?:TS\s*)?(\d{2})\.?(\d{3})$", re.IGNORECASE)
_VERSION_TAG_RE = re.compile(r"^[0-9a-z]{3}$")
_CORPUS_FILE_RE = re.compile(r"^(\d{2})(\d{3})-([0-9a-z]{3})\.txt$")
_BASE36 = "0123456789abcdefghijklmnopqrstuvwxyz"

#: Synthetic clause that owns prologue text appearing before the first heading.
PROLOGUE_CLAUSE = "0"


@dataclass(frozen=True)
class SpecId:
    """Canonical specification identifier, e.g. series "38", number "214"."""

    series: str
    number: str

    def __post_init__(self) -> None:
        if not (len(self.series) == 2 and self.series.isdigit()):
            raise ParseError(f"spec series must be 2 digits, got {self.series!r}")
        if not (len(self.number) == 3 and self.number.isdigit()):
            raise ParseError(f"spec number must be 3 digits, got {self.number!r}")

    @classmethod
    def parse(cls, text: str) -> "SpecId":
        """Normalize "TS 38.214", "38214", "TS38.214" etc. to a SpecId."""
        m = _SPEC_ID_RE.match(text.strip())
        if not m:
            raise ParseError(f"not a spec id: {text!r}")
        return cls(m.group(1), m.group(2))

    def __str__(self) -> str:
        return f"{self.series}.{self.number}"


@total_ordering
@dataclass(frozen=True)
class ClauseId:
    """A dotted clause path such as "7.4.1.1.2" or "A.3".

    Each segment is a decimal integer or a single annex letter. Ordering is
    segment-wise: numeric segments sort before letter segments, numerics by
    value, letters alphabetically, so annex clauses land after all numeric
    clauses as they do in the source documents.
    """

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ParseError("empty clause id")
        for seg in self.segments:
            if not (seg.isdigit() or (len(seg) == 1 and seg.isalpha())):
                raise ParseError(f"bad clause segment {seg!r} in {self.segments}")

    @classmethod
    def parse(cls, text: str) -> "ClauseId":
        text = text.strip()
        if not text or text.endswith(".") or text.startswith("."):
            raise ParseError(f"not a clause id: {text!r}")
        segments = tuple(
            seg.upper() if seg.isalpha() else seg for seg in text.split(".")
        )
        return cls(segments)

    @property
    def sort_key(self) -> tuple[tuple[int, int, str], ...]:
        return tuple(
            (0, int(seg), "") if seg.isdigit() else (1, 0, seg.upper())
            for seg in self.segments
        )

    def __lt__(self, other: "ClauseId") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return ".".join(self.segments)


@total_ordering
@dataclass(frozen=True)
class SpecVersion:
    """A document version: (major, minor, patch) plus its publication date.

    Ordering is by timestamp first (undated versions sort earliest), ties
    broken by the numeric triple.
    """

    major: int
    minor: int
    patch: int
    timestamp: date | None = None

    def __post_init__(self) -> None:
        if min(self.major, self.minor, self.patch) < 0:
            raise ParseError(f"negative version component in {self.short()}")

    @classmethod
    def parse(cls, text: str, timestamp: date | None = None) -> "SpecVersion":
        parts = text.strip().split(".")
        if len(parts) != 3 or not all(p.isdigit() for p in parts):
            raise ParseError(f"not a version: {text!r}")
        return cls(int(parts[0]), int(parts[1]), int(parts[2]), timestamp)

    @property
    def sort_key(self) -> tuple[date, int, int, int]:
        return (self.timestamp or date.min, self.major, self.minor, self.patch)

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.major, self.minor, self.patch)

    def short(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"

    def with_timestamp(self, ts: date | None) -> "SpecVersion":
        return SpecVersion(self.major, self.minor, self.patch, ts)

    def __lt__(self, other: "SpecVersion") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return self.short()


def decode_version(tag: str) -> SpecVersion:
    """Decode a 3-character base-36 version tag, e.g. "h40" -> 17.4.0."""
    if len(tag) != 3:
        raise ParseError(f"version tag must be 3 characters, got {tag!r}")
    values = []
    for ch in tag:
        idx = _BASE36.find(ch)
        if idx < 0:
            raise ParseError(f"bad character {ch!r} in version tag {tag!r}")
        values.append(idx)
    return SpecVersion(values[0], values[1], values[2])


def encode_version(version: SpecVersion) -> str:
    """Inverse of decode_version for components < 36."""
    for comp in version.triple:
        if not 0 <= comp < 36:
            raise ParseError(f"component {comp} not encodable in one base-36 digit")
    return "".join(_BASE36[c] for c in version.triple)


@dataclass(frozen=True)
class ClauseChunk:
    """One clause of one document version; the atomic retrieval unit.

    ``body`` holds the clause's directly-owned lines (sub-clause text belongs
    to the sub-clause's own chunk) and excludes the heading line; ``heading``
    is the title with original casing. The prologue chunk (clause "0") has an
    empty heading.
    """

    spec_id: SpecId
    clause_id: ClauseId
    version: SpecVersion
    heading: str
    body: tuple[str, ...]

    @property
    def chunk_uid(self) -> str:
        return f"{self.spec_id}/{self.clause_id}@{self.version.short()}"

    def to_record(self) -> dict:
        """On-disk JSONL record. Field order is fixed for byte-stable files."""
        return {
            "chunk_uid": self.chunk_uid,
            "spec_id": str(self.spec_id),
            "clause_id": str(self.clause_id),
            "version": self.version.short(),
            "date": self.version.timestamp.isoformat() if self.version.timestamp else None,
            "heading": self.heading,
            "body": list(self.body),
        }

    @classmethod
    def from_record(cls, record: dict) -> "ClauseChunk":
        ts = date.fromisoformat(record["date"]) if record.get("date") else None
        return cls(
            spec_id=SpecId.parse(record["spec_id"]),
            clause_id=ClauseId.parse(record["clause_id"]),
            version=SpecVersion.parse(record["version"], ts),
            heading=record["heading"],
            body=tuple(record["body"]),
        )


def canonical_chunk_order(chunks: list[ClauseChunk]) -> list[ClauseChunk]:
    """Stable canonical ordering used for serialization and builds."""
    return sorted(
        chunks,
        key=lambda c: (str(c.spec_id), c.clause_id.sort_key, c.version.sort_key),
    )


@dataclass(frozen=True)
class RawDocument:
    """A whole document version as ordered text lines.

    Lines are stripped of trailing whitespace at construction so later diffs
    compare byte-exact on the stored form.
    """

    spec_id: SpecId
    version: SpecVersion
    lines: tuple[str, ...]
    source_path: str = ""

    def __post_init__(self) -> None:
        for line in self.lines:
            if "\n" in line or "\r" in line:
                raise ParseError("document lines must not contain line breaks")

    @classmethod
    def from_text(
        cls,
        spec_id: SpecId,
        version: SpecVersion,
        text: str,
        source_path: str = "",
    ) -> "RawDocument":
        lines = tuple(line.rstrip() for line in text.splitlines())
        return cls(spec_id, version, lines, source_path)


# Heading detection. A heading is a clause id at line start, whitespace, then
# a title. Guards against false splits in formula-heavy text: the title must
# start with a letter, must not be a bare unit token, and the line must not
# end in mid-sentence punctuation. Bare annex letters ("A Title") are not
# treated as headings; annex clause ids need at least one dotted segment.
_HEADING_RE = re.compile(r"^(\d+(?:\.\d+)*|[A-Z](?:\.\d+)+)[ \t]+(\S.*)$")
_UNIT_TOKENS = frozenset(
    {"dB", "dBm", "dBc", "dBi", "Hz", "kHz", "MHz", "GHz", "ms", "us", "ns", "ppm", "mW", "W"}
)
_MID_SENTENCE_END = (",", ";", ":")


def _match_heading(line: str) -> tuple[ClauseId, str] | None:
    m = _HEADING_RE.match(line)
    if not m:
        return None
    title = m.group(2).strip()
    if not title or not title[0].isalpha():
        return None
    if title.split()[0] in _UNIT_TOKENS:
        return None
    if line.rstrip().endswith(_MID_SENTENCE_END):
        return None
    return ClauseId.parse(m.group(1)), title


def segment_clauses(doc: RawDocument) -> list[ClauseChunk]:
    """Split a document into clause-aligned chunks, in document order.

    Every heading opens a chunk that owns the lines up to the next heading of
    any depth, so each document line lands in exactly one chunk. Lines before
    the first heading go to the synthetic prologue clause "0". A document with
    no detected headings becomes a single prologue chunk (with a warning).
    """
    chunks: list[ClauseChunk] = []
    current_clause: ClauseId | None = None
    current_heading = ""
    current_body: list[str] = []

    def flush() -> None:
        if current_clause is None:
            if not current_body:
                return
            clause = ClauseId.parse(PROLOGUE_CLAUSE)
            heading = ""
        else:
            clause = current_clause
            heading = current_heading
        chunks.append(
            ClauseChunk(doc.spec_id, clause, doc.version, heading, tuple(current_body))
        )

    for line in doc.lines:
        matched = _match_heading(line)
        if matched is not None:
            flush()
            current_clause, current_heading = matched
            current_body = []
        else:
            current_body.append(line)
    flush()

    if doc.lines and all(c.heading == "" for c in chunks):
        logger.warning(
            "no headings detected in %s %s (%s); whole document under clause 0",
            doc.spec_id,
            doc.version,
            doc.source_path or "<memory>",
        )
    return chunks


def _read_manifest(path: Path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: bad manifest row: {exc}") from exc
    return rows


def _mtime_date(path: Path) -> date:
    return datetime.fromtimestamp(path.stat().st_mtime, tz=timezone.utc).date()


def _document_from_manifest_row(row: dict, base_dir: Path) -> RawDocument:
    for key in ("path", "spec_id", "version", "date"):
        if key not in row:
            raise ParseError(f"manifest row missing {key!r}: {row}")
    file_path = Path(row["path"])
    if not file_path.is_absolute():
        file_path = base_dir / file_path
    spec_id = SpecId.parse(row["spec_id"])
    version = SpecVersion.parse(row["version"], date.fromisoformat(row["date"]))
    return RawDocument.from_text(
        spec_id, version, file_path.read_text(encoding="utf-8"), str(file_path)
    )


def ingest_corpus(root: str | Path) -> list[RawDocument]:
    """Load a corpus directory (or a manifest file) into RawDocuments.

    ``root`` may be a directory containing ``<series><number>-<tag>.txt``
    files plus optional ``manifest.jsonl`` / ``dates.json``, or the path of a
    manifest file itself. Files with unparseable names and no manifest entry
    are skipped with a warning rather than failing the whole ingest.
    """
    root = Path(root)
    if root.is_file():
        manifest_path: Path | None = root
        corpus_dir = root.parent
    elif root.is_dir():
        corpus_dir = root
        candidate = root / "manifest.jsonl"
        manifest_path = candidate if candidate.exists() else None
    else:
        raise ParseError(f"corpus root does not exist: {root}")

    documents: dict[str, RawDocument] = {}

    if manifest_path is not None:
        for row in _read_manifest(manifest_path):
            doc = _document_from_manifest_row(row, manifest_path.parent)
            documents[doc.source_path] = doc

    sidecar: dict[str, str] = {}
    sidecar_path = corpus_dir / "dates.json"
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))

    if root.is_dir():
        for path in sorted(corpus_dir.glob("*.txt")):
            if str(path) in documents:
                continue
            m = _CORPUS_FILE_RE.match(path.name)
            if not m:
                logger.warning("skipping %s: filename not <series><number>-<tag>.txt", path)
                continue
            spec_id = SpecId(m.group(1), m.group(2))
            version = decode_version(m.group(3))
            if path.name in sidecar:
                ts = date.fromisoformat(sidecar[path.name])
            else:
                ts = _mtime_date(path)
                logger.warning("no manifest/sidecar date for %s; using mtime %s", path.name, ts)
            doc = RawDocument.from_text(
                spec_id,
                version.with_timestamp(ts),
                path.read_text(encoding="utf-8"),
                str(path),
            )
            documents[doc.source_path] = doc

    return sorted(documents.values(), key=lambda d: (str(d.spec_id), d.version.sort_key))
