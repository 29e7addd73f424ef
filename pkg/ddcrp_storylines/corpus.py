"""Document ingestion for storyline clustering.

Records arrive as JSON-lines objects ``{"id", "timestamp", "text"}`` (an
optional ``"topic"`` string is carried through for per-topic evaluation) or
as TSV rows ``id<TAB>timestamp<TAB>text``. Each record is tokenized, counted
against a vocabulary built over the whole corpus, and kept in a store ordered
by ``(timestamp, id)``.

Malformed records never abort ingestion: they are collected as
:class:`IngestIssue` entries and logged. A duplicate document id is a hard
error because it makes the assignment output ambiguous.
"""

from __future__ import annotations

import json
import logging
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional

import numpy as np

LOG = logging.getLogger(__name__)

URL_PATTERN = re.compile(r"^(?:https?://|www\.)", re.IGNORECASE)
NON_WORD_PATTERN = re.compile(r"[\W_]+")

RECORD_FORMATS = ("jsonl", "tsv")


class StorylineError(Exception):
    """Base class for data errors raised by ddcrp_storylines."""


class RecordFormatError(StorylineError):
    """A single input record could not be parsed."""

    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateDocumentError(StorylineError):
    """Two records share the same document id.

    ``first`` and ``second`` locate both occurrences in ``unit``s (input lines,
    stream pushes); they are None when the source has no such numbering.
    """

    def __init__(self, doc_id: str, first: Optional[int] = None, second: Optional[int] = None, *, unit: str = "line") -> None:
        where = f" ({unit}s {first} and {second})" if first is not None and second is not None else ""
        super().__init__(f"duplicate document id {doc_id!r}{where}")
        self.doc_id = doc_id
        self.first = first
        self.second = second
        self.unit = unit


@dataclass(frozen=True)
class IngestIssue:
    line: int
    message: str


@dataclass(frozen=True)
class RawRecord:
    id: str
    timestamp: int
    text: str
    topic: Optional[str] = None
    line: int = 0


def tokenize(text: str) -> list[str]:
    """Normalize microblog text into lowercase word tokens.

    URLs and @-mentions are dropped, ``#hashtags`` keep their word, and all
    punctuation is stripped from the remaining tokens.
    """
    tokens: list[str] = []
    for raw in unicodedata.normalize("NFKC", text).split():
        if raw.startswith("@") or URL_PATTERN.match(raw):
            continue
        cleaned = NON_WORD_PATTERN.sub("", raw.lstrip("#").lower())
        if cleaned:
            tokens.append(cleaned)
    return tokens


def _coerce_timestamp(value: Any, line: int) -> int:
    if isinstance(value, bool):
        raise RecordFormatError(line, "timestamp must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if math.isfinite(value) and value.is_integer():
            return int(value)
        raise RecordFormatError(line, f"timestamp is not integral: {value!r}")
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            raise RecordFormatError(line, f"timestamp is not an integer: {value!r}") from None
    raise RecordFormatError(line, f"timestamp has unsupported type {type(value).__name__}")


def record_from_mapping(data: Mapping[str, Any], line: int) -> RawRecord:
    """Validate one decoded record object."""
    if not isinstance(data, Mapping):
        raise RecordFormatError(line, "record is not a JSON object")
    missing = [key for key in ("id", "timestamp", "text") if key not in data]
    if missing:
        raise RecordFormatError(line, f"missing field(s): {', '.join(missing)}")
    doc_id = data["id"]
    if isinstance(doc_id, bool) or not isinstance(doc_id, (str, int)):
        raise RecordFormatError(line, "id must be a string")
    text = data["text"]
    if not isinstance(text, str):
        raise RecordFormatError(line, "text must be a string")
    topic = data.get("topic")
    if topic is not None and not isinstance(topic, str):
        raise RecordFormatError(line, "topic must be a string")
    return RawRecord(
        id=str(doc_id),
        timestamp=_coerce_timestamp(data["timestamp"], line),
        text=text,
        topic=topic,
        line=line,
    )


def parse_jsonl_line(text: str, line: int) -> RawRecord:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(line, f"invalid JSON: {exc.msg}") from None
    return record_from_mapping(data, line)


def parse_tsv_line(text: str, line: int) -> RawRecord:
    parts = text.rstrip("\r\n").split("\t", 2)
    if len(parts) != 3:
        raise RecordFormatError(line, f"expected 3 tab-separated fields, found {len(parts)}")
    return record_from_mapping({"id": parts[0], "timestamp": parts[1], "text": parts[2]}, line)


class RecordReader:
    """Iterate the records of a JSON-lines or TSV file, collecting bad lines.

    Blank lines are skipped silently. Every malformed line becomes an
    :class:`IngestIssue` in :attr:`issues` and is logged at WARNING level.
    The file is read lazily, one line at a time.
    """

    def __init__(self, path: Path, fmt: str = "jsonl") -> None:
        if fmt not in RECORD_FORMATS:
            raise ValueError(f"unknown record format {fmt!r}; expected one of {RECORD_FORMATS}")
        self.path = path
        self.fmt = fmt
        self.issues: list[IngestIssue] = []

    def __iter__(self) -> Iterator[RawRecord]:
        parse = parse_jsonl_line if self.fmt == "jsonl" else parse_tsv_line
        with self.path.open("r", encoding="utf-8") as handle:
            for line_number, text in enumerate(handle, start=1):
                if not text.strip():
                    continue
                try:
                    yield parse(text, line_number)
                except RecordFormatError as exc:
                    LOG.warning("Skipping malformed record in %s: %s", self.path, exc)
                    self.issues.append(IngestIssue(exc.line, exc.reason))


@dataclass(frozen=True)
class Document:
    """An immutable bag of words with a timestamp.

    ``items`` holds ``(word_id, count)`` pairs sorted by word id; every count
    is at least one.
    """

    id: str
    timestamp: int
    items: tuple[tuple[int, int], ...]
    topic: Optional[str] = None
    total: int = field(init=False)

    def __post_init__(self) -> None:
        if any(count < 1 for _, count in self.items):
            raise ValueError(f"document {self.id!r} has a non-positive word count")
        object.__setattr__(self, "total", sum(count for _, count in self.items))

    @classmethod
    def from_counts(cls, doc_id: str, timestamp: int, counts: Mapping[int, int], topic: Optional[str] = None) -> "Document":
        items = tuple(sorted((int(word), int(count)) for word, count in counts.items() if count))
        return cls(id=doc_id, timestamp=int(timestamp), items=items, topic=topic)

    @property
    def counts(self) -> dict[int, int]:
        return dict(self.items)

    @property
    def is_empty(self) -> bool:
        return self.total == 0


@dataclass(frozen=True)
class Vocabulary:
    """Word/id bijection with corpus-wide frequencies.

    Ids are assigned in sorted word order so that the same corpus always yields
    the same ids, whatever order its records arrive in.
    """

    words: tuple[str, ...]
    frequencies: tuple[int, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.words) != len(self.frequencies):
            raise ValueError("words and frequencies must have the same length")
        object.__setattr__(self, "index", {word: i for i, word in enumerate(self.words)})

    @classmethod
    def from_counter(cls, counter: Mapping[str, int]) -> "Vocabulary":
        words = tuple(sorted(word for word, count in counter.items() if count > 0))
        return cls(words=words, frequencies=tuple(int(counter[word]) for word in words))

    @property
    def size(self) -> int:
        return len(self.words)

    V = size

    @property
    def total_tokens(self) -> int:
        return sum(self.frequencies)

    @property
    def unigram(self) -> np.ndarray:
        freq = np.asarray(self.frequencies, dtype=np.float64)
        total = freq.sum()
        return freq / total if total > 0 else freq

    @property
    def singleton_ids(self) -> list[int]:
        return [i for i, count in enumerate(self.frequencies) if count == 1]

    @property
    def singleton_count(self) -> int:
        return sum(1 for count in self.frequencies if count == 1)

    def encode(self, tokens: Iterable[str]) -> dict[int, int]:
        """Count tokens by word id; tokens outside the vocabulary are ignored."""
        counts: Counter[int] = Counter()
        for token in tokens:
            word_id = self.index.get(token)
            if word_id is not None:
                counts[word_id] += 1
        return dict(counts)


@dataclass(frozen=True)
class DocumentStore:
    """Documents in deterministic ``(timestamp, id)`` order."""

    documents: tuple[Document, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)
    timestamps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.documents, key=lambda doc: (doc.timestamp, doc.id)))
        index: dict[str, int] = {}
        for position, doc in enumerate(ordered):
            if doc.id in index:
                raise DuplicateDocumentError(doc.id)
            index[doc.id] = position
        stamps = np.asarray([doc.timestamp for doc in ordered], dtype=np.int64)
        stamps.setflags(write=False)
        object.__setattr__(self, "documents", ordered)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "timestamps", stamps)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __getitem__(self, position: int) -> Document:
        return self.documents[position]

    def position(self, doc_id: str) -> int:
        return self.index[doc_id]

    @property
    def ids(self) -> list[str]:
        return [doc.id for doc in self.documents]

    @property
    def empty_ids(self) -> list[str]:
        return [doc.id for doc in self.documents if doc.is_empty]


@dataclass
class Corpus:
    store: DocumentStore
    vocabulary: Vocabulary
    issues: list[IngestIssue] = field(default_factory=list)


def _as_record(item: RawRecord | Mapping[str, Any], position: int) -> RawRecord:
    if isinstance(item, RawRecord):
        return item
    return record_from_mapping(item, position)


def build_vocabulary(records: Iterable[RawRecord]) -> Vocabulary:
    """Vocabulary over every token of ``records`` (a streaming pre-pass)."""
    counter: Counter[str] = Counter()
    for record in records:
        counter.update(tokenize(record.text))
    return Vocabulary.from_counter(counter)


def encode_record(record: RawRecord, vocabulary: Vocabulary) -> Document:
    return Document.from_counts(record.id, record.timestamp, vocabulary.encode(tokenize(record.text)), topic=record.topic)


def ingest(records: Iterable[RawRecord | Mapping[str, Any]]) -> Corpus:
    """Tokenize records, build the vocabulary and the ordered document store.

    Mapping inputs are validated like decoded JSON objects, using their
    1-based position as the line number.
    """
    issues: list[IngestIssue] = []
    parsed: list[tuple[RawRecord, list[str]]] = []
    seen: dict[str, int] = {}
    counter: Counter[str] = Counter()
    for position, item in enumerate(records, start=1):
        try:
            record = _as_record(item, position)
        except RecordFormatError as exc:
            LOG.warning("Skipping malformed record: %s", exc)
            issues.append(IngestIssue(exc.line, exc.reason))
            continue
        line = record.line or position
        if record.id in seen:
            raise DuplicateDocumentError(record.id, seen[record.id], line)
        seen[record.id] = line
        tokens = tokenize(record.text)
        counter.update(tokens)
        parsed.append((record, tokens))

    vocabulary = Vocabulary.from_counter(counter)
    documents = [
        Document.from_counts(record.id, record.timestamp, vocabulary.encode(tokens), topic=record.topic)
        for record, tokens in parsed
    ]
    store = DocumentStore(tuple(documents))
    empty = len(store.empty_ids)
    LOG.info("Ingested %d document(s), vocabulary size %d, %d empty, %d malformed", len(store), vocabulary.size, empty, len(issues))
    return Corpus(store=store, vocabulary=vocabulary, issues=issues)


def load_corpus(path: Path, fmt: str = "jsonl") -> Corpus:
    reader = RecordReader(path, fmt)
    corpus = ingest(reader)
    corpus.issues = reader.issues + corpus.issues
    return corpus
