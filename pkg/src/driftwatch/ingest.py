"""NDJSON post sources, record parsing and language filtering.

Sources yield raw lines one at a time; nothing upstream of the detector ever
holds more than the record currently being processed.
"""
from __future__ import annotations

import json
import logging
import re
import sys
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, NamedTuple

from .textprep import clean_tokens

logger = logging.getLogger(__name__)


class SourceKind(str, Enum):
    FILE_REPLAY = "file-replay"
    STDIN = "stdin"
    LIVE = "live"


class LangPolicy(str, Enum):
    METADATA = "metadata"
    HEURISTIC = "heuristic"
    OFF = "off"


class SourceError(OSError):
    """The source cannot be opened (bad path or endpoint)."""


class ParseError(ValueError):
    pass


_raw_decode = json.JSONDecoder().raw_decode


class TweetRecord(NamedTuple):
    seq: int
    created_at: datetime
    text: str
    lang: str | None = None
    # created_at rendered as RFC 3339 UTC with a Z suffix
    stamp: str = ""


@dataclass(frozen=True)
class SourceSpec:
    kind: SourceKind
    location: str = "-"
    replay_rate: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.replay_rate is not None and self.replay_rate <= 0:
            raise ValueError("replay_rate must be positive")

    @classmethod
    def from_arg(cls, location: str, replay_rate: float | None = None) -> "SourceSpec":
        """Interpret a ``--source`` value: ``-`` is stdin, ``scheme://`` is live, else a file."""
        if location == "-":
            return cls(SourceKind.STDIN, "-", replay_rate)
        if "://" in location:
            return cls(SourceKind.LIVE, location, replay_rate)
        return cls(SourceKind.FILE_REPLAY, location, replay_rate)


# scheme -> factory(endpoint) returning an iterable of NDJSON lines
LIVE_SOURCES: dict[str, Callable[[str], Iterable[str | bytes]]] = {}


def register_live_source(scheme: str, factory: Callable[[str], Iterable[str | bytes]]) -> None:
    """Plug in a live source for endpoints of the form ``scheme://...``."""
    LIVE_SOURCES[scheme] = factory


@dataclass
class IngestStats:
    lines: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    diagnostics: deque = field(default_factory=lambda: deque(maxlen=100))
    # records held between read and hand-off; stays at most 1
    buffered: int = 0
    max_buffered: int = 0

    def reject(self, reason: str, detail: str) -> None:
        self.rejected[reason] += 1
        self.diagnostics.append(f"{reason}: {detail}")

    def as_dict(self) -> dict:
        return {
            "lines": self.lines,
            "accepted": self.accepted,
            "rejected": dict(sorted(self.rejected.items())),
        }


def _throttle(lines: Iterable, rate: float) -> Iterator:
    interval = 1.0 / rate
    due = time.monotonic()
    for line in lines:
        now = time.monotonic()
        if now < due:
            time.sleep(due - now)
        due = max(due, now) + interval
        yield line


def _guarded(lines: Iterable, stats: IngestStats | None) -> Iterator:
    # a source dying mid-stream is treated as end of stream
    try:
        yield from lines
    except (OSError, EOFError) as exc:
        logger.warning("source closed mid-stream: %s", exc)
        if stats is not None:
            stats.diagnostics.append(f"source-closed: {exc}")


def _read_file(path: Path) -> Iterator[bytes]:
    with path.open("rb") as fh:
        yield from fh


def open_source(spec: SourceSpec, stats: IngestStats | None = None) -> Iterator[str | bytes]:
    """Open a source and return an iterator over its raw lines, in order.

    Raises :class:`SourceError` right away for an unreadable path or an
    endpoint with no registered live source.
    """
    if spec.kind is SourceKind.FILE_REPLAY:
        path = Path(spec.location)
        if not path.is_file():
            raise SourceError(f"source file not found or not a file: {path}")
        try:
            path.open("rb").close()
        except OSError as exc:
            raise SourceError(f"cannot read source {path}: {exc}") from exc
        lines: Iterable = _read_file(path)
    elif spec.kind is SourceKind.STDIN:
        lines = sys.stdin.buffer
    else:
        scheme, sep, rest = spec.location.partition("://")
        if not sep or not scheme or not rest:
            raise SourceError(f"malformed endpoint: {spec.location!r}")
        factory = LIVE_SOURCES.get(scheme)
        if factory is None:
            raise SourceError(f"no live source registered for scheme {scheme!r}")
        lines = factory(spec.location)
    if spec.replay_rate is not None:
        lines = _throttle(lines, spec.replay_rate)
    return _guarded(lines, stats)


def format_timestamp(ts: datetime) -> str:
    """RFC 3339 in UTC with a ``Z`` suffix; sub-second digits only when present."""
    if ts.tzinfo is not None and ts.utcoffset():
        ts = ts.astimezone(timezone.utc)
    return ts.replace(tzinfo=None).isoformat() + "Z"


_RFC3339 = re.compile(
    r"(\d{4}-\d{2}-\d{2})[Tt ](\d{2}:\d{2}:\d{2})(?:\.(\d+))?([Zz]|[+-]\d{2}:\d{2})?"
)


def parse_timestamp(value: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime.

    A missing offset is taken as UTC; fractions beyond microseconds are cut.
    """
    try:
        if value[-1:] in ("Z", "z"):
            return datetime.fromisoformat(value[:-1] + "+00:00")
        dt = datetime.fromisoformat(value)
    except ValueError:
        m = _RFC3339.fullmatch(value)
        if m is None:
            raise
        date, time_, frac, offset = m.groups()
        frac = (frac or "")[:6].ljust(6, "0")
        if offset is None or offset in ("Z", "z"):
            offset = "+00:00"
        dt = datetime.fromisoformat(f"{date}T{time_}.{frac}{offset}")
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    if dt.utcoffset():
        dt = dt.astimezone(timezone.utc)
    return dt


def parse_record(line: str | bytes, seq: int = 0) -> TweetRecord:
    """Parse one NDJSON line into a :class:`TweetRecord`.

    ``created_at`` and ``text`` are mandatory, ``lang`` is optional.
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8: {exc}") from None
    try:
        if line[:1].isspace():
            line = line.lstrip()
        obj, end = _raw_decode(line)
    except ValueError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if end != len(line) and line[end:].strip():
        raise ParseError(f"invalid JSON: extra data at char {end}")
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object")
    created = obj.get("created_at")
    text = obj.get("text")
    if not isinstance(created, str):
        raise ParseError("missing or non-string created_at")
    if not isinstance(text, str):
        raise ParseError("missing or non-string text")
    try:
        ts = parse_timestamp(created)
    except ValueError:
        raise ParseError(f"bad created_at {created!r}") from None
    lang = obj.get("lang")
    if lang is not None and not isinstance(lang, str):
        raise ParseError("lang must be a string")
    if len(created) == 20 and created[19] == "Z" and created[10] == "T":
        stamp = created
    else:
        stamp = format_timestamp(ts)
    return TweetRecord(seq, ts, text, lang or None, stamp)


def _load_stopwords() -> frozenset[str]:
    text = resources.files("driftwatch.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


STOPWORDS = _load_stopwords()
DEFAULT_HEURISTIC_THRESHOLD = 0.10


def stopword_fraction(tokens: list[str]) -> float:
    if not tokens:
        return 0.0
    return sum(1 for t in tokens if t in STOPWORDS) / len(tokens)


def language_filter(
    record: TweetRecord,
    policy: LangPolicy | str = LangPolicy.METADATA,
    threshold: float = DEFAULT_HEURISTIC_THRESHOLD,
    tokens: list[str] | None = None,
) -> bool:
    """Decide whether a record is English enough to keep.

    ``tokens`` may be passed when the caller has already cleaned the text.
    """
    policy = LangPolicy(policy)
    if policy is LangPolicy.OFF:
        return True
    if policy is LangPolicy.METADATA and record.lang is not None:
        return record.lang.lower() == "en"
    if tokens is None:
        tokens = clean_tokens(record.text)
    return stopword_fraction(tokens) >= threshold


def ingest(
    lines: Iterable[str | bytes],
    policy: LangPolicy | str = LangPolicy.METADATA,
    threshold: float = DEFAULT_HEURISTIC_THRESHOLD,
    stats: IngestStats | None = None,
) -> Iterator[TweetRecord]:
    """Parse and filter raw lines, numbering accepted records from 0.

    Malformed lines and rejected languages are counted in ``stats`` and
    never yielded.
    """
    if stats is None:
        stats = IngestStats()
    policy = LangPolicy(policy)
    metadata = policy is LangPolicy.METADATA
    seq = 0
    for lineno, line in enumerate(lines, start=1):
        stats.lines += 1
        if not line.strip():
            stats.reject("blank", f"line {lineno}")
            continue
        try:
            record = parse_record(line, seq)
        except ParseError as exc:
            stats.reject("parse-error", f"line {lineno}: {exc}")
            continue
        if metadata and record.lang is not None:
            keep = record.lang == "en" or record.lang.lower() == "en"
        else:
            keep = language_filter(record, policy, threshold)
        if not keep:
            stats.reject("language", f"line {lineno}: lang={record.lang}")
            continue
        stats.accepted += 1
        seq += 1
        stats.buffered = 1
        if stats.max_buffered < 1:
            stats.max_buffered = 1
        yield record
        stats.buffered = 0
