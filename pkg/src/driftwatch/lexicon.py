"""Sentiment lexicons and bag-of-words scoring."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

BUNDLED = {
    "bing": ("bing_style.tsv", "binary"),
    "afinn": ("afinn_style.tsv", "scored"),
}


class LexiconKind(str, Enum):
    BINARY = "binary"
    SCORED = "scored"


class LexiconError(ValueError):
    """Raised for unreadable or malformed lexicon files."""


@dataclass(frozen=True)
class Lexicon:
    name: str
    kind: LexiconKind
    entries: Mapping[str, int]

    @property
    def size(self) -> int:
        return len(self.entries)

    def get(self, word: str, default: int = 0) -> int:
        return self.entries.get(word, default)

    def __contains__(self, word: str) -> bool:
        return word in self.entries


@dataclass(frozen=True, slots=True)
class ScoredPost:
    seq: int
    created_at: datetime | None
    score: int
    matched: int
    token_count: int


_BINARY_LABELS = {"positive": 1, "negative": -1}


def _parse_entry(raw: str, kind: LexiconKind, lineno: int, source: str) -> tuple[str, int]:
    parts = raw.split("\t")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise LexiconError(f"{source}:{lineno}: expected 'word<TAB>value', got {raw!r}")
    word, value = parts[0].strip(), parts[1].strip()
    if word != word.lower() or not word.isalpha():
        raise LexiconError(f"{source}:{lineno}: word must be lowercase letters only: {word!r}")
    if kind is LexiconKind.BINARY:
        try:
            return word, _BINARY_LABELS[value]
        except KeyError:
            raise LexiconError(
                f"{source}:{lineno}: binary label must be positive|negative, got {value!r}"
            ) from None
    try:
        score = int(value)
    except ValueError:
        raise LexiconError(f"{source}:{lineno}: score is not an integer: {value!r}") from None
    if score == 0 or not -5 <= score <= 5:
        raise LexiconError(f"{source}:{lineno}: score {score} outside [-5,-1] U [1,5]")
    return word, score


def parse_lexicon(lines: Iterable[str], kind: LexiconKind | str, name: str = "lexicon") -> Lexicon:
    """Build a lexicon from TSV lines. Blank lines and ``;`` comments are skipped."""
    kind = LexiconKind(kind)
    entries: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.rstrip("\r\n")
        if not raw.strip() or raw.startswith(";"):
            continue
        word, score = _parse_entry(raw, kind, lineno, name)
        if word in entries:
            logger.warning("%s:%d: duplicate entry %r, last one wins", name, lineno, word)
        entries[word] = score
    return Lexicon(name=name, kind=kind, entries=MappingProxyType(entries))


def load_lexicon(path: str | Path, kind: LexiconKind | str) -> Lexicon:
    """Load a lexicon file.

    Binary files hold ``word<TAB>positive|negative`` rows, scored files hold
    ``word<TAB>integer`` rows with integers in -5..5 excluding 0. Any
    malformed row is fatal and reported with its line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise LexiconError(f"cannot read lexicon {path}: {exc}") from exc
    return parse_lexicon(text.splitlines(), kind, name=path.stem)


def bundled_lexicon(name: str) -> Lexicon:
    """Load one of the lexicons shipped with the package (``bing`` or ``afinn``)."""
    try:
        filename, kind = BUNDLED[name]
    except KeyError:
        raise LexiconError(f"unknown bundled lexicon {name!r}") from None
    text = resources.files("driftwatch.data").joinpath(filename).read_text(encoding="utf-8")
    return parse_lexicon(text.splitlines(), kind, name=name)


def score_tokens(tokens: Iterable[str], lex: Lexicon) -> tuple[int, int]:
    """Return ``(score, matched)``; every occurrence of a word counts."""
    entries = lex.entries
    total = 0
    matched = 0
    for tok in tokens:
        value = entries.get(tok)
        if value is not None:
            total += value
            matched += 1
    return total, matched


def score(bag, lex: Lexicon, created_at: datetime | None = None) -> ScoredPost:
    """Score a :class:`~driftwatch.textprep.TokenBag` against a lexicon."""
    total, matched = score_tokens(bag.tokens, lex)
    return ScoredPost(bag.source_seq, created_at, total, matched, len(bag.tokens))
