"""Post text cleaning and whitespace tokenization.

Cleaning removes, in order: URLs, @mentions, #hashtags (whole tag), digits,
then turns punctuation into spaces, lowercases and collapses whitespace.
The output only ever contains letters and single spaces, which is what makes
:func:`clean` idempotent.
"""
from __future__ import annotations

import re
import string
from dataclasses import dataclass, field

_URL = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*://\S*|t\.co/\S*")
# mentions and hashtags in one pass; \w never matches @ or #, so this
# removes exactly what two separate passes would
_TAGS = re.compile(r"[@#]\w+")


def _ascii_table() -> dict[int, str | None]:
    table: dict[int, str | None] = {}
    for code in range(128):
        ch = chr(code)
        if ch in string.digits:
            table[code] = None
        elif ch.isalpha() or ch.isspace():
            continue
        else:
            table[code] = " "
    return table


_ASCII_TABLE = _ascii_table()


def _fold_char(ch: str) -> str:
    # simple (1:1) lowercase mapping; multi-char expansions keep the original
    low = ch.lower()
    return low if len(low) == 1 else ch


def _strip_unicode(text: str) -> str:
    out = []
    for ch in text:
        if ch.isnumeric():
            continue
        if ch.isalpha():
            out.append(_fold_char(ch))
        elif ch.isspace():
            out.append(ch)
        else:
            out.append(" ")
    return "".join(out)


def clean(text: str) -> str:
    """Return the cleaned form of a raw post.

    >>> clean("Check https://t.co/x #Brexit @PM now!!")
    'check now'
    """
    if not text:
        return ""
    if "://" in text or "t.co/" in text:
        text = _URL.sub("", text)
    if "@" in text or "#" in text:
        text = _TAGS.sub("", text)
    if text.isascii():
        text = text.translate(_ASCII_TABLE).lower()
    else:
        text = _strip_unicode(text)
    return " ".join(text.split())


@dataclass(frozen=True)
class TokenBag:
    tokens: list[str] = field(default_factory=list)
    source_seq: int = -1

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(cleaned: str, source_seq: int = -1) -> TokenBag:
    """Split cleaned text on whitespace, dropping empty tokens."""
    return TokenBag(cleaned.split(), source_seq)


def clean_tokens(text: str) -> list[str]:
    """Shortcut for ``tokenize(clean(text)).tokens`` used on the hot path."""
    return clean(text).split()
