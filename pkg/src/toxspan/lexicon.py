"""Profanity-lexicon word-match baseline.

Marks the character offsets of every word whose case-folded form appears in
a lexicon loaded from plain word lists. Exact word match only: substring
matching inflates false positives badly ("class" hitting a four-letter entry).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .corpus import SpanSet
from .errors import DataError

logger = logging.getLogger(__name__)

# Same word shape as the alignment tokenizer: letter/digit runs, apostrophes
# only word-internally, everything else is a boundary.
_WORD_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")


@dataclass(frozen=True)
class Lexicon:
    entries: frozenset[str]
    source: str

    def __post_init__(self) -> None:
        if not self.entries:
            raise DataError(f"lexicon from {self.source!r} is empty")
        for entry in self.entries:
            if any(ch.isspace() for ch in entry):
                raise ValueError(f"lexicon entry contains whitespace: {entry!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self.entries


def load_lexicon(paths: Iterable[str | Path]) -> Lexicon:
    """Union one-word-per-line files into a case-folded, deduplicated lexicon.

    Blank lines and ``#`` comments are skipped; multi-word lines are rejected
    with a warning (the supported lists are single-token).
    """
    paths = [Path(p) for p in paths]
    entries: set[str] = set()
    for path in paths:
        with path.open(encoding="utf-8") as fh:
            for raw in fh:
                word = raw.strip()
                if not word or word.startswith("#"):
                    continue
                if any(ch.isspace() for ch in word):
                    logger.warning("%s: skipping multi-word entry %r", path, word)
                    continue
                entries.add(word.casefold())
    if not entries:
        raise DataError(f"no lexicon entries found in {[str(p) for p in paths]}")
    return Lexicon(entries=frozenset(entries), source=",".join(str(p) for p in paths))


def lexicon_detect(text: str, lex: Lexicon) -> SpanSet:
    """Return the offsets of all maximal words whose folded form is in ``lex``."""
    offsets: list[int] = []
    for match in _WORD_RE.finditer(text):
        if match.group().casefold() in lex.entries:
            offsets.extend(range(match.start(), match.end()))
    return SpanSet.from_iterable(offsets)
