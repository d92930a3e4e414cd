"""Conversion between character-offset span sets and token-level labels.

Surface tokens are model-agnostic: words (letter/digit runs, apostrophes
allowed word-internally) and punctuation runs, with exact [start, end)
character ranges. Subword handling belongs to the model layer, not here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator

from .corpus import SpanSet

# Words keep apostrophes only between alphanumerics ("you're" is one token,
# a quoted 'word' is not); punctuation and underscores form their own runs,
# so annotation spans that stop before trailing punctuation stay exact.
_TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*|[^\w\s]+|_+")


class TokenLabel(Enum):
    TOXIC = "TOXIC"
    NOT = "NOT"


@dataclass(frozen=True)
class AlignedToken:
    """A surface token with its [start, end) character range and optional label."""

    surface: str
    start: int
    end: int
    label: TokenLabel | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid token range [{self.start}, {self.end})")


@dataclass(frozen=True)
class LabeledSequence:
    """A text with ordered, non-overlapping aligned tokens."""

    text: str
    tokens: tuple[AlignedToken, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        prev_end = 0
        for tok in self.tokens:
            if tok.start < prev_end:
                raise ValueError(f"token {tok.surface!r} overlaps or reorders at {tok.start}")
            if self.text[tok.start : tok.end] != tok.surface:
                raise ValueError(
                    f"token {tok.surface!r} does not match text range "
                    f"[{tok.start}, {tok.end}) = {self.text[tok.start:tok.end]!r}"
                )
            prev_end = tok.end

    def __iter__(self) -> Iterator[AlignedToken]:
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def labels(self) -> list[TokenLabel | None]:
        return [t.label for t in self.tokens]


def tokenize_with_offsets(text: str) -> LabeledSequence:
    """Split ``text`` into surface tokens covering every non-whitespace character.

    Labels are left unset.
    """
    tokens = tuple(
        AlignedToken(surface=m.group(), start=m.start(), end=m.end())
        for m in _TOKEN_RE.finditer(text)
    )
    return LabeledSequence(text=text, tokens=tokens)


def spans_to_labels(seq: LabeledSequence, gold: SpanSet) -> LabeledSequence:
    """Label each token TOXIC iff its character range intersects ``gold``.

    A single shared character is enough: annotation spans frequently clip
    punctuation, and any-overlap is the robust choice.
    """
    gold.check_within(seq.text)
    gold_set = set(gold.offsets)
    labeled = tuple(
        replace(
            tok,
            label=TokenLabel.TOXIC
            if gold_set.intersection(range(tok.start, tok.end))
            else TokenLabel.NOT,
        )
        for tok in seq.tokens
    )
    return LabeledSequence(text=seq.text, tokens=labeled)


def labels_to_spans(seq: LabeledSequence, merge_adjacent: bool = False) -> SpanSet:
    """Collect the character offsets of all TOXIC tokens.

    With ``merge_adjacent`` the whitespace strictly between two consecutive
    TOXIC tokens is included as well, producing contiguous multiword spans.
    """
    offsets: set[int] = set()
    prev: AlignedToken | None = None
    for tok in seq.tokens:
        if tok.label is None:
            raise ValueError(f"token {tok.surface!r} at {tok.start} has no label")
        if tok.label is TokenLabel.TOXIC:
            offsets.update(range(tok.start, tok.end))
            if merge_adjacent and prev is not None and prev.label is TokenLabel.TOXIC:
                offsets.update(
                    i for i in range(prev.end, tok.start) if seq.text[i].isspace()
                )
        prev = tok
    return SpanSet.from_iterable(offsets)
