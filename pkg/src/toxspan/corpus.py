"""Datasets of span-annotated and post-level offensive-language examples.

Two on-disk formats are supported: the span CSV convention (columns
``spans,text`` where ``spans`` is a bracketed list of every offensive
character's index) and tab-separated post-level files with configurable
columns. JSON-lines is the canonical internal persistence format.

All character offsets index the Unicode code-point sequence of the text,
never bytes.
"""

from __future__ import annotations

import ast
import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError, RowParseError

logger = logging.getLogger(__name__)


class PostLabel(Enum):
    """Post-level judgement: offensive or not."""

    OFF = "OFF"
    NOT = "NOT"


class Granularity(Enum):
    SPAN = "span"
    POST = "post"


@dataclass(frozen=True)
class SpanSet:
    """Sorted set of character offsets marking the offensive characters of one text.

    Offsets are non-negative, strictly increasing code-point indices.
    Construct with :meth:`from_iterable` to normalize arbitrary input order.
    """

    offsets: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        prev = -1
        for off in self.offsets:
            if off < 0:
                raise ValueError(f"negative character offset: {off}")
            if off <= prev:
                raise ValueError("offsets must be strictly increasing and unique")
            prev = off

    @classmethod
    def from_iterable(cls, offsets: Iterable[int]) -> SpanSet:
        return cls(tuple(sorted(set(int(o) for o in offsets))))

    @classmethod
    def from_ranges(cls, ranges: Iterable[tuple[int, int]]) -> SpanSet:
        """Build from half-open [start, end) character ranges."""
        offsets: set[int] = set()
        for start, end in ranges:
            offsets.update(range(start, end))
        return cls.from_iterable(offsets)

    def to_ranges(self) -> list[tuple[int, int]]:
        """Compress to sorted, non-overlapping half-open [start, end) ranges."""
        ranges: list[tuple[int, int]] = []
        for off in self.offsets:
            if ranges and ranges[-1][1] == off:
                ranges[-1] = (ranges[-1][0], off + 1)
            else:
                ranges.append((off, off + 1))
        return ranges

    def union(self, other: SpanSet) -> SpanSet:
        return SpanSet.from_iterable(self.offsets + other.offsets)

    def check_within(self, text: str, owner: str = "") -> None:
        """Raise DataError unless every offset indexes into ``text``."""
        if self.offsets and self.offsets[-1] >= len(text):
            where = f" in post {owner!r}" if owner else ""
            raise DataError(
                f"span offset {self.offsets[-1]} out of bounds for text of "
                f"length {len(text)}{where}"
            )

    def __len__(self) -> int:
        return len(self.offsets)

    def __iter__(self) -> Iterator[int]:
        return iter(self.offsets)

    def __contains__(self, offset: int) -> bool:
        return offset in self.offsets

    def __bool__(self) -> bool:
        return bool(self.offsets)


@dataclass(frozen=True)
class Post:
    """One text instance, optionally with gold spans and/or a post-level label."""

    id: str
    text: str
    gold_spans: SpanSet | None = None
    post_label: PostLabel | None = None

    def __post_init__(self) -> None:
        if self.gold_spans is not None:
            self.gold_spans.check_within(self.text, owner=self.id)


@dataclass(frozen=True)
class Dataset:
    """Immutable, ordered collection of posts at one annotation granularity."""

    name: str
    language: str
    granularity: Granularity
    posts: tuple[Post, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for post in self.posts:
            if self.granularity is Granularity.SPAN and post.gold_spans is None:
                raise DataError(f"span dataset {self.name!r}: post {post.id!r} has no gold spans")
            if self.granularity is Granularity.POST and post.post_label is None:
                raise DataError(f"post dataset {self.name!r}: post {post.id!r} has no label")
        ids = [p.id for p in self.posts]
        if len(set(ids)) != len(ids):
            raise DataError(f"dataset {self.name!r} contains duplicate post ids")

    def __len__(self) -> int:
        return len(self.posts)

    def __iter__(self) -> Iterator[Post]:
        return iter(self.posts)

    def ids(self) -> list[str]:
        return [p.id for p in self.posts]


def _parse_span_literal(raw: str) -> SpanSet:
    try:
        value = ast.literal_eval(raw)
    except (ValueError, SyntaxError) as exc:
        raise ValueError(f"malformed span list {raw!r}: {exc}") from exc
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) for v in value):
        raise ValueError(f"span column must be a list of integers, got {raw!r}")
    return SpanSet.from_iterable(value)


def parse_span_csv(
    path: str | Path,
    *,
    name: str | None = None,
    language: str = "en",
    strict: bool = True,
) -> Dataset:
    """Load a span-annotated CSV with header ``spans,text``.

    Each row becomes one post; the row's ordinal (0-based) is its id.
    In strict mode any unparseable row aborts the load with its line
    number; with ``strict=False`` bad rows are skipped and logged.
    """
    path = Path(path)
    posts: list[Post] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        try:
            spans_col = header.index("spans")
            text_col = header.index("text")
        except ValueError:
            raise DataError(f"{path}: header must contain 'spans' and 'text' columns, got {header}") from None

        for idx, row in enumerate(reader):
            line_no = reader.line_num
            try:
                if len(row) <= max(spans_col, text_col):
                    raise ValueError(f"expected {len(header)} columns, got {len(row)}")
                spans = _parse_span_literal(row[spans_col])
                posts.append(Post(id=str(idx), text=row[text_col], gold_spans=spans))
            except (ValueError, DataError) as exc:
                if strict:
                    raise RowParseError(str(exc), line_no) from exc
                logger.warning("%s line %d skipped: %s", path, line_no, exc)

    return Dataset(
        name=name or path.stem,
        language=language,
        granularity=Granularity.SPAN,
        posts=tuple(posts),
    )


def serialize_span_csv(ds: Dataset, path: str | Path) -> None:
    """Write a SPAN dataset back to the ``spans,text`` CSV convention."""
    if ds.granularity is not Granularity.SPAN:
        raise ValueError("serialize_span_csv requires a SPAN dataset")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["spans", "text"])
        for post in ds.posts:
            assert post.gold_spans is not None
            writer.writerow([str(list(post.gold_spans.offsets)), post.text])


@dataclass(frozen=True)
class ColumnSchema:
    """Names of the id/text/label columns in a post-level TSV."""

    id_column: str = "id"
    text_column: str = "text"
    label_column: str = "label"


def parse_post_tsv(
    path: str | Path,
    schema: ColumnSchema = ColumnSchema(),
    *,
    name: str | None = None,
    language: str = "en",
) -> Dataset:
    """Load a tab-separated post-level file; labels must be exactly OFF or NOT."""
    path = Path(path)
    posts: list[Post] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        try:
            id_col = header.index(schema.id_column)
            text_col = header.index(schema.text_column)
            label_col = header.index(schema.label_column)
        except ValueError as exc:
            raise DataError(f"{path}: missing column in header {header}: {exc}") from None

        for row in reader:
            line_no = reader.line_num
            if len(row) <= max(id_col, text_col, label_col):
                raise RowParseError(f"expected {len(header)} columns, got {len(row)}", line_no)
            raw_label = row[label_col]
            try:
                label = PostLabel(raw_label)
            except ValueError:
                raise RowParseError(
                    f"unmapped label {raw_label!r} (expected 'OFF' or 'NOT')", line_no
                ) from None
            posts.append(Post(id=row[id_col], text=row[text_col], post_label=label))

    return Dataset(
        name=name or path.stem,
        language=language,
        granularity=Granularity.POST,
        posts=tuple(posts),
    )


def write_jsonl(ds: Dataset, path: str | Path) -> None:
    """Persist a dataset in the canonical JSON-lines format."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for post in ds.posts:
            record: dict = {"id": post.id, "text": post.text}
            if post.gold_spans is not None:
                record["spans"] = list(post.gold_spans.offsets)
            if post.post_label is not None:
                record["label"] = post.post_label.value
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_jsonl(
    path: str | Path,
    *,
    name: str | None = None,
    language: str = "en",
) -> Dataset:
    """Load a JSON-lines dataset, inferring granularity from the fields present."""
    path = Path(path)
    posts: list[Post] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RowParseError(f"invalid JSON: {exc}", line_no) from exc
            spans = SpanSet.from_iterable(record["spans"]) if "spans" in record else None
            label = PostLabel(record["label"]) if "label" in record else None
            try:
                posts.append(
                    Post(id=str(record["id"]), text=record["text"], gold_spans=spans, post_label=label)
                )
            except (KeyError, DataError) as exc:
                raise RowParseError(str(exc), line_no) from exc

    if posts and all(p.gold_spans is not None for p in posts):
        granularity = Granularity.SPAN
    elif posts and all(p.post_label is not None for p in posts):
        granularity = Granularity.POST
    else:
        raise DataError(f"{path}: cannot infer granularity (mixed or missing annotations)")
    return Dataset(
        name=name or path.stem,
        language=language,
        granularity=granularity,
        posts=tuple(posts),
    )


def split_train_validation(ds: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministically partition ``ds`` into ceil(n*ratio) train and the rest.

    Both halves preserve the original post order.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(ds.posts)
    if n < 2:
        raise DataError(f"cannot split dataset {ds.name!r} with {n} post(s)")

    n_train = math.ceil(n * ratio)
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    train_idx = sorted(indices[:n_train])
    val_idx = sorted(indices[n_train:])

    def subset(suffix: str, idx: list[int]) -> Dataset:
        return Dataset(
            name=f"{ds.name}-{suffix}",
            language=ds.language,
            granularity=ds.granularity,
            posts=tuple(ds.posts[i] for i in idx),
        )

    return subset("train", train_idx), subset("val", val_idx)
