"""Span-level and post-level evaluation.

The span score treats predictions and gold annotations as sets of character
offsets: precision is |pred ∩ gold| / |pred|, recall is |pred ∩ gold| / |gold|,
and F1 their harmonic mean, averaged unweighted over posts.

Degenerate cases (a set is empty, so a ratio divides by zero): both sets
empty scores 1.0, exactly one empty scores 0.0. This matches the convention
of the shared-task scorer this metric originates from and noticeably shifts
corpus means on data with many span-free posts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .corpus import Dataset, Granularity, PostLabel, SpanSet
from .errors import DataError, RowParseError


@dataclass(frozen=True)
class SpanScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    """Per-post span scores plus their unweighted corpus mean."""

    per_post: tuple[tuple[str, SpanScore], ...]
    mean_f1: float
    n_posts: int

    def to_dict(self) -> dict:
        return {
            "mean_f1": round(self.mean_f1, 4),
            "n_posts": self.n_posts,
            "per_post": [
                {
                    "id": post_id,
                    "precision": round(s.precision, 4),
                    "recall": round(s.recall, 4),
                    "f1": round(s.f1, 4),
                }
                for post_id, s in self.per_post
            ],
        }


def span_f1(pred: SpanSet, gold: SpanSet) -> SpanScore:
    """Set-overlap precision/recall/F1 between predicted and gold offsets."""
    if not pred and not gold:
        return SpanScore(precision=1.0, recall=1.0, f1=1.0)
    inter = len(set(pred.offsets).intersection(gold.offsets))
    precision = inter / len(pred) if pred else 0.0
    recall = inter / len(gold) if gold else 0.0
    if precision + recall == 0.0:
        return SpanScore(precision=precision, recall=recall, f1=0.0)
    return SpanScore(
        precision=precision,
        recall=recall,
        f1=2.0 * precision * recall / (precision + recall),
    )


def evaluate_spans(preds: Mapping[str, SpanSet], ds: Dataset) -> EvalReport:
    """Score span predictions against a SPAN dataset, one score per post."""
    if ds.granularity is not Granularity.SPAN:
        raise ValueError("evaluate_spans requires a SPAN dataset")
    missing = [p.id for p in ds.posts if p.id not in preds]
    if missing:
        raise DataError(f"missing predictions for {len(missing)} post(s): {missing[:10]}")

    per_post: list[tuple[str, SpanScore]] = []
    total = 0.0
    for post in ds.posts:
        assert post.gold_spans is not None
        score = span_f1(preds[post.id], post.gold_spans)
        per_post.append((post.id, score))
        total += score.f1
    n = len(ds.posts)
    return EvalReport(per_post=tuple(per_post), mean_f1=total / n if n else 0.0, n_posts=n)


def _class_f1(tp: int, fp: int, fn: int) -> float:
    # tp == 0 covers both the all-wrong case and the class-absent case.
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def macro_f1(preds: Mapping[str, PostLabel], ds: Dataset) -> float:
    """Unweighted mean of per-class F1 over {OFF, NOT} on a POST dataset."""
    if ds.granularity is not Granularity.POST:
        raise ValueError("macro_f1 requires a POST dataset")
    missing = [p.id for p in ds.posts if p.id not in preds]
    if missing:
        raise DataError(f"missing predictions for {len(missing)} post(s): {missing[:10]}")

    scores = []
    for cls in (PostLabel.OFF, PostLabel.NOT):
        tp = sum(1 for p in ds.posts if preds[p.id] is cls and p.post_label is cls)
        fp = sum(1 for p in ds.posts if preds[p.id] is cls and p.post_label is not cls)
        fn = sum(1 for p in ds.posts if preds[p.id] is not cls and p.post_label is cls)
        scores.append(_class_f1(tp, fp, fn))
    return sum(scores) / len(scores)


def write_span_predictions(preds: Mapping[str, SpanSet], path: str | Path) -> None:
    """Write predictions as JSON-lines ``{"id": ..., "spans": [...]}``."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for post_id, spans in preds.items():
            fh.write(json.dumps({"id": post_id, "spans": list(spans.offsets)}) + "\n")


def read_span_predictions(path: str | Path) -> dict[str, SpanSet]:
    preds: dict[str, SpanSet] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                preds[str(record["id"])] = SpanSet.from_iterable(record["spans"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RowParseError(f"bad prediction record: {exc}", line_no) from exc
    return preds


def read_label_predictions(path: str | Path) -> dict[str, PostLabel]:
    preds: dict[str, PostLabel] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                preds[str(record["id"])] = PostLabel(record["label"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise RowParseError(f"bad prediction record: {exc}", line_no) from exc
    return preds
