"""Projection of span predictions to post-level OFF/NOT labels.

A text is offensive iff at least one offensive span was found in it; no
span-count or length threshold. This allows span models trained on one
corpus to be scored against datasets annotated only at the post level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Dataset, Granularity, PostLabel, SpanSet
from .errors import DataError
from .neural import SpanModel, ensemble_predict


@dataclass(frozen=True)
class PostPrediction:
    post_id: str
    spans: SpanSet
    label: PostLabel

    def __post_init__(self) -> None:
        if (self.label is PostLabel.OFF) != bool(self.spans):
            raise ValueError("label must be OFF exactly when spans are non-empty")


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class PostLevelReport:
    """Macro-F1 with the per-class scores and confusion counts behind it."""

    dataset: str
    model: str
    macro_f1: float
    per_class: dict[PostLabel, ClassScore]
    # [[tp, fp], [fn, tn]] with OFF as the positive class
    confusion: tuple[tuple[int, int], tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "macro_f1": round(self.macro_f1, 4),
            "per_class": {
                label.value: {
                    "p": round(score.precision, 4),
                    "r": round(score.recall, 4),
                    "f1": round(score.f1, 4),
                }
                for label, score in self.per_class.items()
            },
            "confusion": [list(row) for row in self.confusion],
        }


def to_post_label(spans: SpanSet) -> PostLabel:
    """OFF iff the span set is non-empty."""
    return PostLabel.OFF if spans else PostLabel.NOT


def report_from_labels(
    preds: Mapping[str, PostLabel],
    ds: Dataset,
    *,
    dataset_name: str | None = None,
    model_name: str = "",
) -> PostLevelReport:
    """Score post-level label predictions against a POST dataset."""
    if ds.granularity is not Granularity.POST:
        raise ValueError("post-level evaluation requires a POST dataset")
    if not ds.posts:
        raise DataError("cannot evaluate an empty dataset")
    missing = [p.id for p in ds.posts if p.id not in preds]
    if missing:
        raise DataError(f"missing predictions for {len(missing)} post(s): {missing[:10]}")

    tp = fp = fn = tn = 0
    for post in ds.posts:
        pred_off = preds[post.id] is PostLabel.OFF
        gold_off = post.post_label is PostLabel.OFF
        if pred_off and gold_off:
            tp += 1
        elif pred_off:
            fp += 1
        elif gold_off:
            fn += 1
        else:
            tn += 1

    def score(tp_: int, fp_: int, fn_: int) -> ClassScore:
        precision = tp_ / (tp_ + fp_) if tp_ + fp_ else 0.0
        recall = tp_ / (tp_ + fn_) if tp_ + fn_ else 0.0
        return ClassScore(precision=precision, recall=recall, f1=_class_f1(tp_, fp_, fn_))

    per_class = {
        PostLabel.OFF: score(tp, fp, fn),
        PostLabel.NOT: score(tn, fn, fp),  # swapped: NOT's false positives are OFF's misses
    }
    macro = (per_class[PostLabel.OFF].f1 + per_class[PostLabel.NOT].f1) / 2.0
    return PostLevelReport(
        dataset=dataset_name or ds.name,
        model=model_name,
        macro_f1=macro,
        per_class=per_class,
        confusion=((tp, fp), (fn, tn)),
    )


def evaluate_cross_domain(
    models: Sequence[SpanModel],
    ds: Dataset,
    *,
    merge_adjacent: bool = False,
    model_name: str | None = None,
) -> PostLevelReport:
    """Run the seed ensemble over a post-level dataset and score the
    span-existence projection with macro F1."""
    if not models:
        raise ValueError("evaluate_cross_domain requires at least one model")
    preds = {
        post.id: to_post_label(ensemble_predict(models, post.text, merge_adjacent=merge_adjacent))
        for post in ds.posts
    }
    if model_name is None:
        config = getattr(models[0], "config", None)
        base = getattr(config, "base_checkpoint", type(models[0]).__name__)
        model_name = f"ensemble({len(models)} seeds, {base})"
    return report_from_labels(preds, ds, model_name=model_name)
