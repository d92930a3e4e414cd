"""Span-to-post projection and macro-F1 reporting."""

import random

import pytest

from toxspan.alignment import TokenLabel, spans_to_labels, tokenize_with_offsets
from toxspan.corpus import Dataset, Granularity, Post, PostLabel, SpanSet
from toxspan.errors import DataError
from toxspan.lexicon import lexicon_detect, load_lexicon
from toxspan.metrics import macro_f1
from toxspan.neural import TokenPrediction
from toxspan.postlevel import (
    PostPrediction,
    evaluate_cross_domain,
    report_from_labels,
    to_post_label,
)


class _SpanFake:
    """Test double: predicts spans via a function, with aligned token labels."""

    def __init__(self, span_fn):
        self.span_fn = span_fn

    def predict(self, text, merge_adjacent=False):
        spans = self.span_fn(text)
        labeled = spans_to_labels(tokenize_with_offsets(text), spans)
        probs = tuple(
            (0.0, 1.0) if t.label is TokenLabel.TOXIC else (1.0, 0.0) for t in labeled.tokens
        )
        return spans, TokenPrediction(tokens=labeled.tokens, probabilities=probs)


class TestToPostLabel:
    def test_empty_is_not(self):
        assert to_post_label(SpanSet()) is PostLabel.NOT

    def test_nonempty_is_off(self):
        assert to_post_label(SpanSet.from_iterable(range(12, 17))) is PostLabel.OFF

    def test_single_offset_is_off(self):
        assert to_post_label(SpanSet.from_iterable([0])) is PostLabel.OFF

    def test_monotone_in_span_growth(self):
        rng = random.Random(1)
        offsets: set[int] = set()
        for _ in range(30):
            offsets.add(rng.randrange(100))
            assert to_post_label(SpanSet.from_iterable(offsets)) is PostLabel.OFF


class TestPostPrediction:
    def test_consistent(self):
        PostPrediction("a", SpanSet.from_iterable([1]), PostLabel.OFF)
        PostPrediction("b", SpanSet(), PostLabel.NOT)

    def test_inconsistent_rejected(self):
        with pytest.raises(ValueError):
            PostPrediction("a", SpanSet(), PostLabel.OFF)
        with pytest.raises(ValueError):
            PostPrediction("b", SpanSet.from_iterable([1]), PostLabel.NOT)


def _brute_force_macro(preds, ds):
    """Independent confusion-matrix computation with explicit counting."""
    f1s = []
    for positive in (PostLabel.OFF, PostLabel.NOT):
        tp = fp = fn = 0
        for post in ds.posts:
            got = preds[post.id] is positive
            want = post.post_label is positive
            if got and want:
                tp += 1
            elif got:
                fp += 1
            elif want:
                fn += 1
        if tp == 0:
            f1s.append(0.0)
        else:
            p = tp / (tp + fp)
            r = tp / (tp + fn)
            f1s.append(2 * p * r / (p + r))
    return sum(f1s) / 2


def _random_post_dataset(n, seed):
    rng = random.Random(seed)
    posts = tuple(
        Post(str(i), f"text {i}", post_label=rng.choice([PostLabel.OFF, PostLabel.NOT]))
        for i in range(n)
    )
    return Dataset("rand", "en", Granularity.POST, posts)


class TestReport:
    def test_matches_brute_force_on_200_posts(self):
        ds = _random_post_dataset(200, seed=5)
        rng = random.Random(6)
        preds = {p.id: rng.choice([PostLabel.OFF, PostLabel.NOT]) for p in ds.posts}
        report = report_from_labels(preds, ds)
        assert report.macro_f1 == _brute_force_macro(preds, ds)
        assert report.macro_f1 == macro_f1(preds, ds)

    def test_confusion_counts_sum(self):
        ds = _random_post_dataset(50, seed=7)
        rng = random.Random(8)
        preds = {p.id: rng.choice([PostLabel.OFF, PostLabel.NOT]) for p in ds.posts}
        report = report_from_labels(preds, ds)
        (tp, fp), (fn, tn) = report.confusion
        assert tp + fp + fn + tn == 50

    def test_report_json_shape(self):
        ds = _random_post_dataset(10, seed=1)
        preds = {p.id: p.post_label for p in ds.posts}
        data = report_from_labels(preds, ds, model_name="m").to_dict()
        assert set(data) == {"dataset", "model", "macro_f1", "per_class", "confusion"}
        assert set(data["per_class"]) == {"OFF", "NOT"}
        assert set(data["per_class"]["OFF"]) == {"p", "r", "f1"}

    def test_empty_dataset_rejected(self):
        ds = Dataset("e", "en", Granularity.POST, ())
        with pytest.raises(DataError):
            report_from_labels({}, ds)

    def test_missing_predictions_rejected(self):
        ds = _random_post_dataset(4, seed=3)
        with pytest.raises(DataError, match="missing"):
            report_from_labels({"0": PostLabel.NOT}, ds)


def _posts_with_lexicon_words(n, seed, lex_word="stupid"):
    rng = random.Random(seed)
    posts = []
    for i in range(n):
        if rng.random() < 0.5:
            posts.append(
                Post(str(i), f"that was really {lex_word} of them", post_label=PostLabel.OFF)
            )
        else:
            posts.append(Post(str(i), "a perfectly fine comment", post_label=PostLabel.NOT))
    return Dataset("synthetic-olid", "en", Granularity.POST, tuple(posts))


class TestEvaluateCrossDomain:
    def test_degenerate_model_equals_majority_baseline(self):
        ds = _random_post_dataset(60, seed=9)
        silent = _SpanFake(lambda text: SpanSet())
        report = evaluate_cross_domain([silent], ds)
        majority = {p.id: PostLabel.NOT for p in ds.posts}
        assert report.macro_f1 == macro_f1(majority, ds)

    def test_perfect_lexicon_predictor_scores_one(self, tmp_path):
        lex_file = tmp_path / "lex.txt"
        lex_file.write_text("stupid\n")
        lexicon = load_lexicon([lex_file])
        ds = _posts_with_lexicon_words(40, seed=2)
        detector = _SpanFake(lambda text: lexicon_detect(text, lexicon))
        report = evaluate_cross_domain([detector], ds, model_name="lexicon")
        assert report.macro_f1 == 1.0
        assert report.per_class[PostLabel.OFF].f1 == 1.0

    def test_report_names_default_to_ensemble_description(self, trained_model):
        ds = _posts_with_lexicon_words(4, seed=4)
        report = evaluate_cross_domain([trained_model], ds)
        assert "ensemble(1 seeds" in report.model

    def test_empty_model_list_rejected(self):
        ds = _random_post_dataset(5, seed=0)
        with pytest.raises(ValueError):
            evaluate_cross_domain([], ds)
