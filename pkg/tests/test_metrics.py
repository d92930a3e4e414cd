"""Span F1, corpus aggregation, and post-level macro F1.

The independent brute-force scorer below materializes both offset sets and
counts memberships with plain loops; it exists to cross-check the library
implementation and must stay decoupled from it.
"""

import random
import time

import pytest
from hypothesis import given, strategies as st

from toxspan.corpus import Dataset, Granularity, Post, PostLabel, SpanSet
from toxspan.errors import DataError
from toxspan.metrics import (
    evaluate_spans,
    macro_f1,
    read_span_predictions,
    span_f1,
    write_span_predictions,
)


def brute_force_f1(pred_offsets, gold_offsets):
    """Reference scorer: explicit set materialization and counting."""
    pred = []
    for off in pred_offsets:
        if off not in pred:
            pred.append(off)
    gold = []
    for off in gold_offsets:
        if off not in gold:
            gold.append(off)
    if not pred and not gold:
        return 1.0
    hits = 0
    for off in pred:
        for g in gold:
            if off == g:
                hits += 1
                break
    p = hits / len(pred) if pred else 0.0
    r = hits / len(gold) if gold else 0.0
    if p + r == 0.0:
        return 0.0
    return 2 * p * r / (p + r)


class TestSpanF1:
    def test_identical_sets_score_one(self):
        spans = SpanSet.from_iterable(list(range(0, 6)) + list(range(34, 40)))
        assert span_f1(spans, spans).f1 == 1.0

    def test_half_recall(self):
        pred = SpanSet.from_iterable(range(0, 6))
        gold = SpanSet.from_iterable(list(range(0, 6)) + list(range(34, 40)))
        score = span_f1(pred, gold)
        assert score.precision == 1.0
        assert score.recall == 0.5
        assert score.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_degenerate_cases(self):
        empty = SpanSet()
        one = SpanSet.from_iterable([1])
        assert span_f1(empty, empty).f1 == 1.0
        assert span_f1(one, empty).f1 == 0.0
        assert span_f1(empty, one).f1 == 0.0
        assert span_f1(one, one).f1 == 1.0

    def test_f1_definition_holds(self):
        rng = random.Random(0)
        for _ in range(200):
            pred = SpanSet.from_iterable(rng.sample(range(50), rng.randint(0, 20)))
            gold = SpanSet.from_iterable(rng.sample(range(50), rng.randint(0, 20)))
            s = span_f1(pred, gold)
            if s.precision + s.recall > 0:
                expected = 2 * s.precision * s.recall / (s.precision + s.recall)
                assert abs(s.f1 - expected) < 1e-12

    @given(
        st.sets(st.integers(min_value=0, max_value=60)),
        st.sets(st.integers(min_value=0, max_value=60)),
    )
    def test_symmetry(self, a, b):
        pred, gold = SpanSet.from_iterable(a), SpanSet.from_iterable(b)
        assert span_f1(pred, gold).f1 == pytest.approx(span_f1(gold, pred).f1, abs=1e-12)

    @given(
        st.sets(st.integers(min_value=0, max_value=60)),
        st.sets(st.integers(min_value=0, max_value=60)),
    )
    def test_bounds_and_extremes(self, a, b):
        pred, gold = SpanSet.from_iterable(a), SpanSet.from_iterable(b)
        f1 = span_f1(pred, gold).f1
        assert 0.0 <= f1 <= 1.0
        if f1 == 1.0:
            assert pred == gold
        if pred and gold and set(a).isdisjoint(b):
            assert f1 == 0.0
        if f1 == 0.0:
            assert set(a).isdisjoint(b) and (pred or gold)

    def test_growing_intersection_never_hurts(self):
        # |pred| = |gold| = 10 fixed; overlap k grows from 0 to 10.
        previous = -1.0
        for k in range(11):
            pred = SpanSet.from_iterable(range(0, 10))
            gold = SpanSet.from_iterable(list(range(0, k)) + list(range(100, 110 - k)))
            f1 = span_f1(pred, gold).f1
            assert f1 >= previous
            previous = f1

    def test_oracle_equivalence_thousand_pairs(self):
        rng = random.Random(42)
        start = time.perf_counter()
        cases = []
        # Force all four empty/non-empty combinations in the sample.
        cases.append(([], []))
        cases.append(([1], []))
        cases.append(([], [1]))
        cases.append(([1], [1]))
        for _ in range(996):
            length = rng.randint(1, 200)
            pred = rng.sample(range(length), rng.randint(0, min(40, length)))
            gold = rng.sample(range(length), rng.randint(0, min(40, length)))
            cases.append((pred, gold))
        for pred, gold in cases:
            expected = brute_force_f1(pred, gold)
            actual = span_f1(SpanSet.from_iterable(pred), SpanSet.from_iterable(gold)).f1
            assert actual == expected, (pred, gold)
        assert time.perf_counter() - start < 10.0


def _span_dataset(posts):
    return Dataset("d", "en", Granularity.SPAN, tuple(posts))


class TestEvaluateSpans:
    def test_mean_of_two(self):
        ds = _span_dataset(
            [
                Post("a", "bad", SpanSet.from_iterable([0, 1, 2])),
                Post("b", "ok", SpanSet()),
            ]
        )
        preds = {"a": SpanSet.from_iterable([0, 1, 2]), "b": SpanSet.from_iterable([0])}
        report = evaluate_spans(preds, ds)
        assert report.mean_f1 == 0.5
        assert report.n_posts == 2

    def test_perfect_on_fixture(self, table1):
        preds = {p.id: p.gold_spans for p in table1.posts}
        report = evaluate_spans(preds, table1)
        assert report.mean_f1 == 1.0

    def test_missing_prediction_listed(self, table1):
        preds = {p.id: p.gold_spans for p in table1.posts if p.id != "2"}
        with pytest.raises(DataError, match="'2'"):
            evaluate_spans(preds, table1)

    def test_mean_matches_per_post(self, table1):
        preds = {p.id: SpanSet() for p in table1.posts}
        report = evaluate_spans(preds, table1)
        assert report.mean_f1 == pytest.approx(
            sum(s.f1 for _, s in report.per_post) / report.n_posts
        )

    def test_prediction_file_round_trip(self, tmp_path, table1):
        preds = {p.id: p.gold_spans for p in table1.posts}
        path = tmp_path / "preds.jsonl"
        write_span_predictions(preds, path)
        assert read_span_predictions(path) == preds


def _post_dataset(n_off, n_not):
    posts = [Post(f"o{i}", "x", post_label=PostLabel.OFF) for i in range(n_off)]
    posts += [Post(f"n{i}", "x", post_label=PostLabel.NOT) for i in range(n_not)]
    return Dataset("p", "xx", Granularity.POST, tuple(posts))


class TestMacroF1:
    def test_all_correct(self):
        ds = _post_dataset(3, 5)
        preds = {p.id: p.post_label for p in ds.posts}
        assert macro_f1(preds, ds) == 1.0

    def test_majority_baseline_greek_distribution(self):
        # Published class counts for the Greek test split: 425 OFF / 1119 NOT.
        ds = _post_dataset(425, 1119)
        preds = {p.id: PostLabel.NOT for p in ds.posts}
        assert macro_f1(preds, ds) == pytest.approx(0.4202, abs=0.005)

    def test_majority_baseline_danish_distribution(self):
        # Published class counts for the Danish test split: 41 OFF / 288 NOT.
        ds = _post_dataset(41, 288)
        preds = {p.id: PostLabel.NOT for p in ds.posts}
        assert macro_f1(preds, ds) == pytest.approx(0.4668, abs=0.005)

    def test_missing_prediction(self):
        ds = _post_dataset(1, 1)
        with pytest.raises(DataError, match="missing predictions"):
            macro_f1({"o0": PostLabel.OFF}, ds)

    def test_requires_post_granularity(self, table1):
        with pytest.raises(ValueError):
            macro_f1({}, table1)
