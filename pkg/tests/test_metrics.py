from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import mannwhitneyu

from framegrind.metrics import (DONE, ERROR, SKIPPED, ClockSkew, ConfusionCounts, EmptyInput,
                                EmptyTrace, LabeledScore, LengthMismatch, SingleClassInput,
                                StageTraceEvent, accuracy, as_samples, auc, confusion, decide,
                                mann_whitney_auc, nearest_rank, roc_curve, throughput_report)


def pairs_oracle(labels, scores):
    """Exact concordant-pair fraction, ties worth one half."""
    pos = [s for y, s in zip(labels, scores) if y]
    neg = [s for y, s in zip(labels, scores) if not y]
    wins = sum(Fraction(1) if p > n else Fraction(1, 2) if p == n else 0
               for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# -- accuracy and confusion ------------------------------------------------------------------


def test_accuracy_examples():
    assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
    assert accuracy([1, 1, 0, 0], [1, 0, 0, 0]) == 0.75
    assert accuracy([1, 0], [0, 1]) == 0.0


def test_accuracy_errors():
    with pytest.raises(LengthMismatch):
        accuracy([1, 0], [1])
    with pytest.raises(EmptyInput):
        accuracy([], [])


def test_confusion_examples():
    assert confusion([1, 0], [1, 0]) == ConfusionCounts(1, 1, 0, 0)
    assert confusion([1, 0], [0, 1]) == ConfusionCounts(0, 0, 1, 1)
    with pytest.raises(LengthMismatch):
        confusion([1], [])


def test_accuracy_consistent_with_confusion(rng):
    for _ in range(100):
        n = int(rng.integers(1, 60))
        y, d = rng.random(n) < 0.5, rng.random(n) < 0.5
        c = confusion(y, d)
        assert c.total == n
        assert accuracy(y, d) == (c.tp + c.tn) / c.total


def test_decide_threshold():
    assert decide([0.49, 0.5, 0.51]) == [False, True, True]
    assert decide([0.3, 0.7], threshold=0.7) == [False, True]


# -- ROC and AUC -------------------------------------------------------------------------------


def test_roc_perfect_separation():
    pts = roc_curve(as_samples([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1]))
    assert (0.0, 1.0) in pts and pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)


def test_roc_constant_scores():
    assert roc_curve(as_samples([1, 0, 1, 0], [0.5] * 4)) == [(0.0, 0.0), (1.0, 1.0)]


def test_roc_four_sample_hand_case():
    # thresholds 0.8, 0.6, 0.4, 0.2 admit pos, neg, pos, neg in turn
    pts = roc_curve(as_samples([1, 1, 0, 0], [0.8, 0.4, 0.6, 0.2]))
    assert pts == [(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]


def test_roc_tie_group_is_one_point():
    pts = roc_curve(as_samples([1, 0, 1, 0], [0.9, 0.5, 0.5, 0.1]))
    assert pts == [(0.0, 0.0), (0.0, 0.5), (0.5, 1.0), (1.0, 1.0)]


def test_auc_examples():
    assert auc(as_samples([1, 0], [0.9, 0.1])) == 1.0
    assert auc(as_samples([1, 0], [0.1, 0.9])) == 0.0
    assert auc(as_samples([1, 1, 0, 0], [0.8, 0.4, 0.6, 0.2])) == 0.75
    assert auc(as_samples([1, 0], [0.5, 0.5])) == 0.5


def test_single_class_rejected():
    for fn in (auc, roc_curve, mann_whitney_auc):
        with pytest.raises(SingleClassInput):
            fn(as_samples([1, 1], [0.2, 0.3]))


def test_labeled_score_finite():
    with pytest.raises(ValueError):
        LabeledScore(True, float("nan"))
    with pytest.raises(LengthMismatch):
        as_samples([1, 0], [0.5])


def random_case(rng):
    n = int(rng.integers(2, 201))
    labels = rng.random(n) < rng.uniform(0.1, 0.9)
    labels[0], labels[1] = True, False
    # coarse grid so ties are common
    scores = rng.integers(0, int(rng.integers(2, 30)), size=n) / 10.0
    return labels, scores


def test_auc_matches_independent_oracles(rng):
    for _ in range(200):
        labels, scores = random_case(rng)
        samples = as_samples(labels, scores)
        exact = pairs_oracle(labels.tolist(), scores.tolist())
        u = mannwhitneyu(scores[labels], scores[~labels]).statistic
        n_pos, n_neg = int(labels.sum()), int((~labels).sum())
        assert abs(auc(samples) - float(exact)) <= 1e-12
        assert abs(u / (n_pos * n_neg) - float(exact)) <= 1e-12
        assert abs(mann_whitney_auc(samples) - float(exact)) <= 1e-12


def test_auc_label_flip_without_ties(rng):
    for _ in range(50):
        n = int(rng.integers(2, 80))
        labels = rng.random(n) < 0.5
        labels[0], labels[1] = True, False
        scores = rng.permutation(n) / n
        a = auc(as_samples(labels, scores))
        assert auc(as_samples(~labels, scores)) == pytest.approx(1 - a, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 20)), min_size=2, max_size=60))
def test_roc_monotone_and_auc_bounds(rows):
    labels = [y for y, _ in rows]
    if all(labels) or not any(labels):
        return
    samples = as_samples(labels, [s / 20 for _, s in rows])
    pts = roc_curve(samples)
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
    assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(pts, pts[1:]))
    assert len(pts) == len({s for _, s in rows}) + 1
    assert 0.0 <= auc(samples) <= 1.0


def test_auc_monotone_transform_invariance(rng):
    for _ in range(100):
        labels, scores = random_case(rng)
        base = auc(as_samples(labels, scores))
        for f in (np.exp, lambda s: 3 * s - 7, lambda s: s ** 3, lambda s: 1 / (1 + np.exp(-s))):
            assert auc(as_samples(labels, f(scores))) == base


# -- throughput ----------------------------------------------------------------------------------


def ev(stage, fid, t0, t1, outcome=DONE):
    return StageTraceEvent(stage, fid, t0, t1, outcome)


def test_hundred_events_over_five_seconds():
    trace = [ev("s", i, i * 50_000_000, (i + 1) * 50_000_000) for i in range(100)]
    assert throughput_report(trace).fps("s") == 20.0


def test_instant_display_latency_is_stage_cost():
    grabs = [ev("grab", i, i * 10, i * 10) for i in range(1, 11)]
    disp = [ev("show", i, i * 10, i * 10 + 5) for i in range(1, 11)]
    rep = throughput_report(grabs + disp, grabs, disp)
    assert rep.latency_p50_ns == rep.latency_p99_ns == 5 and rep.displayed == 10


def test_skip_fraction_and_errors():
    trace = [ev("c", 1, 0, 10), ev("c", 2, 5, 5, SKIPPED), ev("c", 3, 5, 5, SKIPPED),
             ev("c", 4, 10, 20, ERROR), ev("c", 5, 20, 30)]
    row = throughput_report(trace).stage("c")
    assert (row.done, row.skipped, row.errors) == (2, 2, 1)
    assert row.skip_fraction == 0.5


def test_trace_errors():
    with pytest.raises(EmptyTrace):
        throughput_report([])
    with pytest.raises(ClockSkew):
        throughput_report([ev("s", 1, 10, 9)])
    with pytest.raises(ClockSkew):
        throughput_report([ev("g", 1, 10, 10), ev("d", 1, 2, 5)], [ev("g", 1, 10, 10)],
                          [ev("d", 1, 2, 5)])


def test_nearest_rank():
    vals = [15, 20, 35, 40, 50]
    assert [nearest_rank(vals, q) for q in (5, 30, 40, 50, 100)] == [15, 20, 20, 35, 50]
    with pytest.raises(EmptyInput):
        nearest_rank([], 50)


def test_report_is_deterministic(rng):
    trace = [ev("s", i, int(t), int(t) + int(d)) for i, (t, d) in
             enumerate(zip(np.cumsum(rng.integers(1, 10**6, 200)), rng.integers(0, 10**6, 200)))]
    a, b = throughput_report(trace, trace, trace), throughput_report(list(trace), trace, trace)
    assert a == b and a.to_dict() == b.to_dict()
