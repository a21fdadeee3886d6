"""Classification metrics (ACC, ROC, AUC) and throughput/latency reports from run traces."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DONE, SKIPPED, ERROR = "Done", "Skipped", "Error"
OUTCOMES = (DONE, SKIPPED, ERROR)


class MetricsError(ValueError):
    pass


class LengthMismatch(MetricsError):
    pass


class EmptyInput(MetricsError):
    pass


class SingleClassInput(MetricsError):
    pass


class EmptyTrace(MetricsError):
    pass


class ClockSkew(MetricsError):
    pass


@dataclass(frozen=True)
class LabeledScore:
    label: bool
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class StageTraceEvent:
    stage: str
    frame_id: int
    t_start: int
    t_end: int
    outcome: str

    def to_dict(self) -> dict:
        return OrderedDict([("stage", self.stage), ("frame_id", self.frame_id),
                            ("t_start_ns", self.t_start), ("t_end_ns", self.t_end),
                            ("outcome", self.outcome)])

    @classmethod
    def from_dict(cls, d) -> "StageTraceEvent":
        return cls(d["stage"], int(d["frame_id"]), int(d["t_start_ns"]), int(d["t_end_ns"]),
                   d["outcome"])


def _paired(labels, decisions):
    labels = [bool(x) for x in labels]
    decisions = [bool(x) for x in decisions]
    if len(labels) != len(decisions):
        raise LengthMismatch(f"{len(labels)} labels vs {len(decisions)} decisions")
    return labels, decisions


def confusion(labels, decisions) -> ConfusionCounts:
    labels, decisions = _paired(labels, decisions)
    tp = sum(1 for y, d in zip(labels, decisions) if y and d)
    tn = sum(1 for y, d in zip(labels, decisions) if not y and not d)
    fp = sum(1 for y, d in zip(labels, decisions) if not y and d)
    fn = sum(1 for y, d in zip(labels, decisions) if y and not d)
    return ConfusionCounts(tp, tn, fp, fn)


def accuracy(labels, decisions) -> float:
    """(TP + TN) / (TP + TN + FP + FN)."""
    labels, decisions = _paired(labels, decisions)
    if not labels:
        raise EmptyInput("accuracy of an empty sample")
    c = confusion(labels, decisions)
    return (c.tp + c.tn) / c.total


def decide(scores, threshold: float = 0.5) -> list[bool]:
    """Positive decision when the score reaches the threshold."""
    return [float(s) >= threshold for s in scores]


def _split(samples):
    labels = np.array([bool(s.label) for s in samples], dtype=bool)
    scores = np.array([float(s.score) for s in samples], dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput(f"need both classes, got {n_pos} positive and {n_neg} negative")
    return labels, scores, n_pos, n_neg


def as_samples(labels, scores) -> list[LabeledScore]:
    labels, scores = list(labels), list(scores)
    if len(labels) != len(scores):
        raise LengthMismatch(f"{len(labels)} labels vs {len(scores)} scores")
    return [LabeledScore(bool(y), float(s)) for y, s in zip(labels, scores)]


def _roc_counts(samples):
    """Cumulative (false positives, true positives) after each distinct threshold."""
    labels, scores, n_pos, n_neg = _split(samples)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(y)[ends]
    fps = np.cumsum(~y)[ends]
    tps = np.r_[0, tps]
    fps = np.r_[0, fps]
    return fps, tps, n_neg, n_pos


def roc_curve(samples: Sequence[LabeledScore]) -> list[tuple[float, float]]:
    """ROC points ``(fpr, tpr)`` from (0, 0) to (1, 1), one per distinct score."""
    fps, tps, n_neg, n_pos = _roc_counts(samples)
    return [(f / n_neg, t / n_pos) for f, t in zip(fps.tolist(), tps.tolist())]


def auc(samples: Sequence[LabeledScore]) -> float:
    """Trapezoidal area under the ROC curve.

    Accumulated in integer counts and divided once, so it agrees with the
    pairwise Mann-Whitney statistic (ties worth one half) to rounding.
    """
    fps, tps, n_neg, n_pos = _roc_counts(samples)
    # 2 * area in units of (1 / n_neg) x (1 / n_pos)
    twice = int(np.sum(np.diff(fps) * (tps[1:] + tps[:-1])))
    return twice / (2.0 * n_neg * n_pos)


def mann_whitney_auc(samples: Sequence[LabeledScore]) -> float:
    """P(score of a random positive > that of a random negative), ties count 1/2."""
    labels, scores, n_pos, n_neg = _split(samples)
    pos, neg = scores[labels], scores[~labels]
    wins = 0.0
    for p in pos:
        wins += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return float(wins) / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# throughput


def nearest_rank(values: Sequence[int], q: float) -> int:
    """Nearest-rank percentile (``q`` in (0, 100]) of a non-empty sequence."""
    if not values:
        raise EmptyInput("percentile of an empty sample")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass(frozen=True)
class StageThroughput:
    stage: str
    done: int
    skipped: int
    errors: int
    fps: float
    skip_fraction: float

    def to_dict(self) -> dict:
        return OrderedDict([("stage", self.stage), ("done", self.done), ("skipped", self.skipped),
                            ("errors", self.errors), ("fps", self.fps),
                            ("skip_fraction", self.skip_fraction)])


@dataclass(frozen=True)
class ThroughputReport:
    stages: tuple[StageThroughput, ...]
    latency_p50_ns: int | None
    latency_p95_ns: int | None
    latency_p99_ns: int | None
    displayed: int

    def stage(self, name: str) -> StageThroughput:
        for s in self.stages:
            if s.stage == name:
                return s
        raise KeyError(name)

    def fps(self, name: str) -> float:
        return self.stage(name).fps

    def to_dict(self) -> dict:
        return OrderedDict([
            ("stages", [s.to_dict() for s in self.stages]),
            ("latency_ns", OrderedDict([("p50", self.latency_p50_ns), ("p95", self.latency_p95_ns),
                                        ("p99", self.latency_p99_ns)])),
            ("displayed", self.displayed),
        ])


def throughput_report(trace: Iterable[StageTraceEvent], source_events: Iterable[StageTraceEvent] = (),
                      display_events: Iterable[StageTraceEvent] = ()) -> ThroughputReport:
    """Per-stage fps and skip fraction, plus end-to-end display latency.

    fps is the Done count over the span from the stage's first ``t_start`` to
    its last ``t_end`` (0 with fewer than one Done event or a zero span).
    Latency of a displayed frame is its display ``t_end`` minus its grab time,
    taken from ``source_events`` (``t_end`` of the grab event).
    """
    trace = list(trace)
    if not trace:
        raise EmptyTrace("trace holds no events")
    per_stage: "OrderedDict[str, list[StageTraceEvent]]" = OrderedDict()
    for ev in trace:
        if ev.t_end < ev.t_start:
            raise ClockSkew(f"{ev.stage} frame {ev.frame_id}: t_end {ev.t_end} < t_start {ev.t_start}")
        per_stage.setdefault(ev.stage, []).append(ev)

    rows = []
    for name, events in per_stage.items():
        done = [e for e in events if e.outcome == DONE]
        skipped = sum(1 for e in events if e.outcome == SKIPPED)
        errors = sum(1 for e in events if e.outcome == ERROR)
        fps = 0.0
        if done:
            span = max(e.t_end for e in done) - min(e.t_start for e in done)
            if span > 0:
                fps = len(done) * 1e9 / span
        denom = skipped + len(done)
        rows.append(StageThroughput(name, len(done), skipped, errors, fps,
                                    skipped / denom if denom else 0.0))

    grab = {e.frame_id: e.t_end for e in source_events}
    latencies = []
    for e in display_events:
        if e.outcome == DONE and e.frame_id in grab:
            if e.t_end < grab[e.frame_id]:
                raise ClockSkew(f"frame {e.frame_id} displayed before it was grabbed")
            latencies.append(e.t_end - grab[e.frame_id])
    if latencies:
        p50, p95, p99 = (nearest_rank(latencies, q) for q in (50, 95, 99))
    else:
        p50 = p95 = p99 = None
    return ThroughputReport(tuple(rows), p50, p95, p99, len(latencies))
