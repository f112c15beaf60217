"""Depth accuracy metrics, easy/hard splitting, and benchmark aggregation.

Two standard metrics: absolute relative error (mean |pred - gt| / gt) and
the delta accuracy (fraction of pixels with max(pred/gt, gt/pred) under
1.25). Samples are split into easy/hard by how badly the raw sensor depth
already disagrees with ground truth (threshold 0.03 AbsRel, inclusive on
the easy side), so benchmarks can separate mild from severe glass
corruption.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .annotation import GroundTruthDepth
from .core import DepthMap, NoValidPixels, require_same_shape

EASY_ABS_REL_MAX = 0.03
DELTA1_THRESHOLD = 1.25


@dataclass(frozen=True)
class DepthMetrics:
    """abs_rel and delta1 over the evaluated pixels.

    valid_pixel_count is the number of pixels that entered abs_rel (valid in
    both maps, not excluded). invalid_pred_count is how many evaluated
    ground-truth pixels had an invalid prediction: those count as delta1
    failures and are left out of abs_rel, so emitting invalids cannot hide
    poor accuracy.
    """

    abs_rel: float
    delta1: float
    valid_pixel_count: int
    invalid_pred_count: int = 0

    def __post_init__(self):
        if not (self.abs_rel >= 0):
            raise ValueError(f"abs_rel must be >= 0, got {self.abs_rel}")
        if not (0.0 <= self.delta1 <= 1.0):
            raise ValueError(f"delta1 must be in [0, 1], got {self.delta1}")


@dataclass(frozen=True)
class SplitLabel:
    """easy/hard label for one sample, from AbsRel(raw vs ground truth)."""

    label: str
    raw_abs_rel: float

    def __post_init__(self):
        expected = "easy" if self.raw_abs_rel <= EASY_ABS_REL_MAX else "hard"
        if self.label != expected:
            raise ValueError(
                f"label {self.label!r} inconsistent with raw_abs_rel={self.raw_abs_rel}"
            )


@dataclass(frozen=True)
class SplitSummary:
    count: int
    abs_rel: float
    delta1: float


@dataclass(frozen=True)
class BenchmarkReport:
    """Unweighted per-sample means for the All/Easy/Hard rows.

    A split with no samples is absent (None).
    """

    overall: Optional[SplitSummary]
    easy: Optional[SplitSummary]
    hard: Optional[SplitSummary]


def compute_metrics(
    pred: DepthMap, gt: DepthMap, exclusion: Optional[np.ndarray] = None
) -> DepthMetrics:
    """AbsRel and delta1 of pred against gt over unexcluded valid pixels.

    The evaluated set is every unexcluded pixel where gt is valid. Within
    it, pixels with an invalid prediction are delta1 failures and do not
    contribute to abs_rel.
    """
    require_same_shape(pred, gt, "pred/gt depth maps")
    eval_mask = gt.valid_mask
    if exclusion is not None:
        excl = np.asarray(exclusion, dtype=bool)
        require_same_shape(gt, excl, "gt/exclusion mask")
        eval_mask = eval_mask & ~excl

    pred_ok = eval_mask & pred.valid_mask
    n_joint = int(np.count_nonzero(pred_ok))
    if n_joint == 0:
        raise NoValidPixels("no jointly valid, unexcluded pixel with positive ground truth")
    n_eval = int(np.count_nonzero(eval_mask))

    p = pred.values[pred_ok]
    g = gt.values[pred_ok]
    abs_rel = float(np.mean(np.abs(p - g) / g))
    ratio = np.maximum(p / g, g / p)
    delta1 = float(np.count_nonzero(ratio < DELTA1_THRESHOLD) / n_eval)
    return DepthMetrics(
        abs_rel=abs_rel,
        delta1=delta1,
        valid_pixel_count=n_joint,
        invalid_pred_count=n_eval - n_joint,
    )


def split_sample(raw: DepthMap, gt: GroundTruthDepth) -> SplitLabel:
    """Label a sample easy (raw AbsRel <= 0.03) or hard, honoring exclusions."""
    m = compute_metrics(raw, gt.depth, gt.evaluation_mask)
    label = "easy" if m.abs_rel <= EASY_ABS_REL_MAX else "hard"
    return SplitLabel(label=label, raw_abs_rel=m.abs_rel)


def _summarize(metrics: Sequence[DepthMetrics]) -> Optional[SplitSummary]:
    if not metrics:
        return None
    return SplitSummary(
        count=len(metrics),
        abs_rel=float(np.mean([m.abs_rel for m in metrics])),
        delta1=float(np.mean([m.delta1 for m in metrics])),
    )


def aggregate_report(
    per_sample: Sequence[tuple[SplitLabel, DepthMetrics]]
) -> BenchmarkReport:
    """Unweighted per-sample means within each split and overall."""
    easy = [m for lbl, m in per_sample if lbl.label == "easy"]
    hard = [m for lbl, m in per_sample if lbl.label == "hard"]
    return BenchmarkReport(
        overall=_summarize([m for _, m in per_sample]),
        easy=_summarize(easy),
        hard=_summarize(hard),
    )
