"""Scale/shift alignment of an affine-invariant depth prior to sensor depth.

Monocular depth networks produce structurally faithful maps that are only
correct up to an unknown scale s and shift t. This module estimates (s, t)
against metric sensor depth two ways:

* :func:`global_align`: closed-form least squares over every jointly valid
  pixel. Simple, but biased wherever the sensor is wrong (glass: the sensor
  sees the background *through* the pane).
* :func:`local_ransac_align`: candidate (s, t) pairs are fitted from small
  random pixel sets drawn inside local image patches, then each candidate is
  scored by its mean absolute error over the whole image. Patches that land
  on corrupted sensor regions produce candidates that score badly globally
  and lose; the winner comes from reliable geometry.

Scoring excludes pixels that are invalid in the sensor map (they carry no
metric information).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:
    njit = None
    _HAVE_NUMBA = False

from .core import (
    AffineParams,
    DepthMap,
    GlassDepthError,
    NoValidPixels,
    PixelSample,
    require_same_shape,
)

logger = logging.getLogger(__name__)


class DegenerateSamples(GlassDepthError):
    """The sample set cannot determine scale and shift (too few points or no spread)."""


class NoViableCandidate(GlassDepthError):
    """Every RANSAC iteration in every patch was skipped."""


@dataclass(frozen=True)
class RansacConfig:
    """Patch-wise sampling parameters.

    grid_n: the image is split into grid_n x grid_n patches.
    iterations_per_patch: candidate fits drawn per patch.
    samples_per_iteration: pixels per candidate fit.
    min_prior_spread: minimum peak-to-peak prior range in a sample set;
        below this the fit is ill-conditioned and the iteration is skipped.
    """

    grid_n: int = 8
    iterations_per_patch: int = 20
    samples_per_iteration: int = 32
    rng_seed: int = 0
    min_prior_spread: float = 1e-6

    def __post_init__(self):
        if self.grid_n < 1:
            raise ValueError(f"grid_n must be >= 1, got {self.grid_n}")
        if self.iterations_per_patch < 1:
            raise ValueError(f"iterations_per_patch must be >= 1, got {self.iterations_per_patch}")
        if self.samples_per_iteration < 2:
            raise ValueError(f"samples_per_iteration must be >= 2, got {self.samples_per_iteration}")
        if not (self.min_prior_spread > 0):
            raise ValueError(f"min_prior_spread must be > 0, got {self.min_prior_spread}")


@dataclass(frozen=True)
class AlignmentResult:
    """Winning transform plus provenance of how it was found.

    winning_patch is (patch row, patch column); both winning indices are
    None for the global method. candidates_skipped counts iterations whose
    patch lacked enough valid pixels or whose sample set was degenerate.
    """

    params: AffineParams
    mean_abs_error: float
    method: str
    winning_patch: Optional[tuple[int, int]]
    winning_iteration: Optional[int]
    candidates_evaluated: int
    candidates_skipped: int = 0


def _solve_lsq(prior: np.ndarray, sensor: np.ndarray, min_spread: float) -> AffineParams:
    n = prior.size
    if n < 2:
        raise DegenerateSamples(f"need >= 2 samples, got {n}")
    spread = float(prior.max() - prior.min())
    if spread < min_spread:
        raise DegenerateSamples(f"prior spread {spread:g} below threshold {min_spread:g}")
    sd = float(prior.sum())
    sdd = float((prior * prior).sum())
    sds = float((prior * sensor).sum())
    ss = float(sensor.sum())
    den = n * sdd - sd * sd
    if not np.isfinite(den) or den <= 0:
        raise DegenerateSamples(f"normal system is singular (denominator {den:g})")
    scale = (n * sds - sd * ss) / den
    shift = (ss - scale * sd) / n
    if not (np.isfinite(scale) and np.isfinite(shift)):
        raise DegenerateSamples(f"non-finite solution scale={scale}, shift={shift}")
    return AffineParams(scale=scale, shift=shift)


def solve_affine_lsq(
    samples: Sequence[PixelSample], min_spread: float = 1e-6
) -> AffineParams:
    """Closed-form least squares for (s, t) minimizing sum((s*d + t - d*)^2).

    Raises DegenerateSamples when the system is singular or the prior values
    span less than min_spread; RANSAC callers treat that as "skip this
    iteration".
    """
    prior = np.array([s.prior_depth for s in samples], dtype=np.float64)
    sensor = np.array([s.sensor_depth for s in samples], dtype=np.float64)
    return _solve_lsq(prior, sensor, min_spread)


def _joint_valid_values(prior: DepthMap, raw: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """Row-major 1D value vectors over pixels valid in both maps."""
    joint = prior.valid_mask & raw.valid_mask
    return prior.values[joint], raw.values[joint]


if _HAVE_NUMBA:

    @njit(cache=True)
    def _sum_abs_affine_residual(pv, rv, scale, shift):
        acc = 0.0
        for i in range(pv.size):
            acc += abs(scale * pv[i] + shift - rv[i])
        return acc

else:

    def _sum_abs_affine_residual(pv, rv, scale, shift):
        return float(np.sum(np.abs(scale * pv + shift - rv)))


def _mean_abs_residual(pv: np.ndarray, rv: np.ndarray, scale: float, shift: float) -> float:
    # Both candidate_error() and the RANSAC search score through this single
    # kernel, so the winning error compares bit-exactly across the two paths.
    return _sum_abs_affine_residual(pv, rv, float(scale), float(shift)) / pv.size


def candidate_error(prior: DepthMap, raw: DepthMap, params: AffineParams) -> float:
    """Mean absolute error |s*prior + t - raw| over jointly valid pixels.

    Pixels invalid in the sensor map (and the rare prior-invalid ones) are
    excluded. The mean, rather than the sum, keeps scores comparable across
    images with different validity counts; for a fixed image the argmin over
    candidates is unchanged.
    """
    require_same_shape(prior, raw, "prior/raw depth maps")
    pv, rv = _joint_valid_values(prior, raw)
    if rv.size == 0:
        raise NoValidPixels("no jointly valid pixels to score against")
    return _mean_abs_residual(pv, rv, params.scale, params.shift)


def global_align(
    prior: DepthMap, raw: DepthMap, min_prior_spread: float = 1e-6
) -> AlignmentResult:
    """Least-squares (s, t) over all jointly valid pixels, outliers included."""
    require_same_shape(prior, raw, "prior/raw depth maps")
    pv, rv = _joint_valid_values(prior, raw)
    if rv.size == 0:
        raise NoValidPixels("no jointly valid pixels to align")
    params = _solve_lsq(pv, rv, min_prior_spread)
    err = _mean_abs_residual(pv, rv, params.scale, params.shift)
    return AlignmentResult(
        params=params,
        mean_abs_error=err,
        method="global",
        winning_patch=None,
        winning_iteration=None,
        candidates_evaluated=1,
    )


def _patch_bounds(extent: int, grid_n: int) -> list[tuple[int, int]]:
    """Split extent into grid_n near-equal spans; the remainder goes to the last."""
    base = extent // grid_n
    bounds = []
    for i in range(grid_n):
        start = i * base
        stop = (i + 1) * base if i < grid_n - 1 else extent
        bounds.append((start, stop))
    return bounds


def local_ransac_align(
    prior: DepthMap, raw: DepthMap, cfg: RansacConfig = RansacConfig()
) -> AlignmentResult:
    """Patch-wise RANSAC: fit (s, t) from local samples, validate globally.

    The image is split into grid_n x grid_n patches. Per patch,
    iterations_per_patch candidate fits each draw samples_per_iteration
    jointly valid pixels uniformly without replacement (no glass filtering;
    bad draws are rejected by the global score). Every candidate is scored
    by whole-image mean absolute error and the minimum wins; exact ties go
    to the earliest candidate in (patch row, patch column, iteration) order.

    With a fixed rng_seed the result is bit-identical across runs: a single
    generator is consumed in deterministic patch-major, iteration-major
    order.
    """
    require_same_shape(prior, raw, "prior/raw depth maps")
    h, w = raw.shape
    if h < cfg.grid_n or w < cfg.grid_n:
        raise ValueError(
            f"image {w}x{h} is smaller than the {cfg.grid_n}x{cfg.grid_n} patch grid"
        )

    joint = prior.valid_mask & raw.valid_mask
    prior_flat = prior.values.ravel()
    raw_flat = raw.values.ravel()
    pv_all = prior_flat[joint.ravel()]
    rv_all = raw_flat[joint.ravel()]

    rng = np.random.default_rng(cfg.rng_seed)
    m = cfg.samples_per_iteration

    best_err = np.inf
    best_params: Optional[AffineParams] = None
    best_patch: Optional[tuple[int, int]] = None
    best_iter: Optional[int] = None
    n_eval = 0
    n_skip = 0

    row_bounds = _patch_bounds(h, cfg.grid_n)
    col_bounds = _patch_bounds(w, cfg.grid_n)

    for i, (r0, r1) in enumerate(row_bounds):
        for j, (c0, c1) in enumerate(col_bounds):
            patch_mask = joint[r0:r1, c0:c1]
            vs, us = np.nonzero(patch_mask)
            if vs.size < m:
                n_skip += cfg.iterations_per_patch
                continue
            flat_idx = (vs + r0) * w + (us + c0)
            for k in range(cfg.iterations_per_patch):
                pick = rng.choice(vs.size, size=m, replace=False)
                d = prior_flat[flat_idx[pick]]
                dstar = raw_flat[flat_idx[pick]]
                try:
                    params = _solve_lsq(d, dstar, cfg.min_prior_spread)
                except DegenerateSamples:
                    n_skip += 1
                    continue
                err = _mean_abs_residual(pv_all, rv_all, params.scale, params.shift)
                n_eval += 1
                if err < best_err:
                    best_err = err
                    best_params = params
                    best_patch = (i, j)
                    best_iter = k

    if best_params is None:
        raise NoViableCandidate(
            f"all {n_skip} iterations were skipped (too few valid pixels or no prior spread)"
        )
    return AlignmentResult(
        params=best_params,
        mean_abs_error=best_err,
        method="local_ransac",
        winning_patch=best_patch,
        winning_iteration=best_iter,
        candidates_evaluated=n_eval,
        candidates_skipped=n_skip,
    )


def apply_affine(prior: DepthMap, params: AffineParams) -> DepthMap:
    """Per-pixel s*d + t. Invalid pixels pass through unchanged.

    Transformed values that come out non-positive cannot be depth; they are
    marked invalid and their count is reported on the module logger.
    """
    out = np.array(prior.values, dtype=np.float64, copy=True)
    valid = prior.valid_mask
    transformed = params.scale * out[valid] + params.shift
    nonpos = transformed <= 0
    n_bad = int(np.count_nonzero(nonpos))
    if n_bad:
        logger.warning(
            "affine transform (s=%g, t=%g) produced %d non-positive depths; marked invalid",
            params.scale,
            params.shift,
            n_bad,
        )
        transformed[nonpos] = 0.0
    out[valid] = transformed
    return DepthMap(out)


def invert_depth(depth: DepthMap) -> DepthMap:
    """Reciprocal of every valid pixel, for priors emitted as disparity."""
    out = np.array(depth.values, dtype=np.float64, copy=True)
    valid = depth.valid_mask
    out[valid] = 1.0 / out[valid]
    return DepthMap(out)
