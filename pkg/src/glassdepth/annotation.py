"""Plane-based ground-truth depth for glass from human-clicked coplanar points.

Glass returns garbage to RGB-D sensors, but windows, doors, and tabletops
are almost always planar, and their frames/edges give the sensor reliable
depth. An annotator clicks three or more pixels on such reliable regions
coplanar with the glass; those clicks are lifted to 3D, a plane is fitted,
and every pixel of the matched glass instance gets its depth from the
ray/plane intersection. Glass instances nobody annotated are flagged for
exclusion from evaluation instead of being filled with guesses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    BinaryMask,
    CameraIntrinsics,
    DepthMap,
    GlassDepthError,
    PlaneModel,
    require_same_shape,
)

logger = logging.getLogger(__name__)

REVIEW_STATUSES = ("pending", "accepted", "rejected")

# Collinearity is declared when the second-smallest scatter eigenvalue drops
# below this fraction of the largest (scale-free).
_COLLINEAR_RTOL = 1e-12
_PARALLEL_TOL = 1e-12
_BOUNDARY_EPS = 1e-9


class InvalidDepth(GlassDepthError):
    """A pixel needed for back-projection has no valid depth."""


class DegenerateGeometry(GlassDepthError):
    """Points are collinear or coincident; no unique plane exists."""


class DegenerateHull(GlassDepthError):
    """Clicked points are collinear; their convex hull has no area."""


class NoOverlap(GlassDepthError):
    """The click hull does not intersect any mask instance."""


class ParallelRay(GlassDepthError):
    """The pixel ray is (numerically) parallel to the plane."""


class BehindCamera(GlassDepthError):
    """The ray/plane intersection lies at or behind the camera."""


@dataclass(frozen=True)
class PlaneFit:
    """A fitted plane plus the RMS of point-to-plane residuals in meters."""

    plane: PlaneModel
    rms: float


@dataclass(frozen=True)
class MaskMatch:
    """Winning instance for a click hull and its intersection-over-hull ratio."""

    instance_id: int
    ratio: float


@dataclass(frozen=True)
class InstanceAnnotation:
    """Clicked coplanar pixels for one glass instance, plus fit results."""

    points: tuple[tuple[float, float], ...]
    matched_mask_id: Optional[int] = None
    plane: Optional[PlaneModel] = None
    rms: Optional[float] = None

    def __post_init__(self):
        pts = tuple((float(u), float(v)) for u, v in self.points)
        object.__setattr__(self, "points", pts)
        if self.plane is not None and len(pts) < 3:
            raise ValueError("a fitted plane requires at least 3 clicked points")


@dataclass(frozen=True)
class GlassAnnotation:
    """All instance annotations for one dataset sample and its review state."""

    sample_id: str
    instances: tuple[InstanceAnnotation, ...] = ()
    review_status: str = "pending"

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.review_status not in REVIEW_STATUSES:
            raise ValueError(
                f"review_status must be one of {REVIEW_STATUSES}, got {self.review_status!r}"
            )


@dataclass(frozen=True)
class GroundTruthDepth:
    """Corrected depth plus the per-pixel evaluation exclusion flag.

    Pixels are excluded (True in evaluation_mask) exactly where a glass
    instance has no usable annotation; everything outside glass is the raw
    sensor depth bit-for-bit.
    """

    depth: DepthMap
    evaluation_mask: np.ndarray
    failures: tuple[str, ...] = ()

    def __post_init__(self):
        mask = np.asarray(self.evaluation_mask, dtype=bool)
        require_same_shape(self.depth, mask, "ground truth depth/exclusion mask")
        mask.setflags(write=False)
        object.__setattr__(self, "evaluation_mask", mask)


def backproject(uv: Sequence[float], depth: float, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift pixel (u, v) at the given z-depth to a 3D camera-frame point."""
    if not (np.isfinite(depth) and depth > 0):
        raise InvalidDepth(f"cannot back-project pixel {tuple(uv)} with depth {depth}")
    u, v = float(uv[0]), float(uv[1])
    return depth * intrinsics.ray_direction(u, v)


def fit_plane(points: Sequence[Sequence[float]] | np.ndarray) -> PlaneFit:
    """Best-fit plane minimizing squared point-to-plane distance, unit normal.

    Solved by eigen-decomposition of the 3x3 scatter matrix of mean-centered
    points: the normal is the eigenvector of the smallest eigenvalue, which
    is the exact minimizer under the unit-norm constraint. The normal sign
    is fixed so the offset d <= 0 (a plane in front of the camera has
    positive distance along its normal).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise DegenerateGeometry(f"need >= 3 points to fit a plane, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateGeometry("points contain non-finite coordinates")
    mean = pts.mean(axis=0)
    centered = pts - mean
    scatter = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(scatter)
    if not np.isfinite(eigvals[2]) or eigvals[2] <= 0:
        raise DegenerateGeometry("points are coincident")
    if eigvals[1] < _COLLINEAR_RTOL * eigvals[2]:
        raise DegenerateGeometry("points are collinear")
    normal = eigvecs[:, 0]
    offset = -float(normal @ mean)
    if offset > 0:
        normal = -normal
        offset = -offset
    rms = float(np.sqrt(max(eigvals[0], 0.0) / pts.shape[0]))
    return PlaneFit(plane=PlaneModel(normal=normal, offset=offset), rms=rms)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """2D convex hull (monotone chain), vertices in counter-clockwise order."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if pts.shape[0] < 3:
        raise DegenerateHull(f"need >= 3 distinct points, got {pts.shape[0]}")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise DegenerateHull("points are collinear")
    # Signed area > 0 means counter-clockwise in (u, v) axes.
    area2 = float(
        np.sum(hull[:, 0] * np.roll(hull[:, 1], -1) - np.roll(hull[:, 0], -1) * hull[:, 1])
    )
    if area2 < 0:
        hull = hull[::-1]
    return hull


def rasterize_hull(points: Sequence[Sequence[float]], width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose center lies in the hull.

    A center exactly on the hull boundary counts as inside, so the mask is
    deterministic for integer click coordinates.
    """
    hull = _convex_hull(np.asarray(points))
    u0 = max(int(np.floor(hull[:, 0].min())), 0)
    u1 = min(int(np.ceil(hull[:, 0].max())), width - 1)
    v0 = max(int(np.floor(hull[:, 1].min())), 0)
    v1 = min(int(np.ceil(hull[:, 1].max())), height - 1)
    out = np.zeros((height, width), dtype=bool)
    if u1 < u0 or v1 < v0:
        return out
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
    inside = np.ones(uu.shape, dtype=bool)
    n = hull.shape[0]
    for i in range(n):
        p = hull[i]
        q = hull[(i + 1) % n]
        side = (q[0] - p[0]) * (vv - p[1]) - (q[1] - p[1]) * (uu - p[0])
        inside &= side >= -_BOUNDARY_EPS
    out[v0 : v1 + 1, u0 : u1 + 1] = inside
    return out


def match_annotation_to_mask(
    points: Sequence[Sequence[float]], mask: BinaryMask
) -> MaskMatch:
    """Match clicked points to the glass instance with the highest
    intersection-over-hull ratio; ties break to the smallest instance id."""
    if mask.n_instances < 1:
        raise NoOverlap("mask has no glass instances")
    hull_px = rasterize_hull(points, mask.width, mask.height)
    n_hull = int(np.count_nonzero(hull_px))
    if n_hull == 0:
        raise NoOverlap("click hull rasterizes to zero pixels inside the image")
    best_id = 0
    best_ratio = 0.0
    for k in mask.instance_ids:
        inter = int(np.count_nonzero(hull_px & mask.instance_mask(k)))
        ratio = inter / n_hull
        if ratio > best_ratio:
            best_ratio = ratio
            best_id = k
    if best_id == 0:
        raise NoOverlap("click hull does not overlap any glass instance")
    return MaskMatch(instance_id=best_id, ratio=best_ratio)


def ray_plane_depth(
    uv: Sequence[float], plane: PlaneModel, intrinsics: CameraIntrinsics
) -> float:
    """Metric z-depth at pixel (u, v) of the ray/plane intersection.

    The ray through (u, v) has unit z-component, so the ray parameter at the
    intersection is the optical-axis depth directly (consistent with sensor
    depth maps).
    """
    ray = intrinsics.ray_direction(float(uv[0]), float(uv[1]))
    denom = float(plane.normal @ ray)
    if abs(denom) < _PARALLEL_TOL:
        raise ParallelRay(f"ray at {tuple(uv)} is parallel to the plane")
    lam = -plane.offset / denom
    if lam <= 0:
        raise BehindCamera(f"intersection at {tuple(uv)} lies behind the camera (lambda={lam:g})")
    return lam


def _plane_depth_for_pixels(
    plane: PlaneModel, intrinsics: CameraIntrinsics, us: np.ndarray, vs: np.ndarray
) -> np.ndarray:
    """Vectorized ray/plane z-depth; non-intersecting pixels come back NaN."""
    x = (us - intrinsics.cx) / intrinsics.fx
    y = (vs - intrinsics.cy) / intrinsics.fy
    a, b, c = plane.normal
    denom = a * x + b * y + c
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(np.abs(denom) < _PARALLEL_TOL, np.nan, -plane.offset / denom)
    lam[~(lam > 0)] = np.nan
    return lam


def generate_ground_truth(
    raw: DepthMap,
    mask: BinaryMask,
    annotation: GlassAnnotation,
    intrinsics: CameraIntrinsics,
) -> GroundTruthDepth:
    """Fill annotated glass instances with plane depth; exclude the rest.

    Per annotated instance: the clicks are lifted through the raw depth,
    a plane is fitted, the instance is matched (the stored mask id wins if
    the annotation carries one), and every pixel of the instance mask gets
    the ray/plane depth. Instances whose annotation fails (too few points,
    invalid depth at a click, degenerate fit, no mask overlap) are treated
    as unannotated: their pixels are excluded from evaluation. Failures are
    collected per instance instead of aborting the sample.
    """
    require_same_shape(raw, mask, "raw depth/glass mask")
    depth_out = np.array(raw.values, dtype=np.float64, copy=True)
    excluded = np.zeros(raw.shape, dtype=bool)
    filled_ids: set[int] = set()
    failures: list[str] = []

    for idx, inst in enumerate(annotation.instances):
        try:
            target_id, points_3d = _lift_instance(inst, raw, mask, intrinsics)
            fit = fit_plane(points_3d)
        except GlassDepthError as exc:
            failures.append(f"instance {idx}: {exc}")
            continue
        pix = mask.instance_mask(target_id)
        vs, us = np.nonzero(pix)
        lam = _plane_depth_for_pixels(fit.plane, intrinsics, us.astype(np.float64), vs.astype(np.float64))
        bad = ~np.isfinite(lam)
        if np.any(bad):
            logger.warning(
                "sample %s instance %d: %d glass pixels have no forward ray/plane intersection; excluded",
                annotation.sample_id,
                target_id,
                int(np.count_nonzero(bad)),
            )
            lam[bad] = 0.0
            excluded[vs[bad], us[bad]] = True
        depth_out[vs, us] = lam
        filled_ids.add(target_id)

    for k in mask.instance_ids:
        if k not in filled_ids:
            excluded |= mask.instance_mask(k)

    return GroundTruthDepth(
        depth=DepthMap(depth_out),
        evaluation_mask=excluded,
        failures=tuple(failures),
    )


def _lift_instance(
    inst: InstanceAnnotation, raw: DepthMap, mask: BinaryMask, intrinsics: CameraIntrinsics
) -> tuple[int, np.ndarray]:
    """Resolve the target mask id and back-project the clicks through raw depth."""
    if len(inst.points) < 3:
        raise DegenerateGeometry(f"needs >= 3 clicked points, got {len(inst.points)}")
    if inst.matched_mask_id is not None:
        target_id = inst.matched_mask_id
        if target_id < 1 or target_id > mask.n_instances:
            raise NoOverlap(f"annotation references unknown mask instance {target_id}")
    else:
        target_id = match_annotation_to_mask(inst.points, mask).instance_id

    points_3d = []
    for i, (u, v) in enumerate(inst.points):
        ui, vi = int(round(u)), int(round(v))
        if not (0 <= ui < raw.width and 0 <= vi < raw.height):
            raise InvalidDepth(f"click {i} at ({u}, {v}) is outside the image")
        z = float(raw.values[vi, ui])
        if not (np.isfinite(z) and z > 0):
            raise InvalidDepth(f"click {i} at ({u}, {v}) has invalid sensor depth")
        points_3d.append(backproject((u, v), z, intrinsics))
    return target_id, np.asarray(points_3d)
