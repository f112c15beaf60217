"""Shared domain types for depth maps, intrinsics, masks, and planes.

Depth is always metric (meters) in memory; unit conversion happens at I/O
boundaries only. A depth value is *invalid* when it is exactly 0 or
non-finite, matching common RGB-D sensor conventions where glass and
dropouts come back as zeros or NaNs. All types here are immutable after
construction and safe to share across threads.

Pixel convention: (u, v) = (column, row), the pixel index is its center,
and the camera sits at the origin with z pointing forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GlassDepthError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(GlassDepthError):
    """Paired images/maps do not share the same width and height."""


class NoValidPixels(GlassDepthError):
    """An operation needed at least one usable pixel and found none."""


@dataclass(frozen=True)
class DepthMap:
    """Dense per-pixel depth in meters, shape (height, width).

    Invalid pixels are encoded in-band as 0 or non-finite values; use
    :attr:`valid_mask` rather than testing raw values.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"depth map must be 2D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"depth map must be at least 1x1, got {arr.shape}")
        finite = np.isfinite(arr)
        if np.any(finite & (arr < 0)):
            raise ValueError("finite depth values must be >= 0 (negative depth is not a valid encoding)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def valid_mask(self) -> np.ndarray:
        """Boolean (h, w) array, True where depth is usable."""
        return np.isfinite(self.values) & (self.values > 0)

    def valid_count(self) -> int:
        return int(np.count_nonzero(self.valid_mask))


def valid_pixel_indices(depth: DepthMap) -> np.ndarray:
    """Coordinates of all valid pixels as an (n, 2) int array of (u, v) rows.

    Order is deterministic row-major: scan rows top to bottom, columns left
    to right.
    """
    vs, us = np.nonzero(depth.valid_mask)
    return np.column_stack([us, vs])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; fx/fy/cx/cy in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"intrinsics field {name} must be finite, got {v}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def ray_direction(self, u: float, v: float) -> np.ndarray:
        """Unnormalized ray through pixel (u, v): K^-1 [u, v, 1]^T."""
        return np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel glass instance labels: 0 = background, k >= 1 = instance k.

    Instance ids must form a contiguous set {1..n}.
    """

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"mask labels must be integers, got dtype {arr.dtype}")
        arr = arr.astype(np.int32, copy=False)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {arr.shape}")
        if arr.min(initial=0) < 0:
            raise ValueError("mask labels must be non-negative")
        ids = np.unique(arr)
        ids = ids[ids > 0]
        if len(ids) > 0 and not np.array_equal(ids, np.arange(1, len(ids) + 1)):
            raise ValueError(f"instance ids must be contiguous 1..n, got {ids.tolist()}")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def instance_ids(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(k) for k in ids if k > 0]

    @property
    def n_instances(self) -> int:
        return len(self.instance_ids)

    def instance_mask(self, instance_id: int) -> np.ndarray:
        """Boolean mask of one instance."""
        if instance_id < 1 or instance_id > self.n_instances:
            raise KeyError(f"no instance {instance_id} (mask has {self.n_instances})")
        return self.labels == instance_id

    def any_glass(self) -> np.ndarray:
        return self.labels > 0


@dataclass(frozen=True)
class AffineParams:
    """Scale s (dimensionless) and shift t (meters) mapping prior to metric depth."""

    scale: float
    shift: float

    def __post_init__(self):
        if not (np.isfinite(self.scale) and np.isfinite(self.shift)):
            raise ValueError(f"affine params must be finite, got scale={self.scale}, shift={self.shift}")

    def apply(self, value: float) -> float:
        return self.scale * value + self.shift


_UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class PlaneModel:
    """Plane n . P + d = 0 with unit normal n = (a, b, c) and offset d in meters.

    Non-unit normals are normalized at construction; a zero normal is rejected.
    """

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(n))
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError(f"plane normal must be a finite nonzero vector, got {self.normal}")
        d = float(self.offset)
        if not np.isfinite(d):
            raise ValueError(f"plane offset must be finite, got {self.offset}")
        if abs(norm - 1.0) > _UNIT_NORM_TOL:
            n = n / norm
            d = d / norm
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", d)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """n . P + d for an (n, 3) array of points (or a single 3-vector)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.normal + self.offset


@dataclass(frozen=True)
class PixelSample:
    """One (prior, sensor) depth pair at pixel (u, v) used for affine fitting."""

    u: int
    v: int
    prior_depth: float
    sensor_depth: float

    def __post_init__(self):
        if not (np.isfinite(self.sensor_depth) and self.sensor_depth > 0):
            raise ValueError(f"sensor depth at ({self.u}, {self.v}) is invalid: {self.sensor_depth}")
        if not np.isfinite(self.prior_depth):
            raise ValueError(f"prior depth at ({self.u}, {self.v}) is invalid: {self.prior_depth}")


def require_same_shape(a, b, what: str = "maps") -> None:
    """Raise DimensionMismatch unless the two gridded objects agree in shape."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what} differ in shape: {a.shape} vs {b.shape}")
