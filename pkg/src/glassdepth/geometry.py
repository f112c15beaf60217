"""Navigation geometry: point clouds from depth, 2D occupancy grids from clouds.

The payoff of correcting glass depth is that a planner stops treating panes
as open space. This module back-projects depth maps into camera-frame
clouds and bins clouds into a free/occupied/unknown grid over the ground
plane. For single frames, :func:`level_camera_cloud` rotates the camera
frame (x right, y down, z forward) into a ground frame (x forward, y left,
z up) assuming a level camera at a known height, so the z coordinate is
height above the floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from .core import CameraIntrinsics, DepthMap, GlassDepthError


class EmptyCloud(GlassDepthError):
    """The cloud has no points usable for the requested conversion."""


class CellState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class PointCloud:
    """(n, 3) points in meters with optional (n, 3) uint8 colors."""

    points: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if cols.shape[0] != pts.shape[0]:
                raise ValueError(
                    f"colors ({cols.shape[0]}) and points ({pts.shape[0]}) counts differ"
                )
            cols.setflags(write=False)
            object.__setattr__(self, "colors", cols)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class GridConfig:
    """Occupancy conversion parameters.

    origin is the world (x, y) of grid cell (0, 0)'s lower corner; None
    derives it from the cloud footprint, snapped to the resolution. The
    height band is the obstacle slab a robot actually cares about.
    """

    resolution: float = 0.05
    height_band: tuple[float, float] = (0.2, 1.8)
    origin: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not (self.resolution > 0):
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        z0, z1 = self.height_band
        if not (z0 < z1):
            raise ValueError(f"height band must satisfy z_min < z_max, got {self.height_band}")


@dataclass(frozen=True)
class OccupancyGrid:
    """cells[iy, ix] over the ground plane; world x maps to ix, y to iy."""

    resolution: float
    origin: np.ndarray
    cells: np.ndarray
    height_band: tuple[float, float]

    def __post_init__(self):
        if not (self.resolution > 0):
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        z0, z1 = self.height_band
        if not (z0 < z1):
            raise ValueError(f"height band must satisfy z_min < z_max, got {self.height_band}")
        origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        origin.setflags(write=False)
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2:
            raise ValueError(f"cells must be 2D, got shape {cells.shape}")
        cells.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cells", cells)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """(ix, iy) of the cell containing world point (x, y)."""
        ix = int(np.floor((x - self.origin[0]) / self.resolution))
        iy = int(np.floor((y - self.origin[1]) / self.resolution))
        return ix, iy


def depth_to_cloud(
    depth: DepthMap,
    intrinsics: CameraIntrinsics,
    stride: int = 1,
    rgb: Optional[np.ndarray] = None,
) -> PointCloud:
    """Back-project every valid pixel on the stride grid into camera space.

    rgb, when given as an (h, w, 3) uint8 image, attaches per-point colors.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    sub = depth.values[::stride, ::stride]
    valid = np.isfinite(sub) & (sub > 0)
    vs_grid, us_grid = np.nonzero(valid)
    z = sub[valid]
    u = us_grid * stride
    v = vs_grid * stride
    x = (u - intrinsics.cx) / intrinsics.fx * z
    y = (v - intrinsics.cy) / intrinsics.fy * z
    points = np.column_stack([x, y, z])
    colors = None
    if rgb is not None:
        img = np.asarray(rgb)
        if img.shape[:2] != depth.shape:
            raise ValueError(f"rgb shape {img.shape[:2]} does not match depth {depth.shape}")
        colors = img[v, u, :3].astype(np.uint8)
    return PointCloud(points=points, colors=colors)


def level_camera_cloud(cloud: PointCloud, camera_height: float = 1.0) -> PointCloud:
    """Rotate a camera-frame cloud into a z-up ground frame.

    Assumes the camera is level at camera_height above the floor:
    world x = camera z (forward), world y = -camera x (left),
    world z = camera_height - camera y (up).
    """
    p = cloud.points
    world = np.column_stack([p[:, 2], -p[:, 0], camera_height - p[:, 1]])
    return PointCloud(points=world, colors=cloud.colors)


def cloud_to_occupancy(cloud: PointCloud, cfg: GridConfig = GridConfig()) -> OccupancyGrid:
    """Bin a z-up cloud into free/occupied/unknown ground-plane cells.

    Points with z inside the height band mark their cell occupied. The
    footprint, the axis-aligned (x, y) bounding rectangle of all points at
    or below the top of the band, is free where nothing in-band landed;
    cells outside the footprint stay unknown. Point order never matters:
    occupied always wins over free.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot build an occupancy grid from an empty cloud")
    z0, z1 = cfg.height_band
    pts = cloud.points
    considered = pts[:, 2] <= z1
    if not np.any(considered):
        raise EmptyCloud(f"no points at or below the height band top z={z1}")
    xy = pts[considered, :2]

    res = cfg.resolution
    if cfg.origin is not None:
        origin = np.asarray(cfg.origin, dtype=np.float64)
    else:
        origin = np.floor(xy.min(axis=0) / res) * res
    idx = np.floor((xy - origin) / res).astype(np.int64)
    in_grid = (idx[:, 0] >= 0) & (idx[:, 1] >= 0)
    if not np.any(in_grid):
        raise EmptyCloud("every point falls left/below the configured grid origin")
    idx = idx[in_grid]

    nx = int(idx[:, 0].max()) + 1
    ny = int(idx[:, 1].max()) + 1
    cells = np.full((ny, nx), CellState.UNKNOWN, dtype=np.uint8)

    ix0, iy0 = int(idx[:, 0].min()), int(idx[:, 1].min())
    cells[iy0:ny, ix0:nx] = CellState.FREE

    in_band = (pts[:, 2] >= z0) & (pts[:, 2] <= z1)
    bxy = pts[in_band, :2]
    if bxy.shape[0]:
        bidx = np.floor((bxy - origin) / res).astype(np.int64)
        keep = (bidx[:, 0] >= 0) & (bidx[:, 1] >= 0)
        bidx = bidx[keep]
        cells[bidx[:, 1], bidx[:, 0]] = CellState.OCCUPIED

    return OccupancyGrid(
        resolution=res, origin=origin, cells=cells, height_band=(float(z0), float(z1))
    )
