import numpy as np
import pytest

from glassdepth import (
    CameraIntrinsics,
    CellState,
    DepthMap,
    EmptyCloud,
    GridConfig,
    PointCloud,
    cloud_to_occupancy,
    depth_to_cloud,
    level_camera_cloud,
)

K = CameraIntrinsics(fx=250.0, fy=260.0, cx=32.0, cy=24.0)


def forward_project(point):
    x, y, z = point
    return K.fx * x / z + K.cx, K.fy * y / z + K.cy


def test_cloud_constant_depth():
    depth = DepthMap(np.full((2, 2), 1.5))
    cloud = depth_to_cloud(depth, K, stride=1)
    assert len(cloud) == 4
    assert np.allclose(cloud.points[:, 2], 1.5)


def test_cloud_empty_for_all_invalid():
    cloud = depth_to_cloud(DepthMap(np.zeros((4, 4))), K)
    assert len(cloud) == 0


def test_cloud_points_reproject_to_source_pixels():
    rng = np.random.default_rng(31)
    vals = rng.uniform(0.5, 6.0, size=(24, 32))
    vals[rng.random(vals.shape) < 0.2] = 0.0
    depth = DepthMap(vals)
    cloud = depth_to_cloud(depth, K, stride=1)
    assert len(cloud) == depth.valid_count()
    for p in cloud.points[:: max(1, len(cloud) // 50)]:
        u, v = forward_project(p)
        ui, vi = int(round(u)), int(round(v))
        assert abs(u - ui) < 1e-9 and abs(v - vi) < 1e-9
        assert vals[vi, ui] == p[2]


def test_cloud_stride_is_subset_of_full():
    rng = np.random.default_rng(32)
    depth = DepthMap(rng.uniform(0.5, 3.0, size=(20, 30)))
    full = depth_to_cloud(depth, K, stride=1)
    sub = depth_to_cloud(depth, K, stride=3)
    assert len(sub) <= int(np.ceil(30 / 3)) * int(np.ceil(20 / 3))
    full_set = {tuple(p) for p in full.points}
    assert all(tuple(p) in full_set for p in sub.points)


def test_cloud_colors_from_rgb():
    depth = DepthMap(np.full((2, 3), 2.0))
    rgb = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    cloud = depth_to_cloud(depth, K, rgb=rgb)
    assert cloud.colors is not None
    assert np.array_equal(cloud.colors[0], rgb[0, 0])


def test_cloud_rejects_bad_stride_and_mismatched_rgb():
    depth = DepthMap(np.ones((2, 2)))
    with pytest.raises(ValueError):
        depth_to_cloud(depth, K, stride=0)
    with pytest.raises(ValueError):
        depth_to_cloud(depth, K, rgb=np.zeros((3, 3, 3), np.uint8))


def test_level_camera_cloud_frame_mapping():
    cam = PointCloud(points=np.array([[0.5, 0.2, 3.0]]))
    world = level_camera_cloud(cam, camera_height=1.2)
    assert np.allclose(world.points[0], [3.0, -0.5, 1.0])


def test_occupancy_single_point_binning():
    cloud = PointCloud(points=np.array([[1.0, 0.0, 0.5]]))
    grid = cloud_to_occupancy(
        cloud, GridConfig(resolution=0.1, height_band=(0.2, 1.8), origin=(0.0, 0.0))
    )
    assert grid.cells[0, 10] == CellState.OCCUPIED
    assert grid.cell_index(1.0, 0.0) == (10, 0)


def test_occupancy_point_below_band_not_occupied():
    pts = np.array([[1.0, 0.0, 0.05], [0.2, 0.0, 0.5]])
    grid = cloud_to_occupancy(
        PointCloud(points=pts), GridConfig(resolution=0.1, height_band=(0.2, 1.8), origin=(0.0, 0.0))
    )
    # The low point contributes footprint (free), not occupancy.
    assert grid.cells[0, 10] == CellState.FREE
    assert grid.cells[0, 2] == CellState.OCCUPIED


def test_occupancy_wall_footprint_line():
    # Dense vertical wall at x = 1.0 spanning y in [0, 1], z in [0, 1.5].
    ys, zs = np.meshgrid(np.linspace(0.0, 1.0, 80), np.linspace(0.0, 1.5, 60))
    pts = np.column_stack([np.full(ys.size, 1.0), ys.ravel(), zs.ravel()])
    # Plus a floor so the footprint extends in front of the wall.
    fx, fy = np.meshgrid(np.linspace(0.0, 1.0, 40), np.linspace(0.0, 1.0, 40))
    floor = np.column_stack([fx.ravel(), fy.ravel(), np.zeros(fx.size)])
    cloud = PointCloud(points=np.vstack([pts, floor]))
    cfg = GridConfig(resolution=0.1, height_band=(0.2, 1.8), origin=(0.0, 0.0))
    grid = cloud_to_occupancy(cloud, cfg)

    wall_ix = 10
    for iy in range(10):
        assert grid.cells[iy, wall_ix] == CellState.OCCUPIED
    # In front of the wall: free floor, no occupancy.
    assert np.all(grid.cells[0:10, 2:9] == CellState.FREE)


def test_occupancy_order_invariance():
    rng = np.random.default_rng(33)
    pts = rng.uniform(0, 2, size=(300, 3))
    cfg = GridConfig(resolution=0.25, height_band=(0.2, 1.8), origin=(0.0, 0.0))
    a = cloud_to_occupancy(PointCloud(points=pts), cfg)
    b = cloud_to_occupancy(PointCloud(points=pts[rng.permutation(300)]), cfg)
    assert np.array_equal(a.cells, b.cells)
    assert np.array_equal(a.origin, b.origin)


def test_occupancy_auto_origin_snaps_to_resolution():
    pts = np.array([[0.73, -0.41, 0.5], [1.9, 0.8, 0.6]])
    grid = cloud_to_occupancy(PointCloud(points=pts), GridConfig(resolution=0.5, height_band=(0.2, 1.8)))
    assert grid.origin[0] == pytest.approx(0.5)
    assert grid.origin[1] == pytest.approx(-0.5)
    ix, iy = grid.cell_index(0.73, -0.41)
    assert grid.cells[iy, ix] == CellState.OCCUPIED


def test_occupancy_empty_cloud_errors():
    with pytest.raises(EmptyCloud):
        cloud_to_occupancy(PointCloud(points=np.zeros((0, 3))))
    high = PointCloud(points=np.array([[0.0, 0.0, 5.0]]))
    with pytest.raises(EmptyCloud):
        cloud_to_occupancy(high, GridConfig(height_band=(0.2, 1.8)))


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(resolution=0.0)
    with pytest.raises(ValueError):
        GridConfig(height_band=(1.8, 0.2))
