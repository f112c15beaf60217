"""Glass-aware RGB-D depth correction toolkit.

Aligns affine-invariant monocular depth priors to metric sensor depth with
patch-wise local RANSAC, synthesizes plane-based ground truth for glass
regions from clicked coplanar points, evaluates AbsRel / delta accuracy
with an easy/hard split, and exports point clouds and occupancy grids for
navigation.
"""

from .alignment import (
    AlignmentResult,
    DegenerateSamples,
    NoViableCandidate,
    RansacConfig,
    apply_affine,
    candidate_error,
    global_align,
    invert_depth,
    local_ransac_align,
    solve_affine_lsq,
)
from .annotation import (
    BehindCamera,
    DegenerateGeometry,
    DegenerateHull,
    GlassAnnotation,
    GroundTruthDepth,
    InstanceAnnotation,
    InvalidDepth,
    MaskMatch,
    NoOverlap,
    ParallelRay,
    PlaneFit,
    backproject,
    fit_plane,
    generate_ground_truth,
    match_annotation_to_mask,
    ray_plane_depth,
)
from .core import (
    AffineParams,
    BinaryMask,
    CameraIntrinsics,
    DepthMap,
    DimensionMismatch,
    GlassDepthError,
    NoValidPixels,
    PixelSample,
    PlaneModel,
    valid_pixel_indices,
)
from .geometry import (
    CellState,
    EmptyCloud,
    GridConfig,
    OccupancyGrid,
    PointCloud,
    cloud_to_occupancy,
    depth_to_cloud,
    level_camera_cloud,
)
from .metrics import (
    EASY_ABS_REL_MAX,
    BenchmarkReport,
    DepthMetrics,
    SplitLabel,
    SplitSummary,
    aggregate_report,
    compute_metrics,
    split_sample,
)

__version__ = "0.1.0"
