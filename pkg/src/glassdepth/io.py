"""Serialization of dataset artifacts and results.

Formats:

* 16-bit grayscale PNG for sensor/ground-truth depth (value 0 = invalid,
  meters = value / scale; the scale is always explicit, never guessed).
* PFM (grayscale portable float map, bottom-up scanlines) or .npy for
  floating-point prior/aligned depth; non-finite values are invalid.
* JSON records for intrinsics and annotations, emitted canonically so
  identical content is byte-identical on disk.
* Binary little-endian PLY with double-precision coordinates for clouds.
* PGM + YAML sidecar for occupancy grids (occupied=0, free=254,
  unknown=205, image top row = max world y).

Every writer goes through an atomic temp-file/rename, so readers never see
partial output. Loads of distinct files are independent and thread-safe.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml
from PIL import Image
from scipy import ndimage

from .annotation import GlassAnnotation, InstanceAnnotation
from .core import (
    BinaryMask,
    CameraIntrinsics,
    DepthMap,
    DimensionMismatch,
    GlassDepthError,
    PlaneModel,
)
from .geometry import CellState, OccupancyGrid, PointCloud

MANIFEST_NAME = "manifest.txt"
RGB_NAME = "rgb.png"
RAW_DEPTH_NAME = "raw_depth.png"
MASK_NAME = "mask.png"
GT_DEPTH_NAME = "gt_depth.png"
INTRINSICS_NAME = "intrinsics.json"
ANNOTATION_NAME = "annotation.json"
EXCLUSION_NAME = "exclusion.png"

# Matterport-derived depth is commonly stored at 4000 units per meter.
DEFAULT_DEPTH_SCALE = 4000.0

_PGM_VALUES = {CellState.OCCUPIED: 0, CellState.FREE: 254, CellState.UNKNOWN: 205}
_PGM_STATES = {v: k for k, v in _PGM_VALUES.items()}


class BadFormat(GlassDepthError):
    """The file exists but does not parse as the expected format."""


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def save_json_record(obj, path: Path) -> None:
    """Canonical JSON dump (sorted keys, stable floats), written atomically."""
    _atomic_write_bytes(Path(path), _dump_json(obj))


def _png_bytes(img: Image.Image) -> bytes:
    buf = BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Depth maps
# ---------------------------------------------------------------------------


def load_depth_png16(path: Path, scale: float) -> DepthMap:
    """Load 16-bit integer depth; value 0 is invalid, meters = value / scale."""
    if not (scale > 0):
        raise ValueError(f"depth scale must be > 0, got {scale}")
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise BadFormat(f"{path}: not a readable image ({exc})") from exc
    if img.mode not in ("I", "I;16", "I;16B", "I;16L"):
        raise BadFormat(f"{path}: expected 16-bit single-channel image, got mode {img.mode!r}")
    arr = np.asarray(img, dtype=np.int64)
    if arr.min() < 0 or arr.max() > 65535:
        raise BadFormat(f"{path}: pixel values outside 16-bit range")
    return DepthMap(arr.astype(np.float64) / scale)


def save_depth_png16(depth: DepthMap, path: Path, scale: float) -> None:
    """Quantize to 16-bit at the given units-per-meter; invalid pixels become 0."""
    if not (scale > 0):
        raise ValueError(f"depth scale must be > 0, got {scale}")
    q = np.zeros(depth.shape, dtype=np.uint16)
    valid = depth.valid_mask
    scaled = np.round(depth.values[valid] * scale)
    scaled = np.clip(scaled, 0, 65535)
    q[valid] = scaled.astype(np.uint16)
    h, w = q.shape
    img = Image.frombytes("I;16", (w, h), q.astype("<u2").tobytes())
    _atomic_write_bytes(Path(path), _png_bytes(img))


_PFM_HEADER = re.compile(rb"^(P[Ff])\s+(\d+)\s+(\d+)\s+(\S+)\s")


def load_prior(path: Path) -> DepthMap:
    """Load a floating-point depth map from PFM or .npy (sniffed by magic)."""
    data = Path(path).read_bytes()
    if data[:2] in (b"Pf", b"PF"):
        return _parse_pfm(data, path)
    if data[:6] == b"\x93NUMPY":
        try:
            arr = np.load(BytesIO(data))
        except Exception as exc:
            raise BadFormat(f"{path}: unreadable npy array ({exc})") from exc
        if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.floating):
            raise BadFormat(f"{path}: expected a 2D float array, got {arr.dtype} {arr.shape}")
        return _as_depth(arr, path)
    raise BadFormat(f"{path}: neither a PFM nor an npy float map")


def _parse_pfm(data: bytes, path: Path) -> DepthMap:
    m = _PFM_HEADER.match(data)
    if m is None:
        raise BadFormat(f"{path}: malformed PFM header")
    if m.group(1) == b"PF":
        raise BadFormat(f"{path}: color PFM is not a depth map")
    w, h = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError as exc:
        raise BadFormat(f"{path}: malformed PFM scale field") from exc
    dtype = "<f4" if scale < 0 else ">f4"
    payload = data[m.end() :]
    if len(payload) != w * h * 4:
        raise BadFormat(
            f"{path}: header says {w}x{h} ({w * h * 4} bytes) but payload has {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    # PFM scanlines run bottom to top.
    return _as_depth(np.flipud(arr).astype(np.float64), path)


def _as_depth(arr: np.ndarray, path: Path) -> DepthMap:
    try:
        return DepthMap(arr)
    except ValueError as exc:
        raise BadFormat(f"{path}: {exc}") from exc


def save_prior(depth: DepthMap, path: Path) -> None:
    """Write a float map: .npy keeps float64 exactly, anything else is PFM float32."""
    path = Path(path)
    if path.suffix.lower() == ".npy":
        buf = BytesIO()
        np.save(buf, depth.values)
        _atomic_write_bytes(path, buf.getvalue())
        return
    h, w = depth.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    payload = np.flipud(depth.values).astype("<f4").tobytes()
    _atomic_write_bytes(path, header + payload)


# ---------------------------------------------------------------------------
# Intrinsics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntrinsicsRecord:
    """Pinhole parameters plus the image size they were calibrated for."""

    intrinsics: CameraIntrinsics
    width: int
    height: int


def load_intrinsics(path: Path) -> IntrinsicsRecord:
    try:
        obj = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadFormat(f"{path}: unreadable intrinsics record ({exc})") from exc
    if not isinstance(obj, dict):
        raise BadFormat(f"{path}: intrinsics record must be a JSON object")
    try:
        intr = CameraIntrinsics(
            fx=float(obj["fx"]), fy=float(obj["fy"]), cx=float(obj["cx"]), cy=float(obj["cy"])
        )
        return IntrinsicsRecord(intrinsics=intr, width=int(obj["width"]), height=int(obj["height"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise BadFormat(f"{path}: bad intrinsics record ({exc})") from exc


def save_intrinsics(record: IntrinsicsRecord, path: Path) -> None:
    k = record.intrinsics
    obj = {
        "fx": k.fx,
        "fy": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "width": record.width,
        "height": record.height,
    }
    _atomic_write_bytes(Path(path), _dump_json(obj))


# ---------------------------------------------------------------------------
# Annotations
# ---------------------------------------------------------------------------


def save_annotation(annotation: GlassAnnotation, path: Path) -> None:
    instances = []
    for inst in annotation.instances:
        plane = None
        if inst.plane is not None:
            plane = {
                "normal": [float(x) for x in inst.plane.normal],
                "offset": inst.plane.offset,
                "rms": inst.rms,
            }
        instances.append(
            {
                "points": [[u, v] for u, v in inst.points],
                "matched_mask_id": inst.matched_mask_id,
                "plane": plane,
            }
        )
    obj = {
        "sample_id": annotation.sample_id,
        "review_status": annotation.review_status,
        "instances": instances,
    }
    _atomic_write_bytes(Path(path), _dump_json(obj))


def load_annotation(path: Path) -> GlassAnnotation:
    try:
        obj = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadFormat(f"{path}: unreadable annotation record ({exc})") from exc
    try:
        instances = []
        for raw in obj["instances"]:
            plane = None
            rms = None
            if raw.get("plane") is not None:
                p = raw["plane"]
                plane = PlaneModel(
                    normal=np.asarray(p["normal"], dtype=np.float64), offset=float(p["offset"])
                )
                rms = None if p.get("rms") is None else float(p["rms"])
            matched = raw.get("matched_mask_id")
            instances.append(
                InstanceAnnotation(
                    points=tuple((float(u), float(v)) for u, v in raw["points"]),
                    matched_mask_id=None if matched is None else int(matched),
                    plane=plane,
                    rms=rms,
                )
            )
        return GlassAnnotation(
            sample_id=str(obj["sample_id"]),
            instances=tuple(instances),
            review_status=obj["review_status"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadFormat(f"{path}: bad annotation record ({exc})") from exc


# ---------------------------------------------------------------------------
# Masks and images
# ---------------------------------------------------------------------------


def load_mask_png(path: Path) -> BinaryMask:
    """Load a glass mask; accepts instance-labeled or plain binary images.

    Distinct nonzero pixel values become instance ids 1..n (sorted by
    original value). A single-valued (binary) mask is split into instances
    by 8-connected components.
    """
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise BadFormat(f"{path}: not a readable image ({exc})") from exc
    arr = np.asarray(img)
    if arr.ndim == 3:
        # Tolerate RGB masks where all channels agree.
        if not (arr[..., 0] == arr[..., 1]).all() or not (arr[..., 0] == arr[..., 2]).all():
            raise BadFormat(f"{path}: RGB mask channels disagree")
        arr = arr[..., 0]
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    if not np.issubdtype(arr.dtype, np.integer):
        raise BadFormat(f"{path}: mask must hold integer labels, got {arr.dtype}")
    values = np.unique(arr)
    values = values[values > 0]
    if len(values) == 0:
        return BinaryMask(np.zeros(arr.shape, dtype=np.int32))
    if len(values) == 1:
        labeled, _ = ndimage.label(arr > 0, structure=np.ones((3, 3), dtype=int))
        return BinaryMask(labeled.astype(np.int32))
    out = np.zeros(arr.shape, dtype=np.int32)
    for new_id, value in enumerate(values, start=1):
        out[arr == value] = new_id
    return BinaryMask(out)


def save_mask_png(mask: BinaryMask, path: Path) -> None:
    labels = mask.labels
    if mask.n_instances <= 255:
        img = Image.fromarray(labels.astype(np.uint8), mode="L")
    else:
        h, w = labels.shape
        img = Image.frombytes("I;16", (w, h), labels.astype("<u2").tobytes())
    _atomic_write_bytes(Path(path), _png_bytes(img))


def load_rgb_png(path: Path) -> np.ndarray:
    try:
        img = Image.open(path)
        return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise BadFormat(f"{path}: not a readable image ({exc})") from exc


def save_rgb_png(rgb: np.ndarray, path: Path) -> None:
    arr = np.asarray(rgb, dtype=np.uint8)
    _atomic_write_bytes(Path(path), _png_bytes(Image.fromarray(arr, mode="RGB")))


def save_exclusion_png(excluded: np.ndarray, path: Path) -> None:
    arr = (np.asarray(excluded, dtype=bool) * np.uint8(255)).astype(np.uint8)
    _atomic_write_bytes(Path(path), _png_bytes(Image.fromarray(arr, mode="L")))


def load_exclusion_png(path: Path) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise BadFormat(f"{path}: not a readable image ({exc})") from exc
    return np.asarray(img) > 0


# ---------------------------------------------------------------------------
# Point clouds (PLY)
# ---------------------------------------------------------------------------


def cloud_ply_bytes(cloud: PointCloud) -> bytes:
    """Binary little-endian PLY with double-precision coordinates."""
    n = len(cloud)
    lines = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
    ]
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")

    rec = np.zeros(n, dtype=fields)
    rec["x"], rec["y"], rec["z"] = cloud.points[:, 0], cloud.points[:, 1], cloud.points[:, 2]
    if cloud.colors is not None:
        rec["red"], rec["green"], rec["blue"] = (
            cloud.colors[:, 0],
            cloud.colors[:, 1],
            cloud.colors[:, 2],
        )
    return header + rec.tobytes()


def save_cloud_ply(cloud: PointCloud, path: Path) -> None:
    _atomic_write_bytes(Path(path), cloud_ply_bytes(cloud))


_PLY_TYPES = {
    "double": "<f8",
    "float": "<f4",
    "float64": "<f8",
    "float32": "<f4",
    "uchar": "u1",
    "uint8": "u1",
}


def load_cloud_ply(path: Path) -> PointCloud:
    data = Path(path).read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise BadFormat(f"{path}: not a PLY file")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n") :]

    n = None
    props: list[tuple[str, str]] = []
    fmt_ok = False
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt_ok = parts[1] == "binary_little_endian"
        elif parts[0] == "element" and parts[1] == "vertex":
            n = int(parts[2])
        elif parts[0] == "element":
            raise BadFormat(f"{path}: only vertex elements are supported")
        elif parts[0] == "property":
            if parts[1] not in _PLY_TYPES:
                raise BadFormat(f"{path}: unsupported property type {parts[1]!r}")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
    if not fmt_ok or n is None:
        raise BadFormat(f"{path}: missing binary_little_endian format or vertex element")
    dtype = np.dtype(props)
    if len(body) != n * dtype.itemsize:
        raise BadFormat(f"{path}: vertex payload size mismatch")
    rec = np.frombuffer(body, dtype=dtype)
    try:
        points = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)
    except KeyError as exc:
        raise BadFormat(f"{path}: missing coordinate property {exc}") from exc
    colors = None
    if all(name in dtype.names for name in ("red", "green", "blue")):
        colors = np.column_stack([rec["red"], rec["green"], rec["blue"]]).astype(np.uint8)
    return PointCloud(points=points, colors=colors)


# ---------------------------------------------------------------------------
# Occupancy grids (PGM + YAML sidecar)
# ---------------------------------------------------------------------------


def _sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".yaml")


def save_occupancy_pgm(grid: OccupancyGrid, path: Path) -> None:
    """PGM image (top row = max world y) plus a YAML sidecar with geometry."""
    pixels = np.full(grid.cells.shape, _PGM_VALUES[CellState.UNKNOWN], dtype=np.uint8)
    for state, value in _PGM_VALUES.items():
        pixels[grid.cells == state] = value
    pixels = np.flipud(pixels)
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    _atomic_write_bytes(Path(path), header + pixels.tobytes())
    meta = {
        "resolution": float(grid.resolution),
        "origin": [float(grid.origin[0]), float(grid.origin[1])],
        "height_band": [float(grid.height_band[0]), float(grid.height_band[1])],
    }
    _atomic_write_bytes(_sidecar_path(path), yaml.safe_dump(meta, sort_keys=True).encode("utf-8"))


def load_occupancy_pgm(path: Path) -> OccupancyGrid:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise BadFormat(f"{path}: not a binary PGM")
    w, h, maxval = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if maxval != 255:
        raise BadFormat(f"{path}: expected maxval 255, got {maxval}")
    payload = data[m.end() :]
    if len(payload) != w * h:
        raise BadFormat(f"{path}: pixel payload size mismatch")
    pixels = np.flipud(np.frombuffer(payload, dtype=np.uint8).reshape(h, w))
    cells = np.empty((h, w), dtype=np.uint8)
    for value, state in _PGM_STATES.items():
        cells[pixels == value] = state
    known = np.isin(pixels, list(_PGM_STATES))
    if not known.all():
        raise BadFormat(f"{path}: unexpected gray values {np.unique(pixels[~known]).tolist()}")

    sidecar = _sidecar_path(path)
    try:
        meta = yaml.safe_load(sidecar.read_text("utf-8"))
        resolution = float(meta["resolution"])
        origin = np.asarray(meta["origin"], dtype=np.float64)
        band = (float(meta["height_band"][0]), float(meta["height_band"][1]))
    except (OSError, KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
        raise BadFormat(f"{sidecar}: bad or missing grid metadata ({exc})") from exc
    return OccupancyGrid(resolution=resolution, origin=origin, cells=cells, height_band=band)


# ---------------------------------------------------------------------------
# Dataset layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSample:
    """Paths of the five per-sample artifacts in a dataset directory."""

    sample_id: str
    rgb_path: Path
    raw_depth_path: Path
    mask_path: Path
    gt_depth_path: Path
    intrinsics_path: Path

    @classmethod
    def in_directory(cls, root: Path, sample_id: str) -> "DatasetSample":
        d = Path(root) / sample_id
        return cls(
            sample_id=sample_id,
            rgb_path=d / RGB_NAME,
            raw_depth_path=d / RAW_DEPTH_NAME,
            mask_path=d / MASK_NAME,
            gt_depth_path=d / GT_DEPTH_NAME,
            intrinsics_path=d / INTRINSICS_NAME,
        )

    @property
    def directory(self) -> Path:
        return self.rgb_path.parent

    @property
    def annotation_path(self) -> Path:
        return self.directory / ANNOTATION_NAME

    @property
    def exclusion_path(self) -> Path:
        return self.directory / EXCLUSION_NAME

    def missing_files(self) -> list[Path]:
        paths = [
            self.rgb_path,
            self.raw_depth_path,
            self.mask_path,
            self.gt_depth_path,
            self.intrinsics_path,
        ]
        return [p for p in paths if not p.is_file()]


def read_manifest(root: Path) -> list[str]:
    path = Path(root) / MANIFEST_NAME
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise BadFormat(f"{path}: unreadable manifest ({exc})") from exc
    ids = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            ids.append(line)
    return ids


def write_manifest(root: Path, sample_ids: Sequence[str]) -> None:
    body = "".join(f"{sid}\n" for sid in sample_ids)
    _atomic_write_bytes(Path(root) / MANIFEST_NAME, body.encode("utf-8"))


def check_dimensions(sample: DatasetSample, *shapes: tuple[int, int]) -> None:
    """Raise DimensionMismatch unless all loaded shapes agree."""
    distinct = {s for s in shapes}
    if len(distinct) > 1:
        raise DimensionMismatch(f"sample {sample.sample_id}: artifact shapes differ: {sorted(distinct)}")
