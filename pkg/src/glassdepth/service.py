"""HTTP backend for the human annotation and review workflow.

Serves dataset samples and imagery, turns submitted clicks into a fitted
plane with a matched glass instance and preview renders, and persists
review decisions. Every mutation is written to the sample's annotation
record before the response is acknowledged, so a restart loses nothing and
the file on disk is always exactly what the batch annotate pipeline
consumes. Responses are pure functions of persisted state plus the
request; resubmitting identical clicks returns an identical plane.

Single-annotator model: no auth, bind to loopback. Mutations are
serialized per sample; reads are concurrent.
"""

from __future__ import annotations

import threading
from io import BytesIO
from pathlib import Path
from typing import Literal, Optional

import matplotlib
import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, Response
from PIL import Image
from pydantic import BaseModel

from . import io
from .annotation import (
    DegenerateGeometry,
    DegenerateHull,
    GlassAnnotation,
    InstanceAnnotation,
    NoOverlap,
    backproject,
    fit_plane,
    generate_ground_truth,
    match_annotation_to_mask,
)
from .core import BinaryMask, DepthMap
from .geometry import depth_to_cloud

matplotlib.use("Agg")

# Fixed range keeps error previews comparable across samples.
ERROR_COLORMAP_MAX_M = 0.5

_INSTANCE_COLORS = np.array(
    [(230, 60, 60), (60, 160, 230), (90, 200, 90), (240, 180, 40), (200, 90, 220), (80, 220, 200)],
    dtype=np.uint8,
)


class FitRequest(BaseModel):
    points: list[tuple[float, float]]


class ReviewRequest(BaseModel):
    status: Literal["accepted", "rejected"]


def _png_response(rgb: np.ndarray) -> Response:
    buf = BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def _colorize(values: np.ndarray, valid: np.ndarray, cmap_name: str, vmin=None, vmax=None) -> np.ndarray:
    cmap = matplotlib.colormaps[cmap_name]
    out = np.zeros((*values.shape, 3), dtype=np.uint8)
    if not valid.any():
        return out
    lo = float(values[valid].min()) if vmin is None else vmin
    hi = float(values[valid].max()) if vmax is None else vmax
    span = max(hi - lo, 1e-9)
    norm = np.clip((values - lo) / span, 0.0, 1.0)
    rgba = cmap(norm)
    out = (rgba[..., :3] * 255).astype(np.uint8)
    out[~valid] = 0
    return out


class _SampleStore:
    """Loads per-sample artifacts and serializes mutations per sample."""

    def __init__(self, root: Path, depth_scale: float):
        self.root = Path(root)
        self.depth_scale = depth_scale
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, sample_id: str) -> threading.Lock:
        with self._locks_guard:
            if sample_id not in self._locks:
                self._locks[sample_id] = threading.Lock()
            return self._locks[sample_id]

    def sample_ids(self) -> list[str]:
        manifest = self.root / io.MANIFEST_NAME
        if manifest.is_file():
            return io.read_manifest(self.root)
        return sorted(
            d.name for d in self.root.iterdir() if d.is_dir() and (d / io.RAW_DEPTH_NAME).is_file()
        )

    def sample(self, sample_id: str) -> io.DatasetSample:
        s = io.DatasetSample.in_directory(self.root, sample_id)
        if not s.raw_depth_path.is_file():
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")
        return s

    def annotation(self, sample: io.DatasetSample) -> GlassAnnotation:
        if sample.annotation_path.is_file():
            return io.load_annotation(sample.annotation_path)
        return GlassAnnotation(sample_id=sample.sample_id, instances=())

    def raw(self, sample: io.DatasetSample) -> DepthMap:
        return io.load_depth_png16(sample.raw_depth_path, self.depth_scale)

    def mask(self, sample: io.DatasetSample) -> BinaryMask:
        return io.load_mask_png(sample.mask_path)

    def intrinsics(self, sample: io.DatasetSample) -> io.IntrinsicsRecord:
        return io.load_intrinsics(sample.intrinsics_path)


def create_app(
    dataset_root: Path,
    depth_scale: float = io.DEFAULT_DEPTH_SCALE,
    preview_stride: int = 4,
    ui_dir: Optional[Path] = None,
) -> FastAPI:
    store = _SampleStore(dataset_root, depth_scale)
    app = FastAPI(title="glassdepth annotation service")

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/samples")
    def list_samples():
        out = []
        for sid in store.sample_ids():
            sample = io.DatasetSample.in_directory(store.root, sid)
            if not sample.raw_depth_path.is_file():
                continue
            ann = store.annotation(sample)
            try:
                n_instances = store.mask(sample).n_instances
            except io.BadFormat:
                n_instances = 0
            out.append(
                {
                    "sample_id": sid,
                    "review_status": ann.review_status,
                    "instance_count": n_instances,
                    "annotated_count": sum(1 for i in ann.instances if i.plane is not None),
                }
            )
        return out

    @app.get("/api/samples/{sample_id}")
    def sample_detail(sample_id: str):
        sample = store.sample(sample_id)
        raw = store.raw(sample)
        mask = store.mask(sample)
        rec = store.intrinsics(sample)
        ann = store.annotation(sample)
        return {
            "sample_id": sample_id,
            "width": raw.width,
            "height": raw.height,
            "intrinsics": {
                "fx": rec.intrinsics.fx,
                "fy": rec.intrinsics.fy,
                "cx": rec.intrinsics.cx,
                "cy": rec.intrinsics.cy,
            },
            "review_status": ann.review_status,
            "mask_instance_ids": mask.instance_ids,
            "instances": [
                {
                    "points": [list(p) for p in inst.points],
                    "matched_mask_id": inst.matched_mask_id,
                    "plane": None
                    if inst.plane is None
                    else {
                        "normal": [float(x) for x in inst.plane.normal],
                        "offset": inst.plane.offset,
                    },
                    "rms": inst.rms,
                }
                for inst in ann.instances
            ],
        }

    @app.get("/api/samples/{sample_id}/rgb.png")
    def rgb_image(sample_id: str):
        sample = store.sample(sample_id)
        return _png_response(io.load_rgb_png(sample.rgb_path))

    @app.get("/api/samples/{sample_id}/depth.png")
    def depth_image(sample_id: str):
        sample = store.sample(sample_id)
        raw = store.raw(sample)
        return _png_response(_colorize(raw.values, raw.valid_mask, "turbo"))

    @app.get("/api/samples/{sample_id}/overlay.png")
    def mask_overlay(sample_id: str):
        sample = store.sample(sample_id)
        rgb = io.load_rgb_png(sample.rgb_path).copy()
        mask = store.mask(sample)
        for k in mask.instance_ids:
            color = _INSTANCE_COLORS[(k - 1) % len(_INSTANCE_COLORS)]
            sel = mask.instance_mask(k)
            rgb[sel] = (0.45 * rgb[sel] + 0.55 * color).astype(np.uint8)
        return _png_response(rgb)

    @app.post("/api/samples/{sample_id}/fit")
    def fit_instance(sample_id: str, req: FitRequest):
        sample = store.sample(sample_id)
        if len(req.points) < 3:
            raise HTTPException(
                status_code=422,
                detail={"reason": "insufficient points", "needed": 3, "got": len(req.points)},
            )
        raw = store.raw(sample)
        mask = store.mask(sample)
        rec = store.intrinsics(sample)

        point_problems = []
        pts3d = []
        for i, (u, v) in enumerate(req.points):
            ui, vi = int(round(u)), int(round(v))
            if not (0 <= ui < raw.width and 0 <= vi < raw.height):
                point_problems.append({"index": i, "reason": "outside image bounds"})
                continue
            z = float(raw.values[vi, ui])
            if not (np.isfinite(z) and z > 0):
                point_problems.append({"index": i, "reason": "invalid sensor depth"})
                continue
            pts3d.append(backproject((u, v), z, rec.intrinsics))
        if point_problems:
            raise HTTPException(status_code=422, detail={"reason": "bad points", "points": point_problems})

        try:
            fit = fit_plane(pts3d)
            match = match_annotation_to_mask(req.points, mask)
        except (DegenerateGeometry, DegenerateHull) as exc:
            raise HTTPException(status_code=422, detail={"reason": "degenerate clicks", "message": str(exc)})
        except NoOverlap as exc:
            raise HTTPException(status_code=422, detail={"reason": "no mask overlap", "message": str(exc)})

        new_inst = InstanceAnnotation(
            points=tuple((float(u), float(v)) for u, v in req.points),
            matched_mask_id=match.instance_id,
            plane=fit.plane,
            rms=fit.rms,
        )
        with store.lock(sample_id):
            ann = store.annotation(sample)
            kept = tuple(i for i in ann.instances if i.matched_mask_id != match.instance_id)
            updated = GlassAnnotation(
                sample_id=sample_id,
                instances=kept + (new_inst,),
                review_status="pending",
            )
            io.save_annotation(updated, sample.annotation_path)

        instance_pixels = int(mask.instance_mask(match.instance_id).sum())
        gt = generate_ground_truth(raw, mask, GlassAnnotation(sample_id, (new_inst,)), rec.intrinsics)
        sel = mask.instance_mask(match.instance_id)
        fill = gt.depth.values[sel]
        fill_valid = fill[np.isfinite(fill) & (fill > 0)]
        return {
            "plane": {"normal": [float(x) for x in fit.plane.normal], "offset": fit.plane.offset},
            "rms": fit.rms,
            "matched_mask_id": match.instance_id,
            "overlap_ratio": match.ratio,
            "instance_pixels": instance_pixels,
            "mean_instance_depth": float(fill_valid.mean()) if fill_valid.size else None,
            "preview": {
                "depth_url": f"/api/samples/{sample_id}/preview/{match.instance_id}/depth.png",
                "error_url": f"/api/samples/{sample_id}/preview/{match.instance_id}/error.png",
            },
        }

    def _instance_preview(sample_id: str, mask_id: int):
        sample = store.sample(sample_id)
        ann = store.annotation(sample)
        inst = next((i for i in ann.instances if i.matched_mask_id == mask_id), None)
        if inst is None or inst.plane is None:
            raise HTTPException(status_code=404, detail=f"no fitted annotation for instance {mask_id}")
        raw = store.raw(sample)
        mask = store.mask(sample)
        rec = store.intrinsics(sample)
        gt = generate_ground_truth(raw, mask, GlassAnnotation(sample_id, (inst,)), rec.intrinsics)
        sel = mask.instance_mask(mask_id)
        return raw, gt, sel

    @app.get("/api/samples/{sample_id}/preview/{mask_id}/depth.png")
    def preview_depth(sample_id: str, mask_id: int):
        raw, gt, _ = _instance_preview(sample_id, mask_id)
        return _png_response(_colorize(gt.depth.values, gt.depth.valid_mask, "turbo"))

    @app.get("/api/samples/{sample_id}/preview/{mask_id}/error.png")
    def preview_error(sample_id: str, mask_id: int):
        raw, gt, sel = _instance_preview(sample_id, mask_id)
        err = np.zeros(raw.shape)
        joint = sel & raw.valid_mask & gt.depth.valid_mask
        err[joint] = np.abs(gt.depth.values[joint] - raw.values[joint])
        return _png_response(_colorize(err, joint, "magma", vmin=0.0, vmax=ERROR_COLORMAP_MAX_M))

    @app.get("/api/samples/{sample_id}/cloud.ply")
    def preview_cloud(sample_id: str):
        sample = store.sample(sample_id)
        raw = store.raw(sample)
        mask = store.mask(sample)
        rec = store.intrinsics(sample)
        ann = store.annotation(sample)
        fitted = tuple(i for i in ann.instances if i.plane is not None)
        depth = generate_ground_truth(raw, mask, GlassAnnotation(sample_id, fitted), rec.intrinsics).depth if fitted else raw
        rgb = io.load_rgb_png(sample.rgb_path) if sample.rgb_path.is_file() else None
        cloud = depth_to_cloud(depth, rec.intrinsics, stride=preview_stride, rgb=rgb)
        return Response(content=io.cloud_ply_bytes(cloud), media_type="application/octet-stream")

    @app.post("/api/samples/{sample_id}/review")
    def review(sample_id: str, req: ReviewRequest):
        sample = store.sample(sample_id)
        with store.lock(sample_id):
            ann = store.annotation(sample)
            updated = GlassAnnotation(
                sample_id=sample_id, instances=ann.instances, review_status=req.status
            )
            io.save_annotation(updated, sample.annotation_path)
        return {"sample_id": sample_id, "review_status": req.status}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return "<html><body><h1>glassdepth annotation service</h1><p>API under /api.</p></body></html>"

    return app
