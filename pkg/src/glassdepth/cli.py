"""Command-line entry point: align, annotate, eval, export, serve, report.

Exit codes: 0 success, 1 input error, 2 degenerate-data error, 3 partial
dataset failure. No subcommand leaves partial outputs behind: every file is
written to a temp name and renamed on success.
"""

from __future__ import annotations

import argparse
import os
import socket
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .alignment import (
    DegenerateSamples,
    NoViableCandidate,
    RansacConfig,
    apply_affine,
    global_align,
    invert_depth,
    local_ransac_align,
)
from .annotation import GlassAnnotation, GroundTruthDepth, generate_ground_truth
from .core import DepthMap, DimensionMismatch, GlassDepthError, NoValidPixels
from .geometry import EmptyCloud, GridConfig, cloud_to_occupancy, depth_to_cloud, level_camera_cloud
from .metrics import aggregate_report, compute_metrics, split_sample
from .report import (
    EvalRecord,
    format_table,
    read_report_csv,
    render_figures,
    write_report_csv,
    write_report_txt,
)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_DEGENERATE = 2
EXIT_PARTIAL = 3

DATA_ROOT_ENV = "GLASSDEPTH_DATA_ROOT"

_DEGENERATE_ERRORS = (DegenerateSamples, NoViableCandidate, NoValidPixels, EmptyCloud)


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _load_depth_any(path: Path, scale: float) -> DepthMap:
    if path.suffix.lower() == ".png":
        return io.load_depth_png16(path, scale)
    return io.load_prior(path)


def _save_depth_any(depth: DepthMap, path: Path, scale: float) -> None:
    if path.suffix.lower() == ".png":
        io.save_depth_png16(depth, path, scale)
    else:
        io.save_prior(depth, path)


def _require_files(*paths: Path) -> None:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise FileNotFoundError(f"missing input file(s): {', '.join(missing)}")


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------


def run_align(args: argparse.Namespace) -> int:
    try:
        _require_files(args.raw, args.prior)
        raw = _load_depth_any(Path(args.raw), args.depth_scale)
        prior = _load_depth_any(Path(args.prior), args.depth_scale)
        if args.intrinsics:
            _require_files(args.intrinsics)
            rec = io.load_intrinsics(Path(args.intrinsics))
            if (rec.height, rec.width) != raw.shape:
                raise DimensionMismatch(
                    f"intrinsics are for {rec.width}x{rec.height}, raw depth is "
                    f"{raw.width}x{raw.height}"
                )
        if prior.shape != raw.shape:
            raise DimensionMismatch(
                f"prior {prior.width}x{prior.height} vs raw {raw.width}x{raw.height}"
            )
    except (FileNotFoundError, io.BadFormat, DimensionMismatch, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT_ERROR

    if args.invert_prior:
        prior = invert_depth(prior)

    cfg = RansacConfig(
        grid_n=args.grid_n,
        iterations_per_patch=args.iterations,
        samples_per_iteration=args.samples,
        rng_seed=args.seed,
        min_prior_spread=args.min_spread,
    )
    try:
        if args.use_global:
            result = global_align(prior, raw, min_prior_spread=args.min_spread)
        else:
            result = local_ransac_align(prior, raw, cfg)
    except _DEGENERATE_ERRORS as exc:
        _err(f"alignment failed: {exc}")
        return EXIT_DEGENERATE
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT_ERROR

    aligned = apply_affine(prior, result.params)
    _save_depth_any(aligned, Path(args.out), args.depth_scale)
    meta = {
        "method": result.method,
        "scale": result.params.scale,
        "shift": result.params.shift,
        "mean_abs_error": result.mean_abs_error,
        "winning_patch": list(result.winning_patch) if result.winning_patch else None,
        "winning_iteration": result.winning_iteration,
        "candidates_evaluated": result.candidates_evaluated,
        "candidates_skipped": result.candidates_skipped,
        "seed": args.seed,
        "invert_prior": bool(args.invert_prior),
        "config": {
            "grid_n": cfg.grid_n,
            "iterations_per_patch": cfg.iterations_per_patch,
            "samples_per_iteration": cfg.samples_per_iteration,
            "min_prior_spread": cfg.min_prior_spread,
        },
        "inputs": {"raw": str(args.raw), "prior": str(args.prior)},
    }
    io.save_json_record(meta, Path(args.meta))
    print(
        f"{result.method}: s={result.params.scale:.6g} t={result.params.shift:.6g} "
        f"mean_abs_error={result.mean_abs_error:.6g}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------


def _annotate_one(root: Path, sample_id: str, args) -> tuple[str, str, str]:
    """Returns (sample_id, status, message); status in ok/skipped/failed."""
    sample = io.DatasetSample.in_directory(root, sample_id)
    try:
        _require_files(sample.raw_depth_path, sample.mask_path, sample.intrinsics_path)
        raw = io.load_depth_png16(sample.raw_depth_path, args.depth_scale)
        mask = io.load_mask_png(sample.mask_path)
        rec = io.load_intrinsics(sample.intrinsics_path)
        io.check_dimensions(sample, raw.shape, mask.shape, (rec.height, rec.width))

        if sample.annotation_path.is_file():
            ann = io.load_annotation(sample.annotation_path)
        else:
            ann = GlassAnnotation(sample_id=sample_id, instances=())

        if ann.review_status == "rejected":
            return sample_id, "skipped", "annotation rejected by review"
        if ann.review_status == "pending" and ann.instances and not args.include_pending:
            return sample_id, "skipped", "annotation pending review (use --include-pending)"

        gt = generate_ground_truth(raw, mask, ann, rec.intrinsics)
        io.save_depth_png16(gt.depth, sample.gt_depth_path, args.depth_scale)
        io.save_exclusion_png(gt.evaluation_mask, sample.exclusion_path)
        note = "; ".join(gt.failures) if gt.failures else "ok"
        return sample_id, "ok", note
    except (FileNotFoundError, io.BadFormat, DimensionMismatch, GlassDepthError, OSError) as exc:
        return sample_id, "failed", str(exc)


def run_annotate(args: argparse.Namespace) -> int:
    root = Path(args.root)
    try:
        sample_ids = args.samples or io.read_manifest(root)
    except io.BadFormat as exc:
        _err(str(exc))
        return EXIT_INPUT_ERROR
    if not sample_ids:
        _err("manifest lists no samples")
        return EXIT_INPUT_ERROR

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(lambda sid: _annotate_one(root, sid, args), sample_ids))
    else:
        results = [_annotate_one(root, sid, args) for sid in sample_ids]

    n_failed = 0
    for sid, status, message in results:
        print(f"{sid}: {status} ({message})")
        if status == "failed":
            n_failed += 1
    if n_failed:
        _err(f"{n_failed}/{len(results)} samples failed")
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


_PRED_EXTENSIONS = (".pfm", ".npy", ".png")


def _find_prediction(pred_dir: Path, sample_id: str) -> Path:
    for ext in _PRED_EXTENSIONS:
        p = pred_dir / f"{sample_id}{ext}"
        if p.is_file():
            return p
    raise FileNotFoundError(
        f"no prediction for {sample_id} under {pred_dir} (tried {', '.join(_PRED_EXTENSIONS)})"
    )


def _eval_one(root: Path, pred_dir: Path, sample_id: str, args) -> EvalRecord:
    sample = io.DatasetSample.in_directory(root, sample_id)
    try:
        _require_files(sample.raw_depth_path, sample.gt_depth_path)
        raw = io.load_depth_png16(sample.raw_depth_path, args.depth_scale)
        gt_depth = io.load_depth_png16(sample.gt_depth_path, args.depth_scale)
        if sample.exclusion_path.is_file():
            excluded = io.load_exclusion_png(sample.exclusion_path)
        else:
            excluded = np.zeros(gt_depth.shape, dtype=bool)
        pred_path = _find_prediction(pred_dir, sample_id)
        pred = _load_depth_any(pred_path, args.depth_scale)
        io.check_dimensions(sample, raw.shape, gt_depth.shape, excluded.shape, pred.shape)

        gt = GroundTruthDepth(depth=gt_depth, evaluation_mask=excluded)
        label = split_sample(raw, gt)
        m = compute_metrics(pred, gt_depth, excluded)
        return EvalRecord(
            sample_id=sample_id,
            status="ok",
            split=label.label,
            raw_abs_rel=label.raw_abs_rel,
            abs_rel=m.abs_rel,
            delta1=m.delta1,
            valid_pixel_count=m.valid_pixel_count,
            invalid_pred_count=m.invalid_pred_count,
        )
    except (FileNotFoundError, io.BadFormat, DimensionMismatch, GlassDepthError, OSError) as exc:
        return EvalRecord(sample_id=sample_id, status="failed", error=str(exc))


def run_eval(args: argparse.Namespace) -> int:
    root = Path(args.root)
    pred_dir = Path(args.pred)
    try:
        sample_ids = args.samples or io.read_manifest(root)
    except io.BadFormat as exc:
        _err(str(exc))
        return EXIT_INPUT_ERROR
    if not sample_ids:
        _err("manifest lists no samples")
        return EXIT_INPUT_ERROR

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(lambda sid: _eval_one(root, pred_dir, sid, args), sample_ids))
    else:
        records = [_eval_one(root, pred_dir, sid, args) for sid in sample_ids]

    from .metrics import DepthMetrics, SplitLabel

    pairs = [
        (
            SplitLabel(r.split, r.raw_abs_rel),
            DepthMetrics(r.abs_rel, r.delta1, r.valid_pixel_count, r.invalid_pred_count),
        )
        for r in records
        if r.status == "ok"
    ]
    report = aggregate_report(pairs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(records, report, out_dir / "report.csv")
    write_report_txt(report, out_dir / "report.txt")
    print(format_table(report), end="")

    n_failed = sum(1 for r in records if r.status == "failed")
    if n_failed:
        for r in records:
            if r.status == "failed":
                print(f"failed {r.sample_id}: {r.error}", file=sys.stderr)
        _err(f"{n_failed}/{len(records)} samples failed")
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def run_export(args: argparse.Namespace) -> int:
    try:
        _require_files(args.depth)
        depth = _load_depth_any(Path(args.depth), args.depth_scale)
        rgb = None
        if args.rgb:
            _require_files(args.rgb)
            rgb = io.load_rgb_png(Path(args.rgb))
        _require_files(args.intrinsics)
        rec = io.load_intrinsics(Path(args.intrinsics))
        if (rec.height, rec.width) != depth.shape:
            raise DimensionMismatch(
                f"intrinsics are for {rec.width}x{rec.height}, depth is {depth.width}x{depth.height}"
            )
    except (FileNotFoundError, io.BadFormat, DimensionMismatch, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT_ERROR

    cloud = depth_to_cloud(depth, rec.intrinsics, stride=args.stride, rgb=rgb)
    io.save_cloud_ply(cloud, Path(args.out_cloud))
    print(f"wrote {len(cloud)} points to {args.out_cloud}")

    if args.out_grid:
        try:
            world = level_camera_cloud(cloud, camera_height=args.camera_height)
            grid = cloud_to_occupancy(
                world,
                GridConfig(resolution=args.resolution, height_band=(args.z_min, args.z_max)),
            )
        except EmptyCloud as exc:
            _err(f"occupancy conversion failed: {exc}")
            return EXIT_DEGENERATE
        io.save_occupancy_pgm(grid, Path(args.out_grid))
        ny, nx = grid.shape
        print(f"wrote {nx}x{ny} occupancy grid to {args.out_grid}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve / report
# ---------------------------------------------------------------------------


def run_serve(args: argparse.Namespace) -> int:
    root = Path(args.root)
    if not root.is_dir():
        _err(f"dataset root {root} is not a directory")
        return EXIT_INPUT_ERROR
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        _err(f"cannot bind {args.host}:{args.port}: {exc}")
        return EXIT_INPUT_ERROR
    finally:
        probe.close()

    import uvicorn

    from .service import create_app

    app = create_app(
        root,
        depth_scale=args.depth_scale,
        preview_stride=args.preview_stride,
        ui_dir=Path(args.ui) if args.ui else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def run_report(args: argparse.Namespace) -> int:
    try:
        _require_files(args.report)
        records, report = read_report_csv(Path(args.report))
    except (FileNotFoundError, io.BadFormat, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT_ERROR
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_txt(report, out_dir / "report.txt")
    figures = render_figures(records, report, out_dir)
    print(format_table(report), end="")
    for f in figures:
        print(f"wrote {f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _add_scale(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--depth-scale",
        type=float,
        default=io.DEFAULT_DEPTH_SCALE,
        help="16-bit depth units per meter (default %(default)s, Matterport convention)",
    )


def _add_root(p: argparse.ArgumentParser) -> None:
    default_root = os.environ.get(DATA_ROOT_ENV)
    p.add_argument(
        "--root",
        default=default_root,
        required=default_root is None,
        help=f"dataset root directory (default: ${DATA_ROOT_ENV})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glassdepth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="align a depth prior to sensor depth")
    p.add_argument("--raw", required=True, help="sensor depth (.png 16-bit, .pfm, or .npy)")
    p.add_argument("--prior", required=True, help="monocular prior depth (.pfm, .npy, or .png)")
    p.add_argument("--intrinsics", help="optional intrinsics record for dimension checks")
    p.add_argument("--out", required=True, help="aligned depth output (.pfm, .npy, or .png)")
    p.add_argument("--meta", required=True, help="alignment metadata JSON output")
    p.add_argument("--global", dest="use_global", action="store_true", help="use global least squares instead of patch RANSAC")
    p.add_argument("--grid-n", type=int, default=8, help="patches per image side (default %(default)s)")
    p.add_argument("--iterations", type=int, default=20, help="RANSAC iterations per patch (default %(default)s)")
    p.add_argument("--samples", type=int, default=32, help="pixels sampled per iteration (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default %(default)s)")
    p.add_argument("--min-spread", type=float, default=1e-6, help="minimum prior spread per sample set")
    p.add_argument("--invert-prior", action="store_true", help="treat the prior as disparity: invert before aligning")
    _add_scale(p)
    p.set_defaults(func=run_align)

    p = sub.add_parser("annotate", help="generate plane-based ground truth from click files")
    _add_root(p)
    p.add_argument("--samples", nargs="*", help="sample ids (default: all in manifest)")
    p.add_argument("--include-pending", action="store_true", help="also process annotations not yet accepted")
    p.add_argument("--jobs", type=int, default=1, help="concurrent samples (default %(default)s)")
    _add_scale(p)
    p.set_defaults(func=run_annotate)

    p = sub.add_parser("eval", help="evaluate predicted depth against ground truth")
    _add_root(p)
    p.add_argument("--pred", required=True, help="directory of per-sample predictions (<id>.pfm/.npy/.png)")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--samples", nargs="*", help="sample ids (default: all in manifest)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent samples (default %(default)s)")
    _add_scale(p)
    p.set_defaults(func=run_eval)

    p = sub.add_parser("export", help="export a point cloud and occupancy grid from depth")
    p.add_argument("--depth", required=True, help="depth map (.png 16-bit, .pfm, or .npy)")
    p.add_argument("--rgb", help="optional RGB image for per-point colors")
    p.add_argument("--intrinsics", required=True, help="intrinsics record")
    p.add_argument("--out-cloud", required=True, help="PLY output path")
    p.add_argument("--out-grid", help="optional occupancy PGM output path")
    p.add_argument("--stride", type=int, default=1, help="pixel stride (default %(default)s)")
    p.add_argument("--camera-height", type=float, default=1.0, help="camera height above the floor in meters")
    p.add_argument("--resolution", type=float, default=0.05, help="grid resolution in meters (default %(default)s)")
    p.add_argument("--z-min", type=float, default=0.2, help="obstacle band bottom (default %(default)s m)")
    p.add_argument("--z-max", type=float, default=1.8, help="obstacle band top (default %(default)s m)")
    _add_scale(p)
    p.set_defaults(func=run_export)

    p = sub.add_parser("serve", help="run the annotation review service")
    _add_root(p)
    p.add_argument("--host", default="127.0.0.1", help="bind address (default %(default)s)")
    p.add_argument("--port", type=int, default=8601, help="port (default %(default)s)")
    p.add_argument("--ui", help="directory of built UI assets to serve at /")
    p.add_argument("--preview-stride", type=int, default=4, help="decimation stride for preview clouds")
    _add_scale(p)
    p.set_defaults(func=run_serve)

    p = sub.add_parser("report", help="render the text table and figures from an eval report")
    p.add_argument("--report", required=True, help="report.csv produced by eval")
    p.add_argument("--out", required=True, help="output directory for table and figures")
    p.set_defaults(func=run_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
