"""Acceptance suite: one test per acceptance criterion, one verdict line each.

Run `pytest tests/test_acceptance.py -v -s` to watch the verdict lines live.
The synthetic RANSAC study (criteria 1 and 2) uses 200 full-size scenes and
takes a couple of minutes.
"""

import json
import os
import time
from dataclasses import dataclass

import numpy as np
import pytest

from glassdepth import (
    CameraIntrinsics,
    CellState,
    DepthMap,
    GroundTruthDepth,
    PlaneModel,
    RansacConfig,
    backproject,
    compute_metrics,
    fit_plane,
    global_align,
    local_ransac_align,
    ray_plane_depth,
    split_sample,
)
from glassdepth import io as gio
from glassdepth.alignment import AffineParams
from glassdepth.annotation import BehindCamera, ParallelRay
from glassdepth.cli import main
from glassdepth.metrics import EASY_ABS_REL_MAX

from synth import build_glass_scene, clean_region_error, make_scene, write_glass_sample
from test_metrics import metrics_oracle

N_SCENES = 200
STUDY_MASTER_SEED = 20_260_810


def verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


@dataclass(frozen=True)
class StudyRow:
    scale: float
    shift: float
    mean_depth: float
    corrupt_frac: float
    ransac: AffineParams
    global_: AffineParams
    seconds: float
    ransac_clean_err: float
    global_clean_err: float


@pytest.fixture(scope="module")
def ransac_study():
    # Warm the JIT so compile time never pollutes per-scene timing.
    tiny = make_scene(1, width=64, height=48, noise=0.0)
    local_ransac_align(tiny.prior, tiny.raw, RansacConfig(grid_n=2, iterations_per_patch=1))

    frac_rng = np.random.default_rng(STUDY_MASTER_SEED)
    rows = []
    for i in range(N_SCENES):
        frac = float(frac_rng.uniform(0.10, 0.25))
        scene = make_scene(31_000 + i, corrupt_frac=frac)
        t0 = time.perf_counter()
        res = local_ransac_align(scene.prior, scene.raw, RansacConfig())
        seconds = time.perf_counter() - t0
        g = global_align(scene.prior, scene.raw)
        rows.append(
            StudyRow(
                scale=scene.scale,
                shift=scene.shift,
                mean_depth=float(np.mean(scene.scale * scene.prior.values + scene.shift)),
                corrupt_frac=frac,
                ransac=res.params,
                global_=g.params,
                seconds=seconds,
                ransac_clean_err=clean_region_error(scene, res.params),
                global_clean_err=clean_region_error(scene, g.params),
            )
        )
    return rows


def test_criterion_synthetic_ransac_recovery(ransac_study):
    """200 scenes, defaults, fixed seed: s and t within 1% relative on >= 95%,
    under 1 second per scene."""
    rows = ransac_study
    mean_s = float(np.mean([r.seconds for r in rows]))
    max_s = max(r.seconds for r in rows)
    runtime_ok = mean_s < 1.0

    hits = 0
    for r in rows:
        s_ok = abs(r.ransac.scale - r.scale) / abs(r.scale) <= 0.01
        t_ok = abs(r.ransac.shift - r.shift) / abs(r.shift) <= 0.01
        hits += s_ok and t_ok
    rate = hits / len(rows)
    recovery_ok = rate >= 0.95

    detail = (
        f"recovery {rate:.1%} of {len(rows)} scenes within 1% relative (need >= 95%); "
        f"runtime mean {mean_s * 1e3:.0f} ms, max {max_s * 1e3:.0f} ms (need mean < 1 s)"
    )
    verdict("synthetic RANSAC recovery", recovery_ok and runtime_ok, detail)
    assert runtime_ok, detail
    # Known-infeasible at the stated tolerance: the scoring function's own
    # optimum is displaced by the noise/corruption interaction (see the
    # decisions ledger analysis). Kept faithful rather than loosened.
    assert recovery_ok, detail


def test_criterion_outlier_suppression_ordering(ransac_study):
    """Clean-region error: RANSAC <= global on every scene; >= 2x margin on
    scenes with >= 20% corruption."""
    rows = ransac_study
    ordering_ok = all(r.ransac_clean_err <= r.global_clean_err for r in rows)
    heavy = [r for r in rows if r.corrupt_frac >= 0.20]
    ratios = [r.global_clean_err / r.ransac_clean_err for r in heavy]
    margin_ok = all(rho >= 2.0 for rho in ratios)
    detail = (
        f"ordering holds on {sum(r.ransac_clean_err <= r.global_clean_err for r in rows)}"
        f"/{len(rows)} scenes; min heavy-corruption ratio "
        f"{min(ratios):.2f} over {len(heavy)} scenes (need >= 2)"
    )
    verdict("outlier-suppression ordering", ordering_ok and margin_ok, detail)
    assert ordering_ok and margin_ok, detail


def test_diagnostic_recovery_envelope(ransac_study):
    """Not a criterion: documents what the algorithm does achieve on the
    criterion-1 scenes: the recovered transform stays within a few percent
    of the metric depth scale, and noiseless scenes recover exactly."""
    rows = ransac_study
    s_rel = [abs(r.ransac.scale - r.scale) / abs(r.scale) for r in rows]
    t_rel_depth = [abs(r.ransac.shift - r.shift) / r.mean_depth for r in rows]
    detail = (
        f"max |ds|/s {max(s_rel):.3f}, max |dt|/depth {max(t_rel_depth):.3f} "
        f"(biased-score envelope; see ledger)"
    )
    ok = max(s_rel) <= 0.05 and max(t_rel_depth) <= 0.05
    verdict("diagnostic: noisy recovery envelope", ok, detail)
    assert ok, detail

    scene = make_scene(77, corrupt_frac=0.2, noise=0.0)
    res = local_ransac_align(scene.prior, scene.raw, RansacConfig())
    assert abs(res.params.scale - scene.scale) / scene.scale < 1e-6
    assert abs(res.params.shift - scene.shift) < 1e-6
    verdict("diagnostic: noiseless recovery", True, "exact to 1e-6 with 20% corruption")


def test_criterion_plane_fit_exactness():
    """1000 planes: exact points recover (n, d) to 1e-9; 1 mm noise on 20
    points keeps the normal within 0.5 degrees >= 99% of the time."""
    rng = np.random.default_rng(52)

    def random_plane_points(n_points, noise, extent):
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        center = rng.uniform(-3, 3, size=3)
        basis = np.linalg.svd(normal.reshape(1, 3))[2][1:]
        ab = rng.uniform(-extent, extent, size=(n_points, 2))
        pts = center + ab @ basis
        if noise:
            pts = pts + rng.normal(0, noise, size=pts.shape)
        d = -float(normal @ center)
        if d > 0:
            normal, d = -normal, -d
        return pts, normal, d

    worst_exact = 0.0
    for _ in range(1000):
        pts, n_ref, d_ref = random_plane_points(rng.integers(3, 40), 0.0, rng.uniform(0.3, 2.0))
        fit = fit_plane(pts)
        err = min(
            np.linalg.norm(fit.plane.normal - n_ref) + abs(fit.plane.offset - d_ref),
            np.linalg.norm(fit.plane.normal + n_ref) + abs(fit.plane.offset + d_ref),
        )
        worst_exact = max(worst_exact, err)
    exact_ok = worst_exact < 1e-9

    angular_hits = 0
    for _ in range(1000):
        pts, n_ref, _ = random_plane_points(20, 0.001, rng.uniform(0.3, 2.0))
        fit = fit_plane(pts)
        angle = np.degrees(np.arccos(min(1.0, abs(float(fit.plane.normal @ n_ref)))))
        angular_hits += angle < 0.5
    noise_ok = angular_hits >= 990

    detail = f"exact worst error {worst_exact:.2e} (need < 1e-9); {angular_hits}/1000 noisy fits under 0.5 deg (need >= 990)"
    verdict("plane-fit exactness", exact_ok and noise_ok, detail)
    assert exact_ok and noise_ok, detail


def test_criterion_ray_plane_consistency():
    """1000 random (plane, intrinsics, pixel) triples: back-projecting the
    returned depth lands on the plane within 1e-9 m."""
    rng = np.random.default_rng(53)
    worst = 0.0
    done = 0
    while done < 1000:
        k = CameraIntrinsics(
            fx=rng.uniform(200, 800),
            fy=rng.uniform(200, 800),
            cx=rng.uniform(100, 500),
            cy=rng.uniform(100, 400),
        )
        n = rng.normal(size=3)
        n[2] = abs(n[2]) + 0.5
        n /= np.linalg.norm(n)
        z0 = rng.uniform(0.5, 8.0)
        plane = PlaneModel(normal=n, offset=-float(n @ [0, 0, z0]))
        uv = (rng.uniform(0, 2 * k.cx), rng.uniform(0, 2 * k.cy))
        try:
            depth = ray_plane_depth(uv, plane, k)
        except (ParallelRay, BehindCamera):
            continue
        residual = abs(float(plane.signed_distance(backproject(uv, depth, k))))
        worst = max(worst, residual)
        done += 1
    ok = worst < 1e-9
    detail = f"worst |n.P + d| = {worst:.2e} over 1000 triples (need < 1e-9)"
    verdict("ray-plane consistency", ok, detail)
    assert ok, detail


def test_criterion_metrics_oracle_equivalence():
    """compute_metrics matches the per-pixel loop to 1e-12 on 100 random
    pairs with exclusions and invalid predictions; the 0.03 split boundary
    is inclusive on the easy side."""
    rng = np.random.default_rng(54)
    checked = 0
    worst = 0.0
    while checked < 100:
        shape = (16, 16)
        gt_vals = rng.uniform(0.5, 5.0, size=shape)
        pred_vals = gt_vals * rng.uniform(0.7, 1.4, size=shape)
        gt_vals[rng.random(shape) < 0.1] = 0.0
        pred_vals[rng.random(shape) < 0.1] = 0.0
        pred_vals[rng.random(shape) < 0.05] = np.nan
        exclusion = rng.random(shape) < 0.15
        pred, gt = DepthMap(pred_vals), DepthMap(gt_vals)
        try:
            m = compute_metrics(pred, gt, exclusion)
        except Exception:
            continue
        abs_rel, delta1, n, n_inv = metrics_oracle(pred, gt, exclusion)
        assert m.delta1 == delta1 and m.valid_pixel_count == n and m.invalid_pred_count == n_inv
        worst = max(worst, abs(m.abs_rel - abs_rel))
        checked += 1
    oracle_ok = worst < 1e-12

    gt = GroundTruthDepth(depth=DepthMap(np.full((2, 2), 100.0)), evaluation_mask=np.zeros((2, 2), bool))
    at_boundary = split_sample(DepthMap(np.full((2, 2), 103.0)), gt)
    above = split_sample(DepthMap(np.full((2, 2), 103.5)), gt)
    boundary_ok = (
        at_boundary.label == "easy"
        and at_boundary.raw_abs_rel == EASY_ABS_REL_MAX
        and above.label == "hard"
    )
    detail = f"worst abs_rel deviation {worst:.2e} over 100 pairs (need < 1e-12); boundary easy@0.03={at_boundary.label}, hard@0.035={above.label}"
    verdict("metrics oracle equivalence", oracle_ok and boundary_ok, detail)
    assert oracle_ok and boundary_ok, detail


def test_criterion_end_to_end_glass_safety(tmp_path):
    """Full synthetic sample through align -> annotate -> eval -> export:
    aligned glass depth within 2% of the analytic plane, and the occupancy
    grid from aligned depth marks the glass footprint occupied while the
    raw-depth grid does not."""
    scale = 4000.0
    root = tmp_path / "data"
    scene = build_glass_scene(width=160, height=120)
    sample = write_glass_sample(root, "e2e", scene, depth_scale=scale)
    gio.write_manifest(root, ["e2e"])
    prior_path = tmp_path / "prior.pfm"
    gio.save_prior(scene.prior, prior_path)

    aligned_path = tmp_path / "aligned.pfm"
    meta_path = tmp_path / "meta.json"
    assert main([
        "align", "--raw", str(sample.raw_depth_path), "--prior", str(prior_path),
        "--out", str(aligned_path), "--meta", str(meta_path),
        "--depth-scale", str(scale), "--seed", "0",
    ]) == 0

    assert main(["annotate", "--root", str(root), "--depth-scale", str(scale)]) == 0

    pred_dir = tmp_path / "pred"
    pred_dir.mkdir()
    aligned = gio.load_prior(aligned_path)
    gio.save_prior(aligned, pred_dir / "e2e.pfm")
    report_dir = tmp_path / "report"
    assert main([
        "eval", "--root", str(root), "--pred", str(pred_dir),
        "--out", str(report_dir), "--depth-scale", str(scale),
    ]) == 0
    assert (report_dir / "report.csv").is_file()

    glass = scene.labels == 1
    m = compute_metrics(aligned, DepthMap(scene.true_depth), exclusion=~glass)
    glass_ok = m.abs_rel < 0.02

    camera_height = 1.0
    resolution = 0.1
    grids = {}
    for name, depth_path in (("aligned", aligned_path), ("raw", sample.raw_depth_path)):
        grid_path = tmp_path / f"{name}.pgm"
        assert main([
            "export", "--depth", str(depth_path), "--intrinsics", str(sample.intrinsics_path),
            "--out-cloud", str(tmp_path / f"{name}.ply"), "--out-grid", str(grid_path),
            "--camera-height", str(camera_height), "--resolution", str(resolution),
            "--depth-scale", str(scale),
        ]) == 0
        grids[name] = gio.load_occupancy_pgm(grid_path)

    # World-frame footprint of the glass pane from the analytic scene. Only
    # the pane interior is sampled: ground cells at the pane edge are shared
    # with the adjacent wall strips, which legitimately occupy them.
    k = scene.intrinsics
    vs, us = np.nonzero(glass)
    pane_margin_px = 20
    interior = (us >= us.min() + pane_margin_px) & (us <= us.max() - pane_margin_px)
    vs, us = vs[interior], us[interior]
    z = scene.true_depth[vs, us]
    x_cam = (us - k.cx) / k.fx * z
    y_cam = (vs - k.cy) / k.fy * z
    world = np.column_stack([z, -x_cam, camera_height - y_cam])
    in_band = (world[:, 2] >= 0.2) & (world[:, 2] <= 1.8)
    cells = set()
    for x, y in world[in_band, :2][:: max(1, in_band.sum() // 400)]:
        cells.add(grids["aligned"].cell_index(x, y))

    def occupied(grid, ix, iy):
        ny, nx = grid.shape
        gx = ix + int(round((grids["aligned"].origin[0] - grid.origin[0]) / resolution))
        gy = iy + int(round((grids["aligned"].origin[1] - grid.origin[1]) / resolution))
        if 0 <= gx < nx and 0 <= gy < ny:
            return grid.cells[gy, gx] == CellState.OCCUPIED
        return False

    aligned_hits = sum(occupied(grids["aligned"], ix, iy) for ix, iy in cells)
    raw_hits = sum(occupied(grids["raw"], ix, iy) for ix, iy in cells)
    grid_ok = aligned_hits == len(cells) and raw_hits == 0

    detail = (
        f"glass AbsRel {m.abs_rel:.4f} (need < 0.02); glass cells occupied "
        f"{aligned_hits}/{len(cells)} aligned vs {raw_hits} raw (need all vs none)"
    )
    verdict("end-to-end glass safety", glass_ok and grid_ok, detail)
    assert glass_ok and grid_ok, detail


def test_criterion_align_determinism(tmp_path):
    """`align` run twice with the same seed is byte-identical in both the
    aligned depth and the metadata record."""
    scene = make_scene(88, width=320, height=240, corrupt_frac=0.15)
    raw_p, prior_p = tmp_path / "raw.pfm", tmp_path / "prior.pfm"
    gio.save_prior(scene.raw, raw_p)
    gio.save_prior(scene.prior, prior_p)
    outputs = []
    for tag in ("one", "two"):
        out, meta = tmp_path / f"{tag}.pfm", tmp_path / f"{tag}.json"
        assert main([
            "align", "--raw", str(raw_p), "--prior", str(prior_p),
            "--out", str(out), "--meta", str(meta), "--seed", "42",
        ]) == 0
        outputs.append((out.read_bytes(), meta.read_bytes()))
    ok = outputs[0] == outputs[1]
    verdict("align determinism", ok, "two runs byte-identical" if ok else "outputs differ")
    assert ok


GLASSRECON_ROOT_ENV = "GLASSRECON_ROOT"
GLASSRECON_PRIORS_ENV = "GLASSRECON_PRIORS"


def test_criterion_glassrecon_da3_reproduction():
    """Optional, needs external data: reproduce the published DA3 local-
    alignment benchmark row and the local < global ordering per split."""
    root = os.environ.get(GLASSRECON_ROOT_ENV)
    priors = os.environ.get(GLASSRECON_PRIORS_ENV)
    if not root or not priors:
        verdict(
            "published-benchmark reproduction",
            True,
            f"SKIPPED: set {GLASSRECON_ROOT_ENV} and {GLASSRECON_PRIORS_ENV} to run",
        )
        pytest.skip("external dataset and precomputed priors not supplied")

    from pathlib import Path

    from glassdepth import aggregate_report, apply_affine
    from glassdepth.annotation import GroundTruthDepth as GT

    root = Path(root)
    priors = Path(priors)
    results = {"local": [], "global": []}
    for sid in gio.read_manifest(root):
        sample = gio.DatasetSample.in_directory(root, sid)
        raw = gio.load_depth_png16(sample.raw_depth_path, gio.DEFAULT_DEPTH_SCALE)
        gt_depth = gio.load_depth_png16(sample.gt_depth_path, gio.DEFAULT_DEPTH_SCALE)
        excl = (
            gio.load_exclusion_png(sample.exclusion_path)
            if sample.exclusion_path.is_file()
            else np.zeros(gt_depth.shape, bool)
        )
        prior = None
        for ext in (".pfm", ".npy"):
            p = priors / f"{sid}{ext}"
            if p.is_file():
                prior = gio.load_prior(p)
                break
        if prior is None:
            continue
        gt = GT(depth=gt_depth, evaluation_mask=excl)
        label = split_sample(raw, gt)
        for method, runner in (("local", local_ransac_align), ("global", lambda p, r: global_align(p, r))):
            res = runner(prior, raw) if method == "global" else local_ransac_align(prior, raw, RansacConfig())
            aligned = apply_affine(prior, res.params)
            m = compute_metrics(aligned, gt_depth, excl)
            results[method].append((label, m))

    local = aggregate_report(results["local"])
    global_ = aggregate_report(results["global"])
    ok = (
        abs(local.overall.abs_rel - 0.095) <= 0.015
        and abs(local.overall.delta1 - 0.937) <= 0.015
        and abs(local.hard.abs_rel - 0.172) <= 0.025
        and all(
            getattr(local, split).abs_rel < getattr(global_, split).abs_rel
            for split in ("overall", "easy", "hard")
        )
    )
    detail = (
        f"local All ({local.overall.abs_rel:.3f}, {local.overall.delta1:.3f}), "
        f"Hard AbsRel {local.hard.abs_rel:.3f}; global All {global_.overall.abs_rel:.3f}"
    )
    verdict("published-benchmark reproduction", ok, detail)
    assert ok, detail
