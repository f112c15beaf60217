import numpy as np
import pytest
from fastapi.testclient import TestClient

from glassdepth import io as gio
from glassdepth.cli import main
from glassdepth.service import create_app

from synth import build_glass_scene, write_glass_sample

SCALE = 4000.0


@pytest.fixture()
def root(tmp_path):
    scene = build_glass_scene(width=96, height=72)
    # A known invalid-depth hole for click validation tests.
    raw = scene.raw_depth.copy()
    raw[5, 5] = 0.0
    object.__setattr__(scene, "raw_depth", raw)
    write_glass_sample(tmp_path, "fixture", scene, depth_scale=SCALE, with_clicks=False)
    gio.write_manifest(tmp_path, ["fixture"])
    return tmp_path, scene


@pytest.fixture()
def client(root):
    path, scene = root
    app = create_app(path, depth_scale=SCALE, preview_stride=3)
    return TestClient(app), path, scene


def expected_plane_of_clicks(path, scene, clicks):
    """Cross-product plane through the quantized stored click depths."""
    sample = gio.DatasetSample.in_directory(path, "fixture")
    raw = gio.load_depth_png16(sample.raw_depth_path, SCALE)
    k = scene.intrinsics
    pts = []
    for u, v in clicks:
        z = raw.values[int(round(v)), int(round(u))]
        pts.append(z * np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0]))
    n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    n = n / np.linalg.norm(n)
    d = -float(n @ pts[0])
    if d > 0:
        n, d = -n, -d
    return n, d


def test_health(client):
    c, _, _ = client
    assert c.get("/api/health").json() == {"status": "ok"}


def test_list_and_detail(client):
    c, _, scene = client
    listing = c.get("/api/samples").json()
    assert listing == [
        {
            "sample_id": "fixture",
            "review_status": "pending",
            "instance_count": 1,
            "annotated_count": 0,
        }
    ]
    detail = c.get("/api/samples/fixture").json()
    assert detail["width"] == scene.width
    assert detail["mask_instance_ids"] == [1]
    assert detail["instances"] == []


def test_unknown_sample_404(client):
    c, _, _ = client
    assert c.get("/api/samples/nope").status_code == 404
    assert c.get("/api/samples/nope/rgb.png").status_code == 404


def test_image_assets(client):
    c, _, _ = client
    for endpoint in ("rgb.png", "depth.png", "overlay.png"):
        r = c.get(f"/api/samples/fixture/{endpoint}")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"


def test_fit_matches_analytic_plane(client):
    c, path, scene = client
    clicks = list(scene.clicks[:3])
    r = c.post("/api/samples/fixture/fit", json={"points": clicks})
    assert r.status_code == 200
    body = r.json()
    n_ref, d_ref = expected_plane_of_clicks(path, scene, clicks)
    assert np.allclose(body["plane"]["normal"], n_ref, atol=1e-6)
    assert body["plane"]["offset"] == pytest.approx(d_ref, abs=1e-6)
    assert body["rms"] == pytest.approx(0.0, abs=1e-6)
    assert body["matched_mask_id"] == 1
    assert 0 < body["overlap_ratio"] <= 1
    assert body["instance_pixels"] > 0

    # Write-ahead persistence: the annotation record is already on disk.
    sample = gio.DatasetSample.in_directory(path, "fixture")
    ann = gio.load_annotation(sample.annotation_path)
    assert len(ann.instances) == 1
    assert ann.instances[0].matched_mask_id == 1
    assert ann.review_status == "pending"

    for url in (body["preview"]["depth_url"], body["preview"]["error_url"]):
        img = c.get(url)
        assert img.status_code == 200
        assert img.content[:8] == b"\x89PNG\r\n\x1a\n"


def test_fit_idempotent(client):
    c, _, scene = client
    clicks = list(scene.clicks[:3])
    a = c.post("/api/samples/fixture/fit", json={"points": clicks}).json()
    b = c.post("/api/samples/fixture/fit", json={"points": clicks}).json()
    assert a == b


def test_fit_too_few_points_422(client):
    c, _, _ = client
    r = c.post("/api/samples/fixture/fit", json={"points": [[1, 1], [2, 2]]})
    assert r.status_code == 422
    assert "insufficient" in r.json()["detail"]["reason"]


def test_fit_invalid_depth_click_reports_index(client):
    c, _, scene = client
    clicks = [[5, 5], list(scene.clicks[0]), list(scene.clicks[1])]
    r = c.post("/api/samples/fixture/fit", json={"points": clicks})
    assert r.status_code == 422
    detail = r.json()["detail"]
    assert detail["reason"] == "bad points"
    assert detail["points"] == [{"index": 0, "reason": "invalid sensor depth"}]


def test_fit_out_of_bounds_click(client):
    c, _, scene = client
    r = c.post(
        "/api/samples/fixture/fit",
        json={"points": [[-5, 2], list(scene.clicks[0]), list(scene.clicks[1])]},
    )
    assert r.status_code == 422
    assert r.json()["detail"]["points"][0]["reason"] == "outside image bounds"


def test_fit_collinear_clicks_422(client):
    c, _, _ = client
    r = c.post("/api/samples/fixture/fit", json={"points": [[2, 2], [4, 2], [6, 2]]})
    assert r.status_code == 422
    assert r.json()["detail"]["reason"] == "degenerate clicks"


def test_accept_persists_across_restart(client):
    c, path, scene = client
    c.post("/api/samples/fixture/fit", json={"points": list(scene.clicks[:3])})
    r = c.post("/api/samples/fixture/review", json={"status": "accepted"})
    assert r.status_code == 200

    fresh = TestClient(create_app(path, depth_scale=SCALE))
    listing = fresh.get("/api/samples").json()
    assert listing[0]["review_status"] == "accepted"
    assert listing[0]["annotated_count"] == 1


def test_reject_persists(client):
    c, path, _ = client
    c.post("/api/samples/fixture/review", json={"status": "rejected"})
    ann = gio.load_annotation(gio.DatasetSample.in_directory(path, "fixture").annotation_path)
    assert ann.review_status == "rejected"


def test_accepted_annotation_feeds_batch_annotate(client, tmp_path):
    c, path, scene = client
    c.post("/api/samples/fixture/fit", json={"points": list(scene.clicks)})
    c.post("/api/samples/fixture/review", json={"status": "accepted"})
    # The persisted record is exactly what the batch pipeline consumes.
    assert main(["annotate", "--root", str(path), "--depth-scale", str(SCALE)]) == 0
    sample = gio.DatasetSample.in_directory(path, "fixture")
    gt = gio.load_depth_png16(sample.gt_depth_path, SCALE)
    glass = scene.labels == 1
    assert np.allclose(gt.values[glass], scene.true_depth[glass], atol=2e-3)
    # Byte-stability of the record under a load/save cycle.
    data = sample.annotation_path.read_bytes()
    gio.save_annotation(gio.load_annotation(sample.annotation_path), sample.annotation_path)
    assert sample.annotation_path.read_bytes() == data


def test_preview_cloud_parses(client, tmp_path):
    c, _, scene = client
    c.post("/api/samples/fixture/fit", json={"points": list(scene.clicks[:3])})
    r = c.get("/api/samples/fixture/cloud.ply")
    assert r.status_code == 200
    ply = tmp_path / "preview.ply"
    ply.write_bytes(r.content)
    cloud = gio.load_cloud_ply(ply)
    assert len(cloud) > 0
    assert cloud.colors is not None


def test_preview_before_fit_404(client):
    c, _, _ = client
    assert c.get("/api/samples/fixture/preview/1/depth.png").status_code == 404


def test_review_requires_valid_status(client):
    c, _, _ = client
    assert c.post("/api/samples/fixture/review", json={"status": "maybe"}).status_code == 422


def test_fit_no_overlap_422(client):
    c, _, scene = client
    # A small hull on the left wall strip, far from the pane.
    r = c.post("/api/samples/fixture/fit", json={"points": [[2, 2], [10, 2], [6, 10]]})
    assert r.status_code == 422
    assert r.json()["detail"]["reason"] == "no mask overlap"
