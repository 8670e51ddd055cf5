from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from reachgrasp import cli
from reachgrasp.geometry.mesh import TriMesh, box_mesh, merge_meshes
from reachgrasp.metrics import AGGREGATE_COLUMNS
from reachgrasp.optimize.solver import OptimizationAborted
from reachgrasp.scene import Scene, SceneConfig, load_scene, make_object, write_scene

QUICK = ["--stage1-iters", "30", "--stage2-iters", "10", "--rays", "256"]


@pytest.fixture(scope="module")
def table_json(tmp_path_factory):
    d = tmp_path_factory.mktemp("table")
    assert cli.main(["scene-gen", "--kind", "table", "--height", "0.75", "--out", str(d)]) == 0
    return d / "scene.json"


@pytest.fixture(scope="module")
def quick_run(table_json, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["synthesize", str(table_json), "--seed", "3", *QUICK, "--out", str(out)]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ scene-gen

def test_scene_gen_battery(tmp_path):
    assert cli.main(["scene-gen", "--kind", "shelf", "--object", "cylinder", "--out", str(tmp_path)]) == 0
    dirs = sorted(p.name for p in tmp_path.iterdir())
    assert dirs == ["shelf_0.45", "shelf_0.80", "shelf_1.15"]
    scene = load_scene(SceneConfig.from_json(tmp_path / "shelf_0.80" / "scene.json"))
    assert scene.receptacle.is_watertight


# ------------------------------------------------------------------ field

def test_field_ray_count(table_json, tmp_path):
    assert cli.main(["field", str(table_json), "--rays", "64", "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "field.json").read_text())
    assert len(d["rays"]) == 64 and d["n_rays"] == 64
    assert (tmp_path / "field.ply").read_text().startswith("ply")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "field" and len(manifest["content_hash"]) == 64


def test_field_is_byte_identical(table_json, tmp_path):
    for k in ("a", "b"):
        assert cli.main(["field", str(table_json), "--seed", "7", "--out", str(tmp_path / k)]) == 0
    assert (tmp_path / "a" / "field.json").read_bytes() == (tmp_path / "b" / "field.json").read_bytes()
    assert (tmp_path / "a" / "field.ply").read_bytes() == (tmp_path / "b" / "field.ply").read_bytes()


def test_field_open_box_skips_f2(tmp_path):
    assert cli.main(["scene-gen", "--kind", "open_box", "--height", "0.7", "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["field", str(tmp_path / "s" / "scene.json"), "--rays", "512", "--out", str(tmp_path / "f")]) == 0
    d = json.loads((tmp_path / "f" / "field.json").read_text())
    assert d["skip_f2"] is True
    assert d["filter_report"]["skip_f2"] is True


def test_field_enclosed_object_exits_infeasible(tmp_path):
    obj = make_object("box").translated((0.0, 0.0, 1.0))
    shell = box_mesh(np.array([-0.3, -0.3, 0.7]), np.array([0.3, 0.3, 1.3]))
    inner = box_mesh(np.array([-0.25, -0.25, 0.75]), np.array([0.25, 0.25, 1.25]))
    # hollow closed box: outer shell plus an inward-facing inner shell
    hollow = merge_meshes([shell, TriMesh(inner.vertices, inner.triangles[:, ::-1].copy())])
    write_scene(tmp_path / "s", Scene(obj, hollow))
    code = cli.main(["field", str(tmp_path / "s" / "scene.json"), "--rays", "128", "--out", str(tmp_path / "f")])
    assert code == cli.EXIT_INFEASIBLE
    report = json.loads((tmp_path / "f" / "report.json").read_text())
    assert "filter_report" in report
    assert not (tmp_path / "f" / "field.json").exists()


def test_missing_scene_is_io_error(tmp_path):
    assert cli.main(["field", str(tmp_path / "nope.json"), "--out", str(tmp_path / "f")]) == cli.EXIT_IO


# ------------------------------------------------------------------ synthesize

def test_synthesize_smoke(quick_run):
    for name in ("manifest.json", "field.json", "field.ply", "body.obj", "body.json", "hand.json", "hand.obj",
                 "trace.csv", "metrics.json", "timings.json"):
        assert (quick_run / name).exists(), name
    m = json.loads((quick_run / "metrics.json").read_text())
    for k in ("contact_ratio", "penetration_percentage_body_receptacle", "penetration_percentage_hand_object",
              "penetration_volume", "penetration_depth", "wrist_error", "condition_errors"):
        assert k in m
    assert set(m["condition_errors"]) == {"arm_angle", "palm_angle", "wrist_mse"}
    assert len(read_csv(quick_run / "trace.csv")) == 40
    manifest = json.loads((quick_run / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["settings"]["optimizer"]["stage1_iters"] == 30


def test_synthesize_config_file(table_json, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 5, "hand": "left", "rays": 256, "weights": {"gaze": 0.25},
                               "optimizer": {"stage1_iters": 10, "stage2_iters": 5}}))
    out = tmp_path / "out"
    assert cli.main(["synthesize", str(table_json), "--config", str(cfg), "--stage2-iters", "3",
                     "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["settings"]["hand"] == "left"
    assert manifest["settings"]["weights"]["gaze"] == 0.25
    assert manifest["settings"]["optimizer"]["stage2_iters"] == 3
    assert json.loads((out / "hand.json").read_text())["handedness"] == "left"


def test_synthesize_multiple_samples(table_json, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["synthesize", str(table_json), "--samples", "2", *QUICK, "--out", str(out)]) == 0
    assert (out / "sample_00" / "metrics.json").exists() and (out / "sample_01" / "metrics.json").exists()
    div = json.loads((out / "diversity.json").read_text())
    assert div["samples"] == 2 and div["pose_diversity_cm"] >= 0.0


def test_synthesize_abort_exit_code(table_json, tmp_path, monkeypatch):
    def boom(*args, **kw):
        raise OptimizationAborted(12, "gaze", 1)

    monkeypatch.setattr(cli, "synthesize", boom)
    out = tmp_path / "out"
    assert cli.main(["synthesize", str(table_json), "--out", str(out)]) == cli.EXIT_ABORT
    rep = json.loads((out / "report.json").read_text())
    assert (rep["iteration"], rep["term"], rep["stage"]) == (12, "gaze", 1)
    assert (out / "manifest.json").exists()


def test_synthesize_bad_config_is_io_error(table_json, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("[1, 2]")
    assert cli.main(["synthesize", str(table_json), "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_IO


# ------------------------------------------------------------------ eval

def write_metrics(d, **values):
    d.mkdir(parents=True, exist_ok=True)
    m = {"contact_ratio": 0.1, "penetration_percentage_body_receptacle": 0.0,
         "penetration_percentage_hand_object": 0.0, "penetration_volume": 0.0, "penetration_depth": 0.0,
         "depth_saturated": False, "wrist_error": 0.0,
         "condition_errors": {"arm_angle": 0.0, "palm_angle": 0.0, "wrist_mse": 0.0}, "pose_diversity": None}
    m.update(values)
    (d / "metrics.json").write_text(json.dumps(m))


def test_eval_single_run(quick_run, tmp_path):
    out = tmp_path / "agg.csv"
    assert cli.main(["eval", str(quick_run), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [r["run"] for r in rows] == [str(quick_run), "mean"]
    m = json.loads((quick_run / "metrics.json").read_text())
    for k in ("contact_ratio", "wrist_error", "penetration_depth"):
        assert float(rows[0][k]) == m[k] == float(rows[1][k])
    assert float(rows[1]["arm_angle"]) == m["condition_errors"]["arm_angle"]


def test_eval_two_identical_runs(quick_run, tmp_path):
    out = tmp_path / "agg.csv"
    assert cli.main(["eval", str(quick_run), str(quick_run), "--out", str(out)]) == 0
    rows = read_csv(out)
    for c in AGGREGATE_COLUMNS:
        assert rows[2][c] == rows[0][c], c


def test_eval_hand_computed_means(tmp_path):
    vals = [(0.1, 0.4, 2.0), (0.3, 0.2, 0.0), (0.2, 0.9, 1.0)]
    runs = []
    for i, (c, w, a) in enumerate(vals):
        write_metrics(tmp_path / f"r{i}", contact_ratio=c, wrist_error=w,
                      condition_errors={"arm_angle": a, "palm_angle": 0.0, "wrist_mse": w * w})
        runs.append(str(tmp_path / f"r{i}"))
    out = tmp_path / "agg.csv"
    assert cli.main(["eval", *runs, "--out", str(out)]) == 0
    mean = read_csv(out)[-1]
    assert float(mean["contact_ratio"]) == pytest.approx(0.2)
    assert float(mean["wrist_error"]) == pytest.approx(0.5)
    assert float(mean["arm_angle"]) == pytest.approx(1.0)
    assert float(mean["wrist_mse"]) == pytest.approx((0.16 + 0.04 + 0.81) / 3)
    assert mean["pose_diversity"] == ""


def test_eval_skips_malformed(tmp_path):
    write_metrics(tmp_path / "good", wrist_error=0.7)
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "metrics.json").write_text(json.dumps({"contact_ratio": 0.5}))
    out = tmp_path / "agg.csv"
    assert cli.main(["eval", str(tmp_path / "good"), str(tmp_path / "bad"), "--out", str(out)]) == 0
    assert len(read_csv(out)) == 2
    assert cli.main(["eval", str(tmp_path / "bad"), "--out", str(out)]) == cli.EXIT_IO
