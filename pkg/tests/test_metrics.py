from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

import oracles
from reachgrasp.geometry.distance import signed_distances
from reachgrasp.geometry.mesh import box_mesh
from reachgrasp.metrics import (
    AGGREGATE_COLUMNS,
    AlignedSample,
    ConditionPair,
    MetricsReport,
    aggregate_rows,
    condition_accuracy,
    contact_ratio,
    penetration_depth,
    penetration_percentage,
    penetration_volume,
    pose_diversity,
    write_aggregate_csv,
)

SLAB = box_mesh(np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 0.0]))  # half-space z < 0 near the origin
UP = np.array([0.0, 0.0, 1.0])


def patch_grid(z) -> np.ndarray:
    u, v = np.meshgrid(np.linspace(-0.04, 0.04, 9), np.linspace(-0.05, 0.05, 11), indexing="ij")
    pts = np.column_stack([u.ravel(), v.ravel(), np.zeros(99)])
    pts[:, 2] = z
    return pts


def make_report(**kw) -> MetricsReport:
    base = dict(contact_ratio=0.2, penetration_percentage_body_receptacle=0.5,
                penetration_percentage_hand_object=1.0, penetration_volume=12.0, penetration_depth=0.4,
                depth_saturated=False, wrist_error=0.3,
                condition_errors={"arm_angle": 1.0, "palm_angle": 0.0, "wrist_mse": 0.09})
    base.update(kw)
    return MetricsReport(**base)


# ------------------------------------------------------------------ contact

def test_contact_far_and_on_surface():
    assert contact_ratio(patch_grid(0.01), SLAB) == 0.0
    assert contact_ratio(patch_grid(0.0), SLAB) == 1.0


def test_contact_nine_of_ninety_nine():
    z = np.full(99, 0.004)
    z[[0, 5, 17, 33, 40, 61, 77, 90, 98]] = np.linspace(0.0, 0.0009, 9)
    pts = patch_grid(z)
    want = np.mean([oracles.closest(SLAB.corners, p)[0] <= 1e-3 for p in pts])
    assert want == pytest.approx(9 / 99)
    assert contact_ratio(pts, SLAB) == pytest.approx(9 / 99, abs=1e-15)


# ------------------------------------------------------------------ penetration percentage

def cube_shell(n: int, rng) -> np.ndarray:
    """Points 1 cm outside the faces of the unit cube centred at the origin."""
    d = rng.normal(size=(n, 3))
    axis = np.abs(d).argmax(axis=1)
    p = rng.uniform(-0.4, 0.4, size=(n, 3))
    p[np.arange(n), axis] = np.sign(d[np.arange(n), axis]) * 0.51
    return p


def test_penetration_percentage_examples(unit_cube, rng):
    pts = cube_shell(1000, rng)
    assert penetration_percentage(pts, unit_cube) == 0.0
    moved = pts.copy()
    idx = np.arange(5)
    axis = np.abs(moved[idx]).argmax(axis=1)
    moved[idx, axis] = np.sign(moved[idx, axis]) * 0.498  # 2 mm inside
    assert penetration_percentage(moved, unit_cube) == pytest.approx(0.5, abs=1e-12)
    shallow = pts.copy()
    axis = np.abs(shallow).argmax(axis=1)
    shallow[np.arange(1000), axis] = np.sign(shallow[np.arange(1000), axis]) * 0.4995
    assert penetration_percentage(shallow, unit_cube) == 0.0


def test_metrics_rigid_invariance(unit_cube, rng):
    pts = np.vstack([cube_shell(200, rng), rng.uniform(-0.6, 0.6, size=(100, 3))])
    R = Rotation.from_rotvec([0.3, -0.8, 1.4]).as_matrix()
    t = np.array([0.4, -1.0, 2.0])
    moved_cube = unit_cube.transformed(R, t)
    moved = pts @ R.T + t
    assert penetration_percentage(moved, moved_cube) == penetration_percentage(pts, unit_cube)
    assert contact_ratio(moved, moved_cube, threshold=0.02) == contact_ratio(pts, unit_cube, threshold=0.02)
    inner = pts[signed_distances(unit_cube, pts) < 0][:5]
    d = np.array([0.0, 0.0, 1.0])
    a = penetration_depth(inner, unit_cube, d)
    b = penetration_depth(inner @ R.T + t, moved_cube, R @ d)
    assert b.depth_mm == pytest.approx(a.depth_mm, abs=2e-2)


# ------------------------------------------------------------------ depth

def test_depth_zero_without_penetration():
    res = penetration_depth(patch_grid(0.002), SLAB, UP)
    assert res.depth_mm == 0.0 and not res.saturated


def test_depth_half_space():
    p = np.array([[0.1, -0.2, -0.005]])
    res = penetration_depth(p, SLAB, UP)
    assert res.depth_mm == pytest.approx(5.0, abs=0.01)
    t = res.depth_mm * 1e-3
    assert signed_distances(SLAB, p + t * UP).min() >= -1e-6
    assert signed_distances(SLAB, p + (t - 1e-4) * UP).min() < -1e-6


def test_depth_saturates():
    res = penetration_depth(np.array([[0.0, 0.0, -0.5]]), SLAB, UP)
    assert res.saturated and res.depth_mm == pytest.approx(200.0)


# ------------------------------------------------------------------ volume

def test_volume_and_percentage_agree_on_emptiness(unit_cube, rng):
    hand = box_mesh(np.array([0.45, -0.05, -0.05]), np.array([0.55, 0.05, 0.05]))
    inside = rng.uniform([0.45, -0.05, -0.05], [0.55, 0.05, 0.05], size=(500, 3))
    assert penetration_volume(hand, unit_cube) > 0
    assert penetration_percentage(inside, unit_cube) > 0
    apart = hand.translated([0.1, 0.0, 0.0])
    assert penetration_volume(apart, unit_cube) == 0.0
    assert penetration_percentage(inside + [0.1, 0.0, 0.0], unit_cube) == 0.0


# ------------------------------------------------------------------ diversity

def test_diversity_identical_and_rigid(rng):
    pts = rng.normal(size=(50, 3))
    a = AlignedSample(pts, pts[0], np.eye(3))
    assert pose_diversity([a, a]) == 0.0
    R = Rotation.from_rotvec([1.0, 0.2, -0.4]).as_matrix()
    t = np.array([3.0, 1.0, -2.0])
    b = AlignedSample(pts @ R.T + t, R @ pts[0] + t, R)
    assert pose_diversity([a, b]) == pytest.approx(0.0, abs=1e-12)


def test_diversity_known_pairs(rng):
    pts = rng.normal(size=(20, 3))
    x = np.array([1.0, 0.0, 0.0])
    samples = [AlignedSample(pts + s * x, np.zeros(3), np.eye(3)) for s in (0.0, 0.01, 0.03)]
    # pairwise 1, 2 and 3 cm
    assert pose_diversity(samples) == pytest.approx(2.0, abs=1e-12)


def test_diversity_errors():
    s = AlignedSample(np.zeros((3, 3)), np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        pose_diversity([s])
    with pytest.raises(ValueError):
        pose_diversity([s, AlignedSample(np.zeros((4, 3)), np.zeros(3), np.eye(3))])


# ------------------------------------------------------------------ condition accuracy

def pair(arm_got, palm_got, wrist_got):
    return ConditionPair(np.array([1.0, 0, 0]), np.asarray(arm_got, float), np.array([0, 0, 1.0]),
                         np.asarray(palm_got, float), np.zeros(3), np.asarray(wrist_got, float))


def test_condition_accuracy_examples():
    assert condition_accuracy([pair([1, 0, 0], [0, 0, 1], [0, 0, 0])]) == \
        {"arm_angle": 0.0, "palm_angle": 0.0, "wrist_mse": 0.0}
    assert condition_accuracy([pair([0, 1, 0], [0, 0, 1], [0, 0, 0])])["arm_angle"] == pytest.approx(90.0)
    pairs = [pair([1, 1, 0], [0, 1, 1], [0.01, 0, 0]), pair([0, 0, 1], [0, 0, -1], [0, 0.03, 0.04]),
             pair([1, 0, 0], [1, 0, 0], [0, 0, 0])]
    got = condition_accuracy(pairs)
    assert got["arm_angle"] == pytest.approx((45.0 + 90.0 + 0.0) / 3)
    assert got["palm_angle"] == pytest.approx((45.0 + 180.0 + 90.0) / 3)
    assert got["wrist_mse"] == pytest.approx((1.0 + 25.0 + 0.0) / 3)
    with pytest.raises(ValueError):
        condition_accuracy([])


# ------------------------------------------------------------------ report

def test_report_validation():
    with pytest.raises(ValueError):
        make_report(contact_ratio=1.5)
    with pytest.raises(ValueError):
        make_report(penetration_volume=-1.0)
    with pytest.raises(ValueError):
        make_report(wrist_error=math.inf)


def test_report_roundtrip(tmp_path):
    r = make_report(pose_diversity=3.5, runtime=7.0)
    r.write_json(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert "runtime" not in d
    back = MetricsReport.from_dict(d)
    assert back.to_dict() == r.to_dict()
    del d["contact_ratio"]
    with pytest.raises(ValueError):
        MetricsReport.from_dict(d)


def test_aggregate_mean_row(tmp_path):
    rows = aggregate_rows([("a", make_report(wrist_error=0.1)), ("b", make_report(wrist_error=0.5, runtime=4.0))])
    assert [r["run"] for r in rows] == ["a", "b", "mean"]
    assert rows[-1]["wrist_error"] == pytest.approx(0.3)
    assert rows[-1]["runtime"] == 4.0
    assert rows[-1]["pose_diversity"] is None
    write_aggregate_csv(tmp_path / "agg.csv", rows)
    lines = (tmp_path / "agg.csv").read_text().splitlines()
    assert lines[0].split(",") == ["run", *AGGREGATE_COLUMNS]
    assert len(lines) == 4
