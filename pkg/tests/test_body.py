from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from reachgrasp.body.kinematics import (
    BodyPose,
    arm_direction,
    detect_handedness,
    forward_kinematics,
    mirror_pose,
    rest_pose,
)
from reachgrasp.body.reach import GROUND_SINK, UnreachableTarget, reach_errors, reach_solve, shoulder_height
from reachgrasp.body.skeleton import MIRROR, N_JOINTS
from reachgrasp.geometry.mesh import reflect_points, reflection_matrix
from reachgrasp.geometry.rotation import angle_between

Y_PLANE = (np.zeros(3), np.array([0.0, 1.0, 0.0]))


def random_pose(rng, scale=0.6, beta=1.0) -> BodyPose:
    return BodyPose(rng.normal(scale=0.5, size=3), rng.normal(scale=scale, size=3),
                    rng.normal(scale=scale, size=(N_JOINTS - 1, 3)), beta)


def mirror_world(p):
    return reflect_points(p, *Y_PLANE)


# ------------------------------------------------------------------ forward kinematics

def test_rest_pose_accumulates_offsets(skel):
    st_ = forward_kinematics(skel, rest_pose())
    for j in range(1, N_JOINTS):
        np.testing.assert_allclose(st_.positions[j], st_.positions[skel.parents[j]] + skel.offsets[j], atol=1e-15)
    np.testing.assert_array_equal(st_.positions[0], 0.0)


def test_root_translation_is_rigid(skel, rng):
    pose = random_pose(rng)
    a = forward_kinematics(skel, pose)
    b = forward_kinematics(skel, pose.translated([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(b.positions - a.positions, np.tile([1.0, 0, 0], (N_JOINTS, 1)), atol=1e-12)
    np.testing.assert_allclose(b.surface - a.surface, np.tile([1.0, 0, 0], (len(a.surface), 1)), atol=1e-12)


@pytest.mark.parametrize("beta", [0.8, 1.0, 1.15])
def test_fk_matches_matrix_chain(skel, rng, beta):
    for _ in range(20):
        pose = random_pose(rng, beta=beta)
        st_ = forward_kinematics(skel, pose)
        pos, rot = oracles.chain_fk(skel.offsets, skel.parents, pose.local_rotvecs, pose.root_translation, beta)
        np.testing.assert_allclose(st_.positions, pos, atol=1e-9)
        np.testing.assert_allclose(st_.rotations, rot, atol=1e-9)


def test_arm_direction_at_rest(skel):
    np.testing.assert_allclose(arm_direction(skel, rest_pose(), "right"), [0, -1, 0], atol=1e-12)
    np.testing.assert_allclose(arm_direction(skel, rest_pose(), "left"), [0, 1, 0], atol=1e-12)


def test_arm_direction_matches_chain(skel, rng):
    for _ in range(20):
        pose = random_pose(rng)
        pos, _ = oracles.chain_fk(skel.offsets, skel.parents, pose.local_rotvecs, pose.root_translation)
        _, e, w = skel.arm_joints("left")
        want = (pos[w] - pos[e]) / np.linalg.norm(pos[w] - pos[e])
        np.testing.assert_allclose(arm_direction(skel, pose, "left"), want, atol=1e-9)


def test_arm_direction_mirrors(skel, rng):
    pose = random_pose(rng)
    m = mirror_pose(pose, *Y_PLANE)
    M = reflection_matrix(Y_PLANE[1])
    np.testing.assert_allclose(arm_direction(skel, m, "left"), M @ arm_direction(skel, pose, "right"), atol=1e-9)


# ------------------------------------------------------------------ mirroring

def test_mirror_involution(skel, rng):
    pose = random_pose(rng)
    back = mirror_pose(mirror_pose(pose, *Y_PLANE), *Y_PLANE)
    np.testing.assert_allclose(forward_kinematics(skel, back).positions,
                               forward_kinematics(skel, pose).positions, atol=1e-12)
    np.testing.assert_allclose(back.joint_rotations, pose.joint_rotations, atol=1e-12)


def test_rest_pose_is_symmetric(skel):
    m = mirror_pose(rest_pose(), *Y_PLANE)
    np.testing.assert_allclose(m.joint_rotations, 0.0, atol=1e-15)
    np.testing.assert_allclose(m.root_orientation, 0.0, atol=1e-15)


@pytest.mark.parametrize("plane_normal", [(0, 1, 0), (1, 0, 0), (0.6, 0.8, 0)])
def test_mirror_reflects_surface(skel, rng, plane_normal):
    n = np.array(plane_normal, float)
    p = np.array([0.3, -0.2, 0.0])
    pose = random_pose(rng)
    a = forward_kinematics(skel, pose)
    b = forward_kinematics(skel, mirror_pose(pose, p, n))
    perm = skel.surface.mirror
    np.testing.assert_allclose(b.surface[perm], reflect_points(a.surface, p, n), atol=1e-9)
    np.testing.assert_allclose(b.positions[skel.mirror_joint], reflect_points(a.positions, p, n), atol=1e-9)


def test_surface_layout_is_symmetric(skel):
    s = skel.surface
    np.testing.assert_allclose(s.local[s.mirror], s.local @ MIRROR, atol=1e-15)
    np.testing.assert_array_equal(s.joint[s.mirror], skel.mirror_joint[s.joint])
    np.testing.assert_array_equal(s.mirror[s.mirror], np.arange(len(s.mirror)))


# ------------------------------------------------------------------ handedness

def _gaze_oracle(st_):
    g = st_.landmark("nose_tip") - st_.landmark("head_back")
    gl = st_.landmark("glabella")
    ang = {}
    for side in ("right", "left"):
        w = st_.positions[st_.skeleton.arm_joints(side)[2]] - gl
        ang[side] = np.arccos(np.clip(g @ w / np.linalg.norm(g) / np.linalg.norm(w), -1, 1))
    return "right" if ang["right"] <= ang["left"] else "left"


def test_handedness_reaching_pose(skel):
    pose = reach_solve(skel, [0.6, -0.15, 1.2], [1.0, 0.0, 0.0], "right")
    assert detect_handedness(skel, pose) == "right"
    assert detect_handedness(skel, mirror_pose(pose, *Y_PLANE)) == "left"


def test_handedness_matches_angle_oracle(skel, rng):
    for _ in range(100):
        pose = random_pose(rng, scale=0.8)
        assert detect_handedness(skel, pose) == _gaze_oracle(forward_kinematics(skel, pose))


# ------------------------------------------------------------------ reaching

def test_reach_at_shoulder_height(skel):
    z = shoulder_height(skel, 0.0, "right")
    target = np.array([0.55, 0.0, z])
    pose, rep = reach_solve(skel, target, [1.0, 0.0, 0.0], "right", return_report=True)
    werr, aerr = reach_errors(skel, pose, target, [1.0, 0.0, 0.0], "right")
    assert werr <= 5e-3
    assert aerr <= np.deg2rad(1.0)
    st_ = forward_kinematics(skel, pose)
    s, e, w = skel.arm_joints("right")
    upper = st_.positions[e] - st_.positions[s]
    fore = st_.positions[w] - st_.positions[e]
    assert angle_between(upper, fore) < np.deg2rad(35.0)
    assert rep.posture < 0.2
    assert st_.surface[:, 2].min() == pytest.approx(-GROUND_SINK, abs=1e-9)


def test_reach_mirror_symmetry(skel):
    target = np.array([0.5, -0.3, 0.9])
    d = np.array([0.8, -0.2, -0.3])
    d /= np.linalg.norm(d)
    right = reach_solve(skel, target, d, "right", gaze_target=target + [0.1, 0, 0])
    M = reflection_matrix([0, 1, 0])
    left = reach_solve(skel, M @ target, M @ d, "left", gaze_target=M @ (target + [0.1, 0, 0]))
    want = mirror_pose(right, *Y_PLANE)
    np.testing.assert_allclose(forward_kinematics(skel, left).surface, forward_kinematics(skel, want).surface,
                               atol=1e-6)


def test_reach_deterministic(skel):
    a = reach_solve(skel, [0.4, 0.2, 1.0], [0.6, 0.0, -0.8], "left")
    b = reach_solve(skel, [0.4, 0.2, 1.0], [0.6, 0.0, -0.8], "left")
    np.testing.assert_array_equal(a.joint_rotations, b.joint_rotations)
    np.testing.assert_array_equal(a.root_translation, b.root_translation)


@pytest.mark.parametrize("target", [[0.5, 0.0, 2.6], [0.5, 0.0, -0.1]])
def test_reach_outside_envelope(skel, target):
    with pytest.raises(UnreachableTarget) as exc:
        reach_solve(skel, target, [1.0, 0.0, 0.0], "right")
    assert "target" in exc.value.report


@given(seed=st.integers(0, 2**31), hand=st.sampled_from(["right", "left"]))
def test_reach_postconditions(skel, seed, hand):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    target = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 2.0)])
    try:
        pose = reach_solve(skel, target, d, hand)
    except UnreachableTarget:
        return
    werr, aerr = reach_errors(skel, pose, target, d, hand)
    assert werr <= 5e-3 and aerr <= np.deg2rad(1.0)
    st_ = forward_kinematics(skel, pose)
    assert st_.surface[:, 2].min() == pytest.approx(-GROUND_SINK, abs=1e-9)
    standing = np.linalg.norm((target - pose.root_translation)[:2])
    assert 0.2 - 1e-9 <= standing <= 1.2 + 1e-9
