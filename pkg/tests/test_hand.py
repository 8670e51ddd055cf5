from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import random_unit
from reachgrasp.geometry.distance import signed_distances
from reachgrasp.geometry.mesh import TriMesh, icosphere, mirror_mesh, reflection_matrix
from reachgrasp.geometry.rotation import angle_between, rotvec_to_matrix
from reachgrasp.hand import (
    CLEARANCE,
    GraspDirection,
    GuidingHand,
    guiding_hand_mesh,
    left_hand_via_mirror,
    palm_direction,
    sagittal_plane,
    synthesize_guiding_hand,
    write_hand_json,
)
from reachgrasp.scene import Scene, make_object

EMPTY = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def scene_of(obj):
    return Scene(obj, EMPTY)


def assert_hands_close(a: GuidingHand, b: GuidingHand, atol: float):
    for name in ("d_grasp", "wrist_position", "palm_frame", "palm_patch", "palm_out", "wrist_markers",
                 "fingertip_targets", "interaction_vectors"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=atol, err_msg=name)


@pytest.fixture(scope="module")
def l_scene():
    return scene_of(make_object("l_shape").translated((0.2, 0.1, 0.8)))


@pytest.mark.parametrize("radius", [1.0, 0.04])
def test_sphere_grasp_geometry(radius):
    s = scene_of(icosphere(radius, 3))
    h = synthesize_guiding_hand(s, GraspDirection([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(h.wrist_position - s.centroid, [radius + CLEARANCE, 0, 0], atol=1e-12)
    palmar = (h.palm_out[0] - h.palm_out[1]) / np.linalg.norm(h.palm_out[0] - h.palm_out[1])
    np.testing.assert_allclose(palmar, [-1.0, 0, 0], atol=1e-12)
    assert h.push_out == 0.0


def test_patch_never_inside(l_scene, rng):
    for d in random_unit(rng, 20):
        h = synthesize_guiding_hand(l_scene, GraspDirection(d))
        assert signed_distances(l_scene.object, h.palm_patch).min() >= 0.0


def test_interaction_vectors_match_oracle(l_scene):
    h = synthesize_guiding_hand(l_scene, GraspDirection([0.3, -0.8, 0.4]))
    corners = l_scene.object.corners
    for p, f in zip(h.palm_patch, h.interaction_vectors):
        d, q = oracles.closest(corners, p)
        assert np.linalg.norm(f) == pytest.approx(d, abs=1e-9)
        np.testing.assert_allclose(p + f, q, atol=1e-9)
    assert h.palm_patch.shape == (99, 3)


# ------------------------------------------------------------------ mirroring

def test_symmetric_object_left_equals_mirrored_right():
    s = scene_of(icosphere(0.05, 2, center=(0.3, 0.0, 1.0)))
    d = np.array([0.6, 0.0, 0.8])
    left = synthesize_guiding_hand(s, GraspDirection(d, "left"))
    right = synthesize_guiding_hand(s, GraspDirection(d, "right"))
    M = reflection_matrix([0, 1, 0])
    p = s.centroid
    assert_hands_close(left, right.transformed(M, p - M @ p, "left"), 1e-12)


def test_mirror_map_is_involution(l_scene):
    h = synthesize_guiding_hand(l_scene, GraspDirection([0.5, 0.5, 0.2], "left"))
    p, n = sagittal_plane(l_scene.centroid, h.d_grasp)
    M = reflection_matrix(n)
    off = p - M @ p
    twice = h.transformed(M, off, "right").transformed(M, off, "left")
    assert_hands_close(twice, h, 1e-12)


@pytest.mark.parametrize("d", [[0.5, 0.5, 0.2], [-0.2, 0.9, -0.3], [0.0, 0.0, 1.0]])
def test_left_hand_matches_mirrored_scene(l_scene, d):
    d = np.asarray(d, float) / np.linalg.norm(d)
    left = left_hand_via_mirror(l_scene, GraspDirection(d, "left"))
    p = np.array([0.0, 0.0, 0.0])
    n = np.array([0.0, 1.0, 0.0])
    M = reflection_matrix(n)
    mirrored = scene_of(mirror_mesh(l_scene.object, p, n))
    right = synthesize_guiding_hand(mirrored, GraspDirection(M @ d, "right"))
    np.testing.assert_allclose(left.fingertip_targets, right.fingertip_targets @ M.T, atol=1e-9)
    np.testing.assert_allclose(left.wrist_position, M @ right.wrist_position, atol=1e-9)


def test_left_hand_needs_left_direction(l_scene):
    with pytest.raises(ValueError):
        left_hand_via_mirror(l_scene, GraspDirection([1, 0, 0], "right"))


# ------------------------------------------------------------------ palm direction

def test_palm_direction_equals_request(l_scene, rng):
    worst = 0.0
    for d in random_unit(rng, 200):
        for hand in ("right", "left"):
            h = synthesize_guiding_hand(l_scene, GraspDirection(d, hand))
            worst = max(worst, angle_between(palm_direction(h), d))
    assert worst <= 1e-9


def test_palm_direction_equivariant(l_scene):
    h = synthesize_guiding_hand(l_scene, GraspDirection([0.2, -0.7, 0.5]))
    R = rotvec_to_matrix(np.array([0.3, -1.1, 0.4]))
    np.testing.assert_allclose(palm_direction(h.transformed(R, [0.1, 0.2, 0.3])), R @ h.d_grasp, atol=1e-12)


@given(x=st.floats(-1, 1), y=st.floats(-1, 1), z=st.floats(-1, 1), hand=st.sampled_from(["right", "left"]))
def test_frame_is_orthonormal(x, y, z, hand):
    v = np.array([x, y, z])
    if np.linalg.norm(v) < 1e-3:
        return
    h = synthesize_guiding_hand(scene_of(make_object("box").translated((0, 0, 1))), GraspDirection(v, hand))
    F = h.palm_frame
    np.testing.assert_allclose(F.T @ F, np.eye(3), atol=1e-9)
    assert np.linalg.det(F) == pytest.approx(1.0 if hand == "right" else -1.0, abs=1e-9)
    R = h.wrist_rotation
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


def test_zero_direction_rejected():
    with pytest.raises(ValueError):
        GraspDirection([0, 0, 0])


def test_hand_json_roundtrip(tmp_path, l_scene):
    h = synthesize_guiding_hand(l_scene, GraspDirection([1, 1, 0], "left"))
    write_hand_json(tmp_path / "hand.json", h)
    back = GuidingHand.from_dict(json.loads((tmp_path / "hand.json").read_text()))
    assert_hands_close(back, h, 0.0)
    assert back.handedness == "left"
    assert guiding_hand_mesh(h).is_watertight
