"""Deterministic direction-conditioned reaching body.

Given a wrist target and an arm direction (elbow to wrist), the solver

* faces the body along the floor projection of the arm direction,
* places the elbow one forearm length behind the wrist along that direction,
* chooses a posture (forward lean, then crouch) that puts the acting
  shoulder at a comfortable height relative to the elbow,
* shifts the body so the shoulder sits one upper-arm length from the elbow,
* orients the arm with minimal swings and the wrist with an absolute frame,
* aims the head at the target and lets the idle arm hang.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..geometry.rotation import angle_between, matrix_to_rotvec, normalize, swing
from .kinematics import BodyPose, BodyState, forward_kinematics
from .skeleton import Skeleton, default_skeleton, guiding_frame, hand_rotation

MAX_LEAN = np.deg2rad(60.0)
MAX_CROUCH = np.deg2rad(70.0)
IDLE_ARM = np.deg2rad(75.0)
SHOULDER_RISE = 0.5  # preferred shoulder height above the elbow, in upper-arm lengths
BISECTION_STEPS = 60
GAZE_ITERATIONS = 40
GAZE_TOLERANCE = 1e-12  # rad
GROUND_SINK = 1e-12  # m; lowest sample sits just below z = 0 so the floor term is flat there

# reach envelope, scaled by stature
MIN_STANDING = 0.2
MAX_STANDING = 1.2
MAX_TARGET_Z = 2.2


class UnreachableTarget(ValueError):
    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ReachReport:
    posture: float
    lean: float
    crouch: float
    standing_distance: float
    shoulder_height: float
    heading: np.ndarray
    degenerate_heading: bool


def posture_angles(u: float) -> tuple[float, float]:
    """Lean then crouch as the posture parameter runs from 0 to 1."""
    u = float(np.clip(u, 0.0, 1.0))
    if u <= 0.5:
        return 2.0 * u * MAX_LEAN, 0.0
    return MAX_LEAN, (2.0 * u - 1.0) * MAX_CROUCH


def posture_rotations(skel: Skeleton, u: float) -> np.ndarray:
    """(21, 3) local rotations for the torso and legs at posture ``u``."""
    lean, crouch = posture_angles(u)
    rv = np.zeros((21, 3))
    rv[skel.index("spine1") - 1] = [0.0, lean, 0.0]
    for side in ("left", "right"):
        rv[skel.index(f"{side}_hip") - 1] = [0.0, -crouch, 0.0]
        rv[skel.index(f"{side}_knee") - 1] = [0.0, 2.0 * crouch, 0.0]
        rv[skel.index(f"{side}_ankle") - 1] = [0.0, -crouch, 0.0]
    for side, sgn in (("right", 1.0), ("left", -1.0)):
        rv[skel.index(f"{side}_shoulder") - 1] = [sgn * IDLE_ARM, 0.0, 0.0]
    return rv


def _grounded(skel: Skeleton, u: float, yaw: float, beta: float) -> BodyState:
    """Posture ``u`` with heading ``yaw``, pelvis above the origin, lowest surface sample on z = 0.

    Grounding uses the sampled surface (not the analytic capsule soles) so the
    floor-contact loss of the refinement starts at its minimum.
    """
    pose = BodyPose(np.zeros(3), [0.0, 0.0, yaw], posture_rotations(skel, u), beta)
    st = forward_kinematics(skel, pose)
    return forward_kinematics(skel, pose.translated([0.0, 0.0, -float(st.surface[:, 2].min()) - GROUND_SINK]))


def shoulder_height(skel: Skeleton, u: float, handedness: str, beta: float = 1.0) -> float:
    st = _grounded(skel, u, 0.0, beta)
    return float(st.positions[skel.arm_joints(handedness)[0], 2])


@lru_cache(maxsize=64)
def _shoulder_range(skel: Skeleton, handedness: str, beta: float) -> tuple[float, float]:
    return shoulder_height(skel, 1.0, handedness, beta), shoulder_height(skel, 0.0, handedness, beta)


def default_hand_rotation(d_arm, handedness: str) -> np.ndarray:
    """Wrist frame of a guiding hand whose back faces along -d_arm."""
    n, f, t = guiding_frame(-np.asarray(d_arm, dtype=np.float64), handedness)
    return hand_rotation(n, f, t, handedness)


def _local_swing(parent_world: np.ndarray, rest_dir: np.ndarray, target_dir: np.ndarray) -> np.ndarray:
    cur = parent_world @ rest_dir
    return parent_world.T @ swing(cur, target_dir) @ parent_world


def reach_solve(skeleton: Skeleton | None, target_wrist, d_arm, handedness: str = "right",
                hand_frame: np.ndarray | None = None, gaze_target=None, beta: float = 1.0,
                return_report: bool = False):
    """Body pose with the acting wrist at ``target_wrist`` and forearm along ``d_arm``.

    ``hand_frame`` is the world rotation of the acting wrist; by default it
    is the guiding frame for a back-of-hand normal of ``-d_arm``.
    """
    skel = skeleton or default_skeleton()
    if handedness not in ("right", "left"):
        raise ValueError(f"unknown handedness {handedness!r}")
    L = np.asarray(target_wrist, dtype=np.float64).reshape(3)
    d = normalize(np.asarray(d_arm, dtype=np.float64).reshape(3))
    sh, el, wr = skel.arm_joints(handedness)
    lu = beta * float(np.linalg.norm(skel.offsets[el]))
    lf = beta * float(np.linalg.norm(skel.offsets[wr]))

    report = {"target": L.tolist(), "d_arm": d.tolist(), "handedness": handedness, "beta": beta}
    if not 0.0 <= L[2] <= MAX_TARGET_Z * beta:
        raise UnreachableTarget(f"target height {L[2]:.3f} m outside [0, {MAX_TARGET_Z * beta:.2f}]", report)

    hxy = np.array([d[0], d[1], 0.0])
    degenerate = np.linalg.norm(hxy) < 1e-6
    h = np.array([1.0, 0.0, 0.0]) if degenerate else hxy / np.linalg.norm(hxy)
    yaw = float(np.arctan2(h[1], h[0]))
    E = L - lf * d

    lo_z, hi_z = _shoulder_range(skel, handedness, float(beta))
    z_goal = float(np.clip(E[2] + SHOULDER_RISE * lu, lo_z, hi_z))
    report.update(shoulder_range=[lo_z, hi_z], elbow=E.tolist())
    if abs(z_goal - E[2]) > lu:
        raise UnreachableTarget("elbow height not reachable from any shoulder height", report)

    # shoulder height decreases monotonically with posture
    if z_goal >= hi_z:
        u = 0.0
    elif z_goal <= lo_z:
        u = 1.0
    else:
        a, b = 0.0, 1.0
        for _ in range(BISECTION_STEPS):
            m = 0.5 * (a + b)
            if shoulder_height(skel, m, handedness, beta) > z_goal:
                a = m
            else:
                b = m
        u = 0.5 * (a + b)

    base = _grounded(skel, u, yaw, beta)
    s_rel = base.positions[sh]
    dz = s_rel[2] - E[2]
    if abs(dz) > lu:
        raise UnreachableTarget("elbow height not reachable from any shoulder height", report)
    rho = float(np.sqrt(max(lu * lu - dz * dz, 0.0)))
    S = np.array([E[0] - rho * h[0], E[1] - rho * h[1], s_rel[2]])
    shift = np.array([S[0] - s_rel[0], S[1] - s_rel[1], 0.0])
    pose = base.pose.translated(shift)
    pelvis = pose.root_translation
    standing = float(np.linalg.norm((L - pelvis)[:2]))
    report.update(standing_distance=standing, posture=u)
    if not MIN_STANDING * beta <= standing <= MAX_STANDING * beta:
        raise UnreachableTarget(
            f"standing distance {standing:.3f} m outside [{MIN_STANDING * beta:.2f}, {MAX_STANDING * beta:.2f}]",
            report,
        )

    # acting arm
    st = forward_kinematics(skel, pose.with_joint(sh, np.zeros(3)))
    parent = st.rotations[skel.parents[sh]]
    upper = normalize(E - S)
    r_sh = _local_swing(parent, normalize(skel.offsets[el]), upper)
    sh_world = parent @ r_sh
    r_el = _local_swing(sh_world, normalize(skel.offsets[wr]), d)
    el_world = sh_world @ r_el
    R_hand = default_hand_rotation(d, handedness) if hand_frame is None else np.asarray(hand_frame, float)
    r_wr = el_world.T @ R_hand
    pose = pose.with_joint(sh, matrix_to_rotvec(r_sh))
    pose = pose.with_joint(el, matrix_to_rotvec(r_el))
    pose = pose.with_joint(wr, matrix_to_rotvec(r_wr))

    pose = aim_head(skel, pose, L if gaze_target is None else gaze_target)
    if return_report:
        lean, crouch = posture_angles(u)
        return pose, ReachReport(u, lean, crouch, standing, float(S[2]), h, bool(degenerate))
    return pose


def aim_head(skel: Skeleton, pose: BodyPose, target) -> BodyPose:
    """Rotate the head so the back-of-head to glabella line points at ``target``."""
    target = np.asarray(target, dtype=np.float64)
    head = skel.index("head")
    for _ in range(GAZE_ITERATIONS):
        st = forward_kinematics(skel, pose)
        a = st.landmark("head_back")
        g = st.landmark("glabella") - a
        want = target - a
        if np.linalg.norm(want) < 1e-6 or angle_between(g, want) < GAZE_TOLERANCE:
            break
        world = swing(g, want) @ st.rotations[head]
        local = st.rotations[skel.parents[head]].T @ world
        pose = pose.with_joint(head, matrix_to_rotvec(local))
    return pose


def reach_errors(skel: Skeleton | None, pose: BodyPose, target_wrist, d_arm, handedness: str) -> tuple[float, float]:
    """(wrist error in m, arm-direction error in rad) of a solved pose."""
    skel = skel or default_skeleton()
    st = forward_kinematics(skel, pose)
    _, el, wr = skel.arm_joints(handedness)
    werr = float(np.linalg.norm(st.positions[wr] - np.asarray(target_wrist)))
    got = normalize(st.positions[wr] - st.positions[el])
    want = normalize(np.asarray(d_arm, dtype=np.float64))
    aerr = float(np.arctan2(np.linalg.norm(np.cross(got, want)), got @ want))
    return werr, aerr


__all__ = [
    "UnreachableTarget", "ReachReport", "reach_solve", "aim_head", "reach_errors", "posture_angles",
    "posture_rotations", "default_hand_rotation", "shoulder_height",
]
