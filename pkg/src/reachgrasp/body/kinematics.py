"""Body pose, forward kinematics, handedness detection and pose mirroring."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..geometry.mesh import TriMesh, capsule_mesh, merge_meshes, reflection_matrix
from ..geometry.rotation import angle_between, matrix_to_rotvec, normalize, rotvec_to_matrix
from .skeleton import MIRROR, N_JOINTS, Skeleton, default_skeleton

HANDS = ("right", "left")


@dataclass(frozen=True)
class BodyPose:
    """Root transform, 21 local joint rotations (axis-angle) and a stature scale."""

    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    root_orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_rotations: np.ndarray = field(default_factory=lambda: np.zeros((N_JOINTS - 1, 3)))
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "root_translation", np.asarray(self.root_translation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "root_orientation", np.asarray(self.root_orientation, dtype=np.float64).reshape(3))
        object.__setattr__(
            self, "joint_rotations", np.asarray(self.joint_rotations, dtype=np.float64).reshape(N_JOINTS - 1, 3)
        )
        if not self.beta > 0:
            raise ValueError("stature scale must be positive")

    @property
    def local_rotvecs(self) -> np.ndarray:
        """(22, 3) with the root orientation in row 0."""
        return np.vstack([self.root_orientation[None], self.joint_rotations])

    def with_joint(self, joint: int, rotvec) -> "BodyPose":
        if joint == 0:
            return BodyPose(self.root_translation, rotvec, self.joint_rotations, self.beta)
        jr = self.joint_rotations.copy()
        jr[joint - 1] = rotvec
        return BodyPose(self.root_translation, self.root_orientation, jr, self.beta)

    def translated(self, offset) -> "BodyPose":
        return BodyPose(self.root_translation + np.asarray(offset, float), self.root_orientation,
                        self.joint_rotations, self.beta)

    def to_dict(self) -> dict:
        return {
            "root_translation": self.root_translation.tolist(),
            "root_orientation": self.root_orientation.tolist(),
            "joint_rotations": self.joint_rotations.tolist(),
            "beta": float(self.beta),
        }

    @staticmethod
    def from_dict(d: dict) -> "BodyPose":
        return BodyPose(d["root_translation"], d["root_orientation"], d["joint_rotations"], d.get("beta", 1.0))


@dataclass(frozen=True, eq=False)
class BodyState:
    """World-space result of forward kinematics."""

    skeleton: Skeleton
    pose: BodyPose
    positions: np.ndarray  # (22, 3)
    rotations: np.ndarray  # (22, 3, 3) world

    def to_world(self, joint, local) -> np.ndarray:
        """Map joint-local points (unscaled) into the world."""
        joint = np.asarray(joint)
        return self.positions[joint] + np.einsum("...ij,...j->...i", self.rotations[joint], self.pose.beta * local)

    def to_world_rigid(self, joint: int, local) -> np.ndarray:
        """Like :meth:`to_world` but ignores stature (hand layout is unscaled)."""
        return self.positions[joint] + np.asarray(local) @ self.rotations[joint].T

    @cached_property
    def surface(self) -> np.ndarray:
        s = self.skeleton.surface
        return self.to_world(s.joint, s.local)

    @cached_property
    def joint_limit_violations(self) -> list[str]:
        mags = np.linalg.norm(self.pose.local_rotvecs, axis=1)
        return [self.skeleton.names[j] for j in np.nonzero(mags > self.skeleton.limits + 1e-12)[0]]

    def landmark(self, name: str) -> np.ndarray:
        j, p = self.skeleton.landmarks[name]
        return self.to_world(j, p)

    def hand_points(self, handedness: str) -> dict:
        layout = self.skeleton.hand.side(handedness)
        w = self.skeleton.arm_joints(handedness)[2]
        return {
            "patch": self.to_world_rigid(w, layout.patch),
            "markers": self.to_world_rigid(w, layout.wrist_markers),
            "palm_out": self.to_world_rigid(w, layout.palm_out),
            "fingertips": self.to_world_rigid(w, layout.fingertips),
        }

    def capsule_segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        caps = self.skeleton.capsules
        j = np.array([c.joint for c in caps])
        a = self.to_world(j, np.array([c.a for c in caps]))
        b = self.to_world(j, np.array([c.b for c in caps]))
        r = self.pose.beta * np.array([c.radius for c in caps])
        return a, b, r

    @property
    def sole_height(self) -> float:
        """Lowest point of the capsule body (analytic, not sampled)."""
        a, b, r = self.capsule_segments()
        return float(np.min(np.minimum(a[:, 2], b[:, 2]) - r))

    def mesh(self, segments: int = 12, rings: int = 3) -> TriMesh:
        a, b, r = self.capsule_segments()
        return merge_meshes(capsule_mesh(a[i], b[i], r[i], segments, rings) for i in range(len(r)))


def forward_kinematics(skeleton: Skeleton | None, pose: BodyPose) -> BodyState:
    skel = skeleton or default_skeleton()
    local = rotvec_to_matrix(pose.local_rotvecs)
    pos = np.zeros((N_JOINTS, 3))
    rot = np.zeros((N_JOINTS, 3, 3))
    pos[0] = pose.root_translation
    rot[0] = local[0]
    for j in range(1, N_JOINTS):
        p = skel.parents[j]
        rot[j] = rot[p] @ local[j]
        pos[j] = pos[p] + rot[p] @ (pose.beta * skel.offsets[j])
    return BodyState(skel, pose, pos, rot)


def arm_direction(skeleton: Skeleton | None, pose: BodyPose | BodyState, handedness: str) -> np.ndarray:
    st = pose if isinstance(pose, BodyState) else forward_kinematics(skeleton, pose)
    _, e, w = st.skeleton.arm_joints(handedness)
    return normalize(st.positions[w] - st.positions[e])


def detect_handedness(skeleton: Skeleton | None, pose: BodyPose | BodyState) -> str:
    """Which wrist lies closer to the gaze direction; exact ties go to the right."""
    st = pose if isinstance(pose, BodyState) else forward_kinematics(skeleton, pose)
    g = st.landmark("nose_tip") - st.landmark("head_back")
    gl = st.landmark("glabella")
    _, _, rw = st.skeleton.arm_joints("right")
    _, _, lw = st.skeleton.arm_joints("left")
    right = angle_between(g, st.positions[rw] - gl)
    left = angle_between(g, st.positions[lw] - gl)
    return "right" if right <= left else "left"


def mirror_pose(pose: BodyPose, plane_point=(0.0, 0.0, 0.0), plane_normal=(0.0, 1.0, 0.0),
                skeleton: Skeleton | None = None) -> BodyPose:
    """Reflect a pose across a plane, swapping left and right channels.

    World rotations map as R -> M R S, with M the world reflection and S the
    body's own sagittal reflection, so local rotations become S R S, i.e.
    axis-angle (x, y, z) -> (-x, y, -z).
    """
    skel = skeleton or default_skeleton()
    m = reflection_matrix(plane_normal)
    p = np.asarray(plane_point, dtype=np.float64)
    root = m @ rotvec_to_matrix(pose.root_orientation) @ MIRROR
    flip = np.array([-1.0, 1.0, -1.0])
    local = pose.local_rotvecs * flip
    swapped = local[skel.mirror_joint]
    t = m @ (pose.root_translation - p) + p
    return BodyPose(t, matrix_to_rotvec(root), swapped[1:], pose.beta)


def rest_pose(beta: float = 1.0) -> BodyPose:
    return BodyPose(beta=beta)


def mirror_state_points(points: np.ndarray, plane_point, plane_normal) -> np.ndarray:
    m = reflection_matrix(plane_normal)
    p = np.asarray(plane_point, dtype=np.float64)
    return (np.asarray(points) - p) @ m.T + p


__all__ = [
    "BodyPose", "BodyState", "HANDS", "arm_direction", "detect_handedness", "forward_kinematics",
    "mirror_pose", "mirror_state_points", "rest_pose",
]
