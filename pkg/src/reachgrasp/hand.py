"""Guiding hand: a palm placed against the object, facing along a given direction.

The hand is a rigid layout (palm patch, outer-palm pair, wrist markers and
fingertip anchors) attached to a wrist frame. The back-of-hand normal is the
conditioning direction, so the realized palm direction equals the request.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .body.skeleton import HandLayout, default_skeleton, guiding_frame, hand_rotation
from .geometry.distance import closest_points, signed_distances
from .geometry.io import write_obj
from .geometry.mesh import TriMesh, box_mesh, icosphere, merge_meshes, mirror_mesh, reflection_matrix
from .geometry.rotation import axis_rotation, normalize
from .scene import Scene

CLEARANCE = 0.015  # m between anchor and wrist
JITTER_DEG = 1.0
MAX_JITTER = 8
HAND_THICKNESS = 0.02


class HandSynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class GraspDirection:
    d_grasp: np.ndarray
    handedness: str = "right"

    def __post_init__(self):
        d = np.asarray(self.d_grasp, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("grasp direction must be non-zero")
        object.__setattr__(self, "d_grasp", d / n)
        if self.handedness not in ("right", "left"):
            raise ValueError(f"unknown handedness {self.handedness!r}")


@dataclass(frozen=True, eq=False)
class GuidingHand:
    handedness: str
    d_grasp: np.ndarray
    wrist_position: np.ndarray
    palm_frame: np.ndarray  # columns: back normal, finger axis, thumb axis
    palm_patch: np.ndarray  # (99, 3)
    palm_out: np.ndarray  # (2, 3) inner, outer
    wrist_markers: np.ndarray  # (2, 3)
    fingertip_targets: np.ndarray  # (5, 3) on the object surface
    interaction_vectors: np.ndarray  # (99, 3) patch point -> closest object point
    anchor: np.ndarray
    push_out: float = 0.0

    @property
    def wrist_rotation(self) -> np.ndarray:
        n, f, t = self.palm_frame.T
        return hand_rotation(n, f, t, self.handedness)

    def transformed(self, matrix: np.ndarray, offset=np.zeros(3), handedness: str | None = None) -> "GuidingHand":
        """Apply x -> matrix @ x + offset to every point and axis."""
        m = np.asarray(matrix, dtype=np.float64)
        o = np.asarray(offset, dtype=np.float64)

        def pts(p):
            return p @ m.T + o

        return GuidingHand(
            handedness or self.handedness,
            m @ self.d_grasp,
            m @ self.wrist_position + o,
            m @ self.palm_frame,
            pts(self.palm_patch),
            pts(self.palm_out),
            pts(self.wrist_markers),
            pts(self.fingertip_targets),
            self.interaction_vectors @ m.T,
            m @ self.anchor + o,
            self.push_out,
        )

    def to_dict(self) -> dict:
        return {
            "handedness": self.handedness,
            "d_grasp": self.d_grasp.tolist(),
            "wrist_position": self.wrist_position.tolist(),
            "palm_frame": {
                "normal": self.palm_frame[:, 0].tolist(),
                "finger": self.palm_frame[:, 1].tolist(),
                "thumb": self.palm_frame[:, 2].tolist(),
            },
            "palm_patch": self.palm_patch.tolist(),
            "palm_out": self.palm_out.tolist(),
            "wrist_markers": self.wrist_markers.tolist(),
            "fingertip_targets": self.fingertip_targets.tolist(),
            "interaction_vectors": self.interaction_vectors.tolist(),
            "anchor": self.anchor.tolist(),
            "push_out": float(self.push_out),
        }

    @staticmethod
    def from_dict(d: dict) -> "GuidingHand":
        fr = d["palm_frame"]
        return GuidingHand(
            d["handedness"],
            np.array(d["d_grasp"]),
            np.array(d["wrist_position"]),
            np.column_stack([fr["normal"], fr["finger"], fr["thumb"]]),
            np.array(d["palm_patch"]),
            np.array(d["palm_out"]),
            np.array(d["wrist_markers"]),
            np.array(d["fingertip_targets"]),
            np.array(d["interaction_vectors"]),
            np.array(d["anchor"]),
            float(d.get("push_out", 0.0)),
        )


def palm_direction(hand: GuidingHand) -> np.ndarray:
    """Outward back-of-palm direction from the two outer-palm points."""
    return normalize(hand.palm_out[1] - hand.palm_out[0])


def _anchor(obj: TriMesh, centroid: np.ndarray, d: np.ndarray, frame: tuple) -> np.ndarray:
    radius = float(np.linalg.norm(obj.vertices - centroid, axis=1).max()) + 0.1
    _, f, t = frame
    for k in range(MAX_JITTER + 1):
        if k == 0:
            ray = d
        else:
            # deterministic 1 degree steps, alternating about the finger and thumb axes
            axis = f if k % 2 else t
            ray = axis_rotation(axis, np.deg2rad(JITTER_DEG * ((k + 1) // 2))) @ d
        origin = centroid + radius * ray
        dist, _ = obj.index.cast(origin[None], -ray[None])
        if np.isfinite(dist[0]):
            return origin - dist[0] * ray
    # centroid outside a non-convex object: rest against its extreme point along d
    # (ties averaged so mirrored objects pick mirrored anchors)
    if not len(obj.vertices):
        raise HandSynthesisError("cannot place a hand on an empty object")
    h = obj.vertices @ d
    top = obj.vertices[h >= h.max() - 1e-12]
    return top.mean(axis=0)


def _place(obj: TriMesh, layout: HandLayout, wrist: np.ndarray, R: np.ndarray):
    return (
        wrist + layout.patch @ R.T,
        wrist + layout.palm_out @ R.T,
        wrist + layout.wrist_markers @ R.T,
        wrist + layout.fingertips @ R.T,
    )


def _synthesize_right(obj: TriMesh, centroid: np.ndarray, d: np.ndarray, clearance: float) -> GuidingHand:
    layout = default_skeleton().hand.side("right")
    n, f, t = guiding_frame(d, "right")
    R = hand_rotation(n, f, t, "right")
    anchor = _anchor(obj, centroid, d, (n, f, t))
    wrist = anchor + clearance * d
    push = 0.0
    patch = _place(obj, layout, wrist, R)[0]
    if obj.is_watertight:
        # back the hand out along its normal until no patch point is inside
        for _ in range(50):
            sd = signed_distances(obj, patch)
            if sd.min() >= 0.0:
                break
            step = -sd.min() + 1e-7
            push += step
            wrist = wrist + step * d
            patch = _place(obj, layout, wrist, R)[0]
    patch, palm_out, markers, tips = _place(obj, layout, wrist, R)
    tip_targets, _, _ = closest_points(obj, tips)
    q, _, _ = closest_points(obj, patch)
    return GuidingHand(
        "right", d.copy(), wrist, np.column_stack([n, f, t]), patch, palm_out, markers, tip_targets,
        q - patch, anchor, push,
    )


def sagittal_plane(centroid, d_grasp) -> tuple[np.ndarray, np.ndarray]:
    """Vertical plane through the centroid containing the floor-projected direction."""
    d = np.asarray(d_grasp, dtype=np.float64)
    h = np.array([d[0], d[1], 0.0])
    if np.linalg.norm(h) < 1e-9:
        return np.asarray(centroid, dtype=np.float64), np.array([0.0, 1.0, 0.0])
    normal = np.cross([0.0, 0.0, 1.0], h)
    return np.asarray(centroid, dtype=np.float64), normal / np.linalg.norm(normal)


def left_hand_via_mirror(scene: Scene, direction: GraspDirection, clearance: float = CLEARANCE) -> GuidingHand:
    """Mirror object and direction, build a right hand, mirror the hand back."""
    if direction.handedness != "left":
        raise ValueError("left_hand_via_mirror needs a left-handed direction")
    c = scene.centroid
    p, normal = sagittal_plane(c, direction.d_grasp)
    M = reflection_matrix(normal)
    obj_m = mirror_mesh(scene.object, p, normal)
    d_m = M @ direction.d_grasp
    right = _synthesize_right(obj_m, obj_m.vertices.mean(axis=0), d_m, clearance)
    return right.transformed(M, p - M @ p, handedness="left")


def synthesize_guiding_hand(scene: Scene, direction: GraspDirection, clearance: float = CLEARANCE) -> GuidingHand:
    if direction.handedness == "left":
        return left_hand_via_mirror(scene, direction, clearance)
    return _synthesize_right(scene.object, scene.centroid, direction.d_grasp, clearance)


def hand_slab_mesh(wrist: np.ndarray, rotation: np.ndarray, layout: HandLayout,
                   thickness: float = HAND_THICKNESS) -> TriMesh:
    """Closed box spanning the palm patch footprint, one hand-thickness deep."""
    p = layout.patch
    lo = p.min(axis=0)
    hi = p.max(axis=0)
    # the patch is flat in local z; extend it toward the back of the hand
    lo[2] = p[:, 2].min()
    hi[2] = lo[2] + thickness
    box = box_mesh(lo, hi)
    return box.transformed(rotation, wrist)


def guiding_hand_mesh(hand: GuidingHand) -> TriMesh:
    layout = default_skeleton().hand.side(hand.handedness)
    parts = [hand_slab_mesh(hand.wrist_position, hand.wrist_rotation, layout)]
    parts += [icosphere(0.004, 1, center=p) for p in hand.fingertip_targets]
    return merge_meshes(parts)


def write_hand_json(path, hand: GuidingHand) -> None:
    Path(path).write_text(json.dumps(hand.to_dict(), indent=1) + "\n", encoding="utf-8")


def write_hand_obj(path, hand: GuidingHand) -> None:
    write_obj(path, guiding_hand_mesh(hand), header="guiding hand: palm slab and fingertip targets")
