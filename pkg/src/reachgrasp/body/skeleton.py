"""Skeleton definition: joint tree, capsule geometry, landmarks, hand layout."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

N_JOINTS = 22
MIRROR = np.diag([1.0, -1.0, 1.0])  # body-local sagittal reflection


@dataclass(frozen=True)
class Capsule:
    joint: int
    a: np.ndarray
    b: np.ndarray
    radius: float

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    @property
    def area(self) -> float:
        return 2 * np.pi * self.radius * self.length + 4 * np.pi * self.radius ** 2


@dataclass(frozen=True)
class HandLayout:
    """Palm patch and markers in the right wrist's local frame.

    Axes: thumb = +x, finger = -y, back-of-hand normal = +z. The left hand
    uses the reflected layout (finger = +y).
    """

    patch: np.ndarray  # (99, 3)
    palm_out: np.ndarray  # (2, 3): inner then outer point
    wrist_markers: np.ndarray  # (2, 3)
    fingertips: np.ndarray  # (5, 3)
    patch_shape: tuple[int, int]

    @staticmethod
    def from_dict(d: dict) -> "HandLayout":
        t0, t1, nt = d["patch_thumb"]
        f0, f1, nf = d["patch_finger"]
        off = d["patch_normal_offset"]
        tt, ff = np.meshgrid(np.linspace(t0, t1, int(nt)), np.linspace(f0, f1, int(nf)), indexing="ij")
        patch = _hand_local(ff.ravel(), tt.ravel(), np.full(tt.size, off))
        po = d["palm_out"]
        palm_out = _hand_local(
            np.array([po["finger"]] * 2), np.array([po["thumb"]] * 2), np.array([-po["normal"], po["normal"]])
        )
        w = d["wrist_marker_half_width"]
        markers = _hand_local(np.zeros(2), np.array([w, -w]), np.zeros(2))
        tips = np.asarray(d["fingertips"], dtype=np.float64)
        fingertips = _hand_local(tips[:, 0], tips[:, 1], np.zeros(len(tips)))
        return HandLayout(patch, palm_out, markers, fingertips, (int(nt), int(nf)))

    def side(self, handedness: str) -> "HandLayout":
        if handedness == "right":
            return self
        return HandLayout(
            self.patch @ MIRROR, self.palm_out @ MIRROR, self.wrist_markers @ MIRROR,
            self.fingertips @ MIRROR, self.patch_shape,
        )


def _hand_local(f, t, n) -> np.ndarray:
    # right hand: finger -> -y, thumb -> +x, normal -> +z
    return np.column_stack([t, -np.asarray(f), n]).astype(np.float64)


def hand_rotation(normal, finger, thumb, handedness: str) -> np.ndarray:
    """World rotation of a wrist whose hand axes map onto the given frame."""
    n, f, t = (np.asarray(v, dtype=np.float64) for v in (normal, finger, thumb))
    if handedness == "right":
        return np.column_stack([t, -f, n])
    return np.column_stack([t, f, n])


@dataclass(frozen=True, eq=False)
class Skeleton:
    names: tuple[str, ...]
    parents: np.ndarray
    offsets: np.ndarray
    limits: np.ndarray
    capsules: tuple[Capsule, ...]
    landmarks: dict
    hand: HandLayout
    n_surface: int = 1200
    surface_seed: int = 7
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.names) != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} joints")
        if self.parents[0] != -1 or np.any(self.parents[1:] >= np.arange(1, N_JOINTS)):
            raise ValueError("joints must be topologically ordered with the pelvis as root")
        if np.any(np.linalg.norm(self.offsets[1:], axis=1) <= 0):
            raise ValueError("every bone needs positive length")

    # -------------------------------------------------------------- lookups
    def index(self, name: str) -> int:
        return self.names.index(name)

    def arm_joints(self, handedness: str) -> tuple[int, int, int]:
        """(shoulder, elbow, wrist) joint indices."""
        s = handedness
        return self.index(f"{s}_shoulder"), self.index(f"{s}_elbow"), self.index(f"{s}_wrist")

    @cached_property
    def mirror_joint(self) -> np.ndarray:
        out = []
        for n in self.names:
            if n.startswith("left_"):
                out.append(self.index("right_" + n[5:]))
            elif n.startswith("right_"):
                out.append(self.index("left_" + n[6:]))
            else:
                out.append(self.index(n))
        return np.array(out)

    @cached_property
    def depth(self) -> np.ndarray:
        d = np.zeros(N_JOINTS, dtype=np.int64)
        for j in range(1, N_JOINTS):
            d[j] = d[self.parents[j]] + 1
        return d

    @cached_property
    def levels(self) -> list[np.ndarray]:
        return [np.nonzero(self.depth == k)[0] for k in range(int(self.depth.max()) + 1)]

    # -------------------------------------------------------------- surface
    @cached_property
    def surface(self) -> "SurfaceSamples":
        return sample_surface(self, self.n_surface, self.surface_seed)

    # ------------------------------------------------------------------ io
    @staticmethod
    def from_dict(d: dict) -> "Skeleton":
        joints = d["joints"]
        names = tuple(j["name"] for j in joints)
        caps = tuple(
            Capsule(names.index(c["joint"]), np.asarray(c["a"], float), np.asarray(c["b"], float), float(c["radius"]))
            for c in d["capsules"]
        )
        lms = {k: (names.index(v["joint"]), np.asarray(v["point"], float)) for k, v in d["landmarks"].items()}
        return Skeleton(
            names,
            np.array([j["parent"] for j in joints], dtype=np.int64),
            np.array([j["offset"] for j in joints], dtype=np.float64),
            np.array([j.get("limit", np.pi) for j in joints], dtype=np.float64),
            caps,
            lms,
            HandLayout.from_dict(d["hand"]),
            int(d.get("surface_points", 1200)),
            int(d.get("surface_seed", 7)),
        )

    @staticmethod
    def from_json(path) -> "Skeleton":
        return Skeleton.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_DEFAULT: Skeleton | None = None


def default_skeleton() -> Skeleton:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("reachgrasp").joinpath("data/skeleton.json").read_text(encoding="utf-8")
        _DEFAULT = Skeleton.from_dict(json.loads(text))
    return _DEFAULT


# ------------------------------------------------------------------ surface

@dataclass(frozen=True)
class SurfaceSamples:
    """Points on the capsule surface, in the local frame of their joint (unscaled)."""

    local: np.ndarray  # (N, 3)
    joint: np.ndarray  # (N,)
    capsule: np.ndarray  # (N,)
    mirror: np.ndarray  # permutation: index of each point's mirror twin


def _capsule_points(cap: Capsule, k: int, rng: np.random.Generator) -> np.ndarray:
    a, b, r = cap.a, cap.b, cap.radius
    axis = b - a
    length = np.linalg.norm(axis)
    w = axis / length if length > 1e-12 else np.array([0.0, 0.0, 1.0])
    ref = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(w, ref)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    side_area = 2 * np.pi * r * length
    p_side = side_area / (side_area + 4 * np.pi * r * r)
    pick = rng.random(k)
    theta = rng.random(k) * 2 * np.pi
    s = rng.random(k)
    sph = rng.normal(size=(k, 3))
    sph /= np.linalg.norm(sph, axis=1, keepdims=True)
    ring = np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v
    side = a + s[:, None] * axis + r * ring
    # caps: hemispheres bulging away from the segment
    along = sph @ w
    cap_pts = np.where((along >= 0)[:, None], b + r * sph, a + r * sph)
    return np.where((pick < p_side)[:, None], side, cap_pts)


def sample_surface(skel: Skeleton, n: int, seed: int) -> SurfaceSamples:
    """Deterministic, left/right-symmetric area sampling of the capsules.

    Right-side capsules are sampled and reflected onto their left twins;
    midline capsules get a sampled half plus its reflection.
    """
    rng = np.random.default_rng(seed)
    caps = skel.capsules
    areas = np.array([c.area for c in caps])
    counts = np.maximum(2, np.round(n * areas / areas.sum()).astype(int))
    counts += counts % 2
    local, joint, capsule, mirror = [], [], [], []
    twin_of: dict[int, int] = {}
    for ci, c in enumerate(caps):
        mj = skel.mirror_joint[c.joint]
        if mj != c.joint:
            for cj, c2 in enumerate(caps):
                if c2.joint == mj:
                    twin_of[ci] = cj
    start = {}
    total = 0
    for ci, c in enumerate(caps):
        start[ci] = total
        total += counts[ci]
    pts = [None] * len(caps)
    for ci, c in enumerate(caps):
        name = skel.names[c.joint]
        if name.startswith("left_"):
            continue
        if name.startswith("right_"):
            p = _capsule_points(c, counts[ci], rng)
            pts[ci] = p
            pts[twin_of[ci]] = p @ MIRROR
        else:
            half = _capsule_points(c, counts[ci] // 2, rng)
            pts[ci] = np.concatenate([half, half @ MIRROR])
    for ci, c in enumerate(caps):
        k = counts[ci]
        local.append(pts[ci])
        joint.append(np.full(k, c.joint))
        capsule.append(np.full(k, ci))
        if ci in twin_of:
            mirror.append(start[twin_of[ci]] + np.arange(k))
        else:
            h = k // 2
            mirror.append(start[ci] + np.concatenate([np.arange(h, k), np.arange(h)]))
    return SurfaceSamples(
        np.concatenate(local), np.concatenate(joint), np.concatenate(capsule), np.concatenate(mirror)
    )


def guiding_frame(normal, handedness: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hand axes (normal, finger, thumb) for a back-of-hand normal.

    Fingers take the horizontal direction orthogonal to the normal; for the
    right hand the thumb then points up, for the left hand the frame is the
    mirror image. A vertical normal falls back to +x as the reference.
    """
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    up = np.array([0.0, 0.0, 1.0])
    f = np.cross(up, n) if handedness == "right" else np.cross(n, up)
    if np.linalg.norm(f) < 1e-9:
        ref = np.array([1.0, 0.0, 0.0])
        f = np.cross(ref, n) if handedness == "right" else np.cross(n, ref)
    f = f / np.linalg.norm(f)
    t = np.cross(n, f) if handedness == "right" else -np.cross(n, f)
    return n, f, t
