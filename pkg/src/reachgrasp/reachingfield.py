"""Probabilistic field of collision-free approach directions around an object.

Candidate rays leave the object centroid along a spherical lattice and are
pruned by four tests against the receptacle:

1. the ray itself hits the receptacle;
2. its horizontal projection hits the receptacle within 2 m (skipped when it
   would prune every ray);
3. a body could not stand under points along the ray (vertical probes at
   0.3 m intervals hit the receptacle or an occluder before the ground);
4. small rotations about the vertical axis, toward the acting hand's side,
   hit the receptacle.

Survivors get a prior that depends on their angle to the vertical and on
whether the object sits above or below 0.7 m.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry.io import heat_colors, write_ply_points
from .geometry.sphere import DEFAULT_DIRECTIONS, sphere_directions
from .scene import Scene

ALIVE = 0
STATUS_NAMES = ("alive", "pruned_f1", "pruned_f2", "pruned_f3", "pruned_f4")

MIN_RAYS = 64
A_MIN = 0.05  # rad; keeps exp(1 / a) bounded
HEIGHT_SWITCH = 0.7  # m
PROJECTION_RANGE = 2.0  # m
EXEMPT_HORIZONTAL = 1e-6
STANDING_STEP = 0.3  # m
REACH_LIMIT = 1.2  # m
SWEEP_STEP_DEG = 5.0
SWEEP_MAX_DEG = 30.0


class FieldError(RuntimeError):
    """Raised when every candidate direction has been pruned."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


@dataclass(frozen=True)
class CandidateRay:
    direction: np.ndarray
    status: str
    angle_to_vertical: float
    sign: int
    probability: float


@dataclass(frozen=True, eq=False)
class ReachingField:
    """Candidate directions with per-ray status and categorical probabilities.

    Arrays are indexed by lattice position. Left-handed fields accumulate
    probabilities in reversed lattice order, which keeps a left-handed field
    the exact mirror image of the right-handed field on a mirrored scene.
    """

    origin: np.ndarray
    directions: np.ndarray
    status: np.ndarray
    handedness: str = "right"
    angle: np.ndarray | None = None
    sign: np.ndarray | None = None
    probability: np.ndarray | None = None
    filter_report: dict = field(default_factory=dict)
    skip_f2: bool = False

    @property
    def n(self) -> int:
        return len(self.directions)

    @property
    def alive(self) -> np.ndarray:
        return self.status == ALIVE

    @property
    def order(self) -> np.ndarray:
        idx = np.arange(self.n)
        return idx if self.handedness == "right" else idx[::-1]

    @property
    def rays(self) -> list[CandidateRay]:
        out = []
        for i in range(self.n):
            out.append(
                CandidateRay(
                    self.directions[i],
                    STATUS_NAMES[self.status[i]],
                    float(self.angle[i]) if self.angle is not None else float("nan"),
                    int(self.sign[i]) if self.sign is not None else 0,
                    float(self.probability[i]) if self.probability is not None else 0.0,
                )
            )
        return out

    def _prune(self, mask: np.ndarray, code: int, key: str) -> "ReachingField":
        mask = mask & self.alive
        status = self.status.copy()
        status[mask] = code
        report = dict(self.filter_report)
        report[key] = report.get(key, 0) + int(mask.sum())
        return replace(self, status=status, filter_report=report, probability=None)

    def to_dict(self) -> dict:
        rays = []
        for i in range(self.n):
            rays.append(
                {
                    "direction": [float(x) for x in self.directions[i]],
                    "status": STATUS_NAMES[self.status[i]],
                    "angle_to_vertical": None if self.angle is None else float(self.angle[i]),
                    "sign": None if self.sign is None else int(self.sign[i]),
                    "probability": None if self.probability is None else float(self.probability[i]),
                }
            )
        return {
            "origin": [float(x) for x in self.origin],
            "handedness": self.handedness,
            "n_rays": self.n,
            "n_alive": int(self.alive.sum()),
            "skip_f2": bool(self.skip_f2),
            "filter_report": {k: self.filter_report[k] for k in sorted(self.filter_report)},
            "rays": rays,
        }


# ------------------------------------------------------------------ casting

def cast_candidates(scene: Scene, n: int = DEFAULT_DIRECTIONS, handedness: str | None = None) -> ReachingField:
    if n < MIN_RAYS:
        raise ValueError(f"need at least {MIN_RAYS} rays, got {n}")
    hand = handedness or scene.handedness
    if hand not in ("right", "left"):
        raise ValueError(f"unknown handedness {hand!r}")
    d = sphere_directions(n)
    report = {f"pruned_f{k}": 0 for k in range(1, 5)}
    report["skip_f2"] = False
    return ReachingField(scene.centroid.copy(), d, np.zeros(n, dtype=np.int64), hand, filter_report=report)


def _hits(mesh, origins, directions, max_distance=np.inf) -> np.ndarray:
    if mesh.is_empty or not len(directions):
        return np.zeros(len(directions), dtype=bool)
    t, _ = mesh.index.cast(origins, directions, max_distance)
    return np.isfinite(t)


def filter_arm_direction(fld: ReachingField, scene: Scene) -> ReachingField:
    idx = np.nonzero(fld.alive)[0]
    hit = np.zeros(fld.n, dtype=bool)
    hit[idx] = _hits(scene.receptacle, fld.origin[None], fld.directions[idx])
    return fld._prune(hit, 1, "pruned_f1")


def horizontal_projection(directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit floor projections and a mask of rays that have one."""
    h = np.array(directions, dtype=np.float64)
    h[:, 2] = 0.0
    norm = np.linalg.norm(h, axis=1)
    ok = norm >= EXEMPT_HORIZONTAL
    h[ok] /= norm[ok, None]
    return h, ok


def filter_body_orientation(fld: ReachingField, scene: Scene) -> ReachingField:
    idx = np.nonzero(fld.alive)[0]
    proj, ok = horizontal_projection(fld.directions[idx])
    idx, proj = idx[ok], proj[ok]
    hit = np.zeros(fld.n, dtype=bool)
    hit[idx] = _hits(scene.receptacle, fld.origin[None], proj, PROJECTION_RANGE)
    if len(idx) and hit[idx].all():
        # pruning would leave no non-vertical direction: the test is dropped
        return replace(fld, skip_f2=True, filter_report=dict(fld.filter_report, skip_f2=True))
    return fld._prune(hit, 2, "pruned_f2")


def standing_offsets(reach_limit: float = REACH_LIMIT, step: float = STANDING_STEP) -> np.ndarray:
    k = int(np.floor(reach_limit / step + 1e-9))
    return step * np.arange(1, k + 1)


def filter_standing(fld: ReachingField, scene: Scene, reach_limit: float = REACH_LIMIT,
                    step: float = STANDING_STEP) -> ReachingField:
    idx = np.nonzero(fld.alive)[0]
    s = standing_offsets(reach_limit, step)
    pts = fld.origin + fld.directions[idx][:, None, :] * s[None, :, None]
    pts = pts.reshape(-1, 3)
    owner = np.repeat(idx, len(s))
    above = pts[:, 2] > 0.0
    hit = np.zeros(len(pts), dtype=bool)
    down = np.array([[0.0, 0.0, -1.0]])
    hit[above] = _hits(scene.blockers, pts[above], down, pts[above, 2])
    prune = np.zeros(fld.n, dtype=bool)
    prune[owner[hit]] = True
    return fld._prune(prune, 3, "pruned_f3")


def sweep_angles(handedness: str, step_deg: float = SWEEP_STEP_DEG, max_deg: float = SWEEP_MAX_DEG) -> np.ndarray:
    """Signed sweep angles about +z: clockwise (negative) for the right hand."""
    k = int(np.floor(max_deg / step_deg + 1e-9)) if step_deg > 0 else 0
    ang = np.deg2rad(step_deg * np.arange(0, k + 1))
    return -ang if handedness == "right" else ang


def rotate_about_z(directions: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    x, y, z = directions[:, 0], directions[:, 1], directions[:, 2]
    return np.column_stack([c * x - s * y, s * x + c * y, z])


def filter_wiggle(fld: ReachingField, scene: Scene, handedness: str | None = None,
                  step_deg: float = SWEEP_STEP_DEG, max_deg: float = SWEEP_MAX_DEG) -> ReachingField:
    hand = handedness or fld.handedness
    idx = np.nonzero(fld.alive)[0]
    prune = np.zeros(fld.n, dtype=bool)
    for ang in sweep_angles(hand, step_deg, max_deg):
        cand = idx[~prune[idx]]
        if not len(cand):
            break
        d = rotate_about_z(fld.directions[cand], ang)
        prune[cand] = _hits(scene.receptacle, fld.origin[None], d)
    return fld._prune(prune, 4, "pruned_f4")


# ------------------------------------------------------------ probabilities

def angle_to_vertical(directions: np.ndarray) -> np.ndarray:
    dz = np.abs(np.asarray(directions, dtype=np.float64)[:, 2])
    return np.arccos(np.clip(dz, 0.0, 1.0))


def direction_signs(directions: np.ndarray, object_height: float) -> np.ndarray:
    dz = np.asarray(directions, dtype=np.float64)[:, 2]
    high = object_height >= HEIGHT_SWITCH
    neg = (high & (dz < 0)) | ((not high) & (dz > 0))
    return np.where(neg, -1, 1).astype(np.int64)


def log_weights(directions: np.ndarray, object_height: float, a_min: float = A_MIN):
    a = np.clip(angle_to_vertical(directions), a_min, np.pi / 2)
    s = direction_signs(directions, object_height)
    return a, s, -1.0 / (s * a)


def assign_probabilities(fld: ReachingField, scene: Scene | None = None, object_height: float | None = None,
                         a_min: float = A_MIN) -> ReachingField:
    """Categorical prior over alive rays, normalized in log space."""
    if object_height is None:
        if scene is None:
            raise ValueError("need a scene or an explicit object height")
        object_height = scene.object_height
    if not fld.alive.any():
        raise FieldError("every candidate direction was pruned", fld.filter_report)
    a, s, logw = log_weights(fld.directions, object_height, a_min)
    order = fld.order
    alive = fld.alive[order]
    lw = logw[order][alive]
    m = lw.max()
    w = np.exp(lw - m)
    p_sorted = np.zeros(fld.n)
    p_sorted[alive] = w / w.sum()
    p = np.zeros(fld.n)
    p[order] = p_sorted
    return replace(fld, angle=a, sign=s, probability=p)


def sample_direction(fld: ReachingField, rng) -> np.ndarray:
    """Inverse-CDF draw over alive rays in the field's accumulation order."""
    return fld.directions[sample_index(fld, rng)].copy()


def sample_index(fld: ReachingField, rng) -> int:
    if fld.probability is None:
        raise ValueError("probabilities not assigned")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    order = fld.order
    p = fld.probability[order]
    cdf = np.cumsum(p)
    u = gen.random() * cdf[-1]
    k = int(np.searchsorted(cdf, u, side="right"))
    # cdf[k] > u >= cdf[k - 1], so slot k has positive mass
    return int(order[min(k, len(cdf) - 1)])


# ------------------------------------------------------------------ cascade

def build_field(scene: Scene, n: int = DEFAULT_DIRECTIONS, handedness: str | None = None,
                reach_limit: float = REACH_LIMIT) -> ReachingField:
    """Full cascade: cast, four filters, probabilities."""
    fld = cast_candidates(scene, n, handedness)
    fld = filter_arm_direction(fld, scene)
    fld = filter_body_orientation(fld, scene)
    fld = filter_standing(fld, scene, reach_limit)
    fld = filter_wiggle(fld, scene)
    if not fld.alive.any():
        raise FieldError("every candidate direction was pruned", fld.filter_report)
    return assign_probabilities(fld, scene)


def write_field_json(path, fld: ReachingField) -> None:
    Path(path).write_text(json.dumps(fld.to_dict(), indent=1) + "\n", encoding="utf-8")


def write_field_ply(path, fld: ReachingField, radius: float = 0.25) -> None:
    """Alive rays as points around the centroid, red for likely, blue for unlikely."""
    alive = np.nonzero(fld.alive)[0]
    pts = fld.origin + radius * fld.directions[alive]
    p = fld.probability[alive] if fld.probability is not None else np.zeros(len(alive))
    # log scale: the prior spans many orders of magnitude
    write_ply_points(path, pts, heat_colors(np.log(np.maximum(p, 1e-300))))
