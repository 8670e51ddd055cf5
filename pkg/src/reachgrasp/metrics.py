"""Evaluation metrics: contact, penetration, diversity and condition accuracy."""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry.distance import closest_points, signed_distances
from .geometry.mesh import TriMesh
from .geometry.rotation import angle_between
from .geometry.volume import DEFAULT_VOXEL_EDGE, penetration_volume as _overlap_volume

CONTACT_THRESHOLD = 1e-3  # m, unsigned
PENETRATION_THRESHOLD = -1e-3  # m, signed; a point at exactly -1 mm counts
DEPTH_FREE = -1e-6  # m; translated points must clear this
DEPTH_BRACKET = 0.2  # m
DEPTH_RESOLUTION = 1e-5  # m (0.01 mm)


def contact_ratio(points, mesh: TriMesh, threshold: float = CONTACT_THRESHOLD) -> float:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not len(pts):
        return 0.0
    _, d, _ = closest_points(mesh, pts)
    return float(np.mean(d <= threshold))


def penetration_percentage(points, mesh: TriMesh, threshold: float = PENETRATION_THRESHOLD) -> float:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not len(pts):
        return 0.0
    return 100.0 * float(np.mean(signed_distances(mesh, pts) <= threshold))


def penetration_volume(a: TriMesh, b: TriMesh, voxel_edge: float = DEFAULT_VOXEL_EDGE) -> float:
    """Overlap volume of two closed meshes in mm^3."""
    return _overlap_volume(a, b, voxel_edge)


@dataclass(frozen=True)
class DepthResult:
    depth_mm: float
    saturated: bool


def _free(mesh: TriMesh, pts: np.ndarray, shift: np.ndarray, t: float) -> bool:
    return bool(signed_distances(mesh, pts + t * shift).min() >= DEPTH_FREE)


def penetration_depth(points, mesh: TriMesh, d_grasp, bracket: float = DEPTH_BRACKET,
                      resolution: float = DEPTH_RESOLUTION) -> DepthResult:
    """Smallest pull-back along d_grasp that clears every point, by bisection.

    d_grasp is the outward back-of-palm normal, so moving along it takes the
    palm away from the object.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(d_grasp, dtype=np.float64)
    shift = d / np.linalg.norm(d)
    if _free(mesh, pts, shift, 0.0):
        return DepthResult(0.0, False)
    if not _free(mesh, pts, shift, bracket):
        return DepthResult(1e3 * bracket, True)
    lo, hi = 0.0, bracket
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _free(mesh, pts, shift, mid):
            hi = mid
        else:
            lo = mid
    return DepthResult(1e3 * hi, False)


@dataclass(frozen=True)
class AlignedSample:
    """Points plus the rigid frame (origin, rotation columns) used for alignment."""

    points: np.ndarray
    origin: np.ndarray
    rotation: np.ndarray

    def canonical(self) -> np.ndarray:
        return (np.asarray(self.points) - np.asarray(self.origin)) @ np.asarray(self.rotation)


def heading_frame(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pose_diversity(samples: Sequence[AlignedSample]) -> float:
    """Mean over sample pairs of the mean point distance after alignment, in cm."""
    if len(samples) < 2:
        raise ValueError("pose diversity needs at least two samples")
    canon = [s.canonical() for s in samples]
    if len({c.shape for c in canon}) != 1:
        raise ValueError("samples must have identical point counts")
    pair = [np.linalg.norm(a - b, axis=1).mean() for a, b in itertools.combinations(canon, 2)]
    return 100.0 * float(np.mean(pair))


@dataclass(frozen=True)
class ConditionPair:
    arm_wanted: np.ndarray
    arm_got: np.ndarray
    palm_wanted: np.ndarray
    palm_got: np.ndarray
    wrist_wanted: np.ndarray
    wrist_got: np.ndarray


def condition_accuracy(pairs: Iterable[ConditionPair]) -> dict:
    """Mean arm and palm angle errors (deg) and mean squared wrist error (cm^2)."""
    arm, palm, wrist = [], [], []
    for p in pairs:
        arm.append(math.degrees(angle_between(p.arm_wanted, p.arm_got)))
        palm.append(math.degrees(angle_between(p.palm_wanted, p.palm_got)))
        e = 100.0 * np.linalg.norm(np.asarray(p.wrist_got, float) - np.asarray(p.wrist_wanted, float))
        wrist.append(e * e)
    if not arm:
        raise ValueError("condition accuracy needs at least one pair")
    return {"arm_angle": float(np.mean(arm)), "palm_angle": float(np.mean(palm)), "wrist_mse": float(np.mean(wrist))}


@dataclass
class MetricsReport:
    contact_ratio: float
    penetration_percentage_body_receptacle: float
    penetration_percentage_hand_object: float
    penetration_volume: float
    penetration_depth: float
    depth_saturated: bool
    wrist_error: float  # cm, final body wrist vs guiding wrist
    condition_errors: dict = field(default_factory=dict)
    pose_diversity: float | None = None
    runtime: float | None = None  # seconds; kept out of metrics.json for byte-stable outputs

    def __post_init__(self):
        for k in ("contact_ratio", "penetration_percentage_body_receptacle", "penetration_percentage_hand_object",
                  "penetration_volume", "penetration_depth", "wrist_error"):
            v = getattr(self, k)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{k} must be finite and non-negative, got {v}")
        if self.contact_ratio > 1:
            raise ValueError("contact ratio above 1")

    def to_dict(self, include_runtime: bool = False) -> dict:
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime")
        return d

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        names = {f.name for f in fields(MetricsReport)}
        missing = [n for n in names if n not in d and n not in ("condition_errors", "pose_diversity", "runtime")]
        if missing:
            raise ValueError(f"metrics missing fields: {', '.join(sorted(missing))}")
        return MetricsReport(**{k: v for k, v in d.items() if k in names})


AGGREGATE_COLUMNS = (
    "contact_ratio", "penetration_percentage_body_receptacle", "penetration_percentage_hand_object",
    "penetration_volume", "penetration_depth", "wrist_error", "arm_angle", "palm_angle", "wrist_mse",
    "pose_diversity", "runtime",
)


def flatten(report: MetricsReport) -> dict:
    d = report.to_dict(include_runtime=True)
    ce = d.pop("condition_errors") or {}
    d.update({k: ce.get(k) for k in ("arm_angle", "palm_angle", "wrist_mse")})
    return {k: d.get(k) for k in AGGREGATE_COLUMNS}


def aggregate_rows(named: Sequence[tuple[str, MetricsReport]]) -> list[dict]:
    """Per-run rows followed by a mean row (means skip missing values)."""
    rows = [{"run": name, **flatten(r)} for name, r in named]
    mean = {"run": "mean"}
    for c in AGGREGATE_COLUMNS:
        vals = [r[c] for r in rows if r[c] is not None]
        mean[c] = float(np.mean(vals)) if vals else None
    return rows + [mean]


def write_aggregate_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", *AGGREGATE_COLUMNS])
        for r in rows:
            w.writerow([r["run"], *("" if r[c] is None else repr(float(r[c])) for c in AGGREGATE_COLUMNS)])


__all__ = [
    "AGGREGATE_COLUMNS", "AlignedSample", "ConditionPair", "DepthResult", "MetricsReport", "aggregate_rows",
    "condition_accuracy", "contact_ratio", "flatten", "heading_frame", "penetration_depth",
    "penetration_percentage", "penetration_volume", "pose_diversity", "write_aggregate_csv",
]
