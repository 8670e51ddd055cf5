"""Two-stage Adam refinement of a reaching body toward a guiding hand."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..body.kinematics import BodyPose, forward_kinematics
from ..body.skeleton import Skeleton, default_skeleton
from ..hand import GuidingHand
from ..scene import Scene
from .losses import (
    heading,
    loss_gaze,
    loss_ground,
    loss_hand_match,
    loss_penetration,
    loss_pose,
    loss_tilt,
)
from .torch_body import DTYPE, N_VARS, TorchBody, pack, unpack

TERMS = ("hand_match", "pose", "gaze", "ground", "penetration", "tilt")
HORIZONTAL_EPS = 1e-6
# an earlier iterate replaces the last one only if it is lower by more than this
# (absolute + relative); the margin keeps near-ties from flipping the choice
SELECT_MARGIN = 1e-8


@dataclass(frozen=True)
class LossWeights:
    hand_match: float = 30.0
    pose: float = 1.0
    gaze: float = 0.5
    ground: float = 5.0
    penetration: float = 5.0
    tilt: float = 1.0
    wrist: float = 2.0
    ground_beta1: float = 1.0
    ground_beta2: float = 0.15

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"weight {k} must be finite and non-negative")
        if not self.ground_beta2 > 0:
            raise ValueError("ground_beta2 must be positive")

    def of(self, term: str) -> float:
        return getattr(self, term)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    stage1_iters: int = 800
    stage2_iters: int = 700
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    pre_translation: float = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.stage1_iters < 1 or self.stage2_iters < 0:
            raise ValueError("stage 1 needs at least one iteration; stage 2 cannot be negative")


class OptimizationAborted(RuntimeError):
    def __init__(self, iteration: int, term: str, stage: int):
        super().__init__(f"non-finite {term} at iteration {iteration} (stage {stage})")
        self.iteration = iteration
        self.term = term
        self.stage = stage


@dataclass
class LossTrace:
    """Per-iteration term values (unweighted) and weighted total.

    Stage-2 rows carry NaN for the penetration term, which is not evaluated.
    """

    terms: dict[str, list[float]] = field(default_factory=lambda: {t: [] for t in TERMS})
    total: list[float] = field(default_factory=list)
    stage: list[int] = field(default_factory=list)
    initial: dict[str, float] = field(default_factory=dict)
    final: dict[str, float] = field(default_factory=dict)
    final_pose: BodyPose | None = None
    pre_translation: dict = field(default_factory=dict)
    selected: dict = field(default_factory=dict)  # stage -> iteration whose state was kept

    def __len__(self) -> int:
        return len(self.total)

    @property
    def initial_total(self) -> float:
        return self.initial["total"]

    @property
    def final_total(self) -> float:
        return self.final["total"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "stage", *TERMS, "total"])
            for i in range(len(self)):
                w.writerow([i, self.stage[i], *(repr(self.terms[t][i]) for t in TERMS), repr(self.total[i])])

    def to_dict(self) -> dict:
        return {
            "iterations": len(self),
            "initial": self.initial,
            "final": self.final,
            "pre_translation": self.pre_translation,
            "selected": {str(k): v for k, v in self.selected.items()},
        }


def pre_translate(pose: BodyPose, d_arm, distance: float = 1.0) -> tuple[BodyPose, dict]:
    """Move the root ``distance`` along the floor projection of -d_arm."""
    d = np.asarray(d_arm, dtype=np.float64).reshape(3)
    h = np.array([d[0], d[1], 0.0])
    n = float(np.linalg.norm(h))
    if n < HORIZONTAL_EPS:
        return pose, {"applied": False, "reason": "arm direction is near vertical", "offset": [0.0, 0.0, 0.0]}
    offset = -distance * h / n
    return pose.translated(offset), {"applied": True, "offset": offset.tolist()}


class Objective:
    """All loss terms evaluated on a packed state vector."""

    def __init__(self, scene: Scene, hand: GuidingHand, reference: BodyPose, weights: LossWeights | None = None,
                 skeleton: Skeleton | None = None):
        self.skeleton = skeleton or default_skeleton()
        self.weights = weights or LossWeights()
        self.hand = hand
        self.side = hand.handedness
        self.body = TorchBody(self.skeleton, reference.beta)
        self.mesh = scene.blockers
        self.target = torch.tensor(scene.centroid, dtype=DTYPE)
        self.patch_target = torch.tensor(hand.palm_patch, dtype=DTYPE)
        self.marker_target = torch.tensor(hand.wrist_markers, dtype=DTYPE)
        self.reference_theta = torch.tensor(reference.joint_rotations.ravel(), dtype=DTYPE)
        st = forward_kinematics(self.skeleton, reference)
        lf, rf = self.body.feet
        self.reference_tilt = torch.tensor(st.positions[0] - 0.5 * (st.positions[lf] + st.positions[rf]), dtype=DTYPE)
        self.reference_yaw = float(np.arctan2(st.rotations[0][1, 0], st.rotations[0][0, 0]))
        self.proximal = torch.tensor(self.skeleton.surface.joint)

    def terms(self, x: torch.Tensor, penetration: bool = True) -> dict[str, torch.Tensor]:
        b = self.body
        w = self.weights
        P, R = b.fk(x)
        surf = b.surface(P, R)
        patch, markers = b.hand_points(P, R, self.side)
        lf, rf = b.feet
        out = {
            "hand_match": loss_hand_match(patch, self.patch_target, markers, self.marker_target, w.wrist),
            "pose": loss_pose(x[6:], self.reference_theta),
            "gaze": loss_gaze(b.landmark(P, R, "head_back"), b.landmark(P, R, "glabella"), self.target),
            "ground": loss_ground(surf, w.ground_beta1, w.ground_beta2),
            "tilt": loss_tilt(P[0], 0.5 * (P[lf] + P[rf]), self.reference_tilt, heading(R[0]) - self.reference_yaw),
        }
        if penetration:
            out["penetration"] = loss_penetration(surf, self.mesh, P[self.proximal])
        return out

    def total(self, terms: dict[str, torch.Tensor]) -> torch.Tensor:
        tot = None
        for k in TERMS:
            if k in terms:
                v = self.weights.of(k) * terms[k]
                tot = v if tot is None else tot + v
        return tot

    def evaluate(self, pose: BodyPose) -> dict[str, float]:
        with torch.no_grad():
            t = self.terms(pack(pose))
            out = {k: float(v) for k, v in t.items()}
            out["total"] = float(self.total(t))
        return out


def arm_mask(skeleton: Skeleton, handedness: str) -> torch.Tensor:
    """Boolean mask over the packed state selecting the acting arm rotations."""
    m = torch.zeros(N_VARS, dtype=torch.bool)
    for j in skeleton.arm_joints(handedness):
        m[3 + 3 * j: 6 + 3 * j] = True
    return m


def _check(values: dict[str, torch.Tensor], it: int, stage: int) -> None:
    for k, v in values.items():
        if not math.isfinite(float(v.detach())):
            raise OptimizationAborted(it, k, stage)


def select_iterate(totals: list[float], margin: float = SELECT_MARGIN) -> int:
    """Index of the kept iterate: the last, unless an earlier one is clearly lower.

    Adam with a fixed step keeps moving around a kinked minimum (the angle
    terms have one at zero), so the last iterate can be worse than the start.
    """
    m = min(totals)
    tol = margin * (1.0 + abs(m))
    if totals[-1] <= m + tol:
        return len(totals) - 1
    return next(i for i, t in enumerate(totals) if t <= m + tol)


def run_stage(objective: Objective, x0: torch.Tensor, iters: int, config: OptimizerConfig, stage: int,
              trace: LossTrace, mask: torch.Tensor | None = None, start: int = 0) -> torch.Tensor:
    x = x0.clone().requires_grad_(True)
    opt = torch.optim.Adam([x], lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps)
    use_pen = stage == 1
    states, totals = [], []
    for i in range(iters):
        it = start + i
        opt.zero_grad(set_to_none=False)
        terms = objective.terms(x, penetration=use_pen)
        _check(terms, it, stage)
        total = objective.total(terms)
        total.backward()
        if mask is not None:
            x.grad[~mask] = 0.0
        if not bool(torch.isfinite(x.grad).all()):
            raise OptimizationAborted(it, _blame(objective, x, use_pen), stage)
        for k in TERMS:
            trace.terms[k].append(float(terms[k].detach()) if k in terms else math.nan)
        trace.total.append(float(total.detach()))
        trace.stage.append(stage)
        states.append(x.detach().clone())
        totals.append(trace.total[-1])
        opt.step()
    # the state after the last step is a candidate too
    with torch.no_grad():
        last = objective.terms(x, penetration=use_pen)
        _check(last, start + iters, stage)
        states.append(x.detach().clone())
        totals.append(float(objective.total(last)))
    k = select_iterate(totals)
    trace.selected[stage] = start + k
    return states[k]


def _blame(objective: Objective, x: torch.Tensor, use_pen: bool) -> str:
    # re-differentiate each term alone to name the one with a non-finite gradient
    for k in TERMS:
        if k == "penetration" and not use_pen:
            continue
        xx = x.detach().clone().requires_grad_(True)
        v = objective.terms(xx, penetration=use_pen)[k]
        if v.requires_grad:
            (g,) = torch.autograd.grad(v, xx, allow_unused=True)
            if g is not None and not bool(torch.isfinite(g).all()):
                return k
    return "total"


def optimize(scene: Scene, pose: BodyPose, hand: GuidingHand, weights: LossWeights | None = None,
             config: OptimizerConfig | None = None, reference: BodyPose | None = None,
             d_arm=None, skeleton: Skeleton | None = None) -> tuple[BodyPose, LossTrace]:
    """Refine ``pose`` toward ``hand``.

    ``reference`` is the regularization target (defaults to ``pose``). When
    ``d_arm`` is given the start pose is first moved away from the object.
    """
    skel = skeleton or default_skeleton()
    config = config or OptimizerConfig()
    reference = reference or pose
    obj = Objective(scene, hand, reference, weights, skel)
    trace = LossTrace()
    start = pose
    if d_arm is not None and config.pre_translation > 0:
        start, info = pre_translate(pose, d_arm, config.pre_translation)
        trace.pre_translation = info
    trace.initial = obj.evaluate(start)
    x = pack(start)
    x = run_stage(obj, x, config.stage1_iters, config, 1, trace)
    if config.stage2_iters:
        x = run_stage(obj, x, config.stage2_iters, config, 2, trace, arm_mask(skel, hand.handedness),
                      start=config.stage1_iters)
    final = unpack(x, pose.beta)
    trace.final = obj.evaluate(final)
    trace.final_pose = final
    return final, trace


__all__ = [
    "LossTrace", "LossWeights", "Objective", "OptimizationAborted", "OptimizerConfig", "TERMS", "arm_mask",
    "optimize", "pre_translate", "run_stage", "select_iterate",
]
