"""End-to-end synthesis: one sampled direction conditions both the hand and the body."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .body.kinematics import BodyPose, arm_direction, forward_kinematics
from .body.reach import UnreachableTarget, reach_solve
from .body.skeleton import Skeleton, default_skeleton
from .geometry.rotation import normalize
from .hand import GraspDirection, GuidingHand, hand_slab_mesh, synthesize_guiding_hand
from .metrics import (
    AlignedSample,
    ConditionPair,
    MetricsReport,
    condition_accuracy,
    contact_ratio,
    heading_frame,
    penetration_depth,
    penetration_percentage,
    penetration_volume,
    pose_diversity,
)
from .optimize.solver import LossTrace, LossWeights, OptimizerConfig, optimize
from .reachingfield import DEFAULT_DIRECTIONS, ReachingField, build_field, sample_index
from .scene import Scene

MAX_ATTEMPTS = 16  # directions drawn before a scene is declared unreachable


class InfeasibleScene(RuntimeError):
    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass
class Sample:
    ray_index: int
    direction: np.ndarray  # field ray, object -> outward
    hand: GuidingHand
    reach_pose: BodyPose
    final_pose: BodyPose
    trace: LossTrace
    metrics: MetricsReport
    rejected: list = field(default_factory=list)

    @property
    def d_arm(self) -> np.ndarray:
        return -self.direction

    @property
    def d_grasp(self) -> np.ndarray:
        return self.direction


@dataclass
class SynthesisResult:
    field: ReachingField
    samples: list[Sample]
    timings: dict
    pose_diversity: float | None = None


def evaluate_pose(scene: Scene, pose: BodyPose, hand: GuidingHand, d_arm,
                  skeleton: Skeleton | None = None) -> MetricsReport:
    skel = skeleton or default_skeleton()
    side = hand.handedness
    st = forward_kinematics(skel, pose)
    hp = st.hand_points(side)
    w = skel.arm_joints(side)[2]
    slab = hand_slab_mesh(st.positions[w], st.rotations[w], skel.hand.side(side))
    depth = penetration_depth(hp["patch"], scene.object, hand.d_grasp)
    pair = ConditionPair(
        normalize(np.asarray(d_arm, dtype=np.float64)), arm_direction(skel, st, side),
        hand.d_grasp, normalize(hp["palm_out"][1] - hp["palm_out"][0]),
        hand.wrist_position, st.positions[w],
    )
    return MetricsReport(
        contact_ratio=contact_ratio(hp["patch"], scene.object),
        penetration_percentage_body_receptacle=penetration_percentage(st.surface, scene.blockers),
        penetration_percentage_hand_object=penetration_percentage(hp["patch"], scene.object),
        penetration_volume=penetration_volume(slab, scene.object),
        penetration_depth=depth.depth_mm,
        depth_saturated=depth.saturated,
        wrist_error=100.0 * float(np.linalg.norm(st.positions[w] - hand.wrist_position)),
        condition_errors=condition_accuracy([pair]),
    )


def body_diversity(poses: list[BodyPose], skeleton: Skeleton | None = None) -> float:
    """Pose diversity of bodies aligned by pelvis position and heading."""
    skel = skeleton or default_skeleton()
    out = []
    for p in poses:
        st = forward_kinematics(skel, p)
        R = st.rotations[0]
        out.append(AlignedSample(st.surface, st.positions[0], heading_frame(float(np.arctan2(R[1, 0], R[0, 0])))))
    return pose_diversity(out)


def synthesize(scene: Scene, seed: int = 0, handedness: str = "right", samples: int = 1,
               weights: LossWeights | None = None, config: OptimizerConfig | None = None,
               n_directions: int = DEFAULT_DIRECTIONS, skeleton: Skeleton | None = None) -> SynthesisResult:
    """Field, then per sample: one direction -> guiding hand + reaching body -> refinement.

    All randomness comes from one generator seeded with ``seed``. A drawn
    direction whose wrist target is outside the reach envelope is recorded
    and redrawn, up to ``MAX_ATTEMPTS`` times per sample.
    """
    skel = skeleton or default_skeleton()
    rng = np.random.default_rng(seed)
    timings: dict = {}
    t0 = time.perf_counter()
    fld = build_field(scene, n_directions, handedness)
    timings["field"] = time.perf_counter() - t0
    out = []
    for k in range(samples):
        rejected = []
        for _ in range(MAX_ATTEMPTS):
            t = time.perf_counter()
            idx = sample_index(fld, rng)
            r = fld.directions[idx].copy()
            hand = synthesize_guiding_hand(scene, GraspDirection(r, handedness))
            try:
                reach = reach_solve(skel, hand.wrist_position, -r, handedness, hand_frame=hand.wrist_rotation,
                                    gaze_target=scene.centroid)
            except UnreachableTarget as exc:
                rejected.append({"ray_index": idx, "reason": str(exc)})
                continue
            timings[f"sample{k}_condition"] = time.perf_counter() - t
            break
        else:
            raise InfeasibleScene("no sampled direction gives a reachable wrist target",
                                  {"rejected": rejected, "filter_report": fld.filter_report})
        t = time.perf_counter()
        final, trace = optimize(scene, reach, hand, weights, config, d_arm=-r, skeleton=skel)
        timings[f"sample{k}_optimize"] = time.perf_counter() - t
        t = time.perf_counter()
        metrics = evaluate_pose(scene, final, hand, -r, skel)
        timings[f"sample{k}_metrics"] = time.perf_counter() - t
        out.append(Sample(idx, r, hand, reach, final, trace, metrics, rejected))
    div = body_diversity([s.final_pose for s in out], skel) if len(out) > 1 else None
    timings["total"] = time.perf_counter() - t0
    for s in out:
        s.metrics.pose_diversity = div
        s.metrics.runtime = timings["total"]
    return SynthesisResult(fld, out, timings, div)


__all__ = ["InfeasibleScene", "Sample", "SynthesisResult", "body_diversity", "evaluate_pose", "synthesize"]
