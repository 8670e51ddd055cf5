from .losses import (
    disconnected_mask,
    loss_gaze,
    loss_ground,
    loss_hand_match,
    loss_penetration,
    loss_pose,
    loss_tilt,
    signed_distance_t,
    vector_angle,
)
from .solver import (
    TERMS,
    LossTrace,
    LossWeights,
    Objective,
    OptimizationAborted,
    OptimizerConfig,
    arm_mask,
    optimize,
    pre_translate,
    select_iterate,
)
from .torch_body import TorchBody, pack, rodrigues, unpack

__all__ = [
    "TERMS", "LossTrace", "LossWeights", "Objective", "OptimizationAborted", "OptimizerConfig", "TorchBody",
    "arm_mask", "disconnected_mask", "loss_gaze", "loss_ground", "loss_hand_match", "loss_penetration",
    "loss_pose", "loss_tilt", "optimize", "pack", "pre_translate", "rodrigues", "select_iterate", "signed_distance_t",
    "unpack", "vector_angle",
]
