from .kinematics import (
    BodyPose,
    BodyState,
    arm_direction,
    detect_handedness,
    forward_kinematics,
    mirror_pose,
    mirror_state_points,
    rest_pose,
)
from .reach import UnreachableTarget, aim_head, default_hand_rotation, reach_errors, reach_solve
from .skeleton import Skeleton, default_skeleton, guiding_frame, hand_rotation

__all__ = [
    "BodyPose", "BodyState", "Skeleton", "UnreachableTarget", "aim_head", "arm_direction",
    "default_hand_rotation", "default_skeleton", "detect_handedness", "forward_kinematics",
    "guiding_frame", "hand_rotation", "mirror_pose", "mirror_state_points", "reach_errors",
    "reach_solve", "rest_pose",
]
