"""Differentiable forward kinematics (torch, float64)."""
from __future__ import annotations

import numpy as np
import torch

from ..body.kinematics import BodyPose
from ..body.skeleton import Skeleton, default_skeleton

DTYPE = torch.float64
N_VARS = 3 + 3 + 21 * 3


def rodrigues(rv: torch.Tensor) -> torch.Tensor:
    """(..., 3) axis-angle -> (..., 3, 3); Taylor branch keeps tiny angles smooth."""
    th2 = (rv * rv).sum(-1)
    small = th2 < 1e-12
    th2s = torch.where(small, torch.ones_like(th2), th2)
    th = torch.sqrt(th2s)
    a = torch.where(small, 1.0 - th2 / 6.0, torch.sin(th) / th)
    b = torch.where(small, 0.5 - th2 / 24.0, (1.0 - torch.cos(th)) / th2s)
    x, y, z = rv.unbind(-1)
    o = torch.zeros_like(x)
    K = torch.stack([o, -z, y, z, o, -x, -y, x, o], dim=-1).reshape(rv.shape[:-1] + (3, 3))
    eye = torch.eye(3, dtype=rv.dtype)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def pack(pose: BodyPose) -> torch.Tensor:
    return torch.tensor(
        np.concatenate([pose.root_translation, pose.root_orientation, pose.joint_rotations.ravel()]), dtype=DTYPE
    )


def unpack(x, beta: float) -> BodyPose:
    v = x.detach().cpu().numpy() if isinstance(x, torch.Tensor) else np.asarray(x)
    return BodyPose(v[:3].copy(), v[3:6].copy(), v[6:].reshape(21, 3).copy(), beta)


class TorchBody:
    """Batched-by-depth FK over the skeleton with cached constant tensors."""

    def __init__(self, skeleton: Skeleton | None = None, beta: float = 1.0):
        skel = skeleton or default_skeleton()
        self.skeleton = skel
        self.beta = float(beta)
        self.offsets = torch.tensor(skel.offsets * beta, dtype=DTYPE)
        self.levels = [(torch.tensor(lv), torch.tensor(skel.parents[lv])) for lv in skel.levels[1:]]
        self.level_parent_lists = [(lv.tolist(), skel.parents[lv].tolist()) for lv in skel.levels[1:]]
        s = skel.surface
        self.surface_joint = torch.tensor(s.joint)
        self.surface_joint_np = s.joint
        self.surface_local = torch.tensor(s.local * beta, dtype=DTYPE)
        self.n_surface = len(s.joint)
        self.head = skel.index("head")
        self.landmarks = {k: (j, torch.tensor(p * beta, dtype=DTYPE)) for k, (j, p) in skel.landmarks.items()}
        self.feet = (skel.index("left_foot"), skel.index("right_foot"))
        self.hand = {}
        for side in ("right", "left"):
            lay = skel.hand.side(side)
            self.hand[side] = (
                skel.arm_joints(side)[2],
                torch.tensor(lay.patch, dtype=DTYPE),
                torch.tensor(lay.wrist_markers, dtype=DTYPE),
            )

    def fk(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Joint world positions (22, 3) and rotations (22, 3, 3) from a packed state."""
        rv = x[3:].reshape(22, 3)
        local = rodrigues(rv)
        R = [None] * 22
        P = [None] * 22
        R[0] = local[0]
        P[0] = x[:3]
        for (idx_t, par_t), (idx, par) in zip(self.levels, self.level_parent_lists):
            Rp = torch.stack([R[p] for p in par])
            Pp = torch.stack([P[p] for p in par])
            Rl = Rp @ local[idx_t]
            Pl = Pp + (Rp @ self.offsets[idx_t].unsqueeze(-1)).squeeze(-1)
            for k, j in enumerate(idx):
                R[j] = Rl[k]
                P[j] = Pl[k]
        return torch.stack(P), torch.stack(R)

    def surface(self, P: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
        j = self.surface_joint
        return P[j] + (R[j] @ self.surface_local.unsqueeze(-1)).squeeze(-1)

    def landmark(self, P, R, name: str) -> torch.Tensor:
        j, p = self.landmarks[name]
        return P[j] + R[j] @ p

    def hand_points(self, P, R, side: str) -> tuple[torch.Tensor, torch.Tensor]:
        w, patch, markers = self.hand[side]
        return P[w] + patch @ R[w].T, P[w] + markers @ R[w].T
