"""Loss terms of the refinement objective, as torch float64 functions.

Every term takes world-space tensors so it can be checked in isolation;
:class:`reachgrasp.optimize.solver.Objective` wires them to the FK graph.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..geometry.bvh import segments_hit
from ..geometry.distance import signed_distances
from ..geometry.mesh import MeshError, TriMesh
from .torch_body import DTYPE

_AABB_PAD = 1e-9
_NORM_FLOOR = 1e-30  # keeps sqrt differentiable at exactly collinear vectors
# below this the angle is at its kink up to rounding; it gets the zero subgradient
# instead of a unit-size gradient pointing along rounding noise
ANGLE_KINK = 1e-9  # rad


def _t(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


class _SignedDistance(torch.autograd.Function):
    """Signed distance to a closed mesh; gradient sign * (p - q) / |p - q|."""

    @staticmethod
    def forward(ctx, points, mesh):
        p = points.detach().cpu().numpy()
        sd, q = signed_distances(mesh, p, with_closest=True)
        diff = p - q
        n = np.linalg.norm(diff, axis=1, keepdims=True)
        # on the surface the distance has no unique gradient; use 0
        grad = np.where(n > 0, np.sign(sd)[:, None] * diff / np.where(n > 0, n, 1.0), 0.0)
        ctx.save_for_backward(torch.from_numpy(grad))
        return torch.from_numpy(sd)

    @staticmethod
    def backward(ctx, g):
        (grad,) = ctx.saved_tensors
        return g[:, None] * grad, None


def signed_distance_t(mesh: TriMesh, points: torch.Tensor) -> torch.Tensor:
    return _SignedDistance.apply(_t(points), mesh)


def vector_angle(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Angle between two 3-vectors via atan2 (stable near 0 and pi)."""
    c = torch.linalg.cross(a, b)
    s = torch.sqrt((c * c).sum() + _NORM_FLOOR)
    ang = torch.atan2(s, (a * b).sum())
    if float(ang.detach()) < ANGLE_KINK:
        return ang.detach() + 0.0 * ang
    return ang


@dataclass
class PenetrationInfo:
    inside: np.ndarray  # bool per point, d < 0
    disconnected: np.ndarray  # bool per point
    signed: np.ndarray  # signed distance, +inf where culled as far outside


def disconnected_mask(mesh: TriMesh, points: np.ndarray, proximal: np.ndarray, candidates=None) -> np.ndarray:
    """Points whose segment to their bone's proximal joint crosses the mesh."""
    pts = np.asarray(points, dtype=np.float64)
    prox = np.asarray(proximal, dtype=np.float64)
    out = np.zeros(len(pts), dtype=bool)
    lo, hi = mesh.bounds
    seg_lo = np.minimum(pts, prox)
    seg_hi = np.maximum(pts, prox)
    near = np.all((seg_hi >= lo - _AABB_PAD) & (seg_lo <= hi + _AABB_PAD), axis=1)
    if candidates is not None:
        near &= candidates
    idx = np.nonzero(near)[0]
    if len(idx):
        out[idx] = segments_hit(mesh, pts[idx], prox[idx])
    return out


def loss_penetration(points, mesh: TriMesh, proximal=None, return_info: bool = False):
    """Mean inside depth over all points plus mean distance of disconnected points.

    Only outside points can be disconnected; inside points are already
    penalized by the first term. Points outside the mesh bounds are culled
    (they are certainly outside).
    """
    if not mesh.is_watertight:
        raise MeshError("penetration loss needs a closed receptacle mesh")
    pts = _t(points)
    n = pts.shape[0]
    p_np = pts.detach().cpu().numpy()
    lo, hi = mesh.bounds
    in_box = np.all((p_np >= lo - _AABB_PAD) & (p_np <= hi + _AABB_PAD), axis=1)
    disc = np.zeros(n, dtype=bool)
    if proximal is not None:
        prox = _t(proximal).detach().cpu().numpy()
        disc = disconnected_mask(mesh, p_np, prox)
    need = np.nonzero(in_box | disc)[0]
    signed = np.full(n, np.inf)
    value = pts.new_zeros(())
    if len(need):
        idx = torch.from_numpy(need)
        sd = signed_distance_t(mesh, pts[idx])
        sd_np = sd.detach().numpy()
        signed[need] = sd_np
        value = value + torch.clamp(sd, max=0.0).abs().sum() / n
        disc[need] &= sd_np >= 0.0
        keep = torch.from_numpy(disc[need])
        if keep.any():
            value = value + sd[keep].sum() / int(keep.sum())
    if return_info:
        return value, PenetrationInfo(signed < 0, disc, signed)
    return value


def loss_ground(points, beta1: float = 1.0, beta2: float = 0.15) -> torch.Tensor:
    """Soft penalty below the floor; height of the lowest point if nothing touches."""
    z = _t(points)[..., 2].reshape(-1)
    below = z < 0
    if bool(below.any()):
        return beta1 * torch.tanh(z[below] / beta2).pow(2).sum() / z.shape[0]
    if bool((z > 0).all()):
        # exact ties share the gradient so mirrored bodies stay mirrored
        zmin = z.min()
        tie = (z == zmin).to(z.dtype)
        return (z * tie).sum() / tie.sum()
    return z.new_zeros(())


def loss_gaze(back_of_head, glabella, target, floor: float = 1e-6) -> torch.Tensor:
    """Angle at the target between the rays to the back of the head and the glabella."""
    o = _t(target)
    a = o - _t(back_of_head)
    b = o - _t(glabella)
    if float(torch.linalg.norm(a.detach())) < floor or float(torch.linalg.norm(b.detach())) < floor:
        return o.new_zeros(())
    return vector_angle(a, b)


def loss_pose(theta, reference) -> torch.Tensor:
    d = _t(theta) - _t(reference)
    return (d * d).sum()


def loss_tilt(pelvis, feet_center, reference_vector, yaw_delta=0.0) -> torch.Tensor:
    """Angle between the feet-center-to-pelvis vector and its reference.

    The reference is turned by ``yaw_delta`` (current heading minus the
    reference heading) so turning on the spot is not penalized.
    """
    v = _t(pelvis) - _t(feet_center)
    ref = _t(reference_vector)
    yd = _t(yaw_delta)
    c, s = torch.cos(yd), torch.sin(yd)
    ref = torch.stack([c * ref[0] - s * ref[1], s * ref[0] + c * ref[1], ref[2] * torch.ones_like(c)])
    return vector_angle(v, ref)


def loss_hand_match(patch, patch_target, markers, markers_target, lam_wrist: float) -> torch.Tensor:
    dp = _t(patch) - _t(patch_target)
    dm = _t(markers) - _t(markers_target)
    return (dp * dp).sum() + lam_wrist * (dm * dm).sum()


def heading(rotation: torch.Tensor) -> torch.Tensor:
    """Yaw of a body frame whose forward axis is local +x."""
    return torch.atan2(rotation[1, 0], rotation[0, 0])


__all__ = [
    "PenetrationInfo", "disconnected_mask", "heading", "loss_gaze", "loss_ground", "loss_hand_match",
    "loss_penetration", "loss_pose", "loss_tilt", "signed_distance_t", "vector_angle",
]
