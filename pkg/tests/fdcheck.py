"""Central finite-difference checks of the refinement objective."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from reachgrasp.body.reach import reach_solve
from reachgrasp.body.skeleton import default_skeleton
from reachgrasp.geometry.distance import closest_points
from reachgrasp.hand import GraspDirection, synthesize_guiding_hand
from reachgrasp.optimize.losses import loss_penetration
from reachgrasp.optimize.solver import TERMS, Objective
from reachgrasp.optimize.torch_body import N_VARS, pack
from reachgrasp.reachingfield import build_field, sample_index
from reachgrasp.scene import build_scene

STEP = 1e-5
CHECKED = TERMS + ("total",)


def make_objective(kind: str, height: float, seed: int = 0, n_rays: int = 512):
    skel = default_skeleton()
    scene = build_scene(kind, height)[0]
    fld = build_field(scene, n_rays)
    r = fld.directions[sample_index(fld, seed)]
    hand = synthesize_guiding_hand(scene, GraspDirection(r))
    pose = reach_solve(skel, hand.wrist_position, -r, "right", hand_frame=hand.wrist_rotation,
                       gaze_target=scene.centroid)
    return Objective(scene, hand, pose, None, skel), pack(pose), r


def _regime(obj: Objective, x: torch.Tensor) -> tuple:
    """Everything whose change inside the FD stencil would make a term non-smooth."""
    with torch.no_grad():
        P, R = obj.body.fk(x)
        surf = obj.body.surface(P, R)
        _, info = loss_penetration(surf, obj.mesh, P[obj.proximal], return_info=True)
        z = surf[:, 2].numpy()
    finite = np.isfinite(info.signed)
    tri = np.full(len(z), -1)
    if finite.any():
        tri[finite] = closest_points(obj.mesh, surf.numpy()[finite])[2]
    ground = (tuple(np.nonzero(z < 0)[0]), int(np.argmin(z)) if (z > 0).all() else -1)
    return info.inside.tobytes(), info.disconnected.tobytes(), tri.tobytes(), ground


def smooth_at(obj: Objective, x: torch.Tensor, v: torch.Tensor, h: float = STEP) -> bool:
    r0 = _regime(obj, x)
    return _regime(obj, x + h * v) == r0 and _regime(obj, x - h * v) == r0


@dataclass
class StateReport:
    rel: dict = field(default_factory=lambda: {k: [] for k in CHECKED})
    inside: int = 0
    disconnected: int = 0
    below_ground: int = 0
    floating: int = 0
    rejected: int = 0

    def worst(self, term: str) -> float:
        return max(self.rel[term]) if self.rel[term] else float("nan")


def directional_errors(obj: Objective, x: torch.Tensor, v: torch.Tensor, h: float = STEP) -> dict:
    xx = x.clone().requires_grad_(True)
    terms = obj.terms(xx)
    terms["total"] = obj.total(terms)
    out = {}
    with torch.no_grad():
        fp = obj.terms(x + h * v)
        fp["total"] = obj.total(fp)
        fm = obj.terms(x - h * v)
        fm["total"] = obj.total(fm)
    for k in CHECKED:
        val = terms[k]
        if val.requires_grad:
            (g,) = torch.autograd.grad(val, xx, retain_graph=True, allow_unused=True)
            ad = 0.0 if g is None else float(g @ v)
        else:
            ad = 0.0
        fd = (float(fp[k]) - float(fm[k])) / (2 * h)
        out[k] = abs(ad - fd) / max(abs(ad), abs(fd), 1e-10)
    return out


def random_states(obj: Objective, x0: torch.Tensor, outward, rng: np.random.Generator, n: int) -> StateReport:
    """Perturbed start poses pushed into the receptacle and across the floor."""
    rep = StateReport()
    outward = torch.as_tensor(np.asarray(outward, dtype=np.float64))
    done = 0
    while done < n:
        x = x0.clone()
        x[:3] += torch.as_tensor(rng.normal(scale=0.08, size=3)) - rng.uniform(0.0, 0.4) * outward
        x[2] += rng.uniform(-0.12, 0.08)
        x[3:] += torch.as_tensor(rng.normal(scale=0.15, size=N_VARS - 3))
        v = torch.as_tensor(rng.normal(size=N_VARS))
        v /= v.norm()
        if not smooth_at(obj, x, v):
            rep.rejected += 1
            continue
        errs = directional_errors(obj, x, v)
        for k, e in errs.items():
            rep.rel[k].append(e)
        with torch.no_grad():
            P, R = obj.body.fk(x)
            surf = obj.body.surface(P, R)
            _, info = loss_penetration(surf, obj.mesh, P[obj.proximal], return_info=True)
        rep.inside += int(info.inside.any())
        rep.disconnected += int(info.disconnected.any())
        z = surf[:, 2]
        rep.below_ground += int(bool((z < 0).any()))
        rep.floating += int(bool((z > 0).all()))
        done += 1
    return rep
