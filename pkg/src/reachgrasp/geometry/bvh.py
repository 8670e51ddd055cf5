"""Ray casting against triangle meshes: brute-force scan and a BVH.

Both paths share the same Moller-Trumbore kernel and the same tie rule
(nearest distance, then lowest triangle index), so their answers are
identical, not merely close.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import TriMesh

ORIGIN_OFFSET = 1e-6
MIN_HIT = 1e-7
LEAF_SIZE = 4
_CHUNK = 1 << 18


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    max_distance: float = np.inf

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if not np.isclose(n, 1.0, atol=1e-9):
            raise ValueError("ray direction must be unit length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class HitRecord:
    distance: float
    point: np.ndarray
    triangle_index: int
    facing: str  # "front" when the ray meets the outward side


def _moller_trumbore(o, d, v0, e1, e2):
    """Per-pair intersection parameter; +inf where there is no hit.

    Inputs are broadcast (K, 3) arrays. Edges are inclusive so a ray through a
    shared edge never slips between the two triangles.
    """
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = det != 0.0
    # subnormal det overflows to inf; the resulting inf/nan fail the range tests
    with np.errstate(over="ignore", invalid="ignore"):
        inv = np.divide(1.0, det, out=np.zeros_like(det), where=ok)
        s = o - v0
        u = np.einsum("ij,ij->i", s, p) * inv
        q = np.cross(s, e1)
        v = np.einsum("ij,ij->i", d, q) * inv
        t = np.einsum("ij,ij->i", e2, q) * inv
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > MIN_HIT)
    return np.where(hit, t, np.inf)


def _prepare(origins, directions, max_distance):
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    if len(d) == 1 and len(o) > 1:
        d = np.repeat(d, len(o), axis=0)
    if len(o) == 1 and len(d) > 1:
        o = np.repeat(o, len(d), axis=0)
    tmax = np.broadcast_to(np.asarray(max_distance, dtype=np.float64), (len(o),)).copy()
    # the cast starts slightly ahead of the origin to skip self-hits
    return o + ORIGIN_OFFSET * d, d, tmax - ORIGIN_OFFSET


def _reduce_best(ray_ids, tri_ids, t, best_t, best_tri):
    """Fold candidate hits into the running best, ties broken by triangle index."""
    finite = np.isfinite(t)
    if not finite.any():
        return
    ray_ids, tri_ids, t = ray_ids[finite], tri_ids[finite], t[finite]
    order = np.lexsort((tri_ids, t, ray_ids))
    ray_ids, tri_ids, t = ray_ids[order], tri_ids[order], t[order]
    first = np.ones(len(ray_ids), dtype=bool)
    first[1:] = ray_ids[1:] != ray_ids[:-1]
    r, k, tt = ray_ids[first], tri_ids[first], t[first]
    cur_t, cur_k = best_t[r], best_tri[r]
    better = (tt < cur_t) | ((tt == cur_t) & ((cur_k < 0) | (k < cur_k)))
    best_t[r[better]] = tt[better]
    best_tri[r[better]] = k[better]


def cast_brute(mesh: TriMesh, origins, directions, max_distance=np.inf):
    """Nearest hit of every ray against every triangle.

    Returns ``(distance, triangle_index)``; misses are ``inf`` / ``-1``.
    Distances are measured from the caller's origin.
    """
    o, d, tmax = _prepare(origins, directions, max_distance)
    n = len(o)
    best_t = np.full(n, np.inf)
    best_tri = np.full(n, -1, dtype=np.int64)
    if mesh.is_empty or n == 0:
        return best_t, best_tri
    c = mesh.corners
    v0 = c[:, 0]
    e1 = c[:, 1] - v0
    e2 = c[:, 2] - v0
    T = len(c)
    rays_per_chunk = max(1, _CHUNK // T)
    for start in range(0, n, rays_per_chunk):
        r = np.arange(start, min(n, start + rays_per_chunk))
        rr = np.repeat(r, T)
        kk = np.tile(np.arange(T), len(r))
        t = _moller_trumbore(o[rr], d[rr], v0[kk], e1[kk], e2[kk])
        t[t > tmax[rr]] = np.inf
        _reduce_best(rr, kk, t, best_t, best_tri)
    hit = np.isfinite(best_t)
    best_t[hit] += ORIGIN_OFFSET
    return best_t, best_tri


class AccelIndex:
    """Median-split bounding-volume hierarchy over a mesh's triangles.

    Read-only after construction; queries may run concurrently.
    """

    def __init__(self, mesh: TriMesh, leaf_size: int = LEAF_SIZE):
        self.mesh = mesh
        c = mesh.corners
        T = len(c)
        self.v0 = c[:, 0]
        self.e1 = c[:, 1] - self.v0
        self.e2 = c[:, 2] - self.v0
        tri_lo = c.min(axis=1)
        tri_hi = c.max(axis=1)
        cent = c.mean(axis=1)
        lo, hi, left, right, start, count = [], [], [], [], [], []
        order = np.arange(T)
        perm: list[np.ndarray] = []
        if T == 0:
            self.node_lo = np.zeros((0, 3))
            self.node_hi = np.zeros((0, 3))
            self.left = self.right = self.start = self.count = np.zeros(0, dtype=np.int64)
            self.tri_order = order
            return
        stack = [(order, -1, 0)]
        while stack:
            items, parent, side = stack.pop()
            node = len(lo)
            lo.append(tri_lo[items].min(axis=0))
            hi.append(tri_hi[items].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(-1)
            count.append(0)
            if parent >= 0:
                (left if side == 0 else right)[parent] = node
            if len(items) <= leaf_size:
                start[node] = sum(len(p) for p in perm)
                count[node] = len(items)
                perm.append(items)
                continue
            span = cent[items].max(axis=0) - cent[items].min(axis=0)
            axis = int(np.argmax(span))
            srt = items[np.argsort(cent[items, axis], kind="stable")]
            mid = len(srt) // 2
            stack.append((srt[mid:], node, 1))
            stack.append((srt[:mid], node, 0))
        self.node_lo = np.array(lo)
        self.node_hi = np.array(hi)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.tri_order = np.concatenate(perm)
        assert np.array_equal(np.sort(self.tri_order), np.arange(T))

    @property
    def n_nodes(self) -> int:
        return len(self.node_lo)

    def cast(self, origins, directions, max_distance=np.inf):
        """Batched nearest-hit query; same contract as :func:`cast_brute`."""
        o, d, tmax = _prepare(origins, directions, max_distance)
        n = len(o)
        best_t = np.full(n, np.inf)
        best_tri = np.full(n, -1, dtype=np.int64)
        if self.n_nodes == 0 or n == 0:
            return best_t, best_tri
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inv_d = 1.0 / d
        rays = np.arange(n)
        nodes = np.zeros(n, dtype=np.int64)
        while len(rays):
            # slab test against the current frontier of (ray, node) pairs
            lo = self.node_lo[nodes]
            hi = self.node_hi[nodes]
            with np.errstate(invalid="ignore"):
                t0 = (lo - o[rays]) * inv_d[rays]
                t1 = (hi - o[rays]) * inv_d[rays]
            # 0 * inf -> nan for rays parallel to a slab; treat as "inside" when
            # the origin lies within that slab.
            par = d[rays] == 0.0
            inside = (o[rays] >= lo) & (o[rays] <= hi)
            t0 = np.where(par, np.where(inside, -np.inf, np.inf), t0)
            t1 = np.where(par, np.where(inside, np.inf, -np.inf), t1)
            tnear = np.minimum(t0, t1).max(axis=1)
            tfar = np.maximum(t0, t1).min(axis=1)
            limit = np.minimum(tmax[rays], best_t[rays])
            keep = (tnear <= tfar) & (tfar >= 0.0) & (tnear <= limit)
            rays, nodes = rays[keep], nodes[keep]
            if not len(rays):
                break
            is_leaf = self.count[nodes] > 0
            lr, ln = rays[is_leaf], nodes[is_leaf]
            if len(lr):
                cnt = self.count[ln]
                rr = np.repeat(lr, cnt)
                base = np.repeat(self.start[ln], cnt)
                offs = np.arange(len(rr)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                kk = self.tri_order[base + offs]
                t = _moller_trumbore(o[rr], d[rr], self.v0[kk], self.e1[kk], self.e2[kk])
                t[t > tmax[rr]] = np.inf
                _reduce_best(rr, kk, t, best_t, best_tri)
            ir, inn = rays[~is_leaf], nodes[~is_leaf]
            rays = np.concatenate([ir, ir])
            nodes = np.concatenate([self.left[inn], self.right[inn]])
        hit = np.isfinite(best_t)
        best_t[hit] += ORIGIN_OFFSET
        return best_t, best_tri

    def any_hit(self, origins, directions, max_distance=np.inf) -> np.ndarray:
        t, _ = self.cast(origins, directions, max_distance)
        return np.isfinite(t)


def ray_cast(mesh: TriMesh, ray: Ray) -> Optional[HitRecord]:
    """Nearest intersection of ``ray`` with ``mesh`` (via its cached index), or None."""
    t, k = mesh.index.cast(ray.origin[None], ray.direction[None], ray.max_distance)
    if not np.isfinite(t[0]):
        return None
    tri = int(k[0])
    facing = "front" if float(mesh.triangle_normals[tri] @ ray.direction) < 0 else "back"
    return HitRecord(float(t[0]), ray.origin + t[0] * ray.direction, tri, facing)


def segments_hit(mesh: TriMesh, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """True where the open segment start->end crosses the mesh surface."""
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, 3)
    ends = np.asarray(ends, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(starts), dtype=bool)
    if mesh.is_empty or not len(starts):
        return out
    delta = ends - starts
    length = np.linalg.norm(delta, axis=1)
    ok = length > 2 * ORIGIN_OFFSET
    if not ok.any():
        return out
    idx = np.nonzero(ok)[0]
    t, _ = mesh.index.cast(starts[idx], delta[idx] / length[idx, None], length[idx])
    out[idx] = np.isfinite(t)
    return out
