"""Closest points, winding numbers and signed distance to triangle meshes."""
from __future__ import annotations

import numpy as np

from .mesh import MeshError, TriMesh

_CHUNK = 1 << 18


def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on triangle (a, b, c) to p, row-wise (Ericson's region test)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        if m.any():
            out[m] = value[m] if value.ndim == 2 else value
            done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), a)
        assign((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        assign((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        assign(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


def closest_points(mesh: TriMesh, points: np.ndarray, candidates: np.ndarray | None = None):
    """Closest surface point for each query.

    Returns ``(closest (N,3), distance (N,), triangle (N,))``. Ties keep the
    lowest triangle index.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if mesh.is_empty:
        raise MeshError("closest point query on an empty mesh")
    corners = mesh.corners if candidates is None else mesh.corners[candidates]
    T = len(corners)
    n = len(pts)
    best_d2 = np.full(n, np.inf)
    best_q = np.zeros((n, 3))
    best_k = np.full(n, -1, dtype=np.int64)
    per = max(1, _CHUNK // T)
    for s in range(0, n, per):
        idx = np.arange(s, min(n, s + per))
        pp = np.repeat(pts[idx], T, axis=0)
        cc = np.tile(corners, (len(idx), 1, 1))
        q = closest_point_on_triangles(pp, cc[:, 0], cc[:, 1], cc[:, 2])
        d2 = np.einsum("ij,ij->i", pp - q, pp - q).reshape(len(idx), T)
        k = np.argmin(d2, axis=1)
        best_d2[idx] = d2[np.arange(len(idx)), k]
        best_q[idx] = q.reshape(len(idx), T, 3)[np.arange(len(idx)), k]
        best_k[idx] = k
    if candidates is not None:
        best_k = np.asarray(candidates)[best_k]
    return best_q, np.sqrt(best_d2), best_k


def closest_surface_point(mesh: TriMesh, point) -> tuple[np.ndarray, float]:
    q, d, _ = closest_points(mesh, np.asarray(point, dtype=np.float64)[None])
    return q[0], float(d[0])


def winding_numbers(mesh: TriMesh, points: np.ndarray) -> np.ndarray:
    """Generalized winding number (solid angle sum / 4pi) at each point."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    c = mesh.corners
    T = len(c)
    n = len(pts)
    out = np.zeros(n)
    per = max(1, _CHUNK // max(T, 1))
    for s in range(0, n, per):
        idx = slice(s, min(n, s + per))
        p = pts[idx][:, None, :]
        A = c[None, :, 0] - p
        B = c[None, :, 1] - p
        C = c[None, :, 2] - p
        la = np.linalg.norm(A, axis=2)
        lb = np.linalg.norm(B, axis=2)
        lc = np.linalg.norm(C, axis=2)
        det = np.einsum("ijk,ijk->ij", A, np.cross(B, C))
        den = (
            la * lb * lc
            + np.einsum("ijk,ijk->ij", A, B) * lc
            + np.einsum("ijk,ijk->ij", A, C) * lb
            + np.einsum("ijk,ijk->ij", B, C) * la
        )
        out[idx] = (2.0 * np.arctan2(det, den)).sum(axis=1) / (4.0 * np.pi)
    return out


def inside_mask(mesh: TriMesh, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    mask = np.zeros(len(pts), dtype=bool)
    if mesh.is_empty or not len(pts):
        return mask
    lo, hi = mesh.bounds
    cand = np.all((pts >= lo) & (pts <= hi), axis=1)
    if cand.any():
        mask[cand] = winding_numbers(mesh, pts[cand]) > 0.5
    return mask


def _require_watertight(mesh: TriMesh):
    if not mesh.is_watertight:
        raise MeshError("signed distance requires a watertight mesh")


def signed_distances(mesh: TriMesh, points: np.ndarray, with_closest: bool = False):
    """Negative inside, positive outside; magnitude is the exact surface distance."""
    _require_watertight(mesh)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    q, d, _ = closest_points(mesh, pts)
    sign = np.where(inside_mask(mesh, pts), -1.0, 1.0)
    sd = sign * d
    if with_closest:
        return sd, q
    return sd


def signed_distance(mesh: TriMesh, point) -> float:
    return float(signed_distances(mesh, np.asarray(point, dtype=np.float64)[None])[0])
