"""Voxel overlap between two closed meshes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriMesh

DEFAULT_VOXEL_EDGE = 1e-3
DEFAULT_MAX_VOXELS = 20_000_000
# column lines are nudged along x only, so they avoid grazing triangle edges
# while a reflection across a y-plane still maps the grid onto itself
_JITTER = np.array([1.0e-9 * 2 ** 0.5, 0.0])


class VoxelBudgetError(MeshError):
    pass


@dataclass(frozen=True)
class VoxelOverlapGrid:
    voxel_edge: float  # requested edge; actual spacing per axis is at most this
    centers_x: np.ndarray
    centers_y: np.ndarray
    centers_z: np.ndarray
    occupancy_a: np.ndarray
    occupancy_b: np.ndarray
    spacing: np.ndarray  # (3,) cell size per axis

    @property
    def overlap_count(self) -> int:
        return int(np.count_nonzero(self.occupancy_a & self.occupancy_b))

    @property
    def volume_mm3(self) -> float:
        return self.overlap_count * float(np.prod(self.spacing * 1e3))


def _axis_centers(lo: float, hi: float, edge: float) -> tuple[np.ndarray, float]:
    """Cell centres tiling [lo, hi] exactly with spacing at most ``edge``."""
    extent = hi - lo
    if extent <= 0:
        return np.zeros(0), 0.0
    n = int(np.ceil(extent / edge - 1e-9))
    step = extent / n
    mid = 0.5 * (lo + hi)
    # symmetric about the box centre, so a mirrored input yields a mirrored grid
    return mid + (np.arange(n) - (n - 1) / 2.0) * step, step


def voxel_occupancy(mesh: TriMesh, xs: np.ndarray, ys: np.ndarray, zs: np.ndarray, spacing) -> np.ndarray:
    """Inside/outside for every grid centre via vertical-line crossing parity.

    ``spacing`` is the (x, y, z) distance between neighbouring centres.
    """
    sx, sy, sz = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (3,))
    nx, ny, nz = len(xs), len(ys), len(zs)
    occ = np.zeros((nx, ny, nz), dtype=bool)
    if nx * ny * nz == 0 or mesh.is_empty:
        return occ
    c = mesh.corners
    x0 = xs[0] + _JITTER[0]
    y0 = ys[0] + _JITTER[1]
    lo = c[:, :, :2].min(axis=1)
    hi = c[:, :, :2].max(axis=1)
    i0 = np.clip(np.ceil((lo[:, 0] - x0) / sx).astype(np.int64), 0, nx)
    i1 = np.clip(np.floor((hi[:, 0] - x0) / sx).astype(np.int64) + 1, 0, nx)
    j0 = np.clip(np.ceil((lo[:, 1] - y0) / sy).astype(np.int64), 0, ny)
    j1 = np.clip(np.floor((hi[:, 1] - y0) / sy).astype(np.int64) + 1, 0, ny)
    wi = np.maximum(i1 - i0, 0)
    wj = np.maximum(j1 - j0, 0)
    cnt = wi * wj
    keep = cnt > 0
    if not keep.any():
        return occ
    tri = np.repeat(np.nonzero(keep)[0], cnt[keep])
    local = np.arange(len(tri)) - np.repeat(np.cumsum(cnt[keep]) - cnt[keep], cnt[keep])
    ci = i0[tri] + local // wj[tri]
    cj = j0[tri] + local % wj[tri]
    px = x0 + ci * sx
    py = y0 + cj * sy
    a, b, cc = c[tri, 0], c[tri, 1], c[tri, 2]
    # 2D barycentrics of the column line in the triangle's xy projection
    det = (b[:, 0] - a[:, 0]) * (cc[:, 1] - a[:, 1]) - (cc[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    ok = det != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = ((px - a[:, 0]) * (cc[:, 1] - a[:, 1]) - (cc[:, 0] - a[:, 0]) * (py - a[:, 1])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (px - a[:, 0]) * (b[:, 1] - a[:, 1])) / det
    l0 = 1.0 - l1 - l2
    hit = ok & (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    z = l0 * a[:, 2] + l1 * b[:, 2] + l2 * cc[:, 2]
    ci, cj, z = ci[hit], cj[hit], z[hit]
    # crossing lies below every centre from index k upward
    k = np.floor((z - zs[0]) / sz).astype(np.int64) + 1
    k = np.clip(k, 0, nz)
    hist = np.zeros((nx, ny, nz + 1), dtype=np.int64)
    np.add.at(hist, (ci, cj, k), 1)
    below = np.cumsum(hist, axis=2)[:, :, :nz]
    return (below % 2) == 1


def overlap_grid(a: TriMesh, b: TriMesh, voxel_edge: float = DEFAULT_VOXEL_EDGE,
                 max_voxels: int = DEFAULT_MAX_VOXELS) -> VoxelOverlapGrid:
    if voxel_edge <= 0:
        raise ValueError("voxel_edge must be positive")
    alo, ahi = a.bounds
    blo, bhi = b.bounds
    lo = np.maximum(alo, blo)
    hi = np.minimum(ahi, bhi)
    (xs, sx), (ys, sy), (zs, sz) = (_axis_centers(lo[i], hi[i], voxel_edge) for i in range(3))
    spacing = np.array([sx, sy, sz])
    total = len(xs) * len(ys) * len(zs)
    if total > max_voxels:
        raise VoxelBudgetError(f"{total} voxels exceeds the cap of {max_voxels}")
    return VoxelOverlapGrid(
        voxel_edge,
        xs,
        ys,
        zs,
        voxel_occupancy(a, xs, ys, zs, spacing),
        voxel_occupancy(b, xs, ys, zs, spacing),
        spacing,
    )


def penetration_volume(a: TriMesh, b: TriMesh, voxel_edge: float = DEFAULT_VOXEL_EDGE,
                       max_voxels: int = DEFAULT_MAX_VOXELS) -> float:
    """Volume (mm^3) of voxels whose centres lie inside both meshes."""
    for m in (a, b):
        if not m.is_watertight:
            raise MeshError("penetration volume needs watertight meshes")
    return overlap_grid(a, b, voxel_edge, max_voxels).volume_mm3
