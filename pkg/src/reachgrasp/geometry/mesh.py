"""Triangle meshes: container, procedural primitives, rigid transforms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEGENERATE_AREA = 1e-12


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh in world meters (+z up).

    ``labels`` is an optional per-vertex integer array (e.g. component ids).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    labels: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(lab) != len(v):
                raise MeshError("labels must be per-vertex")
            object.__setattr__(self, "labels", lab)
        if len(t):
            areas = self.triangle_areas
            if np.any(areas <= DEGENERATE_AREA):
                raise MeshError(f"degenerate triangle (area <= {DEGENERATE_AREA} m^2)")

    @property
    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner coordinates."""
        if "corners" not in self._cache:
            c = self.vertices[self.triangles]
            c.setflags(write=False)
            self._cache["corners"] = c
        return self._cache["corners"]

    @property
    def triangle_normals(self) -> np.ndarray:
        if "normals" not in self._cache:
            c = self.corners
            n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
            n = n / np.linalg.norm(n, axis=1, keepdims=True)
            self._cache["normals"] = n
        return self._cache["normals"]

    @property
    def triangle_areas(self) -> np.ndarray:
        c = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    @property
    def is_watertight(self) -> bool:
        """Every edge is shared by exactly two oppositely oriented triangles.

        Topology is read from the vertex indices, so separate closed parts
        that merely touch (e.g. furniture boards) still qualify.
        """
        if "watertight" not in self._cache:
            self._cache["watertight"] = _watertight(self.vertices, self.triangles)
        return self._cache["watertight"]

    @property
    def index(self):
        """Lazily built bounding-volume hierarchy (see :mod:`reachgrasp.geometry.bvh`)."""
        if "index" not in self._cache:
            from .bvh import AccelIndex

            self._cache["index"] = AccelIndex(self)
        return self._cache["index"]

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def transformed(self, rotation: np.ndarray | None = None, translation=None) -> "TriMesh":
        v = self.vertices
        if rotation is not None:
            rotation = np.asarray(rotation, dtype=np.float64)
            v = v @ rotation.T
            if np.linalg.det(rotation) < 0:
                return TriMesh(v + _vec(translation), self.triangles[:, ::-1], self.labels)
        return TriMesh(v + _vec(translation), self.triangles, self.labels)

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + _vec(offset), self.triangles, self.labels)


def _vec(x) -> np.ndarray:
    if x is None:
        return np.zeros(3)
    return np.asarray(x, dtype=np.float64).reshape(3)


def _watertight(vertices: np.ndarray, triangles: np.ndarray) -> bool:
    if len(triangles) == 0:
        return False
    t = triangles
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        return False
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    # each directed edge exactly once, and its reverse exactly once
    d_unique, d_counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(d_counts != 1):
        return False
    fwd = {tuple(e) for e in d_unique}
    return all((b, a) in fwd for a, b in d_unique)


def merge_meshes(meshes: Iterable[TriMesh]) -> TriMesh:
    meshes = list(meshes)
    if not meshes:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts, tris, labels = [], [], []
    offset = 0
    for k, m in enumerate(meshes):
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        labels.append(np.full(len(m.vertices), k) if m.labels is None else m.labels)
        offset += len(m.vertices)
    return TriMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(labels))


def mesh_volume(mesh: TriMesh) -> float:
    """Enclosed volume by the divergence theorem (closed, outward-wound mesh)."""
    c = mesh.corners
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def reflection_matrix(normal) -> np.ndarray:
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    return np.eye(3) - 2.0 * np.outer(n, n)


def reflect_points(points, plane_point, plane_normal) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    n = np.asarray(plane_normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    q = np.asarray(plane_point, dtype=np.float64)
    return p - 2.0 * ((p - q) @ n)[..., None] * n


def mirror_mesh(mesh: TriMesh, plane_point, plane_normal) -> TriMesh:
    """Reflect ``mesh`` across a plane; winding is flipped so normals stay outward."""
    v = reflect_points(mesh.vertices, plane_point, plane_normal)
    return TriMesh(v, mesh.triangles[:, [0, 2, 1]], mesh.labels)


# ---------------------------------------------------------------- primitives

_BOX_TRIS = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # -z
        [4, 5, 6], [4, 6, 7],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [3, 7, 6], [3, 6, 2],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ]
)


def box_mesh(lo, hi) -> TriMesh:
    """Axis-aligned box between corners ``lo`` and ``hi``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi - lo <= 0):
        raise MeshError("box needs positive extent on every axis")
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ]
    )
    return TriMesh(v, _BOX_TRIS.copy())


def centered_box(size, center=(0.0, 0.0, 0.0)) -> TriMesh:
    size = np.asarray(size, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    return box_mesh(center - size / 2, center + size / 2)


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(v, np.array(faces))


def triangulate_polygon(poly: np.ndarray) -> np.ndarray:
    """Ear-clipping triangulation of a simple counter-clockwise 2D polygon."""
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area <= 0:
        raise MeshError("polygon must be counter-clockwise and non-degenerate")
    idx = list(range(n))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n * n:
            raise MeshError("ear clipping failed; polygon not simple")
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 0:
                continue
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if inside:
                continue
            tris.append((i0, i1, i2))
            idx.pop(k)
            break
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)


def extrude_polygon(poly: Sequence[Sequence[float]], z0: float, z1: float) -> TriMesh:
    """Watertight prism from a simple CCW polygon in the xy-plane."""
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    caps = triangulate_polygon(poly)
    bottom = np.column_stack([poly, np.full(n, z0)])
    top = np.column_stack([poly, np.full(n, z1)])
    v = np.concatenate([bottom, top])
    tris = [caps[:, ::-1], caps + n]
    side = []
    for i in range(n):
        j = (i + 1) % n
        side += [(i, j, n + j), (i, n + j, n + i)]
    tris.append(np.array(side))
    return TriMesh(v, np.concatenate(tris))


def cylinder_mesh(radius: float, height: float, segments: int = 24, base=(0.0, 0.0, 0.0)) -> TriMesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    poly = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    base = np.asarray(base, dtype=np.float64)
    return extrude_polygon(poly, 0.0, height).translated(base)


def l_shape_mesh(size: float = 0.12, thickness: float = 0.04, height: float = 0.06) -> TriMesh:
    """L-shaped prism resting on z=0, corner at the origin (asymmetric test object)."""
    s, t = size, thickness
    poly = [(0, 0), (s, 0), (s, t), (t, t), (t, s), (0, s)]
    return extrude_polygon(poly, 0.0, height)


def capsule_mesh(a, b, radius: float, segments: int = 12, rings: int = 4) -> TriMesh:
    """Closed triangulated capsule around segment a-b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    axis = b - a
    length = np.linalg.norm(axis)
    w = axis / length if length > 1e-12 else np.array([0.0, 0.0, 1.0])
    ref = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(w, ref)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    # latitude rings from the -w pole to the +w pole
    lat = np.concatenate(
        [
            np.linspace(-np.pi / 2, 0, rings + 1)[1:],
            np.linspace(0, np.pi / 2, rings + 1)[:-1],
        ]
    )
    ang = 2 * np.pi * np.arange(segments) / segments
    verts = [a - radius * w]
    for k, phi in enumerate(lat):
        centre = a if k < rings else b
        ring = (
            centre
            + radius * np.sin(phi) * w
            + radius * np.cos(phi) * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
        )
        verts.extend(ring)
    verts.append(b + radius * w)
    verts = np.array(verts)
    tris = []
    nr = len(lat)
    for j in range(segments):
        tris.append((0, 1 + (j + 1) % segments, 1 + j))
    for k in range(nr - 1):
        r0 = 1 + k * segments
        r1 = r0 + segments
        for j in range(segments):
            j1 = (j + 1) % segments
            tris.append((r0 + j, r0 + j1, r1 + j1))
            tris.append((r0 + j, r1 + j1, r1 + j))
    top = len(verts) - 1
    last = 1 + (nr - 1) * segments
    for j in range(segments):
        tris.append((last + j, last + (j + 1) % segments, top))
    return TriMesh(verts, np.array(tris))


def points_in_aabb(points: np.ndarray, lo: np.ndarray, hi: np.ndarray, pad: float = 0.0) -> np.ndarray:
    return np.all((points >= lo - pad) & (points <= hi + pad), axis=-1)
