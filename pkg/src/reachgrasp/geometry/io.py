"""OBJ import/export and PLY point clouds."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import MeshError, TriMesh


def read_obj(path) -> TriMesh:
    """ASCII OBJ with ``v`` and ``f`` records; polygons are fan-triangulated."""
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad vertex") from exc
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise MeshError(f"{path}: no vertices")
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_obj(path, mesh: TriMesh, header: str | None = None) -> None:
    lines = []
    if header:
        lines += [f"# {h}" for h in header.splitlines()]
    lines += [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ply_points(path, points: np.ndarray, colors: np.ndarray) -> None:
    """ASCII PLY point cloud with per-vertex uchar RGB."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    colors = np.clip(np.asarray(colors), 0, 255).astype(np.uint8).reshape(-1, 3)
    head = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    body = [
        f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])} {c[0]} {c[1]} {c[2]}" for p, c in zip(points, colors)
    ]
    Path(path).write_text("\n".join(head + body) + "\n", encoding="ascii")


def read_ply_points(path) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    n = 0
    start = 0
    for i, line in enumerate(lines):
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        if line == "end_header":
            start = i + 1
            break
    rows = np.array([list(map(float, l.split())) for l in lines[start:start + n]]).reshape(-1, 6)
    return rows[:, :3], rows[:, 3:].astype(np.uint8)


def heat_colors(values: np.ndarray) -> np.ndarray:
    """Blue (low) to red (high) ramp over min-max normalized values."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return np.zeros((0, 3), dtype=np.uint8)
    span = v.max() - v.min()
    t = (v - v.min()) / span if span > 0 else np.ones_like(v)
    r = 255 * t
    g = 255 * (1.0 - np.abs(2.0 * t - 1.0)) * 0.6
    b = 255 * (1.0 - t)
    return np.column_stack([r, g, b]).round().astype(np.uint8)
