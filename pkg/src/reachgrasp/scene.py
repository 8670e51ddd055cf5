"""Scenes: an object resting on a receptacle above the ground plane z = 0.

Receptacles come in four procedural families. Each family is a union of
face-touching boxes, so every component is closed and the merged mesh is
watertight. All families open toward +x; the object sits near that side.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry.bvh import cast_brute
from .geometry.distance import signed_distances
from .geometry.io import read_obj, write_obj
from .geometry.mesh import (
    MeshError,
    TriMesh,
    box_mesh,
    centered_box,
    cylinder_mesh,
    icosphere,
    l_shape_mesh,
    merge_meshes,
    mirror_mesh,
    reflect_points,
)

RECEPTACLE_KINDS = ("table", "shelf", "open_box", "wall_cabinet")
PLACEMENT_GAP = 5e-5  # resting clearance left by drop_place (m)
PENETRATION_TOLERANCE = 1e-3
BOARD = 0.03  # panel thickness for procedural furniture


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) <= 0:
            raise SceneError("pose rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.array(d.get("rotation", np.eye(3))), np.array(d.get("translation", np.zeros(3))))


@dataclass(frozen=True)
class SceneConfig:
    object_mesh: str
    receptacle_mesh: str
    object_pose: RigidTransform = field(default_factory=RigidTransform)
    seed: int = 0
    handedness: str = "right"
    occluders: tuple[str, ...] = ()
    base_dir: str = "."

    def __post_init__(self):
        if self.handedness not in ("right", "left"):
            raise SceneError(f"handedness must be right or left, got {self.handedness!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise SceneError("seed must be a 64-bit unsigned integer")

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> dict:
        return {
            "object_mesh": self.object_mesh,
            "receptacle_mesh": self.receptacle_mesh,
            "object_pose": self.object_pose.to_dict(),
            "seed": int(self.seed),
            "handedness": self.handedness,
            "occluders": list(self.occluders),
        }

    @classmethod
    def from_json(cls, path) -> "SceneConfig":
        path = Path(path)
        d = json.loads(path.read_text(encoding="utf-8"))
        missing = {"object_mesh", "receptacle_mesh"} - set(d)
        if missing:
            raise SceneError(f"{path}: missing fields {sorted(missing)}")
        return cls(
            object_mesh=d["object_mesh"],
            receptacle_mesh=d["receptacle_mesh"],
            object_pose=RigidTransform.from_dict(d.get("object_pose", {})),
            seed=int(d.get("seed", 0)),
            handedness=d.get("handedness", "right"),
            occluders=tuple(d.get("occluders", ())),
            base_dir=str(path.parent),
        )

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Scene:
    object: TriMesh
    receptacle: TriMesh
    occluders: tuple[TriMesh, ...] = ()
    seed: int = 0
    handedness: str = "right"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def centroid(self) -> np.ndarray:
        return self.object.vertices.mean(axis=0)

    @property
    def object_height(self) -> float:
        return float(self.centroid[2])

    @property
    def blockers(self) -> TriMesh:
        """Receptacle plus extra occluders, used by the standing test."""
        if not self.occluders:
            return self.receptacle
        if "blockers" not in self._cache:
            self._cache["blockers"] = merge_meshes((self.receptacle,) + self.occluders)
        return self._cache["blockers"]

    def with_occluders(self, occluders) -> "Scene":
        return Scene(self.object, self.receptacle, tuple(occluders), self.seed, self.handedness)

    def mirrored(self, plane_point=None, plane_normal=(0.0, 1.0, 0.0)) -> "Scene":
        """Reflect every mesh; handedness flips with the reflection."""
        p = self.centroid if plane_point is None else np.asarray(plane_point, dtype=np.float64)
        flip = {"right": "left", "left": "right"}[self.handedness]
        return Scene(
            mirror_mesh(self.object, p, plane_normal),
            mirror_mesh(self.receptacle, p, plane_normal) if not self.receptacle.is_empty else self.receptacle,
            tuple(mirror_mesh(m, p, plane_normal) for m in self.occluders),
            self.seed,
            flip,
        )


def _empty_mesh() -> TriMesh:
    return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def load_scene(config: SceneConfig, require_watertight: bool = True) -> Scene:
    meshes = {}
    for name in ("object_mesh", "receptacle_mesh"):
        path = config.resolve(getattr(config, name))
        if not path.exists():
            raise FileNotFoundError(f"{name}: {path} does not exist")
        meshes[name] = read_obj(path)
    occ = []
    for p in config.occluders:
        path = config.resolve(p)
        if not path.exists():
            raise FileNotFoundError(f"occluder: {path} does not exist")
        occ.append(read_obj(path))
    obj = meshes["object_mesh"]
    if require_watertight and not obj.is_watertight:
        raise MeshError("object mesh must be watertight")
    pose = config.object_pose
    obj = obj.transformed(pose.rotation, pose.translation)
    if obj.vertices[:, 2].min() < -1e-9:
        raise SceneError("posed object lies below the ground plane")
    rec = meshes["receptacle_mesh"]
    if rec.is_watertight:
        sd = signed_distances(rec, obj.vertices)
        if sd.min() < -PENETRATION_TOLERANCE:
            raise SceneError(f"object penetrates receptacle by {-sd.min() * 1e3:.2f} mm")
    return Scene(obj, rec, tuple(occ), int(config.seed), config.handedness)


def drop_place(obj: TriMesh, receptacle: TriMesh, xy, gap: float = PLACEMENT_GAP) -> RigidTransform:
    """Translation that lowers ``obj`` onto the first support below it.

    ``xy`` gives the target centroid position in x and y. An optional third
    component is the release height of the object's lowest point; by default
    the object is released just above the receptacle's top.
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1)
    v = obj.vertices
    c = v.mean(axis=0)
    if len(xy) >= 3:
        release = xy[2]
    else:
        top = receptacle.vertices[:, 2].max() if not receptacle.is_empty else 0.0
        release = top + 0.01
    lift = np.array([xy[0] - c[0], xy[1] - c[1], release - v[:, 2].min()])
    start = v + lift
    down = np.array([0.0, 0.0, -1.0])
    drop = start[:, 2].copy()  # ground
    if not receptacle.is_empty:
        t, _ = receptacle.index.cast(start, down)
        drop = np.minimum(drop, t)
        # receptacle vertices under the object's footprint, cast upward
        up_t, _ = cast_brute(obj.translated(lift), receptacle.vertices, -down)
        below = receptacle.vertices[:, 2] <= start[:, 2].max()
        if np.any(np.isfinite(up_t) & below):
            drop = np.minimum(drop.min(), up_t[below].min())
    drop = float(np.min(drop))
    if not np.isfinite(drop) or drop < 0:
        raise SceneError("no support found under the requested position")
    return RigidTransform(np.eye(3), lift - np.array([0.0, 0.0, max(0.0, drop - gap)]))


# ------------------------------------------------------------- receptacles

def _positive(params: dict, *names):
    for n in names:
        if params[n] <= 0:
            raise SceneError(f"receptacle dimension {n} must be positive")


def _table(width=1.0, depth=1.0, height=0.75, top=0.04, leg=0.05) -> TriMesh:
    _positive(locals(), "width", "depth", "height", "top", "leg")
    if height <= top:
        raise SceneError("table height must exceed top thickness")
    hx, hy = width / 2, depth / 2
    parts = [box_mesh((-hx, -hy, height - top), (hx, hy, height))]
    for sx in (-1, 1):
        for sy in (-1, 1):
            x0 = hx - leg if sx > 0 else -hx
            y0 = hy - leg if sy > 0 else -hy
            parts.append(box_mesh((x0, y0, 0.0), (x0 + leg, y0 + leg, height - top)))
    return merge_meshes(parts)


def _cabinet_shell(width, depth, inner, z0, t=BOARD) -> list[TriMesh]:
    """Five boards around a cavity opening toward +x; cavity floor at ``z0``."""
    hy = width / 2
    x_back = -depth / 2
    x_front = depth / 2
    return [
        box_mesh((x_back, -hy, z0 - t), (x_front, hy, z0)),  # floor
        box_mesh((x_back, -hy, z0 + inner), (x_front, hy, z0 + inner + t)),  # roof
        box_mesh((x_back - t, -hy, z0 - t), (x_back, hy, z0 + inner + t)),  # back
        box_mesh((x_back, -hy - t, z0 - t), (x_front, -hy, z0 + inner + t)),  # side -y
        box_mesh((x_back, hy, z0 - t), (x_front, hy + t, z0 + inner + t)),  # side +y
    ]


def _shelf(width=0.8, depth=0.4, height=0.8, inner=0.35) -> TriMesh:
    _positive(locals(), "width", "depth", "height", "inner")
    if height <= BOARD:
        raise SceneError("shelf height must exceed board thickness")
    parts = _cabinet_shell(width, depth, inner, height)
    # solid plinth under the shelf floor, spanning the full footprint
    hy = width / 2
    parts.append(box_mesh((-depth / 2 - BOARD, -hy - BOARD, 0.0), (depth / 2, hy + BOARD, height - BOARD)))
    return merge_meshes(parts)


def _open_box(width=0.4, depth=0.4, height=0.75, wall=0.15) -> TriMesh:
    _positive(locals(), "width", "depth", "height", "wall")
    if height <= BOARD:
        raise SceneError("open_box height must exceed floor thickness")
    hx, hy, t = depth / 2, width / 2, BOARD
    z0 = height
    parts = [
        box_mesh((-hx - t, -hy - t, 0.0), (hx + t, hy + t, z0)),  # pedestal and floor
        box_mesh((-hx - t, -hy - t, z0), (-hx, hy + t, z0 + wall)),
        box_mesh((hx, -hy - t, z0), (hx + t, hy + t, z0 + wall)),
        box_mesh((-hx, -hy - t, z0), (hx, -hy, z0 + wall)),
        box_mesh((-hx, hy, z0), (hx, hy + t, z0 + wall)),
    ]
    return merge_meshes(parts)


def _wall_cabinet(width=0.8, depth=0.35, height=1.2, inner=0.35, wall_height=2.4, wall_width=3.0) -> TriMesh:
    _positive(locals(), "width", "depth", "height", "inner", "wall_height", "wall_width")
    parts = _cabinet_shell(width, depth, inner, height)
    x_back = -depth / 2 - BOARD
    hw = wall_width / 2
    parts.append(box_mesh((x_back - 0.1, -hw, 0.0), (x_back, hw, wall_height)))
    return merge_meshes(parts)


_FAMILIES = {"table": _table, "shelf": _shelf, "open_box": _open_box, "wall_cabinet": _wall_cabinet}


def make_receptacle(kind: str, params: dict | None = None, opening=(1.0, 0.0, 0.0)) -> TriMesh:
    """Procedural watertight receptacle.

    ``opening`` is a horizontal direction the open side of a shelf or cabinet
    faces (default +x); the mesh is rotated about z accordingly.
    """
    if kind not in _FAMILIES:
        raise SceneError(f"unknown receptacle kind {kind!r}; expected one of {RECEPTACLE_KINDS}")
    mesh = _FAMILIES[kind](**(params or {}))
    o = np.asarray(opening, dtype=np.float64)
    ang = np.arctan2(o[1], o[0])
    if abs(ang) > 0:
        c, s = np.cos(ang), np.sin(ang)
        mesh = mesh.transformed(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]))
    return mesh


def support_top(kind: str, params: dict | None = None) -> float:
    """Height of the surface an object rests on."""
    params = dict(params or {})
    defaults = {"table": 0.75, "shelf": 0.8, "open_box": 0.75, "wall_cabinet": 1.2}
    return float(params.get("height", defaults[kind]))


# ------------------------------------------------------------------ objects

OBJECT_KINDS = ("box", "sphere", "cylinder", "l_shape")


def make_object(kind: str = "box") -> TriMesh:
    """Desk-scale test objects, resting on z = 0 and centered in x and y."""
    if kind == "box":
        m = box_mesh((-0.035, -0.035, 0.0), (0.035, 0.035, 0.1))
    elif kind == "sphere":
        m = icosphere(0.04, 2, center=(0.0, 0.0, 0.04))
    elif kind == "cylinder":
        m = cylinder_mesh(0.035, 0.12, segments=24)
    elif kind == "l_shape":
        m = l_shape_mesh(0.1, 0.035, 0.07)
    else:
        raise SceneError(f"unknown object kind {kind!r}")
    c = m.vertices.mean(axis=0)
    return m.translated((-c[0], -c[1], -m.vertices[:, 2].min()))


def object_inset(kind: str, params: dict | None = None) -> np.ndarray:
    """Resting xy of the object: about 0.11 m in from the open side."""
    params = params or {}
    if kind == "table":
        return np.array([params.get("width", 1.0) / 2 - 0.11, 0.0])
    if kind == "shelf":
        return np.array([params.get("depth", 0.4) / 2 - 0.11, 0.0])
    if kind == "open_box":
        return np.array([params.get("depth", 0.4) / 2 - 0.10, 0.0])
    return np.array([params.get("depth", 0.35) / 2 - 0.11, 0.0])


def build_scene(kind: str, height: float | None = None, object_kind: str = "box",
                params: dict | None = None, handedness: str = "right", seed: int = 0,
                xy_offset=(0.0, 0.0)) -> tuple[Scene, RigidTransform]:
    """Procedural scene with the object dropped near the receptacle's open side."""
    params = dict(params or {})
    if height is not None:
        params["height"] = height
    rec = make_receptacle(kind, params)
    obj = make_object(object_kind)
    xy = object_inset(kind, params) + np.asarray(xy_offset, dtype=np.float64)
    z = support_top(kind, params) + 0.02
    pose = drop_place(obj, rec, (xy[0], xy[1], z))
    return Scene(obj.transformed(pose.rotation, pose.translation), rec, (), seed, handedness), pose


# Heights straddle the 0.7 m sign switch of the direction prior.
BATTERY_HEIGHTS = {
    "table": (0.45, 0.75, 1.0),
    "shelf": (0.45, 0.8, 1.15),
    "open_box": (0.45, 0.7, 0.95),
    "wall_cabinet": (0.85, 1.1, 1.35),
}


def battery_scenes(object_kind: str = "box") -> list[tuple[str, float, Scene]]:
    out = []
    for kind in RECEPTACLE_KINDS:
        for h in BATTERY_HEIGHTS[kind]:
            out.append((kind, h, build_scene(kind, h, object_kind)[0]))
    return out


def write_scene(directory, scene: Scene, pose: RigidTransform | None = None,
                native_object: TriMesh | None = None, seed: int | None = None) -> Path:
    """Write OBJ meshes and a scene.json that reloads to ``scene``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if native_object is None or pose is None:
        native_object, pose = scene.object, RigidTransform()
    write_obj(d / "object.obj", native_object)
    write_obj(d / "receptacle.obj", scene.receptacle)
    occ = []
    for i, m in enumerate(scene.occluders):
        name = f"occluder_{i}.obj"
        write_obj(d / name, m)
        occ.append(name)
    cfg = SceneConfig("object.obj", "receptacle.obj", pose, scene.seed if seed is None else seed,
                      scene.handedness, tuple(occ))
    cfg.write_json(d / "scene.json")
    return d / "scene.json"


__all__ = [
    "RECEPTACLE_KINDS", "OBJECT_KINDS", "BATTERY_HEIGHTS", "RigidTransform", "Scene", "SceneConfig",
    "SceneError", "battery_scenes", "build_scene", "drop_place", "load_scene", "make_object",
    "make_receptacle", "reflect_points", "support_top", "write_scene", "centered_box",
]
