from .bvh import AccelIndex, HitRecord, Ray, cast_brute, ray_cast, segments_hit
from .distance import (
    closest_points,
    closest_surface_point,
    inside_mask,
    signed_distance,
    signed_distances,
    winding_numbers,
)
from .io import read_obj, write_obj, write_ply_points
from .mesh import (
    MeshError,
    TriMesh,
    box_mesh,
    capsule_mesh,
    centered_box,
    cylinder_mesh,
    extrude_polygon,
    icosphere,
    l_shape_mesh,
    merge_meshes,
    mesh_volume,
    mirror_mesh,
    reflect_points,
    reflection_matrix,
)
from .sphere import sphere_directions
from .volume import VoxelBudgetError, VoxelOverlapGrid, overlap_grid, penetration_volume

__all__ = [
    "AccelIndex", "HitRecord", "Ray", "cast_brute", "ray_cast", "segments_hit",
    "closest_points", "closest_surface_point", "inside_mask", "signed_distance",
    "signed_distances", "winding_numbers", "read_obj", "write_obj", "write_ply_points",
    "MeshError", "TriMesh", "box_mesh", "capsule_mesh", "centered_box", "cylinder_mesh",
    "extrude_polygon", "icosphere", "l_shape_mesh", "merge_meshes", "mesh_volume",
    "mirror_mesh", "reflect_points", "reflection_matrix", "sphere_directions",
    "VoxelBudgetError", "VoxelOverlapGrid", "overlap_grid", "penetration_volume",
]
