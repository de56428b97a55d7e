"""Shape representation, IO, patch extraction, decimation, and synthesis."""

from .mesh import (
    PointCloud,
    RegionMask,
    TriMesh,
    boundary_edges,
    detect_boundary,
    face_areas,
    normalize_area,
    submesh,
    surface_area,
    vertex_adjacency,
    vertex_areas,
)
from .io import load_shape, load_shape_file, read_off_scalars, write_off, write_ply_ascii
from .patch import geodesic_distances, geodesic_patch, mask_connected
from .decimate import decimate
from .family import ShapeFamily, load_family, synth_family
from .sample import sample_pointcloud

__all__ = [
    "PointCloud",
    "RegionMask",
    "TriMesh",
    "ShapeFamily",
    "boundary_edges",
    "decimate",
    "detect_boundary",
    "face_areas",
    "geodesic_distances",
    "geodesic_patch",
    "load_family",
    "load_shape",
    "load_shape_file",
    "mask_connected",
    "normalize_area",
    "read_off_scalars",
    "sample_pointcloud",
    "submesh",
    "surface_area",
    "synth_family",
    "vertex_adjacency",
    "vertex_areas",
    "write_off",
    "write_ply_ascii",
]
