"""Triangulated closed surfaces with discrete conformal metrics."""

from .io import Topology, build_topology, icosphere, read_mesh, read_obj, read_off, read_vertex_csv
from .state import MeshSolverError, MeshState

__all__ = [
    "MeshSolverError",
    "MeshState",
    "Topology",
    "build_topology",
    "icosphere",
    "read_mesh",
    "read_obj",
    "read_off",
    "read_vertex_csv",
]
