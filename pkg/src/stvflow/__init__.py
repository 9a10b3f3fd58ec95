"""Adaptive space-time finite elements for regularized stochastic total variation flow."""

from .config import RunConfig, ConfigError, tolerance_level
from .mesh import Mesh, MeshError, macro_mesh, from_root_triangulation, refine, coarsen

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "ConfigError",
    "tolerance_level",
    "Mesh",
    "MeshError",
    "macro_mesh",
    "from_root_triangulation",
    "refine",
    "coarsen",
]
