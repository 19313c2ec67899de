"""Directional H2-matrices for the Helmholtz kernel with algebraic recompression."""

from .dh2 import DH2Matrix, assemble_dh2, matvec, storage_report, to_dense
from .experiment import RunConfig, compare_modes, run_experiment
from .geometry import Box3, make_sphere_cloud, random_sphere_cloud
from .kernel import HelmholtzKernel, chebyshev_rule
from .recompress import TruncationControl, build_adaptive_basis
from .tree import build_block_tree, build_cluster_tree, build_directions
from .weights import approx_weights, basis_weights, norm_estimates

__all__ = [
    "Box3", "DH2Matrix", "HelmholtzKernel", "RunConfig", "TruncationControl",
    "approx_weights", "assemble_dh2", "basis_weights", "build_adaptive_basis",
    "build_block_tree", "build_cluster_tree", "build_directions", "chebyshev_rule",
    "compare_modes", "make_sphere_cloud", "matvec", "norm_estimates", "random_sphere_cloud",
    "run_experiment", "storage_report", "to_dense",
]
__version__ = "0.1.0"
