"""Directional interpolation for fast Helmholtz matrix-vector products."""

from .block_tree import AdmissibilityParams, BlockStatus, BlockTree, build_block_tree
from .cluster_tree import ClusterTree, build_cluster_tree, read_points
from .directions import DirectionTable, build_direction_table
from .engine import Operator, RunStats, matvec, setup, stats
from .geometry import AxisBox, SingularPointError, kernel, kernel_directional
from .oracle import dense_matvec, sampled_error

__all__ = [
    "AdmissibilityParams",
    "AxisBox",
    "BlockStatus",
    "BlockTree",
    "ClusterTree",
    "DirectionTable",
    "Operator",
    "RunStats",
    "SingularPointError",
    "build_block_tree",
    "build_cluster_tree",
    "build_direction_table",
    "dense_matvec",
    "kernel",
    "kernel_directional",
    "matvec",
    "read_points",
    "sampled_error",
    "setup",
    "stats",
]
