"""brwlab: branching random walks on weighted graphs.

Simulation with site / generation / birth truncations, spectral
approximation of critical parameters through growing balls, block
coupling onto oriented percolation, and percolation experiments in
random environments.
"""

__version__ = "0.1.0"

from .graphs import (
    BoxProduct,
    CrossProduct,
    ExplicitGraph,
    GraphError,
    KernelMatrix,
    RestrictedGraph,
    TreeSRW,
    WeightedGraph,
    ZdStepKernel,
    ball_truncation,
    coordinate_projection,
    drift_walk,
    finite_box,
    horocycle_map,
    loop_graph,
    make_family,
    restrict_to_edges,
    simple_random_walk,
)

__all__ = [
    "__version__",
    "BoxProduct",
    "CrossProduct",
    "ExplicitGraph",
    "GraphError",
    "KernelMatrix",
    "RestrictedGraph",
    "TreeSRW",
    "WeightedGraph",
    "ZdStepKernel",
    "ball_truncation",
    "coordinate_projection",
    "drift_walk",
    "finite_box",
    "horocycle_map",
    "loop_graph",
    "make_family",
    "restrict_to_edges",
    "simple_random_walk",
]
