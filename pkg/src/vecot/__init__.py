"""Optimal transport distances and geodesics for scalar and vector-valued
densities on weighted graphs."""

from .entropy import FlowState, entropy, flow_rhs, integrate
from .estimators import TransportInterpolator, W1Distance
from .exceptions import (
    InputError,
    IOFailure,
    MaxIterationsExceeded,
    NumericalError,
    TransportError,
)
from .graph import (
    Graph,
    LayeredGraph,
    build_graph,
    complete_graph,
    div,
    grad,
    grid_graph,
    heat_step,
    laplacian,
    layered_product,
    path_graph,
)
from .solver import SolverConfig, SolveStats, pdhg_solve, project_continuity, prox_perspective
from .transport import (
    DistanceReport,
    MassDistribution,
    TransportProblem,
    Trajectory,
    VectorMass,
    assemble,
    continuity_residual,
    distance,
    geodesic_deviation,
    solve,
    w2a_max_symmetrized,
)
from .w1 import W1Result, w1_action, w1_graph, w1_vector

__version__ = "0.1.0"
