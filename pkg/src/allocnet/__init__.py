"""Distributed resource allocation on weight-balanced digraphs.

Simulates two continuous-time allocation algorithms (a projected nonsmooth
flow for kinked costs with local constraint sets, and a smooth flow with a
guaranteed exponential rate), certifies their limits against the optimality
conditions, and ships an independent centralized oracle for ground truth.
"""

from .analysis import (
    KktReport,
    RateEstimate,
    estimate_rate,
    kkt_check,
    lyapunov_v1,
    lyapunov_v2,
    mismatch_series,
    theory_rate,
)
from .costs import (
    CostFunction,
    DispatchCost,
    LogCoshQuadratic,
    Quadratic,
    SaturatingQuadratic,
    SquaredDistance,
)
from .dynamics import (
    HAVE_KERNEL,
    NeighborMessage,
    NetworkState,
    Trajectory,
    agent_rhs_nonsmooth,
    agent_rhs_smooth,
    neighbor_messages,
    simulate,
    step,
)
from .graph import (
    Digraph,
    SpectralData,
    is_strongly_connected,
    is_weight_balanced,
    laplacian,
    spectral_data,
)
from .model import (
    Gains,
    Problem,
    ResourceEvent,
    Scenario,
    default_initial_state,
    make_scenario,
    min_gains_nonsmooth,
    min_gains_smooth,
    validate,
)
from .oracle import (
    OracleSolution,
    equilibrium_state,
    perturbation_margin,
    solve,
    solve_separable_bisection,
)
from .sets import Ball, Box, ConvexSet, External, WholeSpace

__version__ = "0.1.0"
