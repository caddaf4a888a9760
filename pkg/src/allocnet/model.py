"""Problem and scenario containers, gain bounds, and scenario validation.

A problem couples N agents (cost, constraint set, demand) with a
communication digraph; feasible allocations satisfy sum_i x_i = sum_i d_i with
x_i in the agent's set.  A scenario adds everything a run needs: algorithm
choice, gains, initial conditions, step size, horizon, and demand events.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .costs import CostFunction
from .errors import DimensionMismatch
from .graph import Digraph, SpectralData, spectral_data
from .sets import Box, ConvexSet, WholeSpace

NONSMOOTH = "nonsmooth"
SMOOTH = "smooth"


@dataclass(frozen=True)
class Problem:
    """Agents, constraint sets, demands, and the communication digraph."""

    graph: Digraph
    costs: tuple[CostFunction, ...]
    sets: tuple[ConvexSet, ...]
    d: np.ndarray = field(repr=False)  # demands, shape (N, n)

    def __post_init__(self):
        costs = tuple(self.costs)
        sets = tuple(self.sets)
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        n_agents = self.graph.node_count
        if not (len(costs) == len(sets) == d.shape[0] == n_agents):
            raise DimensionMismatch("agent count mismatch between graph, costs, sets, d")
        dim = d.shape[1]
        for k, (f, s) in enumerate(zip(costs, sets)):
            if f.dimension != dim or s.dimension != dim:
                raise DimensionMismatch(f"agent {k}: resource dimension mismatch")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "d", d)

    @property
    def agent_count(self) -> int:
        return self.graph.node_count

    @property
    def dimension(self) -> int:
        return self.d.shape[1]

    @property
    def omega(self) -> float:
        """Network strong-convexity modulus: min over agents."""
        return min(f.omega for f in self.costs)

    @property
    def theta(self) -> float:
        """Network gradient Lipschitz constant: max over agents (smooth only)."""
        thetas = [f.theta for f in self.costs]
        if any(t is None for t in thetas):
            raise DimensionMismatch("theta undefined: some cost is nonsmooth")
        return max(thetas)

    def total_demand(self) -> np.ndarray:
        return self.d.sum(axis=0)

    def spectral(self) -> SpectralData:
        return spectral_data(self.graph)


@dataclass(frozen=True)
class Gains:
    """Controller gains; all must be positive."""

    k1: float
    k2: float
    k3: float

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0 and self.k3 > 0):
            raise DimensionMismatch("gains must be positive")


@dataclass(frozen=True)
class ResourceEvent:
    """Step change of one agent's demand at a given time."""

    time: float
    agent: int  # 0-based
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", np.atleast_1d(np.asarray(self.d, dtype=float)))


@dataclass(frozen=True)
class Scenario:
    """A fully specified run: problem, algorithm, gains, ICs, integrator, events."""

    problem: Problem
    algorithm: str
    gains: Gains
    x0: np.ndarray = field(repr=False)
    mu0: np.ndarray = field(repr=False)
    eta0: np.ndarray = field(repr=False)
    h: float = 1e-3
    horizon: float = 10.0
    record_every: int = 100
    events: tuple[ResourceEvent, ...] = ()

    def __post_init__(self):
        shape = self.problem.d.shape
        for name in ("x0", "mu0", "eta0"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} must have shape {shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "events", tuple(sorted(self.events, key=lambda e: e.time))
        )

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


def default_initial_state(problem: Problem):
    """Defaults: x(0) the projected demand, mu(0) = eta(0) = 0."""
    x0 = np.vstack([problem.sets[i].project(problem.d[i]) for i in range(problem.agent_count)])
    zeros = np.zeros_like(problem.d)
    return x0, zeros.copy(), zeros.copy()


def make_scenario(problem, algorithm, gains, x0=None, mu0=None, eta0=None, **kw) -> Scenario:
    dx0, dmu0, deta0 = default_initial_state(problem)
    return Scenario(
        problem=problem,
        algorithm=algorithm,
        gains=gains,
        x0=dx0 if x0 is None else x0,
        mu0=dmu0 if mu0 is None else mu0,
        eta0=deta0 if eta0 is None else eta0,
        **kw,
    )


def min_gains_nonsmooth(spec: SpectralData, omega: float):
    """Strict lower bounds on (k1, k2) for the projected nonsmooth dynamics.

    Returns (k1_min, k2_min, note): k1 must exceed ||L||^2 / (lambda2_hat *
    omega); k2_min is a function of the chosen k1 (k1^2 / lambda2_hat^2); any
    k3 > 0 works, which the note records.
    """
    k1_min = spec.laplacian_norm**2 / (spec.lambda2_hat * omega)

    def k2_min(k1: float) -> float:
        return k1**2 / spec.lambda2_hat**2

    return k1_min, k2_min, "any k3 > 0 is admissible"


def min_gains_smooth(spec: SpectralData, omega: float, theta: float):
    """Strict lower bounds on (k1, k2) for the smooth dynamics.

    k1 must exceed max(||L||^2 (omega+1) / (lambda2_hat omega^2) +
    theta^2/(2 omega), 1); k2_min is again k1^2 / lambda2_hat^2.
    """
    lam2 = spec.lambda2_hat
    k1_min = max(
        spec.laplacian_norm**2 * (omega + 1.0) / (lam2 * omega**2)
        + theta**2 / (2.0 * omega),
        1.0,
    )

    def k2_min(k1: float) -> float:
        return k1**2 / lam2**2

    return k1_min, k2_min, "any k3 > 0 is admissible"


def _supply_interval(problem: Problem):
    """Coordinate-wise [sum lower, sum upper] when sets are boxes/whole space.

    Returns None when some agent has a set without exact coordinate bounds
    (then the interior-feasibility check is skipped).
    """
    lo = np.zeros(problem.dimension)
    hi = np.zeros(problem.dimension)
    for s in problem.sets:
        if isinstance(s, Box):
            lo = lo + s.lower
            hi = hi + s.upper
        elif isinstance(s, WholeSpace):
            lo = lo - np.inf
            hi = hi + np.inf
        else:
            return None
    return lo, hi


def validate(scenario: Scenario) -> list[str]:
    """Check a scenario against the standing assumptions; return violations.

    Empty list means the run is covered by the convergence guarantees:
    balanced strongly connected graph, gains above their bounds, feasible
    initial allocation, zero initial eta sum, a stable step size, and demands
    that keep the problem strictly feasible (when checkable).
    """
    out: list[str] = []
    problem = scenario.problem
    try:
        spec = problem.spectral()
    except Exception as exc:  # graph violations make gain checks impossible
        out.append(f"graph: {exc}")
        spec = None

    if scenario.algorithm not in (NONSMOOTH, SMOOTH):
        out.append(f"algorithm must be '{NONSMOOTH}' or '{SMOOTH}', got {scenario.algorithm!r}")

    if scenario.algorithm == SMOOTH:
        for i, f in enumerate(problem.costs):
            if not f.smooth:
                out.append(f"agent {i + 1}: smooth algorithm requires a smooth cost")

    if spec is not None and scenario.algorithm in (NONSMOOTH, SMOOTH):
        omega = problem.omega
        if scenario.algorithm == NONSMOOTH:
            k1_min, k2_min, _ = min_gains_nonsmooth(spec, omega)
        else:
            try:
                k1_min, k2_min, _ = min_gains_smooth(spec, omega, problem.theta)
            except DimensionMismatch:
                k1_min, k2_min = None, None
        if k1_min is not None:
            if not scenario.gains.k1 > k1_min:
                out.append(
                    f"gain k1 = {scenario.gains.k1:g} is not above the required "
                    f"lower bound {k1_min:.12g}"
                )
            if not scenario.gains.k2 > k2_min(scenario.gains.k1):
                out.append(
                    f"gain k2 = {scenario.gains.k2:g} is not above the required "
                    f"lower bound {k2_min(scenario.gains.k1):.12g}"
                )
        # explicit-Euler stability guard with a 0.5 safety factor
        if scenario.h * scenario.gains.k2 * spec.laplacian_norm > 1.0:
            out.append(
                f"step h = {scenario.h:g} too large: h*k2*||L|| = "
                f"{scenario.h * scenario.gains.k2 * spec.laplacian_norm:.3g} exceeds 1"
            )

    for i in range(problem.agent_count):
        if not problem.sets[i].contains(scenario.x0[i], tol=1e-9):
            out.append(f"agent {i + 1}: initial allocation outside its constraint set")

    eta_sum = np.abs(scenario.eta0.sum(axis=0)).max()
    if eta_sum > 1e-12:
        out.append(f"initial eta must sum to zero across agents (|sum| = {eta_sum:.3g})")

    if scenario.h <= 0:
        out.append("step size h must be positive")
    if scenario.horizon < 0:
        out.append("horizon must be nonnegative")
    if scenario.record_every < 1:
        out.append("record_every must be a positive integer")

    demands = [problem.d.copy()]
    for ev in scenario.events:
        if not (0.0 <= ev.time <= scenario.horizon):
            out.append(f"event at t = {ev.time:g} outside [0, horizon]")
        if not (0 <= ev.agent < problem.agent_count):
            out.append(f"event references unknown agent {ev.agent + 1}")
            continue
        if ev.d.shape != (problem.dimension,):
            out.append(f"event demand for agent {ev.agent + 1} has wrong dimension")
            continue
        nxt = demands[-1].copy()
        nxt[ev.agent] = ev.d
        demands.append(nxt)

    interval = _supply_interval(problem)
    if interval is not None:
        lo, hi = interval
        for k, d in enumerate(demands):
            total = d.sum(axis=0)
            if not (np.all(lo < total) and np.all(total < hi)):
                stage = "initial demand" if k == 0 else f"demand after event {k}"
                out.append(
                    f"{stage}: total {np.array2string(total, precision=6)} not strictly "
                    f"inside the reachable supply interval"
                )
    return out
