"""Per-agent dynamics, the fixed-step network integrator, and engine selection.

Two algorithms are provided.  The nonsmooth one steers each allocation with a
projected velocity so the state never leaves its constraint set; the smooth
one runs the raw vector field (free agents, differentiable costs) and is
integrated with a classical 4-stage explicit scheme.  Agents exchange only
``NeighborMessage`` values: the neighbor's multiplier mu_j and its local
surplus signal s_j = eta_j - x_j + d_j.  Raw x_j or d_j never cross the
boundary.

Integration is deterministic: identical inputs give bit-identical
trajectories.  A compiled stepping kernel (allocnet._kernel) is used when it
is importable and the scenario's costs/sets have a kernel encoding; otherwise
a pure numpy loop runs the same arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import (
    DispatchCost,
    LogCoshQuadratic,
    Quadratic,
    SaturatingQuadratic,
    SquaredDistance,
)
from .errors import AllocError, InfeasibleState, ValidationFailed
from .graph import laplacian
from .model import NONSMOOTH, SMOOTH, Gains, Problem, Scenario, validate
from .sets import Box, WholeSpace

try:
    from . import _kernel

    HAVE_KERNEL = True
except ImportError:  # pure-Python install
    _kernel = None
    HAVE_KERNEL = False


@dataclass(frozen=True)
class NetworkState:
    """Stacked per-agent variables at one simulation time."""

    t: float
    x: np.ndarray = field(repr=False)  # (N, n)
    mu: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class NeighborMessage:
    """The only information an agent shares: its multiplier and surplus signal."""

    mu: np.ndarray
    s: np.ndarray


def neighbor_messages(graph, x, mu, eta, d, i):
    """Messages agent i receives: (weight, NeighborMessage) by ascending sender.

    The fixed sender order pins the reduction order of the neighbor sums,
    keeping results bit-deterministic.
    """
    out = []
    w = graph.weights
    for j in range(graph.node_count):
        if w[i, j] > 0.0:
            out.append((w[i, j], NeighborMessage(mu=mu[j].copy(), s=eta[j] - x[j] + d[j])))
    return out


def _consensus_terms(mu_i, s_i, msgs, gains):
    dmu = gains.k1 * s_i
    deta = np.zeros_like(s_i)
    for a, m in msgs:
        dmu = dmu - gains.k2 * a * (mu_i - m.mu)
        deta = deta - gains.k3 * a * (s_i - m.s)
    return dmu, deta


def agent_rhs_nonsmooth(i, x_i, mu_i, eta_i, d_i, msgs, gains, cost, cset):
    """Continuous-time right side for one agent of the nonsmooth algorithm.

    dx is the projected velocity: the raw velocity -g + mu with outward
    normal components removed at active constraints, so trajectories stay
    viable.  Only NeighborMessage data from in-neighbors enters.
    """
    if not cset.contains(x_i, tol=1e-7):
        raise InfeasibleState(f"agent {i + 1}: x outside its constraint set")
    g = cost.subgradient(x_i)
    dx = cset.diff_project(x_i, mu_i - g)
    s_i = eta_i - x_i + d_i
    dmu, deta = _consensus_terms(mu_i, s_i, msgs, gains)
    return dx, dmu, deta


def agent_rhs_smooth(i, x_i, mu_i, eta_i, d_i, msgs, gains, cost, cset):
    """Continuous-time right side for one agent of the smooth algorithm."""
    g = cost.gradient(x_i)  # raises NotSmooth on kinked costs
    dx = mu_i - g
    s_i = eta_i - x_i + d_i
    dmu, deta = _consensus_terms(mu_i, s_i, msgs, gains)
    return dx, dmu, deta


# ---------------------------------------------------------------------------
# vectorized single steps (shared by step() and the pure-Python engine)


def _eval_subgradients(costs, x, out):
    for i, f in enumerate(costs):
        out[i] = f.subgradient(x[i])


def _eval_gradients(costs, x, out):
    for i, f in enumerate(costs):
        out[i] = f.gradient(x[i])


def _project_rows(sets, x):
    for i, s in enumerate(sets):
        x[i] = s.project(x[i])


def _step_nonsmooth(problem, gains, lap, h, x, mu, eta, d, gbuf):
    """One projected explicit Euler step; returns new (x, mu, eta)."""
    _eval_subgradients(problem.costs, x, gbuf)
    s = eta - x + d
    x_new = x + h * (mu - gbuf)
    _project_rows(problem.sets, x_new)
    mu_new = mu + h * (gains.k1 * s - gains.k2 * (lap @ mu))
    eta_new = eta - (h * gains.k3) * (lap @ s)
    return x_new, mu_new, eta_new


def _field_smooth(problem, gains, lap, x, mu, eta, d, gbuf):
    _eval_gradients(problem.costs, x, gbuf)
    s = eta - x + d
    return mu - gbuf, gains.k1 * s - gains.k2 * (lap @ mu), -gains.k3 * (lap @ s)


def _step_smooth(problem, gains, lap, h, x, mu, eta, d, gbuf):
    """One classical 4-stage explicit step on the full smooth field."""
    f1 = _field_smooth(problem, gains, lap, x, mu, eta, d, gbuf)
    f2 = _field_smooth(
        problem, gains, lap,
        x + 0.5 * h * f1[0], mu + 0.5 * h * f1[1], eta + 0.5 * h * f1[2], d, gbuf,
    )
    f3 = _field_smooth(
        problem, gains, lap,
        x + 0.5 * h * f2[0], mu + 0.5 * h * f2[1], eta + 0.5 * h * f2[2], d, gbuf,
    )
    f4 = _field_smooth(
        problem, gains, lap,
        x + h * f3[0], mu + h * f3[1], eta + h * f3[2], d, gbuf,
    )
    w = h / 6.0
    return (
        x + w * (f1[0] + 2.0 * f2[0] + 2.0 * f3[0] + f4[0]),
        mu + w * (f1[1] + 2.0 * f2[1] + 2.0 * f3[1] + f4[1]),
        eta + w * (f1[2] + 2.0 * f2[2] + 2.0 * f3[2] + f4[2]),
    )


def step(state: NetworkState, scenario: Scenario, h: float) -> NetworkState:
    """Advance one step of size h (h = 0 returns an identical state)."""
    problem = scenario.problem
    lap = laplacian(problem.graph)
    gbuf = np.empty_like(state.x)
    stepper = _step_nonsmooth if scenario.algorithm == NONSMOOTH else _step_smooth
    x, mu, eta = stepper(
        problem, scenario.gains, lap, h,
        state.x.copy(), state.mu.copy(), state.eta.copy(), problem.d, gbuf,
    )
    return NetworkState(t=state.t + h, x=x, mu=mu, eta=eta)


# ---------------------------------------------------------------------------
# trajectories and the full integrator


@dataclass(frozen=True)
class Trajectory:
    """Recorded samples of a run plus derived per-sample series."""

    times: np.ndarray = field(repr=False)  # (S,)
    x: np.ndarray = field(repr=False)  # (S, N, n)
    mu: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)  # demands active at each sample
    mismatch: np.ndarray = field(repr=False)  # (S, n)
    consensus_error: np.ndarray = field(repr=False)  # (S,)
    cost: np.ndarray = field(repr=False)  # (S,)
    scenario: Scenario = field(repr=False)
    engine: str = "python"

    @property
    def sample_count(self) -> int:
        return self.times.shape[0]

    def state(self, k: int) -> NetworkState:
        return NetworkState(
            t=float(self.times[k]), x=self.x[k].copy(), mu=self.mu[k].copy(),
            eta=self.eta[k].copy(),
        )

    def final_state(self) -> NetworkState:
        return self.state(self.sample_count - 1)


def _max_pairwise_mu_gap(mu):
    # max over agent pairs of ||mu_i - mu_j||; N is small, O(N^2) is fine
    n_agents = mu.shape[0]
    worst = 0.0
    for i in range(n_agents):
        diff = mu[i + 1 :] - mu[i]
        if diff.size:
            worst = max(worst, float(np.sqrt((diff * diff).sum(axis=1)).max()))
    return worst


def consensus_error_of(mu: np.ndarray) -> float:
    """Largest pairwise multiplier disagreement max_{i,j} ||mu_i - mu_j||."""
    return _max_pairwise_mu_gap(np.atleast_2d(mu))


_COST_CODES = {
    Quadratic: 0,  # diagonal: q_1..q_n, b_1..b_n; full uses code 5
    DispatchCost: 1,  # gamma, beta, c
    SaturatingQuadratic: 2,  # a, weight
    LogCoshQuadratic: 3,  # scale, weight
    SquaredDistance: 4,  # weight, center_1..center_n
}


def _encode_cost(cost):
    """(kind, params) a compiled kernel can evaluate, or None."""
    if isinstance(cost, Quadratic):
        if cost.separable:
            return 0, list(np.diag(cost.Q)) + list(cost.b)
        return 5, list(cost.Q.ravel()) + list(cost.b)
    if isinstance(cost, DispatchCost):
        return 1, [cost.gamma, cost.beta, cost.c]
    if isinstance(cost, SaturatingQuadratic):
        return 2, [cost.a, cost.weight]
    if isinstance(cost, LogCoshQuadratic):
        return 3, [cost.scale, cost.weight]
    if isinstance(cost, SquaredDistance):
        return 4, [cost.weight] + list(cost.center)
    return None


def _encode_problem(problem: Problem):
    """Arrays the kernel consumes, or None when something is not encodable."""
    n_agents, dim = problem.d.shape
    kinds = np.zeros(n_agents, dtype=np.int32)
    rows = []
    for i, f in enumerate(problem.costs):
        enc = _encode_cost(f)
        if enc is None:
            return None
        kinds[i] = enc[0]
        rows.append(enc[1])
    width = max(len(r) for r in rows)
    params = np.zeros((n_agents, width))
    for i, r in enumerate(rows):
        params[i, : len(r)] = r
    lo = np.empty((n_agents, dim))
    hi = np.empty((n_agents, dim))
    for i, s in enumerate(problem.sets):
        if isinstance(s, Box):
            lo[i], hi[i] = s.lower, s.upper
        elif isinstance(s, WholeSpace):
            lo[i], hi[i] = -np.inf, np.inf
        else:
            return None
    return kinds, params, lo, hi


def resolve_engine(scenario: Scenario, engine: str = "auto") -> str:
    """Pick "compiled" or "python" for this scenario."""
    if engine == "python":
        return "python"
    plan = _encode_problem(scenario.problem) if HAVE_KERNEL else None
    if engine == "compiled":
        if not HAVE_KERNEL:
            raise AllocError("compiled engine requested but the extension is not built")
        if plan is None:
            raise AllocError("compiled engine cannot encode this scenario's costs/sets")
        return "compiled"
    if engine == "auto":
        return "compiled" if plan is not None else "python"
    raise AllocError(f"unknown engine {engine!r}")


def _event_step(time: float, h: float, total_steps: int) -> int:
    g = math.ceil(time / h - 1e-9)
    return min(max(g, 0), total_steps)


def simulate(scenario: Scenario, engine: str = "auto", force: bool = False) -> Trajectory:
    """Integrate a scenario from t=0 to the horizon and record samples.

    Demands change at each event's first grid time (state is continuous
    across events); samples land every record_every steps plus the final
    step.  Raises ValidationFailed unless force=True.
    """
    if not force:
        violations = validate(scenario)
        if violations:
            raise ValidationFailed(violations)
    chosen = resolve_engine(scenario, engine)

    problem = scenario.problem
    h = scenario.h
    total = int(round(scenario.horizon / h)) if scenario.horizon > 0 else 0
    rec = max(1, int(scenario.record_every))
    sample_count = len(range(0, total, rec)) + 1

    n_agents, dim = problem.d.shape
    times = np.empty(sample_count)
    rx = np.empty((sample_count, n_agents, dim))
    rmu = np.empty_like(rx)
    reta = np.empty_like(rx)
    rd = np.empty_like(rx)

    x = scenario.x0.copy()
    mu = scenario.mu0.copy()
    eta = scenario.eta0.copy()
    d = problem.d.copy()
    lap = laplacian(problem.graph)
    gbuf = np.empty_like(x)

    # segment boundaries: one per event (clamped to the grid), then the end
    cuts = []
    for ev in scenario.events:
        cuts.append((_event_step(ev.time, h, total), ev))
    cuts.sort(key=lambda c: c[0])

    if chosen == "compiled":
        kinds, params, lo, hi = _encode_problem(problem)
        smooth_flag = 0 if scenario.algorithm == NONSMOOTH else 1

    pos = 0
    g0 = 0

    def run_segment(g_start, g_end, pos):
        if g_end <= g_start:
            return pos
        start_pos = pos
        if chosen == "compiled":
            pos = _kernel.run_span(
                smooth_flag, lap, kinds, params, lo, hi, d, x, mu, eta,
                scenario.gains.k1, scenario.gains.k2, scenario.gains.k3, h,
                g_start, g_end, rec, times, rx, rmu, reta, pos,
            )
        else:
            advance = _step_nonsmooth if scenario.algorithm == NONSMOOTH else _step_smooth
            xs, ms, es = x, mu, eta
            for g in range(g_start, g_end):
                if g % rec == 0:
                    times[pos] = g * h
                    rx[pos], rmu[pos], reta[pos] = xs, ms, es
                    pos += 1
                xs, ms, es = advance(problem, scenario.gains, lap, h, xs, ms, es, d, gbuf)
            x[:], mu[:], eta[:] = xs, ms, es
        rd[start_pos:pos] = d
        return pos

    for g_cut, ev in cuts:
        pos = run_segment(g0, g_cut, pos)
        g0 = max(g0, g_cut)
        d[ev.agent] = ev.d
    pos = run_segment(g0, total, pos)

    # final sample at the last grid point
    times[pos] = total * h
    rx[pos], rmu[pos], reta[pos] = x, mu, eta
    rd[pos] = d
    pos += 1
    assert pos == sample_count

    mismatch = rx.sum(axis=1) - rd.sum(axis=1)
    cons = np.array([_max_pairwise_mu_gap(rmu[k]) for k in range(sample_count)])
    cost = np.array(
        [sum(f.value(rx[k, i]) for i, f in enumerate(problem.costs)) for k in range(sample_count)]
    )
    return Trajectory(
        times=times, x=rx, mu=rmu, eta=reta, d=rd,
        mismatch=mismatch, consensus_error=cons, cost=cost,
        scenario=scenario, engine=chosen,
    )
