"""Centralized reference solvers, independent of the distributed dynamics.

Two routes to the optimum of  min sum_i f_i(x_i)  s.t.  sum_i x_i = sum_i d_i,
x_i in the agent sets:

* ``solve``: dual ascent on the coupling multiplier mu in R^n.  Each inner
  problem min f_i(x) - mu.x over the agent's set is solved by a closed form
  where one exists (dispatch piecewise form, quadratics), by projected
  gradient for smooth costs, and by projected subgradient otherwise.

* ``solve_separable_bisection``: per-coordinate bisection on the scalar
  multiplier, using only zeroth-order (golden-section) inner minimization.
  Deliberately shares no machinery with ``solve`` so the two can check each
  other.

At a kink optimum the multiplier is not unique; the bisection route reports
the midpoint of the admissible multiplier interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import DispatchCost, Quadratic, SquaredDistance
from .errors import InfeasibleProblem, MaxIterations, NotSeparable
from .model import Problem
from .sets import Ball, Box, ConvexSet, WholeSpace

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OracleSolution:
    """Optimal allocation, common multiplier, and solve diagnostics."""

    x_star: np.ndarray = field(repr=False)  # (N, n)
    mu_star: np.ndarray = field(repr=False)  # (n,)
    dual_gap_estimate: float = 0.0
    iterations: int = 0


def equilibrium_state(problem: Problem, sol: OracleSolution):
    """The network equilibrium matching an oracle solution.

    mu* replicated to every agent and eta* = x* - d (the unique equilibrium
    value once eta sums to zero).
    """
    from .dynamics import NetworkState

    mu = np.tile(sol.mu_star, (problem.agent_count, 1))
    return NetworkState(t=0.0, x=sol.x_star.copy(), mu=mu, eta=sol.x_star - problem.d)


# ---------------------------------------------------------------------------
# inner argmin of f(x) - mu.x over one agent's set


def _interval_of(cset: ConvexSet):
    """(lo, hi) arrays when the set is an axis box; None otherwise."""
    if isinstance(cset, Box):
        return cset.lower, cset.upper
    if isinstance(cset, WholeSpace):
        dim = cset.dimension
        return np.full(dim, -np.inf), np.full(dim, np.inf)
    if isinstance(cset, Ball) and cset.dimension == 1:
        c, r = cset.center[0], cset.radius
        return np.array([c - r]), np.array([c + r])
    return None


def _argmin_dispatch(cost: DispatchCost, lo, hi, mu):
    # minimize gamma p^2 + beta |p - c| - mu p on [lo, hi]
    two_g = 2.0 * cost.gamma
    if mu[0] > two_g * cost.c + cost.beta:
        p = (mu[0] - cost.beta) / two_g
    elif mu[0] < two_g * cost.c - cost.beta:
        p = (mu[0] + cost.beta) / two_g
    else:
        p = cost.c
    return np.array([min(max(p, lo[0]), hi[0])])


def _argmin_agent(cost, cset, mu, x_init, inner_tol):
    box = _interval_of(cset)
    if isinstance(cost, DispatchCost) and box is not None:
        return _argmin_dispatch(cost, box[0], box[1], mu)
    if isinstance(cost, SquaredDistance) and box is not None:
        x = cost.center + mu / (2.0 * cost.weight)
        return np.clip(x, box[0], box[1])
    if isinstance(cost, Quadratic):
        x = np.linalg.solve(2.0 * cost.Q, mu - cost.b)
        if isinstance(cset, WholeSpace):
            return x
        if box is not None and cost.separable:
            return np.clip(x, box[0], box[1])
    if cost.smooth:
        return _pgd(cost, cset, mu, x_init, inner_tol)
    return _projected_subgradient(cost, cset, mu, x_init)


def _pgd(cost, cset, mu, x, tol, max_iter=200000):
    step = 1.0 / cost.theta
    for _ in range(max_iter):
        x_new = cset.project(x - step * (cost.gradient(x) - mu))
        if float(np.abs(x_new - x).max()) <= tol:
            return x_new
        x = x_new
    raise MaxIterations("inner projected gradient did not converge")


def _projected_subgradient(cost, cset, mu, x, max_iter=20000):
    # diminishing steps sized for strong convexity; track the best iterate
    best_x, best_v = x, cost.value(x) - float(mu @ x)
    for k in range(1, max_iter + 1):
        g = cost.subgradient(x) - mu
        x = cset.project(x - (2.0 / (cost.omega * (k + 1))) * g)
        v = cost.value(x) - float(mu @ x)
        if v < best_v:
            best_x, best_v = x, v
    return best_x


# ---------------------------------------------------------------------------
# primary oracle: dual ascent


def solve(problem: Problem, tol: float = 1e-8, max_iter: int = 200000) -> OracleSolution:
    """Dual ascent on mu; terminates when the aggregate residual is <= tol.

    The dual gradient is sum_i d_i - sum_i x_i(mu); its Lipschitz constant is
    sum_i 1/omega_i, whose inverse is a safe fixed step.
    """
    _check_slater(problem)
    target = problem.total_demand()
    mu = np.zeros(problem.dimension)
    inner_tol = max(min(tol * 1e-3, 1e-10), 1e-14)
    alpha = 1.0 / sum(1.0 / f.omega for f in problem.costs)
    x = np.vstack([problem.sets[i].project(problem.d[i]) for i in range(problem.agent_count)])
    residual = None
    for it in range(1, max_iter + 1):
        for i in range(problem.agent_count):
            x[i] = _argmin_agent(problem.costs[i], problem.sets[i], mu, x[i], inner_tol)
        residual = x.sum(axis=0) - target
        if float(np.abs(residual).max()) <= tol:
            gap = abs(float(mu @ residual))
            return OracleSolution(x_star=x.copy(), mu_star=mu.copy(),
                                  dual_gap_estimate=gap, iterations=it)
        mu = mu - alpha * residual
    raise MaxIterations(
        f"dual ascent stalled at residual {float(np.abs(residual).max()):.3e} after {max_iter} iterations"
    )


def _check_slater(problem: Problem) -> None:
    lo = np.zeros(problem.dimension)
    hi = np.zeros(problem.dimension)
    for s in problem.sets:
        box = _interval_of(s)
        if box is None:
            return  # cannot check exactly; assume the caller validated
        lo = lo + box[0]
        hi = hi + box[1]
    total = problem.total_demand()
    if not (np.all(lo < total) and np.all(total < hi)):
        raise InfeasibleProblem(
            f"total demand {total} outside the open reachable interval ({lo}, {hi})"
        )


# ---------------------------------------------------------------------------
# second oracle: coordinate-wise bisection with zeroth-order inners


def _golden_min(g, a, b, tol):
    """Golden-section minimum of a strictly unimodal g on [a, b]."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while (b - a) > tol:
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + GOLDEN * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def _bracket_min(g, s0):
    """Expand around s0 until the minimum of convex g is interior."""
    stride = 1.0
    a, b = s0 - stride, s0 + stride
    for _ in range(200):
        grew = False
        if g(a) <= g(a + 1e-9 * max(1.0, abs(a))):
            a -= stride
            stride *= 2.0
            grew = True
        if g(b) <= g(b - 1e-9 * max(1.0, abs(b))):
            b += stride
            stride *= 2.0
            grew = True
        if not grew:
            return a, b
    raise MaxIterations("could not bracket a 1-d minimum")


def _coordinate_argmin(cost, k, lo_k, hi_k, mu_k, anchor):
    """Minimize f(anchor with coord k = s) - mu_k * s over [lo_k, hi_k].

    Valid because separable costs decouple coordinate k from the anchor's
    other coordinates (their contribution is an additive constant).
    """
    work = anchor.copy()

    def g(s):
        work[k] = s
        return cost.value(work) - mu_k * s

    if np.isfinite(lo_k) and np.isfinite(hi_k):
        a, b = lo_k, hi_k
    else:
        a, b = _bracket_min(g, anchor[k])
        if b <= lo_k:  # unconstrained minimum below the box: lower bound wins
            return lo_k
        if a >= hi_k:
            return hi_k
        a, b = max(a, lo_k), min(b, hi_k)
    width = 1e-12 * max(1.0, abs(a), abs(b))
    return _golden_min(g, a, b, width)


def solve_separable_bisection(problem: Problem, tol: float = 1e-8) -> OracleSolution:
    """Independent oracle for coordinate-separable problems.

    For each resource coordinate, the aggregate best response sum_i x_ik(mu)
    is nondecreasing in the scalar multiplier; bisection finds where it meets
    the demand.  The reported multiplier is the midpoint of the interval that
    attains the demand within tol (kink optima leave a whole interval).
    """
    for i, f in enumerate(problem.costs):
        if not f.separable:
            raise NotSeparable(f"agent {i + 1} cost is not coordinate-separable")
    intervals = []
    for i, s in enumerate(problem.sets):
        box = _interval_of(s)
        if box is None:
            raise NotSeparable(f"agent {i + 1} set is not coordinate-decoupled")
        intervals.append(box)

    n_agents, dim = problem.d.shape
    anchors = [problem.sets[i].project(problem.d[i]) for i in range(n_agents)]
    x_star = np.empty((n_agents, dim))
    mu_star = np.empty(dim)
    iterations = 0

    for k in range(dim):
        target = float(problem.d[:, k].sum())

        def supply(mu_k):
            total = 0.0
            for i in range(n_agents):
                lo, hi = intervals[i]
                total += _coordinate_argmin(
                    problem.costs[i], k, lo[k], hi[k], mu_k, anchors[i]
                )
            return total

        lo_mu, hi_mu = -1.0, 1.0
        for _ in range(200):
            if supply(lo_mu) <= target + tol:
                break
            lo_mu *= 2.0
        else:
            raise InfeasibleProblem("demand below any reachable supply")
        for _ in range(200):
            if supply(hi_mu) >= target - tol:
                break
            hi_mu *= 2.0
        else:
            raise InfeasibleProblem("demand above any reachable supply")

        def bisect(pred, lo_b, hi_b):
            # smallest mu in [lo_b, hi_b] with pred(mu) true (pred monotone)
            nonlocal iterations
            for _ in range(200):
                if hi_b - lo_b <= 1e-12 * max(1.0, abs(lo_b), abs(hi_b)):
                    break
                mid = 0.5 * (lo_b + hi_b)
                iterations += 1
                if pred(mid):
                    hi_b = mid
                else:
                    lo_b = mid
            return hi_b

        eps = max(tol, 1e-12 * max(1.0, abs(target)))
        mu_lo = bisect(lambda m: supply(m) >= target - eps, lo_mu, hi_mu)
        mu_hi = -bisect(lambda m: supply(-m) <= target + eps, -hi_mu, -lo_mu)
        mu_star[k] = 0.5 * (mu_lo + mu_hi)
        for i in range(n_agents):
            lo, hi = intervals[i]
            x_star[i, k] = _coordinate_argmin(
                problem.costs[i], k, lo[k], hi[k], mu_star[k], anchors[i]
            )

    residual = x_star.sum(axis=0) - problem.total_demand()
    gap = abs(float(mu_star @ residual))
    return OracleSolution(
        x_star=x_star, mu_star=mu_star, dual_gap_estimate=gap, iterations=iterations
    )


# ---------------------------------------------------------------------------
# randomized optimality spot check


def perturbation_margin(problem: Problem, x_star: np.ndarray, rng, trials: int = 100,
                        size: float = 0.1):
    """Worst cost change over random feasible sum-preserving perturbations.

    Moves a random amount of one resource coordinate from one agent to
    another, staying inside both box sets.  Nonnegative margins certify local
    optimality along these directions; box/free sets only.
    """
    base = sum(f.value(x_star[i]) for i, f in enumerate(problem.costs))
    worst = np.inf
    n_agents, dim = problem.d.shape
    for _ in range(trials):
        i, j = rng.choice(n_agents, size=2, replace=False)
        k = int(rng.integers(dim))
        gives = _interval_of(problem.sets[i])
        takes = _interval_of(problem.sets[j])
        if gives is None or takes is None:
            raise NotSeparable("perturbation check needs box or free sets")
        room_up = min(gives[1][k] - x_star[i, k], x_star[j, k] - takes[0][k], size)
        room_dn = min(x_star[i, k] - gives[0][k], takes[1][k] - x_star[j, k], size)
        delta = rng.uniform(-room_dn, room_up) if room_up > -room_dn else 0.0
        cand = x_star.copy()
        cand[i, k] += delta
        cand[j, k] -= delta
        value = sum(f.value(cand[m]) for m, f in enumerate(problem.costs))
        worst = min(worst, value - base)
    return float(worst)
