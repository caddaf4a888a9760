"""Optimality certification, Lyapunov monitoring, and rate estimation.

A network state is optimal when the agents agree on a common multiplier, the
aggregate allocation meets the aggregate demand, and each agent's allocation
is stationary for its own cost under that multiplier (with one-sided slack at
active constraint bounds).  This module measures all three, evaluates the two
Lyapunov functions used to certify convergence, and fits empirical
exponential rates from trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GainTooSmall, NotConverging, PointOutsideSet
from .graph import SpectralData
from .model import SMOOTH, Gains, Problem
from .sets import Box

FEASIBILITY_TOL = 1e-7


@dataclass(frozen=True)
class KktReport:
    """Residuals of the optimality conditions at a given (x, mu)."""

    stationarity_residual: np.ndarray = field(repr=False)  # per agent, vs mean mu
    stationarity_residual_local: np.ndarray = field(repr=False)  # per agent, own mu_i
    mismatch: np.ndarray = field(repr=False)  # (n,)
    consensus_error: float = 0.0
    certified: bool = False
    tol: float = 0.0

    def summary_lines(self) -> list[str]:
        return [
            f"stationarity_residual_max: {float(self.stationarity_residual.max()):.6e}",
            f"mismatch_norm: {float(np.linalg.norm(self.mismatch)):.6e}",
            f"consensus_error: {self.consensus_error:.6e}",
            f"certified: {str(self.certified).lower()}",
            f"tolerance: {self.tol:g}",
        ]


def _stationarity_residual(problem: Problem, i: int, x_i, mu_vec) -> float:
    """Distance of mu_vec to the i-th subdifferential + normal cone at x_i."""
    cost, cset = problem.costs[i], problem.sets[i]
    if isinstance(cset, Box):
        gm, gp = cost.subgradient_interval(x_i)
        res = np.empty_like(x_i)
        at_lo = x_i - cset.lower <= 1e-9
        at_hi = cset.upper - x_i <= 1e-9
        for k in range(x_i.shape[0]):
            lo_ok = at_lo[k]
            hi_ok = at_hi[k]
            if lo_ok and hi_ok:
                res[k] = 0.0  # pinned coordinate: any multiplier is stationary
            elif lo_ok:
                # normal cone allows subgradients above mu
                res[k] = max(0.0, mu_vec[k] - gp[k])
            elif hi_ok:
                res[k] = max(0.0, gm[k] - mu_vec[k])
            else:
                res[k] = np.clip(mu_vec[k], gm[k], gp[k]) - mu_vec[k]
        return float(np.linalg.norm(res))
    if cost.smooth:
        # tangent component of mu - grad f: zero iff mu - grad f lies in the
        # normal cone at x_i
        return float(np.linalg.norm(cset.diff_project(x_i, mu_vec - cost.gradient(x_i))))
    # conservative fallback: fixed selection, interval where available
    return cost.subdifferential_residual(x_i, mu_vec)


def kkt_check(problem: Problem, x: np.ndarray, mu: np.ndarray, tol: float = 1e-4) -> KktReport:
    """Certify (x, mu) against the optimality conditions at tolerance tol.

    mu holds each agent's multiplier (N, n); the stationarity test uses their
    mean (the consensus representative) and, for reporting, each agent's own.
    Raises PointOutsideSet when some x_i is infeasible beyond a small slack.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    for i in range(problem.agent_count):
        if not problem.sets[i].contains(x[i], tol=FEASIBILITY_TOL):
            raise PointOutsideSet(f"agent {i + 1}: allocation outside its set")
    mu_bar = mu.mean(axis=0)
    res = np.array(
        [_stationarity_residual(problem, i, x[i], mu_bar) for i in range(problem.agent_count)]
    )
    res_local = np.array(
        [_stationarity_residual(problem, i, x[i], mu[i]) for i in range(problem.agent_count)]
    )
    mismatch = x.sum(axis=0) - problem.d.sum(axis=0)
    cons = 0.0
    for i in range(mu.shape[0]):
        diff = mu[i + 1 :] - mu[i]
        if diff.size:
            cons = max(cons, float(np.sqrt((diff * diff).sum(axis=1)).max()))
    certified = bool(
        res.max() <= tol and np.linalg.norm(mismatch) <= tol and cons <= tol
    )
    return KktReport(
        stationarity_residual=res,
        stationarity_residual_local=res_local,
        mismatch=mismatch,
        consensus_error=cons,
        certified=certified,
        tol=tol,
    )


def mismatch_series(traj, problem: Problem | None = None) -> np.ndarray:
    """Per-sample aggregate surplus sum_i x_i(t) - sum_i d_i(t)."""
    if traj.d is not None:
        return traj.x.sum(axis=1) - traj.d.sum(axis=1)
    return traj.x.sum(axis=1) - problem.d.sum(axis=0)


# ---------------------------------------------------------------------------
# Lyapunov functions


def _blocks(spec: SpectralData, value: np.ndarray, reference: np.ndarray):
    """Split value - reference into consensus and disagreement components.

    Returns (c1, c2): the projection onto the normalized all-ones direction
    (shape (n,)) and onto its orthogonal complement (shape (N-1, n)).
    """
    diff = value - reference
    return spec.r @ diff, spec.r_perp.T @ diff


def _sq(a) -> float:
    return float(np.sum(a * a))


def lyapunov_v1(state, equilibrium, spec: SpectralData, gains: Gains) -> float:
    """Energy of the nonsmooth algorithm around an equilibrium.

    (k1/2)(|e1|^2 + |e2|^2) + (1/2)(|xi1|^2 + |xi2|^2) + (1/(2 k3))|zeta2|^2
    in the rotated coordinates; zero exactly at the equilibrium.
    """
    e1, e2 = _blocks(spec, state.x, equilibrium.x)
    xi1, xi2 = _blocks(spec, state.mu, equilibrium.mu)
    _, z2 = _blocks(spec, state.eta, equilibrium.eta)
    return (
        0.5 * gains.k1 * (_sq(e1) + _sq(e2))
        + 0.5 * (_sq(xi1) + _sq(xi2))
        + _sq(z2) / (2.0 * gains.k3)
    )


def lyapunov_v2(state, equilibrium, spec: SpectralData, gains: Gains, omega: float) -> float:
    """Energy of the smooth algorithm; needs (omega+1) k1 / omega > 1."""
    lead = (omega + 1.0) * gains.k1 / omega - 1.0
    if lead <= 0:
        raise GainTooSmall(
            f"(omega+1) k1 / omega = {lead + 1.0:g} must exceed 1 for this energy"
        )
    e1, e2 = _blocks(spec, state.x, equilibrium.x)
    xi1, xi2 = _blocks(spec, state.mu, equilibrium.mu)
    _, z2 = _blocks(spec, state.eta, equilibrium.eta)
    c = (omega + 1.0) / (2.0 * omega)
    return (
        0.5 * lead * _sq(e1)
        + _sq(xi1) / (2.0 * omega)
        + c * (_sq(e2) + _sq(xi2) + _sq(z2))
        + 0.5 * _sq(e1 - xi1)
    )


def energy_matrix(agent_count: int, omega: float, k1: float) -> np.ndarray:
    """The quadratic form behind the smooth energy: V2 = (1/2) psi^T Phi psi.

    psi stacks (e1, e2, xi1, xi2, zeta2); the matrix couples only (e1, xi1)
    and weighs every disagreement block by (omega+1)/omega.
    """
    b = (omega + 1.0) / omega
    dim = 3 * agent_count - 1
    phi = np.eye(dim) * b
    phi[0, 0] = k1 * b
    i_xi1 = agent_count  # after e1 (1) and e2 (N-1)
    phi[0, i_xi1] = phi[i_xi1, 0] = -1.0
    return phi


def stacked_deviation(state, equilibrium, spec: SpectralData) -> np.ndarray:
    """psi = col(e1, e2, xi1, xi2, zeta2) as an (3N-1, n) array."""
    e1, e2 = _blocks(spec, state.x, equilibrium.x)
    xi1, xi2 = _blocks(spec, state.mu, equilibrium.mu)
    _, z2 = _blocks(spec, state.eta, equilibrium.eta)
    return np.vstack([e1[None, :], e2, xi1[None, :], xi2, z2])


def theory_rate(spec: SpectralData, gains: Gains, omega: float, theta: float,
                agent_count: int) -> float:
    """Guaranteed exponential rate of the smooth algorithm's deviation norm.

    rho / mu_max with rho = min(rho1, rho2, rho3, 1/2); raises GainTooSmall
    when the gain conditions leave some rho_i nonpositive.
    """
    lam2, norm = spec.lambda2_hat, spec.laplacian_norm
    rho1 = gains.k1 * omega - norm**2 * (omega + 1.0) / (lam2 * omega) - theta**2 / 2.0
    rho2 = (omega + 1.0) / omega * (gains.k2 * lam2 - gains.k1**2 / lam2)
    rho3 = lam2 * (omega + 1.0) / (2.0 * omega)
    rho = min(rho1, rho2, rho3, 0.5)
    if rho <= 0:
        raise GainTooSmall(f"rate constants not all positive: {rho1:g}, {rho2:g}, {rho3:g}")
    mu_max = float(np.linalg.eigvalsh(energy_matrix(agent_count, omega, gains.k1))[-1])
    return rho / mu_max


# ---------------------------------------------------------------------------
# empirical rate


@dataclass(frozen=True)
class RateEstimate:
    """Least-squares exponential rate fitted to a decaying trajectory."""

    slope: float
    r_squared: float
    theory_rate: float | None = None
    window: tuple[float, float] = (0.0, 0.0)


def deviation_series(traj, equilibrium) -> np.ndarray:
    """Full-state distance to the equilibrium at each sample."""
    dx = traj.x - equilibrium.x
    dm = traj.mu - equilibrium.mu
    de = traj.eta - equilibrium.eta
    return np.sqrt(
        (dx * dx).sum(axis=(1, 2)) + (dm * dm).sum(axis=(1, 2)) + (de * de).sum(axis=(1, 2))
    )


def estimate_rate(traj, equilibrium) -> RateEstimate:
    """Fit log-error decay over the window where error is in [1e-8, e0/10].

    Raises NotConverging when the final error is not below the initial one or
    the window holds fewer than two samples.
    """
    err = deviation_series(traj, equilibrium)
    e0 = float(err[0])
    if not float(err[-1]) < e0:
        raise NotConverging("final error is not below the initial error")
    mask = (err >= 1e-8) & (err <= e0 / 10.0)
    if int(mask.sum()) < 2:
        raise NotConverging("fewer than two samples in the fitting window")
    t = traj.times[mask]
    y = np.log(err[mask])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot

    rate = None
    scen = getattr(traj, "scenario", None)
    if scen is not None and scen.algorithm == SMOOTH:
        problem = scen.problem
        try:
            rate = theory_rate(
                problem.spectral(), scen.gains, problem.omega, problem.theta,
                problem.agent_count,
            )
        except Exception:
            rate = None
    return RateEstimate(
        slope=float(slope),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        theory_rate=rate,
        window=(float(t[0]), float(t[-1])),
    )
