"""Closed convex constraint sets and their projection operators.

Besides the Euclidean projection, each set supports the directional
derivative of the projection at a feasible point: the component of a velocity
that survives after removing outward normal directions.  For interior points
this is the identity; on the boundary, outward-pointing velocity along an
active normal is cancelled.  That operator is what keeps the nonsmooth
dynamics viable without leaving the set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, PointOutsideSet

# A coordinate/boundary is treated as active within this distance.
ACTIVE_TOL = 1e-9
# Finite-difference step for sets that only expose a projector.
FD_EPS = 1e-7


class ConvexSet:
    """Base class; subclasses implement project() and diff_project()."""

    dimension: int

    def project(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, u: np.ndarray, tol: float = ACTIVE_TOL) -> bool:
        """True when u is within distance tol of the set."""
        u = self._check(u)
        return bool(np.linalg.norm(u - self.project(u)) <= tol)

    def diff_project(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dimension,):
            raise DimensionMismatch(
                f"expected point of shape ({self.dimension},), got {u.shape}"
            )
        return u

    def _check_member(self, u) -> np.ndarray:
        u = self._check(u)
        if not self.contains(u, tol=ACTIVE_TOL):
            raise PointOutsideSet(f"point {u} lies outside the set")
        return u


@dataclass(frozen=True)
class Box(ConvexSet):
    """Axis-aligned box {u : lower <= u <= upper}; infinite bounds allowed."""

    lower: np.ndarray = field(repr=True)
    upper: np.ndarray = field(repr=True)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("box bounds must be 1-d arrays of equal length")
        if np.any(lo > hi):
            raise DimensionMismatch("box has empty coordinate range")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def project(self, u):
        return np.clip(self._check(u), self.lower, self.upper)

    def diff_project(self, u, v):
        u = self._check_member(u)
        v = self._check(v)
        out = v.copy()
        at_lower = u - self.lower <= ACTIVE_TOL
        at_upper = self.upper - u <= ACTIVE_TOL
        out[at_lower & (out < 0)] = 0.0
        out[at_upper & (out > 0)] = 0.0
        return out


@dataclass(frozen=True)
class Ball(ConvexSet):
    """Euclidean ball {u : ||u - center|| <= radius}."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.ndim != 1:
            raise DimensionMismatch("ball center must be a 1-d array")
        if not self.radius > 0:
            raise DimensionMismatch("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def project(self, u):
        u = self._check(u)
        diff = u - self.center
        dist = np.linalg.norm(diff)
        if dist <= self.radius:
            return u.copy()
        return self.center + diff * (self.radius / dist)

    def diff_project(self, u, v):
        u = self._check_member(u)
        v = self._check(v)
        diff = u - self.center
        dist = np.linalg.norm(diff)
        if abs(dist - self.radius) > ACTIVE_TOL:
            return v.copy()
        w = diff / dist  # outward unit normal; dist >= radius - tol > 0
        inner = float(v @ w)
        if inner <= 0:
            return v.copy()
        return v - inner * w


@dataclass(frozen=True)
class WholeSpace(ConvexSet):
    """Unconstrained agents: projection is the identity."""

    dim: int

    @property
    def dimension(self) -> int:
        return self.dim

    def project(self, u):
        return self._check(u).copy()

    def diff_project(self, u, v):
        self._check(u)
        return self._check(v).copy()


@dataclass(frozen=True)
class External(ConvexSet):
    """Set defined only through a user-supplied projector callable.

    The directional projection derivative falls back to the one-sided finite
    difference (project(u + eps*v) - u) / eps, which is exact in the limit for
    projections onto closed convex sets.
    """

    projector: Callable[[np.ndarray], np.ndarray]
    dim: int

    @property
    def dimension(self) -> int:
        return self.dim

    def project(self, u):
        p = np.asarray(self.projector(self._check(u)), dtype=float)
        if p.shape != (self.dim,):
            raise DimensionMismatch("external projector returned a wrong shape")
        return p

    def diff_project(self, u, v):
        u = self._check_member(u)
        v = self._check(v)
        return (self.project(u + FD_EPS * v) - u) / FD_EPS
