"""Local cost functions: strongly convex, possibly with absolute-value kinks.

Each cost reports its strong-convexity modulus ``omega`` and, when smooth, a
gradient Lipschitz constant ``theta``; the gain bounds consume the network-wide
minimum omega and maximum theta.  Nonsmooth costs return a fixed subgradient
selection (sign(0) = 0 at kinks) and expose the full one-sided derivative
interval coordinate-wise so optimality checks do not depend on the selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotSmooth


class CostFunction:
    """Base class for agent costs f_i : R^n -> R."""

    dimension: int
    smooth: bool
    separable: bool
    omega: float  # strong convexity modulus (> 0)
    theta: float | None  # gradient Lipschitz constant; None when nonsmooth

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        """A fixed measurable selection from the subdifferential."""
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if not self.smooth:
            raise NotSmooth(f"{type(self).__name__} has kinks; use subgradient()")
        return self.subgradient(x)

    def subgradient_interval(self, x: np.ndarray):
        """Coordinate-wise one-sided derivative interval (g_minus, g_plus).

        Exact for separable costs; for smooth costs both ends equal the
        gradient.  Used by optimality checks on box-constrained problems.
        """
        g = self.subgradient(x)
        return g, g.copy()

    def subdifferential_residual(self, x: np.ndarray, target: np.ndarray) -> float:
        """Distance from ``target`` to the subdifferential at x.

        The default measures against the coordinate-wise interval, which is
        the exact distance for separable costs and ||grad f(x) - target|| for
        smooth ones.
        """
        x = self._check(x)
        target = np.asarray(target, dtype=float)
        gm, gp = self.subgradient_interval(x)
        return float(np.linalg.norm(np.clip(target, gm, gp) - target))

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise DimensionMismatch(
                f"expected point of shape ({self.dimension},), got {x.shape}"
            )
        return x


@dataclass(frozen=True)
class DispatchCost(CostFunction):
    """Scalar generation cost gamma*p^2 + beta*|p - c| + alpha.

    The |p - c| term models a preferred operating point c; gamma > 0 gives
    strong convexity 2*gamma.  Smooth only when beta = 0.
    """

    alpha: float
    beta: float
    gamma: float
    c: float

    def __post_init__(self):
        if self.gamma <= 0 or self.beta < 0:
            raise DimensionMismatch("dispatch cost needs gamma > 0 and beta >= 0")

    dimension = 1
    separable = True

    @property
    def smooth(self) -> bool:
        return self.beta == 0.0

    @property
    def omega(self) -> float:
        return 2.0 * self.gamma

    @property
    def theta(self) -> float | None:
        return 2.0 * self.gamma if self.beta == 0.0 else None

    def value(self, x):
        p = float(self._check(x)[0])
        return self.gamma * p * p + self.beta * abs(p - self.c) + self.alpha

    def subgradient(self, x):
        p = float(self._check(x)[0])
        return np.array([2.0 * self.gamma * p + self.beta * np.sign(p - self.c)])

    def subgradient_interval(self, x):
        p = float(self._check(x)[0])
        quad = 2.0 * self.gamma * p
        if abs(p - self.c) <= 1e-9:
            return np.array([quad - self.beta]), np.array([quad + self.beta])
        s = 1.0 if p > self.c else -1.0
        g = np.array([quad + s * self.beta])
        return g, g.copy()


@dataclass(frozen=True)
class Quadratic(CostFunction):
    """General quadratic x^T Q x + b^T x + const with Q symmetric positive definite."""

    Q: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    const: float = 0.0

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = 0.5 * (q + q.T)
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if q.shape != (b.shape[0], b.shape[0]):
            raise DimensionMismatch("Q and b sizes disagree")
        eigs = np.linalg.eigvalsh(q)
        if eigs[0] <= 0:
            raise DimensionMismatch("Q must be positive definite")
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_eig_min", float(eigs[0]))
        object.__setattr__(self, "_eig_max", float(eigs[-1]))

    smooth = True

    @property
    def dimension(self) -> int:
        return self.b.shape[0]

    @property
    def separable(self) -> bool:
        return bool(np.all(self.Q == np.diag(np.diag(self.Q))))

    @property
    def omega(self) -> float:
        return 2.0 * self._eig_min

    @property
    def theta(self) -> float:
        return 2.0 * self._eig_max

    def value(self, x):
        x = self._check(x)
        return float(x @ self.Q @ x + self.b @ x + self.const)

    def subgradient(self, x):
        x = self._check(x)
        return 2.0 * (self.Q @ x) + self.b


@dataclass(frozen=True)
class SquaredDistance(CostFunction):
    """weight * ||x - center||^2."""

    center: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.weight <= 0:
            raise DimensionMismatch("weight must be positive")
        object.__setattr__(self, "center", c)

    smooth = True
    separable = True

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    @property
    def omega(self) -> float:
        return 2.0 * self.weight

    @property
    def theta(self) -> float:
        return 2.0 * self.weight

    def value(self, x):
        d = self._check(x) - self.center
        return float(self.weight * (d @ d))

    def subgradient(self, x):
        return 2.0 * self.weight * (self._check(x) - self.center)


@dataclass(frozen=True)
class SaturatingQuadratic(CostFunction):
    """sum_k x_k^2 / (a x_k^2 + 1) + weight * ||x||^2.

    The rational terms saturate for large |x_k| (curvature dips to -1/2 at
    x_k^2 = 1/a) but the quadratic part keeps the sum strongly convex:
    omega = 2*weight - 1/2, theta = 2*weight + 2, independent of a.
    """

    dim: int
    a: float = 20.0
    weight: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or 2.0 * self.weight <= 0.5:
            raise DimensionMismatch("need a > 0 and weight > 0.25 for convexity")

    smooth = True
    separable = True

    @property
    def dimension(self) -> int:
        return self.dim

    @property
    def omega(self) -> float:
        return 2.0 * self.weight - 0.5

    @property
    def theta(self) -> float:
        return 2.0 * self.weight + 2.0

    def value(self, x):
        x = self._check(x)
        sq = x * x
        return float(np.sum(sq / (self.a * sq + 1.0)) + self.weight * np.sum(sq))

    def subgradient(self, x):
        x = self._check(x)
        den = self.a * x * x + 1.0
        return 2.0 * x / (den * den) + 2.0 * self.weight * x


@dataclass(frozen=True)
class LogCoshQuadratic(CostFunction):
    """sum_k log(exp(-scale*x_k) + exp(scale*x_k)) + weight * ||x||^2.

    The log-sum term is a smooth convex surrogate of scale*|x_k|; curvature
    stays in (0, scale^2], so omega = 2*weight and theta = 2*weight + scale^2.
    """

    dim: int
    scale: float = 0.05
    weight: float = 1.0

    def __post_init__(self):
        if self.scale <= 0 or self.weight <= 0:
            raise DimensionMismatch("scale and weight must be positive")

    smooth = True
    separable = True

    @property
    def dimension(self) -> int:
        return self.dim

    @property
    def omega(self) -> float:
        return 2.0 * self.weight

    @property
    def theta(self) -> float:
        return 2.0 * self.weight + self.scale * self.scale

    def value(self, x):
        x = self._check(x)
        t = self.scale * x
        # log(e^-t + e^t) = |t| + log1p(e^(-2|t|)), overflow-safe
        core = np.abs(t) + np.log1p(np.exp(-2.0 * np.abs(t)))
        return float(np.sum(core) + self.weight * np.sum(x * x))

    def subgradient(self, x):
        x = self._check(x)
        return self.scale * np.tanh(self.scale * x) + 2.0 * self.weight * x
