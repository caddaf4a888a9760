"""Exception types shared across the package."""


class AllocError(Exception):
    """Base class for all allocnet errors."""


class DimensionMismatch(AllocError):
    """Array shapes or agent counts are inconsistent."""


class NotBalanced(AllocError):
    """Digraph is not weight-balanced (in-degree != out-degree somewhere)."""


class NotStronglyConnected(AllocError):
    """Digraph is not strongly connected."""


class PointOutsideSet(AllocError):
    """A point handed to a set operation lies outside the set beyond tolerance."""


class InfeasibleState(AllocError):
    """A network state violates an agent's local constraint set."""


class NotSmooth(AllocError):
    """Gradient requested from a cost with kinks."""


class NotSeparable(AllocError):
    """Coordinate-wise solve requested for a non-separable cost."""


class GainTooSmall(AllocError):
    """Gains do not satisfy the lower bounds the analysis requires."""


class ValidationFailed(AllocError):
    """Scenario validation produced violations.

    The individual violation strings are kept in ``violations``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NotConverging(AllocError):
    """Trajectory error does not decay enough to fit a rate."""


class MaxIterations(AllocError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class InfeasibleProblem(AllocError):
    """No feasible allocation exists (total demand outside reachable supply)."""


class ConfigError(AllocError):
    """Scenario file is malformed or contains unknown keys."""
