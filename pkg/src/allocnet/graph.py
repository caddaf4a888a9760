"""Directed communication graphs and the spectral quantities gain tuning needs.

Agents sit on a digraph with nonnegative weights ``a[i, j] > 0`` meaning agent
``i`` receives from agent ``j``.  The algorithms require the digraph to be
strongly connected and weight-balanced (in-degree equals out-degree at every
node); under those assumptions the symmetrized Laplacian is positive
semidefinite with a simple zero eigenvalue, and its second-smallest eigenvalue
drives the gain bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotBalanced, NotStronglyConnected

_BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class Digraph:
    """Weighted digraph on ``node_count`` nodes.

    ``weights[i, j]`` is the weight agent ``i`` places on information received
    from agent ``j``.  Self-loops are disallowed; weights are nonnegative.
    """

    node_count: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.node_count, self.node_count):
            raise DimensionMismatch(
                f"weight matrix shape {w.shape} does not match node count {self.node_count}"
            )
        if self.node_count < 1:
            raise DimensionMismatch("digraph needs at least one node")
        if np.any(w < 0):
            raise DimensionMismatch("edge weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise DimensionMismatch("self-loops are not allowed")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, node_count, edges):
        """Build from ``(sender, receiver, weight)`` triples, 0-indexed."""
        w = np.zeros((node_count, node_count))
        for j, i, a in edges:
            w[i, j] = a
        return cls(node_count, w)

    @classmethod
    def ring(cls, node_count, weight=1.0):
        """Directed cycle 0 -> 1 -> ... -> node_count-1 -> 0."""
        edges = [(i, (i + 1) % node_count, weight) for i in range(node_count)]
        return cls.from_edges(node_count, edges)


@dataclass(frozen=True)
class SpectralData:
    """Spectral quantities of a balanced, strongly connected digraph.

    ``lambda2_hat`` is the second-smallest eigenvalue of Sym(L) = (L + L^T)/2,
    ``laplacian_norm`` the spectral norm of L, ``r`` the normalized all-ones
    vector, and ``r_perp`` an orthonormal basis of its complement, so that
    ``[r, r_perp]`` is orthogonal and r_perp @ r_perp.T = I - (1/N) 11^T.
    """

    lambda2_hat: float
    laplacian_norm: float
    r: np.ndarray = field(repr=False)
    r_perp: np.ndarray = field(repr=False)


def laplacian(g: Digraph) -> np.ndarray:
    """In-degree Laplacian L = D_in - A."""
    return np.diag(g.weights.sum(axis=1)) - g.weights


def is_weight_balanced(g: Digraph, tol: float = _BALANCE_TOL) -> bool:
    """True when every node's in-degree equals its out-degree within tol."""
    return bool(np.max(np.abs(g.weights.sum(axis=1) - g.weights.sum(axis=0))) <= tol)


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    nxt.append(v)
        frontier = nxt
    return seen


def is_strongly_connected(g: Digraph) -> bool:
    """True when every ordered pair of nodes is joined by a directed path."""
    if g.node_count == 1:
        return True
    adj = g.weights > 0
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def spectral_data(g: Digraph) -> SpectralData:
    """Validate the graph and compute the quantities the gain bounds use.

    Raises
    ------
    NotBalanced / NotStronglyConnected
        When the graph fails the standing assumptions.
    DimensionMismatch
        For a single-node graph, where no second eigenvalue exists.
    """
    if not is_weight_balanced(g):
        raise NotBalanced("digraph is not weight-balanced")
    if not is_strongly_connected(g):
        raise NotStronglyConnected("digraph is not strongly connected")
    if g.node_count < 2:
        raise DimensionMismatch("spectral data requires at least two nodes")
    lap = laplacian(g)
    sym = 0.5 * (lap + lap.T)
    eigs = np.linalg.eigvalsh(sym)
    lam2 = float(eigs[1])
    norm = float(np.linalg.norm(lap, 2))
    n = g.node_count
    r = np.full(n, 1.0 / np.sqrt(n))
    # Orthonormal completion of r: QR of [r | I] and drop the first column.
    basis = np.eye(n)
    basis[:, 0] = r
    q, _ = np.linalg.qr(basis)
    # qr may flip signs; first column must stay r itself
    if q[0, 0] < 0:
        q = -q
    r_perp = q[:, 1:]
    return SpectralData(lambda2_hat=lam2, laplacian_norm=norm, r=r, r_perp=r_perp)
