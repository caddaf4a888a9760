"""Digraph construction, validation, and spectral quantities."""

import numpy as np
import pytest

from allocnet.errors import DimensionMismatch, NotBalanced, NotStronglyConnected
from allocnet.graph import (
    Digraph,
    is_strongly_connected,
    is_weight_balanced,
    laplacian,
    spectral_data,
)

from conftest import random_balanced_graph


def test_from_edges_places_weight_at_receiver_row():
    g = Digraph.from_edges(3, [(0, 1, 2.5), (1, 2, 1.0), (2, 0, 0.5)])
    assert g.weights[1, 0] == 2.5
    assert g.weights[2, 1] == 1.0
    assert g.weights[0, 2] == 0.5
    assert g.weights.sum() == 4.0


def test_ring_is_balanced_and_strongly_connected():
    g = Digraph.ring(6)
    assert is_weight_balanced(g)
    assert is_strongly_connected(g)
    for i in range(6):
        assert g.weights[(i + 1) % 6, i] == 1.0


def test_laplacian_rows_and_columns_sum_to_zero_when_balanced():
    rng = np.random.default_rng(3)
    for _ in range(10):
        g = random_balanced_graph(rng, int(rng.integers(2, 9)))
        lap = laplacian(g)
        assert np.abs(lap.sum(axis=1)).max() < 1e-12
        assert np.abs(lap.sum(axis=0)).max() < 1e-12


def test_constructor_rejects_bad_matrices():
    with pytest.raises(DimensionMismatch):
        Digraph(3, np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        Digraph(2, np.array([[0.0, -1.0], [1.0, 0.0]]))
    with pytest.raises(DimensionMismatch):
        Digraph(2, np.array([[1.0, 1.0], [1.0, 0.0]]))


def test_unbalanced_graph_detected():
    # one-way chain: node 0 sends but never receives
    g = Digraph.from_edges(2, [(0, 1, 1.0)])
    assert not is_weight_balanced(g)
    with pytest.raises(NotBalanced):
        spectral_data(g)


def test_disconnected_graph_detected():
    # two disjoint 2-cycles: balanced but not strongly connected
    g = Digraph.from_edges(4, [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)])
    assert is_weight_balanced(g)
    assert not is_strongly_connected(g)
    with pytest.raises(NotStronglyConnected):
        spectral_data(g)


def test_single_node_has_no_second_eigenvalue():
    g = Digraph(1, np.zeros((1, 1)))
    with pytest.raises(DimensionMismatch):
        spectral_data(g)


def test_six_ring_spectral_closed_form():
    # unit directed cycle: Sym(L) eigenvalues are 1 - cos(2 pi k / 6),
    # so the second smallest is 0.5; ||L|| = max |1 - e^{i theta}| = 2
    spec = spectral_data(Digraph.ring(6))
    assert abs(spec.lambda2_hat - 0.5) < 1e-12
    assert abs(spec.laplacian_norm - 2.0) < 1e-12


def test_spectral_basis_is_orthonormal_completion():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        spec = spectral_data(random_balanced_graph(rng, n))
        assert spec.r.shape == (n,)
        assert spec.r_perp.shape == (n, n - 1)
        assert abs(spec.r @ spec.r - 1.0) < 1e-12
        assert np.allclose(spec.r, 1.0 / np.sqrt(n))
        q = np.column_stack([spec.r, spec.r_perp])
        assert np.abs(q.T @ q - np.eye(n)).max() < 1e-12
        proj = spec.r_perp @ spec.r_perp.T
        assert np.abs(proj - (np.eye(n) - np.outer(spec.r, spec.r))).max() < 1e-12


def test_random_balanced_graphs_have_positive_connectivity_eigenvalue():
    rng = np.random.default_rng(29)
    for _ in range(20):
        g = random_balanced_graph(rng, int(rng.integers(2, 9)))
        spec = spectral_data(g)
        assert spec.lambda2_hat > 1e-6
        assert spec.laplacian_norm > 0
