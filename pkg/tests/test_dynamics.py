"""Per-agent dynamics, the network integrator, and event handling."""

import inspect

import numpy as np
import pytest

from allocnet import model
from allocnet.costs import DispatchCost, SquaredDistance
from allocnet.dynamics import (
    NeighborMessage,
    NetworkState,
    Trajectory,
    agent_rhs_nonsmooth,
    agent_rhs_smooth,
    consensus_error_of,
    neighbor_messages,
    simulate,
    step,
)
from allocnet.errors import InfeasibleState, NotSmooth, ValidationFailed
from allocnet.graph import Digraph
from allocnet.sets import Box, WholeSpace

from conftest import (
    gains_above_bounds,
    random_box_instance,
    random_smooth_instance,
    stable_step,
)


def stacked_rhs(scenario, state):
    """Compose the network field from per-agent right sides and messages."""
    problem = scenario.problem
    rhs = agent_rhs_nonsmooth if scenario.algorithm == model.NONSMOOTH else agent_rhs_smooth
    dx = np.zeros_like(state.x)
    dmu = np.zeros_like(state.mu)
    deta = np.zeros_like(state.eta)
    for i in range(problem.agent_count):
        msgs = neighbor_messages(problem.graph, state.x, state.mu, state.eta, problem.d, i)
        dx[i], dmu[i], deta[i] = rhs(
            i, state.x[i], state.mu[i], state.eta[i], problem.d[i],
            msgs, scenario.gains, problem.costs[i], problem.sets[i],
        )
    return dx, dmu, deta


def test_zero_step_is_identity():
    rng = np.random.default_rng(0)
    problem, x0 = random_box_instance(rng, 3, 2)
    gains = gains_above_bounds(problem, model.NONSMOOTH)
    scen = model.make_scenario(problem, model.NONSMOOTH, gains, x0=x0)
    state = NetworkState(0.0, x0, np.zeros_like(x0), np.zeros_like(x0))
    out = step(state, scen, 0.0)
    assert np.array_equal(out.x, state.x)
    assert np.array_equal(out.mu, state.mu)
    assert np.array_equal(out.eta, state.eta)


def test_neighbor_messages_expose_only_multiplier_and_surplus():
    # the message type is the entire inter-agent interface
    assert set(NeighborMessage.__dataclass_fields__) == {"mu", "s"}
    g = Digraph.from_edges(3, [(0, 1, 2.0), (1, 2, 1.0), (2, 0, 1.0), (1, 0, 1.0)])
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 2))
    mu = rng.normal(size=(3, 2))
    eta = rng.normal(size=(3, 2))
    d = rng.normal(size=(3, 2))
    msgs = neighbor_messages(g, x, mu, eta, d, 0)
    # node 0 receives from 1 (weight via edge (1,0)) and from 2
    assert [a for a, _ in msgs] == [1.0, 1.0]
    m1 = msgs[0][1]
    assert np.array_equal(m1.mu, mu[1])
    assert np.array_equal(m1.s, eta[1] - x[1] + d[1])
    msgs2 = neighbor_messages(g, x, mu, eta, d, 1)
    assert [a for a, _ in msgs2] == [2.0]


def test_agent_rhs_signature_has_no_global_state():
    # per-agent right sides see local variables and messages, nothing else
    expected = ["i", "x_i", "mu_i", "eta_i", "d_i", "msgs", "gains", "cost", "cset"]
    assert list(inspect.signature(agent_rhs_nonsmooth).parameters) == expected
    assert list(inspect.signature(agent_rhs_smooth).parameters) == expected


def test_agent_rhs_consensus_terms_by_hand():
    gains = model.Gains(2.0, 3.0, 5.0)
    cost = SquaredDistance(np.array([0.0]), 1.0)
    cset = WholeSpace(1)
    x_i = np.array([1.0])
    mu_i = np.array([4.0])
    eta_i = np.array([0.5])
    d_i = np.array([2.0])
    msgs = [(1.5, NeighborMessage(mu=np.array([1.0]), s=np.array([0.25])))]
    dx, dmu, deta = agent_rhs_smooth(0, x_i, mu_i, eta_i, d_i, msgs, gains, cost, cset)
    s_i = 0.5 - 1.0 + 2.0
    assert dx[0] == 4.0 - 2.0  # mu - grad
    assert dmu[0] == 2.0 * s_i - 3.0 * 1.5 * (4.0 - 1.0)
    assert deta[0] == -5.0 * 1.5 * (s_i - 0.25)


def test_agent_rhs_guards():
    gains = model.Gains(1.0, 1.0, 1.0)
    box = Box(np.array([0.0]), np.array([1.0]))
    cost = SquaredDistance(np.array([0.0]), 1.0)
    with pytest.raises(InfeasibleState):
        agent_rhs_nonsmooth(0, np.array([2.0]), np.zeros(1), np.zeros(1), np.zeros(1),
                            [], gains, cost, box)
    kinked = DispatchCost(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(NotSmooth):
        agent_rhs_smooth(0, np.array([0.5]), np.zeros(1), np.zeros(1), np.zeros(1),
                         [], gains, kinked, WholeSpace(1))


@pytest.mark.parametrize("algorithm", [model.NONSMOOTH, model.SMOOTH])
def test_step_matches_composed_agent_right_sides(algorithm):
    # the vectorized integrator advances exactly the field the per-agent
    # right sides define: (step(h) - state) / h -> rhs as h -> 0
    rng = np.random.default_rng(42)
    if algorithm == model.SMOOTH:
        problem, x0 = random_smooth_instance(rng, 4, 2)
    else:
        problem, x0 = random_box_instance(rng, 4, 2)
    gains = gains_above_bounds(problem, algorithm)
    scen = model.make_scenario(problem, algorithm, gains, x0=x0)
    state = NetworkState(0.0, x0, rng.normal(size=x0.shape), np.zeros_like(x0))
    dx, dmu, deta = stacked_rhs(scen, state)
    h = 1e-8
    out = step(state, scen, h)
    scale = 1.0 + max(np.abs(dx).max(), np.abs(dmu).max(), np.abs(deta).max())
    assert np.abs((out.x - state.x) / h - dx).max() < 1e-5 * scale
    assert np.abs((out.mu - state.mu) / h - dmu).max() < 1e-5 * scale
    assert np.abs((out.eta - state.eta) / h - deta).max() < 1e-5 * scale


def test_projected_step_blocks_outward_motion_at_active_bounds():
    g = Digraph.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])
    costs = (SquaredDistance(np.array([0.0]), 1.0), SquaredDistance(np.array([0.0]), 1.0))
    sets = (Box(np.array([-1.0]), np.array([1.0])), Box(np.array([-0.2]), np.array([0.2])))
    problem = model.Problem(g, costs, sets, np.array([[0.5], [0.5]]))
    scen = model.make_scenario(problem, model.NONSMOOTH, model.Gains(5.0, 30.0, 1.0),
                               x0=np.array([[0.8], [0.2]]))
    # agent 2 sits at its upper bound with inward-pointing gradient force
    state = NetworkState(0.0, scen.x0, np.full((2, 1), 1.6), np.array([[0.3], [-0.3]]))
    out = step(state, scen, 1e-3)
    assert out.x[1, 0] <= 0.2


def test_hand_built_equilibrium_is_an_exact_fixed_point():
    # x* = (0.8, 0.2) with agent 2 pinned at its bound, mu* = 1.6 = grad f1(x1*)
    g = Digraph.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])
    costs = (SquaredDistance(np.array([0.0]), 1.0), SquaredDistance(np.array([0.0]), 1.0))
    sets = (Box(np.array([-1.0]), np.array([1.0])), Box(np.array([-0.2]), np.array([0.2])))
    problem = model.Problem(g, costs, sets, np.array([[0.5], [0.5]]))
    scen = model.make_scenario(problem, model.NONSMOOTH, model.Gains(5.0, 30.0, 1.0))
    x_star = np.array([[0.8], [0.2]])
    mu_star = np.full((2, 1), 1.6)
    eta_star = x_star - problem.d
    state = NetworkState(0.0, x_star, mu_star, eta_star)
    for _ in range(50):
        state = step(state, scen, 1e-3)
    assert np.array_equal(state.x, x_star)
    assert np.array_equal(state.mu, mu_star)
    assert np.array_equal(state.eta, eta_star)


def test_eta_sum_is_conserved_and_states_stay_feasible():
    rng = np.random.default_rng(9)
    for _ in range(5):
        problem, x0 = random_box_instance(rng, int(rng.integers(2, 7)), 1)
        gains = gains_above_bounds(problem, model.NONSMOOTH)
        scen = model.make_scenario(problem, model.NONSMOOTH, gains, x0=x0,
                                   h=stable_step(problem, gains), horizon=5.0)
        traj = simulate(scen)
        drift = np.abs(traj.eta.sum(axis=1) - traj.eta[0].sum(axis=0)).max()
        assert drift <= 1e-8
        for k in range(traj.sample_count):
            for i in range(problem.agent_count):
                assert problem.sets[i].contains(traj.x[k, i])


def test_sample_schedule_and_zero_horizon():
    rng = np.random.default_rng(14)
    problem, x0 = random_box_instance(rng, 2, 1)
    gains = gains_above_bounds(problem, model.NONSMOOTH)
    h = stable_step(problem, gains, cap=0.1)
    scen = model.make_scenario(problem, model.NONSMOOTH, gains, x0=x0,
                               h=h, horizon=10 * h, record_every=3)
    traj = simulate(scen)
    assert np.allclose(traj.times, h * np.array([0, 3, 6, 9, 10]))
    assert np.array_equal(traj.x[0], x0)
    snap = simulate(scen.with_overrides(horizon=0.0))
    assert snap.sample_count == 1
    assert snap.times[0] == 0.0
    assert np.array_equal(snap.x[0], x0)


def test_events_switch_demand_on_the_grid_with_continuous_state():
    g = Digraph.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])
    costs = (SquaredDistance(np.array([0.0]), 1.0), SquaredDistance(np.array([0.0]), 1.0))
    sets = (WholeSpace(1), WholeSpace(1))
    problem = model.Problem(g, costs, sets, np.array([[0.2], [0.2]]))
    ev = model.ResourceEvent(0.45, 0, np.array([0.6]))
    scen = model.make_scenario(problem, model.NONSMOOTH, model.Gains(2.0, 3.0, 1.0),
                               h=0.1, horizon=1.0, record_every=1, events=(ev,))
    traj = simulate(scen)
    # demand switches at the first grid time >= 0.45, i.e. t = 0.5
    assert traj.d[4, 0, 0] == 0.2
    assert traj.d[5, 0, 0] == 0.6
    assert traj.d[-1, 0, 0] == 0.6
    # state is continuous across the event: the new demand first feeds the
    # multiplier update, and reaches x one step later
    ref = simulate(scen.with_overrides(events=()))
    assert np.array_equal(traj.x[: 7], ref.x[: 7])
    assert np.array_equal(traj.mu[: 6], ref.mu[: 6])
    assert not np.array_equal(traj.mu[6], ref.mu[6])
    assert not np.array_equal(traj.x[7], ref.x[7])
    # mismatch series uses the demand in force at each sample
    assert np.allclose(traj.mismatch, traj.x.sum(axis=1) - traj.d.sum(axis=1))


def test_event_exactly_on_a_grid_point_applies_at_that_step():
    g = Digraph.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])
    costs = (SquaredDistance(np.array([0.0]), 1.0), SquaredDistance(np.array([0.0]), 1.0))
    problem = model.Problem(g, costs, (WholeSpace(1), WholeSpace(1)), np.array([[0.2], [0.2]]))
    ev = model.ResourceEvent(0.4, 0, np.array([0.6]))
    scen = model.make_scenario(problem, model.NONSMOOTH, model.Gains(2.0, 3.0, 1.0),
                               h=0.1, horizon=1.0, record_every=1, events=(ev,))
    traj = simulate(scen)
    assert traj.d[3, 0, 0] == 0.2
    assert traj.d[4, 0, 0] == 0.6


def test_trajectory_series_are_consistent_with_samples():
    rng = np.random.default_rng(21)
    problem, x0 = random_box_instance(rng, 3, 2)
    gains = gains_above_bounds(problem, model.NONSMOOTH)
    scen = model.make_scenario(problem, model.NONSMOOTH, gains, x0=x0,
                               h=stable_step(problem, gains), horizon=1.0)
    traj = simulate(scen)
    assert np.allclose(traj.mismatch, traj.x.sum(axis=1) - traj.d.sum(axis=1))
    k = traj.sample_count // 2
    mu_k = traj.mu[k]
    worst = max(
        float(np.linalg.norm(mu_k[i] - mu_k[j]))
        for i in range(3) for j in range(3)
    )
    assert abs(traj.consensus_error[k] - worst) < 1e-14
    assert abs(consensus_error_of(mu_k) - worst) < 1e-14
    total = sum(problem.costs[i].value(traj.x[k, i]) for i in range(3))
    assert abs(traj.cost[k] - total) < 1e-12
    st = traj.state(k)
    assert st.t == traj.times[k]
    assert np.array_equal(st.x, traj.x[k])
    fin = traj.final_state()
    assert fin.t == traj.times[-1]


def test_simulate_is_deterministic():
    rng = np.random.default_rng(33)
    problem, x0 = random_box_instance(rng, 4, 1)
    gains = gains_above_bounds(problem, model.NONSMOOTH)
    scen = model.make_scenario(problem, model.NONSMOOTH, gains, x0=x0,
                               h=stable_step(problem, gains), horizon=2.0)
    a = simulate(scen)
    b = simulate(scen)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.mu, b.mu) and np.array_equal(a.eta, b.eta)


def test_simulate_validates_unless_forced():
    rng = np.random.default_rng(37)
    problem, x0 = random_box_instance(rng, 3, 1)
    bad = model.Gains(1e-6, 1e-6, 1.0)  # far below the bounds
    scen = model.make_scenario(problem, model.NONSMOOTH, bad, x0=x0, h=1e-3, horizon=0.1)
    with pytest.raises(ValidationFailed) as err:
        simulate(scen)
    assert any("k1" in v for v in err.value.violations)
    traj = simulate(scen, force=True)
    assert isinstance(traj, Trajectory)


def three_ring_smooth_problem():
    g = Digraph.ring(3)
    costs = (
        SquaredDistance(np.array([1.0]), 1.0),
        SquaredDistance(np.array([-0.5]), 0.8),
        SquaredDistance(np.array([0.3]), 1.4),
    )
    sets = (WholeSpace(1),) * 3
    problem = model.Problem(g, costs, sets, np.array([[0.4], [0.1], [0.2]]))
    return problem, np.array([[1.5], [-1.0], [0.6]])


def run_final_state(problem, x0, algorithm, h, horizon):
    gains = gains_above_bounds(problem, algorithm)
    scen = model.make_scenario(problem, algorithm, gains, x0=x0, h=h,
                               horizon=horizon, record_every=10**9)
    return simulate(scen).final_state()


def convergence_ratio(problem, x0, algorithm):
    """Step-halving ratio of final-state differences; ~2^order for smooth fields."""
    finals = [
        np.concatenate([s.x.ravel(), s.mu.ravel(), s.eta.ravel()])
        for s in (
            run_final_state(problem, x0, algorithm, 2.0**-7, 1.0),
            run_final_state(problem, x0, algorithm, 2.0**-8, 1.0),
            run_final_state(problem, x0, algorithm, 2.0**-9, 1.0),
        )
    ]
    d1 = np.linalg.norm(finals[0] - finals[1])
    d2 = np.linalg.norm(finals[1] - finals[2])
    assert d2 > 0
    return d1 / d2


def test_smooth_integrator_is_fourth_order():
    problem, x0 = three_ring_smooth_problem()
    assert 10.0 < convergence_ratio(problem, x0, model.SMOOTH) < 22.0


def test_projected_integrator_is_first_order_on_smooth_interiors():
    # free sets keep the projection inactive, exposing the raw scheme order
    problem, x0 = three_ring_smooth_problem()
    assert 1.7 < convergence_ratio(problem, x0, model.NONSMOOTH) < 2.4
