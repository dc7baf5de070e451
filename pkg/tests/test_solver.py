import dataclasses
import math

import numpy as np
import pytest

from robustloc.core import CORNER_ANCHORS, Network, build_topology
from robustloc.loss import LossKind, network_cost
from robustloc.measurement import MeasurementSet, NoiseModel, noiseless, synthesize
from robustloc.solver import (STAGE1_DEFAULT, STAGE2_DEFAULT, DivergenceError, EstimateState,
                              Schedule, StageConfig, Termination, centroid_init, choose_alpha2,
                              gaussian_init, node_update, run_stage, solve_two_stage)

RH1 = StageConfig(LossKind.RELAXED_HUBER, 0.04, 2.0, 50, 0.0)


def _instance(seed, n=12, pn=0.5, radius=math.inf):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.uniform(0, 10, (n, 2)), CORNER_ANCHORS])
    net = build_topology(pts, radius, 4)
    ms = synthesize(net, NoiseModel(0.5, pn, 10.0), rng.integers(2**31))
    init = gaussian_init(net, 10.0, rng.integers(2**31))
    return net, ms, init


def _views(net, P, i):
    return {j: P[j] for j in net.neighbors(i)}


# -- node_update ------------------------------------------------------------------

def test_node_update_one_step_by_hand():
    ms = MeasurementSet([(0, 1)], [1.0])
    cfg = StageConfig(LossKind.RELAXED_HUBER, 0.04, 1.0, 1, 0.0)
    out = node_update(0, {1: np.array([0.0, 0.0])}, np.array([2.0, 0.0]), ms, cfg, sigma_n=1.0)
    np.testing.assert_allclose(out, [1.92, 0.0], atol=1e-15)


def test_node_update_inside_ball_is_stationary():
    ms = MeasurementSet([(0, 1)], [5.0])
    out = node_update(0, {1: np.zeros(2)}, np.array([1.0, 1.0]), ms, RH1, 0.5)
    np.testing.assert_array_equal(out, [1.0, 1.0])


def test_node_update_fixed_point_when_all_satisfied():
    net = Network(1, 3, [[0, 0], [10, 0], [0, 10]], [(0, 1), (0, 2), (0, 3)], [[3, 3]])
    P = net.true_positions()
    d = np.hypot(*(P[net.edges[:, 0]] - P[net.edges[:, 1]]).T)
    ms = MeasurementSet(net.edges, d)
    for kind in LossKind:
        cfg = dataclasses.replace(RH1, loss_kind=kind)
        np.testing.assert_allclose(node_update(0, _views(net, P, 0), P[0], ms, cfg, 0.5), P[0], atol=1e-12)


def test_node_update_missing_neighbor():
    ms = MeasurementSet([(0, 1), (0, 2)], [1.0, 1.0])
    with pytest.raises(KeyError):
        node_update(0, {1: np.zeros(2)}, np.ones(2), ms, RH1, 0.5)


def test_node_update_locality():
    net, ms, init = _instance(4, radius=4.0)
    P = np.vstack([init.positions, net.anchor_positions])
    i = 0
    nb = net.neighbors(i)
    base = node_update(i, _views(net, P, i), P[i], ms, RH1, 0.5)
    far = [j for j in range(net.num_nodes) if j != i and j not in nb]
    assert far
    # perturb a non-neighbor's position and every non-incident range
    P2 = P.copy()
    P2[far[0]] += 100.0
    touch = (ms.edges[:, 0] == i) | (ms.edges[:, 1] == i)
    ms2 = ms.with_ranges(np.where(touch, ms.ranges, ms.ranges + 7.0))
    out = node_update(i, _views(net, P2, i), P2[i], ms2, RH1, 0.5)
    assert out.tobytes() == base.tobytes()


# -- run_stage --------------------------------------------------------------------

@pytest.mark.parametrize("schedule", list(Schedule))
def test_round_equals_per_node_updates(schedule):
    net, ms, init = _instance(5)
    for kind in LossKind:
        cfg = StageConfig(kind, 0.01, 1.0, 1, 0.0)
        state, _ = run_stage(net, ms, init, cfg, 0.5, schedule)
        P = np.vstack([init.positions, net.anchor_positions])
        Q = P.copy()
        for i in range(net.num_sensors):
            src = P if schedule is Schedule.JACOBI else Q
            Q[i] = node_update(i, _views(net, src, i), src[i], ms, cfg, 0.5)
        np.testing.assert_allclose(state.positions, Q[:net.num_sensors], rtol=0, atol=1e-12)


def test_noise_free_triangle_converges():
    net = Network(1, 3, [[0, 0], [10, 0], [0, 10]], [(0, 1), (0, 2), (0, 3)], [[3.0, 4.0]])
    ms = noiseless(net)
    init = EstimateState([[3.8, 3.5]])
    cfg = StageConfig(LossKind.RELAXED_HUBER, 0.04, 2.0, 2000, 1e-9)
    state, trace = run_stage(net, ms, init, cfg, 0.5)
    assert np.hypot(*(state.positions[0] - [3.0, 4.0])) < 1e-3
    assert trace.reason is Termination.CONVERGED


def test_infinite_threshold_stops_after_one_round():
    net, ms, init = _instance(1)
    _, trace = run_stage(net, ms, init, dataclasses.replace(RH1, conv_threshold_nu=math.inf), 0.5)
    assert trace.rounds == 1 and trace.reason is Termination.CONVERGED


def test_zero_threshold_runs_max_iters():
    net, ms, init = _instance(1)
    _, trace = run_stage(net, ms, init, RH1, 0.5)
    assert trace.rounds == 50 and trace.reason is Termination.MAX_ITERS
    assert len(trace.costs) == len(trace.displacements) == 50


def test_divergence_is_reported_with_partial_trace():
    net, ms, init = _instance(2)
    cfg = StageConfig(LossKind.NLS, 1.0, 1.0, 100, 0.0)
    with pytest.raises(DivergenceError) as exc:
        run_stage(net, ms, init, cfg, 0.5)
    t = exc.value.trace
    assert t.reason is Termination.DIVERGED
    assert t.rounds == len(t.costs) >= 1
    assert np.all(np.isfinite(exc.value.state.positions))


def test_jacobi_permutation_invariant():
    net, ms, init = _instance(6)
    n = net.num_sensors
    perm = np.random.default_rng(0).permutation(n)
    old_to_new = np.empty(n + 4, dtype=int)
    old_to_new[perm] = np.arange(n)
    old_to_new[n:] = np.arange(n, n + 4)
    e = old_to_new[ms.edges]
    e.sort(axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    net2 = Network(n, 4, net.anchor_positions, e[order], net.true_sensor_positions[perm])
    ms2 = MeasurementSet(e[order], ms.ranges[order], ms.nlos[order])
    a, _ = run_stage(net, ms, init, RH1, 0.5)
    b, _ = run_stage(net2, ms2, EstimateState(init.positions[perm]), RH1, 0.5)
    np.testing.assert_allclose(b.positions, a.positions[perm], rtol=0, atol=1e-10)


def test_small_step_cost_non_increasing():
    cfg = StageConfig(LossKind.RELAXED_HUBER, 0.004, 2.0, 50, 0.0)
    for seed in range(20):
        net, ms, init = _instance(100 + seed, n=20)
        c0 = network_cost(LossKind.RELAXED_HUBER, 1.0, init.positions, net, ms)
        _, trace = run_stage(net, ms, init, cfg, 0.5)
        costs = np.array([c0] + trace.costs)
        assert np.all(np.diff(costs) <= 1e-9 * (1 + costs[:-1])), seed


@pytest.mark.parametrize("schedule", list(Schedule))
def test_deterministic(schedule):
    net, ms, init = _instance(7)
    a = solve_two_stage(net, ms, init, schedule=schedule)
    b = solve_two_stage(net, ms, init, schedule=schedule)
    assert a[0].positions.tobytes() == b[0].positions.tobytes()
    assert a[1] == b[1] and a[2] == b[2]


def test_stage1_fixed_point_inside_all_balls():
    net, ms, init = _instance(8)
    # ranges far larger than any distance: every sensor is inside every ball
    big = ms.with_ranges(np.full(len(ms), 1e3))
    state, trace = run_stage(net, big, init, RH1, 0.5)
    np.testing.assert_array_equal(state.positions, init.positions)
    assert trace.displacements[0] == 0.0


# -- two-stage --------------------------------------------------------------------

def test_two_stage_zero_second_stage_is_stage1():
    net, ms, init = _instance(9)
    s1, _ = run_stage(net, ms, init, STAGE1_DEFAULT, 0.5)
    s2, _, t2 = solve_two_stage(net, ms, init, STAGE1_DEFAULT,
                                dataclasses.replace(STAGE2_DEFAULT, max_iters=0), 0.5)
    assert t2.rounds == 0
    np.testing.assert_array_equal(s2.positions, s1.positions)


def test_two_stage_requires_expected_kinds():
    net, ms, init = _instance(9)
    with pytest.raises(ValueError):
        solve_two_stage(net, ms, init, STAGE2_DEFAULT, STAGE2_DEFAULT)
    solve_two_stage(net, ms, init, STAGE2_DEFAULT, STAGE2_DEFAULT, strict=False)


def test_two_stage_noise_free_reaches_truth():
    rng = np.random.default_rng(12)
    net = build_topology(np.vstack([rng.uniform(2, 8, (5, 2)), CORNER_ANCHORS]), math.inf, 4)
    ms = noiseless(net)
    init = EstimateState(net.true_sensor_positions + rng.uniform(-1, 1, (5, 2)))
    s1 = dataclasses.replace(STAGE1_DEFAULT, max_iters=3000)
    s2 = dataclasses.replace(STAGE2_DEFAULT, max_iters=500, conv_threshold_nu=1e-6)
    state, t1, t2 = solve_two_stage(net, ms, init, s1, s2, 0.5)
    err = np.hypot(*(state.positions - net.true_sensor_positions).T)
    assert err.max() < 1e-3
    assert max(t2.displacements) <= 1e-3


def test_choose_alpha2():
    assert choose_alpha2(None) == 0.1
    assert choose_alpha2(0.05) == 1.5
    assert choose_alpha2(0.95) == 0.1
    assert choose_alpha2(0.5) == 1.5
    assert choose_alpha2(0.4, threshold=0.3) == 0.1
    with pytest.raises(ValueError):
        choose_alpha2(1.2)


def test_stage_config_validation():
    for kw in (dict(step_mu=0), dict(max_iters=-1), dict(conv_threshold_nu=-1), dict(alpha=0)):
        with pytest.raises(ValueError):
            StageConfig(**kw)
    StageConfig(LossKind.NLS, alpha=0)


def test_inits():
    net, _, _ = _instance(3)
    a = gaussian_init(net, 10.0, 5)
    b = gaussian_init(net, 10.0, 5)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_allclose(centroid_init(net).positions, np.full((net.num_sensors, 2), 5.0))
