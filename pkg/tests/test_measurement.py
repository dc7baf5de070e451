import math

import numpy as np
import pytest

from robustloc.core import Network, build_topology
from robustloc.measurement import MeasurementSet, NoiseModel, nlos_ratio, noiseless, synthesize


@pytest.fixture
def net():
    pts = np.random.default_rng(11).uniform(0, 10, (24, 2))
    return build_topology(pts, math.inf, num_anchors=4)


def _true_d(net, ms):
    P = net.true_positions()
    return np.hypot(*(P[ms.edges[:, 0]] - P[ms.edges[:, 1]]).T)


def test_noiseless_limit(net):
    ms = synthesize(net, NoiseModel(1e-12, 0.0, 10.0), 5)
    np.testing.assert_allclose(ms.ranges, _true_d(net, ms), atol=1e-9)
    np.testing.assert_array_equal(noiseless(net).ranges, _true_d(net, ms))


def test_all_nlos_is_nonnegative(net):
    ms = synthesize(net, NoiseModel(1e-12, 1.0, 10.0), 5)
    assert np.all(ms.nlos)
    assert np.all(ms.ranges - _true_d(net, ms) >= -1e-9)


def test_two_node_mean_bias():
    # E[r - d] = P_N * gamma; checked against 3 standard errors
    net = Network(1, 1, [[5.0, 0.0]], [(0, 1)], [[0.0, 0.0]])
    model = NoiseModel(0.5, 0.5, 10.0)
    ss = np.random.SeedSequence(2024)
    res = np.array([synthesize(net, model, s).ranges[0] - 5.0 for s in ss.spawn(100_000)])
    se = res.std(ddof=1) / math.sqrt(res.size)
    assert abs(res.mean() - 0.5 * 10.0) < 3 * se


def test_nlos_ratio_examples():
    e = np.array([(0, k) for k in range(1, 11)])
    assert nlos_ratio(MeasurementSet(e, np.ones(10), np.zeros(10, bool))) == 0.0
    assert nlos_ratio(MeasurementSet(e, np.ones(10), np.ones(10, bool))) == 1.0
    lab = np.zeros(10, bool)
    lab[[1, 4, 7]] = True
    assert nlos_ratio(MeasurementSet(e, np.ones(10), lab)) == pytest.approx(0.3)


def test_nlos_ratio_empty():
    with pytest.raises(ValueError):
        nlos_ratio(MeasurementSet(np.zeros((0, 2)), np.zeros(0), np.zeros(0, bool)))


def test_missing_truth_rejected():
    net = Network(2, 1, [[0.0, 0.0]], [(0, 1), (1, 2)])
    with pytest.raises(ValueError):
        synthesize(net, NoiseModel(), 0)


@pytest.mark.parametrize("kw", [dict(sigma_n=0.0), dict(nlos_prob=1.5), dict(nlos_prob=-0.1),
                                dict(bias_gamma=0.0)])
def test_noise_model_validation(kw):
    with pytest.raises(ValueError):
        NoiseModel(**kw)


def test_same_seed_bit_identical(net):
    a = synthesize(net, NoiseModel(0.5, 0.5, 10.0), 99)
    b = synthesize(net, NoiseModel(0.5, 0.5, 10.0), 99)
    assert a.ranges.tobytes() == b.ranges.tobytes()
    assert a.nlos.tobytes() == b.nlos.tobytes()
    assert a.digest() == b.digest()
    assert synthesize(net, NoiseModel(0.5, 0.5, 10.0), 100).digest() != a.digest()


def test_nlos_fraction_concentrates():
    pts = np.random.default_rng(1).uniform(0, 10, (150, 2))
    big = build_topology(pts, math.inf, 4)
    p = 0.3
    ms = synthesize(big, NoiseModel(0.5, p, 10.0), 8)
    n = len(ms)
    assert abs(nlos_ratio(ms) - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_los_residual_moments():
    pts = np.random.default_rng(2).uniform(0, 10, (150, 2))
    big = build_topology(pts, math.inf, 4)
    sigma = 0.5
    ms = synthesize(big, NoiseModel(sigma, 0.0, 10.0), 9)
    res = ms.ranges - _true_d(big, ms)
    assert res.size >= 10_000
    assert abs(res.mean()) < 4 * sigma / math.sqrt(res.size)
    assert abs(res.var(ddof=1) / sigma**2 - 1.0) < 0.2


def test_incident_and_range_lookup():
    ms = MeasurementSet([(0, 1), (0, 2), (1, 2)], [1.0, 2.0, 3.0])
    others, r = ms.incident(2)
    assert sorted(zip(others.tolist(), r.tolist())) == [(0, 2.0), (1, 3.0)]
    assert ms.range_of(2, 1) == 3.0
    with pytest.raises(KeyError):
        ms.range_of(0, 3)
