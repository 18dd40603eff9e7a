import itertools
import math
import time
import warnings

import numpy as np
import pytest

from pwabarrier.exceptions import DegenerateRegionWarning, DimensionMismatch, TooManyNeurons
from pwabarrier.geometry import box
from pwabarrier.pwa import check_continuity, evaluate_dynamics
from pwabarrier.relu import ReluNet, arrangement_regions, enumerate_regions

BOX = ([-1.0, -1.0], [1.0, 1.0])


def random_net(rng, m, n=2, scale=1.0):
    return ReluNet(rng.normal(size=(m, n)), rng.normal(scale=scale, size=m),
                   rng.normal(size=(n, m)), rng.normal(size=n))


def test_single_hinge():
    net = ReluNet([[1.0, 0.0]], [0.0], [[2.0], [-1.0]], [0.0, 0.5])
    d = enumerate_regions(net, BOX)
    assert d.n_cells == 2
    active = [c for c in d.cells if c.vertices[:, 0].min() >= -1e-12]
    assert len(active) == 1
    assert np.allclose(active[0].A, net.W2 @ net.W1)
    assert np.allclose(active[0].a, net.b2)


def test_parallel_hyperplanes_three_cells():
    net = ReluNet([[1.0, 0.0], [1.0, 0.0]], [0.5, -0.5], np.ones((2, 2)), np.zeros(2))
    assert enumerate_regions(net, BOX).n_cells == 3


def test_random_m4_exact(rng):
    net = random_net(rng, 4)
    d = enumerate_regions(net, BOX)
    X = rng.uniform(-1, 1, size=(10_000, 2))
    assert np.max(np.abs(net(X) - d(X))) <= 1e-9
    assert check_continuity(d, 1e-7) == []
    assert d.volume == pytest.approx(4.0, rel=1e-9)


def test_pointwise_evaluation_matches_net(rng):
    net = random_net(rng, 3)
    d = enumerate_regions(net, BOX)
    for x in rng.uniform(-1, 1, size=(20, 2)):
        assert np.allclose(evaluate_dynamics(d, x), net(x), atol=1e-9)


@pytest.mark.parametrize("m", [1, 3, 6, 8])
def test_cell_count_bound(rng, m):
    net = random_net(rng, m, scale=0.3)
    d = enumerate_regions(net, BOX)
    bound = sum(math.comb(m, k) for k in range(3))
    assert 1 <= d.n_cells <= bound


def test_patterns_sorted_and_consistent(rng):
    W = rng.normal(size=(5, 2))
    b = rng.normal(scale=0.3, size=5)
    regs = arrangement_regions(W, b, box(*BOX))
    pats = [p for p, _ in regs]
    assert pats == sorted(pats)
    for pat, poly in regs:
        c = poly.centroid
        assert tuple(int(v) for v in (W @ c + b >= 0)) == pat


def test_too_many_neurons(rng):
    with pytest.raises(TooManyNeurons):
        enumerate_regions(random_net(rng, 26), BOX)


def test_zero_weight_neuron(rng):
    net = ReluNet([[0.0, 0.0], [1.0, 0.0]], [1.0, 0.0], rng.normal(size=(2, 2)), np.zeros(2))
    d = enumerate_regions(net, BOX)
    assert d.n_cells == 2
    X = rng.uniform(-1, 1, size=(500, 2))
    assert np.max(np.abs(net(X) - d(X))) <= 1e-9


def test_thin_region_warns_and_is_dropped():
    net = ReluNet([[1.0, 0.0]], [-(1.0 - 5e-8)], np.eye(2)[:, :1], np.zeros(2))
    with pytest.warns(DegenerateRegionWarning):
        d = enumerate_regions(net, BOX)
    assert d.n_cells == 1


def test_no_warning_for_regular_nets(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateRegionWarning)
        enumerate_regions(random_net(rng, 5, scale=0.3), BOX)


def test_shape_validation():
    with pytest.raises(DimensionMismatch):
        ReluNet(np.ones((3, 2)), np.ones(2), np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        ReluNet([[np.nan, 0.0]], [0.0], [[1.0], [1.0]], [0.0, 0.0])


def test_domain_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        enumerate_regions(random_net(rng, 2), ([-1, -1, -1], [1, 1, 1]))


def test_m8_on_pendulum_box_is_fast(rng):
    net = random_net(rng, 8)
    t0 = time.perf_counter()
    d = enumerate_regions(net, ([-math.pi] * 2, [math.pi] * 2))
    assert time.perf_counter() - t0 < 5.0
    X = rng.uniform(-math.pi, math.pi, size=(10_000, 2))
    assert np.max(np.abs(net(X) - d(X))) <= 1e-9


def test_three_dimensional_net(rng):
    net = random_net(rng, 4, n=3, scale=0.3)
    d = enumerate_regions(net, ([-1] * 3, [1] * 3))
    X = rng.uniform(-1, 1, size=(2000, 3))
    assert np.max(np.abs(net(X) - d(X))) <= 1e-9
    assert d.volume == pytest.approx(8.0, rel=1e-9)
