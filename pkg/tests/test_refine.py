import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwabarrier.exceptions import NoBisector
from pwabarrier.geometry import Edge
from pwabarrier.pwa import Cell, PwaDynamics, conformity_violations
from pwabarrier.refine import (
    bisector_parameter,
    bisector_point,
    field_variation,
    refine_cell,
    refine_partition,
    refine_partition_with_plans,
)
from pwabarrier.systems import random_delaunay_system

TRI = [[0, 0], [1, 0], [0, 1]]
BOTTOM = Edge((np.array([0.0, 0.0]), np.array([1.0, 0.0])), (0, 1), 0)


def tri_cell(A, a):
    return Cell(0, A, a, vertices=TRI)


# -- field_variation ---------------------------------------------------------------
def test_variation_orthogonal():
    # f = (1 - x1, x1) along the bottom edge: (1, 0) -> (0, 1)
    c = tri_cell([[-1, 0], [1, 0]], [1, 0])
    assert field_variation(BOTTOM, c) == pytest.approx(math.pi / 2)


def test_variation_constant_field():
    c = tri_cell(np.zeros((2, 2)), [1.0, 2.0])
    assert field_variation(BOTTOM, c) == pytest.approx(0.0, abs=1e-12)


def test_variation_opposite():
    c = tri_cell([[-2, 0], [0, 0]], [1, 0])  # (1, 0) -> (-1, 0)
    assert field_variation(BOTTOM, c) == pytest.approx(math.pi)


def test_variation_zero_field_counts_as_pi():
    c = tri_cell(-np.eye(2), np.zeros(2))
    assert field_variation(BOTTOM, c) == math.pi


def test_variation_via_dynamics_owner():
    d = PwaDynamics([tri_cell([[-1, 0], [1, 0]], [1, 0])])
    assert field_variation(BOTTOM, d) == pytest.approx(math.pi / 2)


# -- bisector ---------------------------------------------------------------------
def test_bisector_symmetric():
    c = tri_cell([[-1, 0], [1, 0]], [1, 0])
    assert bisector_parameter(BOTTOM, c) == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(bisector_point(BOTTOM, c), [0.5, 0.0])


def _angle(u, v):
    return math.acos(np.clip(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)), -1, 1))


def test_bisector_matches_grid_oracle():
    # f = (2 x1, 1 - x1): (0, 1) -> (2, 0)
    c = tri_cell([[2, 0], [-1, 0]], [0, 1])
    f0, f1 = np.array([0.0, 1.0]), np.array([2.0, 0.0])
    grid = np.linspace(1e-6, 1 - 1e-6, 200_001)
    g = [abs(_angle(np.array([2 * t, 1 - t]), f0) - _angle(np.array([2 * t, 1 - t]), f1))
         for t in grid]
    t_grid = grid[int(np.argmin(g))]
    t = bisector_parameter(BOTTOM, c)
    assert abs(t - t_grid) <= 1e-4
    assert t == pytest.approx(1 / 3, abs=1e-6)


def test_bisector_rejects_constant_direction():
    c = tri_cell(np.zeros((2, 2)), [1.0, 0.0])
    with pytest.raises(ValueError):
        bisector_parameter(BOTTOM, c)


def test_bisector_zero_field():
    c = tri_cell(-np.eye(2), np.zeros(2))
    with pytest.raises(NoBisector):
        bisector_parameter(BOTTOM, c)


# -- refine_cell ------------------------------------------------------------------
def test_refine_triangle_gives_two():
    c = tri_cell(-np.eye(2), np.zeros(2))
    kids = refine_cell(c, [0.5, 0.0])
    assert len(kids) == 2
    assert sum(k.volume for k in kids) == pytest.approx(c.volume, rel=1e-12)
    for k in kids:
        assert np.array_equal(k.A, c.A) and np.array_equal(k.a, c.a)


def test_refine_square_gives_three():
    c = Cell(0, -np.eye(2), np.zeros(2), vertices=[[0, 0], [1, 0], [1, 1], [0, 1]])
    kids = refine_cell(c, [0.5, 0.0])
    assert len(kids) == 3
    assert sum(k.volume for k in kids) == pytest.approx(1.0, rel=1e-12)


def test_refine_cell_rejects_interior_or_existing_points():
    c = tri_cell(-np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        refine_cell(c, [0.2, 0.2])
    with pytest.raises(ValueError):
        refine_cell(c, [0.0, 0.0])
    with pytest.raises(ValueError):
        refine_cell(c, [2.0, 0.0])


# -- refine_partition -----------------------------------------------------------------
def test_square_one_flagged(square):
    d2, plans = refine_partition_with_plans(square, [0])
    assert d2.n_cells == 6
    assert len(plans) == 1
    p = plans[0]
    assert p.target == 0 and p.fallback  # the centre has zero field
    assert len(p.affected) == 2 and 0 in p.affected
    assert conformity_violations(d2) == []


def test_two_cells_all_flagged():
    d = PwaDynamics([
        Cell(0, [[0, -1], [1, 0]], [0, 0], vertices=[[0, 0], [1, 0], [0, 1]]),
        Cell(1, [[0, -1], [1, 0]], [0, 0], vertices=[[1, 0], [1, 1], [0, 1]]),
    ])
    d2 = refine_partition(d, [0, 1])
    assert d2.n_cells >= 4
    assert conformity_violations(d2) == []


def test_nothing_flagged_rejected(square):
    with pytest.raises(ValueError):
        refine_partition(square, [])


def test_refinement_deterministic(pendulum):
    a = refine_partition(pendulum, [3, 7, 20])
    b = refine_partition(pendulum, [20, 7, 3])
    assert a.n_cells == b.n_cells
    for ca, cb in zip(a.cells, b.cells):
        assert np.array_equal(ca.vertices, cb.vertices)


def test_pendulum_field_preserved(pendulum, rng):
    d2 = refine_partition(pendulum, pendulum.cell_ids[::3])
    X = rng.uniform(-np.pi, np.pi, size=(2000, 2))
    assert np.max(np.abs(d2(X) - pendulum(X))) <= 1e-12
    assert conformity_violations(d2) == []


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.data())
def test_refinement_properties(seed, data):
    d = random_delaunay_system(seed)
    flagged = data.draw(st.sets(st.sampled_from(d.cell_ids), min_size=1))
    d2 = refine_partition(d, flagged)
    assert d2.n_cells > d.n_cells
    assert conformity_violations(d2) == []
    assert d2.volume == pytest.approx(d.volume, rel=1e-9)
    rng = np.random.default_rng(seed)
    for c in d2.cells:
        # every child sits inside one parent and carries its dynamics
        parents = [p for p in d.cells if np.all(p.region.slack(c.vertices) >= -1e-9)]
        assert parents
        assert any(np.array_equal(p.A, c.A) and np.array_equal(p.a, c.a) for p in parents)
    X = rng.uniform(-1, 1, size=(300, 2))
    assert np.max(np.abs(d2(X) - d(X))) <= 1e-12
