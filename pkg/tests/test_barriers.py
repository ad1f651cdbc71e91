import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlab.barriers import (
    admissible_discount,
    boundary_lipschitz_check,
    cone_sandwich_check,
    control_distance,
    direction_set,
    lipschitz_constant,
    straight_line_cost,
)
from amlab.errors import ConfigError
from amlab.grid import GridField, build_grid
from amlab.hamiltonian import AnisotropicQuadratic, Quadratic, SeparablePower
from amlab.pde_solver import SolverProblem, solve_regularized

GRID = build_grid([(-1.0, 1.0)] * 2, 25)


def test_direction_sets():
    assert len(direction_set(2)) == 16
    assert len(direction_set(3)) == 26


def test_quadratic_cone_within_anisotropy():
    b = control_distance(Quadratic(2), 2.0, 0.0, GRID, (0.0, 0.0))
    r = np.linalg.norm(GRID.coords(), axis=-1)
    assert b.values[12, 12] == 0.0
    ratio = b.values[r > 0] / (2.0 * r[r > 0])
    assert ratio.min() >= 1 - 1e-12 and ratio.max() <= 1.05


def test_discount_lowers_value():
    b0 = control_distance(Quadratic(2), 2.0, 0.0, GRID, (0.25, 0.0))
    bd = control_distance(Quadratic(2), 2.0, 0.2, GRID, (0.25, 0.0))
    assert (bd.values <= b0.values + 1e-12).all()
    assert bd.values[bd.index] == 0.0
    # contraction: the sup changes shrink
    log = np.asarray(bd.log)
    assert log[-1] < 1e-8


def test_straight_line_closed_forms():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    d = np.array([0.3, -0.7])
    assert straight_line_cost(Quadratic(2), 2.0, 0.0, (0, 0), d) == pytest.approx(2.0 * np.linalg.norm(d), rel=1e-10)
    assert straight_line_cost(AnisotropicQuadratic(A), 2.0, 0.0, (0, 0), d) == pytest.approx(2.0 * math.sqrt(d @ np.linalg.solve(A, d)), rel=1e-10)
    assert straight_line_cost(Quadratic(2), 2.0, 0.3, (0.1, 0.1), (0.1, 0.1)) == 0.0


def test_discounted_straight_line_matches_brute_force():
    d = np.array([0.8, 0.4])
    t = np.geomspace(1e-3, 1e3, 200001)
    brute = ((2.0 + 0.5 * (d @ d) / t**2) * -np.expm1(-0.3 * t) / 0.3).min()
    assert straight_line_cost(Quadratic(2), 2.0, 0.3, (0, 0), d) == pytest.approx(brute, rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(i=st.integers(0, 24), j=st.integers(0, 24), delta=st.sampled_from([0.0, 0.2]))
def test_barrier_bounded_by_straight_line(i, j, delta):
    model = SeparablePower(2, 4.0)
    b = control_distance(model, 1.5, delta, GRID, (0.0, 0.0))
    y = GRID.coords()[i, j]
    line = straight_line_cost(model, 1.5, delta, (0.0, 0.0), y)
    assert 0.0 <= b.values[i, j] <= line * 1.05 + 1e-12


def test_monotone_in_sigma():
    lo = control_distance(SeparablePower(2, 3.0), 1.0, 0.1, GRID, (0.5, -0.5))
    hi = control_distance(SeparablePower(2, 3.0), 2.0, 0.1, GRID, (0.5, -0.5))
    assert (lo.values <= hi.values + 1e-12).all()


def test_triangle_inequality_undiscounted():
    model = AnisotropicQuadratic(np.array([[2.0, 0.5], [0.5, 1.0]]))
    pts = [(-0.5, 0.25), (0.25, 0.75), (0.75, -0.75)]
    fields = {p: control_distance(model, 1.0, 0.0, GRID, p) for p in pts}
    x, z, y = pts
    bz = fields[x].values[GRID.node_index(z)]
    zy = fields[z].values[GRID.node_index(y)]
    assert fields[x].values[GRID.node_index(y)] <= bz + zy + 1e-12


def test_sandwich_reports():
    b0 = control_distance(Quadratic(2), 2.0, 0.0, GRID, (0.0, 0.0))
    rep = cone_sandwich_check(b0)
    assert rep.passed and rep.not_applicable == 0
    sigma = 0.5
    big = admissible_discount(Quadratic(2), sigma, GRID) * 4
    bd = control_distance(Quadratic(2), sigma, big, GRID, (-1.0, -1.0))
    rep = cone_sandwich_check(bd)
    assert not rep.lower_violations and rep.not_applicable > 0


def test_admissible_discount_formula():
    # sup of sqrt(2 sigma)|y - x| over the box is the diagonal 2 sqrt(2)
    assert admissible_discount(Quadratic(2), 2.0, GRID) == pytest.approx(2.0 / (2 * 2.0 * 2 * math.sqrt(2)))


def test_boundary_check_affine_and_errors():
    u = GridField.from_function(GRID, lambda x: x[..., 0])
    rep = boundary_lipschitz_check(u, Quadratic(2))
    assert rep.passed and rep.ratio == pytest.approx(1.0, abs=1e-12)
    assert lipschitz_constant(GRID, u.values) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        boundary_lipschitz_check(u, Quadratic(2), sigma=1.0)
    with pytest.raises(ConfigError):
        boundary_lipschitz_check(u, Quadratic(2), sigma=10.0, delta=10.0)


def test_boundary_check_reports_instead_of_raising_at_large_eps():
    f = lambda x: np.abs(x[..., 0]) ** (4 / 3) - np.abs(x[..., 1]) ** (4 / 3)  # noqa: E731
    u = solve_regularized(SolverProblem.from_function(Quadratic(2), GRID, f, 1.0)).field
    rep = boundary_lipschitz_check(u, Quadratic(2), samples=4)
    assert len(rep.points) == 4
    assert isinstance(rep.failing, tuple)
