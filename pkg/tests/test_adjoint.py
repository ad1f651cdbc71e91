import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlab.adjoint import (
    AdjointSolver,
    boundary_average,
    continuum_density,
    duality_defect,
    hopf_check,
    integral_estimates,
    solve_adjoint,
)
from amlab.errors import ConfigError, InputError
from amlab.grid import GridField, build_grid
from amlab.hamiltonian import Quadratic
from amlab.pde_solver import SolverProblem, assemble_linearized, solve_regularized


@pytest.fixture(scope="module")
def affine_adjoint():
    grid = build_grid([(-1.0, 1.0)] * 2, 41)
    u = GridField.from_function(grid, lambda x: x[..., 1])
    return solve_adjoint(assemble_linearized(u, Quadratic(2), 0.1), [0.0, 0.0])


@pytest.fixture(scope="module")
def aronsson_adjoints():
    model = Quadratic(2)
    grid = build_grid([(-1.0, 1.0)] * 2, 49)
    out = []
    for eps in (0.1, 0.05, 0.025):
        res = solve_regularized(SolverProblem.from_function(model, grid, lambda x: np.abs(x[..., 0]) ** (4 / 3) - np.abs(x[..., 1]) ** (4 / 3), eps))
        sub, sl = grid.subgrid([-0.75, -0.75], [0.75, 0.75])
        out.append(solve_adjoint(assemble_linearized(res.field.restrict(sl, sub), model, eps), [0.5, 0.5]))
    return out


def test_theta_nonnegative_and_zero_on_boundary(affine_adjoint):
    th = affine_adjoint.theta
    assert th.values.min() >= -1e-12
    assert np.all(th.boundary_values() == 0.0)


def test_mass_is_one(affine_adjoint, aronsson_adjoints):
    for adj in [affine_adjoint, *aronsson_adjoints]:
        assert adj.mass == pytest.approx(1.0, abs=1e-10)
        assert (adj.rho >= -1e-12).all()


def test_reflection_symmetry_for_affine_field(affine_adjoint):
    # a = e_n e_n^T + eps I has no preferred sign along x_1
    th = affine_adjoint.theta.values
    assert np.allclose(th, th[::-1, :], atol=1e-12 * th.max())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_duality_identity_for_arbitrary_fields(seed):
    grid = build_grid([(-1.0, 1.0)] * 2, 21)
    u = GridField.from_function(grid, lambda x: x[..., 1] + 0.1 * x[..., 0] ** 2)
    adj = solve_adjoint(assemble_linearized(u, Quadratic(2), 0.1), [0.2, -0.1])
    v = GridField(grid, np.random.default_rng(seed).normal(size=grid.shape) * 100)
    assert duality_defect(v, adj) <= 1e-10 * max(1.0, np.abs(v.values).max())


def test_constants_reproduce_themselves(affine_adjoint):
    one = GridField(affine_adjoint.theta.grid, np.ones(affine_adjoint.theta.grid.shape))
    assert boundary_average(one, affine_adjoint) == pytest.approx(1.0, abs=1e-10)


def test_solver_reuses_factorization(affine_adjoint):
    solver = AdjointSolver(affine_adjoint.stencil)
    a = solver.solve([0.0, 0.0])
    b = solver.solve([0.5, 0.0])
    assert np.array_equal(a.theta.values, affine_adjoint.theta.values)
    assert b.mass == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(InputError):
        solver.solve([1.0, 0.0])


def test_grid_mismatch(affine_adjoint):
    with pytest.raises(InputError):
        duality_defect(GridField(build_grid([(0.0, 1.0)] * 2, 5), np.zeros((5, 5))), affine_adjoint)


def test_hopf_and_continuum_density(affine_adjoint):
    assert hopf_check(affine_adjoint)
    dens = continuum_density(affine_adjoint)
    assert (dens >= 0).all()
    g = affine_adjoint.theta.grid
    # the continuum flux integrates to roughly the same unit mass
    assert np.sum(dens) * g.h ** (g.n - 1) == pytest.approx(1.0, rel=0.3)


def test_parameter_ranges(aronsson_adjoints):
    adj = aronsson_adjoints[0]
    with pytest.raises(ConfigError):
        integral_estimates(adj, beta=adj.alpha)
    with pytest.raises(ConfigError):
        integral_estimates(adj, mu=1.0 / 16)  # lam / (8 n) is the upper limit
    rep = integral_estimates(adj)
    for e in rep.entries:
        assert {"mu", "beta", "eta"} <= set(e.params)
        assert e.passed == (e.lhs <= e.rhs * (1 + e.slack))


def test_sublevel_mass_decays_with_eps(aronsson_adjoints):
    subs = [integral_estimates(adj)["sublevel"].lhs for adj in aronsson_adjoints]
    assert subs[0] >= subs[1] >= subs[2]


def test_energy_and_exponential_entries(aronsson_adjoints):
    for adj in aronsson_adjoints:
        rep = integral_estimates(adj)
        assert rep["energy"].passed
        assert rep["exponential"].lhs <= 3 * adj.stencil.eps
        assert rep["square"].passed


def test_default_mu():
    from amlab.adjoint import default_mu

    assert default_mu(Quadratic(3)) == pytest.approx(1 / 48)
    assert math.isclose(default_mu(Quadratic(2, 0.5, 1.0)), 0.5 / 32)
