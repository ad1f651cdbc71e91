import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlab.errors import InputError
from amlab.experiments import Perturbation, blowup_probe, calibrate_constant, flatness_experiment, stability_check
from amlab.grid import GridField, build_grid
from amlab.hamiltonian import Quadratic, SeparablePower, mollify


@settings(max_examples=20, deadline=None)
@given(n=st.sampled_from([2, 3]), seed=st.integers(0, 2**31))
def test_perturbation_sup_norm(n, seed):
    psi = Perturbation.seeded(n, seed)
    x = np.random.default_rng(seed).uniform(-3, 3, (500, n))
    vals = psi(x)
    assert vals.min() >= 0.0 and vals.max() <= 1.0
    # decreasing in x_n across the inner box
    inner = np.random.default_rng(seed + 1).uniform(-1, 1, (200, n))
    up = inner.copy()
    up[:, -1] += 1e-3
    assert (psi(up) < psi(inner)).all()


def test_affine_data_is_flagged_invalid():
    rep = flatness_experiment(mollify(Quadratic(2), 0.1), 0.0, 0.1, nodes=31)
    assert rep.lhs == pytest.approx(0.0, abs=1e-20)
    assert rep.delta == pytest.approx(0.0, abs=1e-12)
    assert rep.status == "invalid" and not rep.passed
    assert math.isnan(calibrate_constant([rep]))


def test_flatness_report_fields():
    rep = flatness_experiment(mollify(Quadratic(2), 0.1), 0.1, 0.1, seed=1, nodes=31)
    assert rep.valid and rep.mu == pytest.approx(1 / 32)
    assert rep.tau_measured <= 0.1 + 1e-12
    assert all(abs(c) <= 1 + 1e-12 for c in rep.x0)
    assert rep.rhs_tail == pytest.approx(math.exp(-rep.mu * rep.delta / rep.eps) / rep.eps)
    assert rep.with_constant(2 * rep.ratio).passed
    assert not rep.with_constant(0.5 * rep.ratio).passed


def test_flatness_lhs_monotone_in_tau():
    lhs = [flatness_experiment(mollify(Quadratic(2), 0.1), t, 0.05, nodes=31).lhs for t in (0.1, 0.03, 0.01)]
    assert lhs[0] >= lhs[1] >= lhs[2]


def test_stability_quadratic_exact_and_lipschitz_scaling():
    grid = build_grid([(-1.0, 1.0)] * 2, 21)
    data = lambda x: 0.8 * x[..., 0] + 0.3 * np.sin(2 * x[..., 1])  # noqa: E731
    rep = stability_check(Quadratic(2), (0.2, 0.1, 0.05), grid, data)
    assert max(rep.distances) <= 1e-10 and rep.passed
    doubled = stability_check(Quadratic(2), (0.2, 0.1), grid, lambda x: 2 * data(x))
    assert doubled.max_H[0] <= 4.4 * rep.max_H[0]
    assert doubled.lipschitz == pytest.approx(2 * rep.lipschitz)


def test_stability_separable_distances_decrease():
    grid = build_grid([(-1.0, 1.0)] * 2, 21)
    rep = stability_check(SeparablePower(2, 4.0), (0.2, 0.1, 0.05), grid, lambda x: 0.8 * x[..., 0] + 0.3 * np.sin(2 * x[..., 1]))
    assert rep.decreasing and rep.distances[0] > rep.distances[1]
    with pytest.raises(InputError):
        stability_check(Quadratic(2), (0.1, 0.2), grid, lambda x: x[..., 0])


def test_blowup_affine():
    grid = build_grid([(-1.0, 1.0)] * 3, 11)
    u = GridField.from_function(grid, lambda x: x[..., -1])
    rep = blowup_probe(u, (0.0, 0.2, -0.2), (0.5, 0.25, 0.1), Quadratic(3), samples=5)
    assert np.allclose(rep.slopes, [(0.0, 0.0, 1.0)] * 3, atol=1e-12)
    assert rep.dispersion <= 1e-12
    assert np.allclose(rep.H_slope, 0.5)


def test_blowup_slopes_converge_at_order_r():
    grid = build_grid([(-1.0, 1.0)] * 2, 801)
    u = GridField.from_function(grid, lambda x: np.sin(x[..., 0]) * np.exp(x[..., 1]))
    radii = (0.4, 0.2, 0.1, 0.05)
    rep = blowup_probe(u, (0.3, -0.2), radii, Quadratic(2))
    exact = np.array([math.cos(0.3) * math.exp(-0.2), math.sin(0.3) * math.exp(-0.2)])
    errs = [np.linalg.norm(np.asarray(s) - exact) for s in rep.slopes]
    assert all(e <= 0.2 * r for e, r in zip(errs, radii))
    gaps = [abs(a - b) for a, b in zip(rep.H_slope, rep.H_max)]
    assert gaps[-1] < gaps[0]


def test_blowup_input_errors():
    grid = build_grid([(-1.0, 1.0)] * 2, 11)
    u = GridField.from_function(grid, lambda x: x[..., 0])
    with pytest.raises(InputError):
        blowup_probe(u, (0.9, 0.0), (0.5,))
    with pytest.raises(InputError):
        blowup_probe(u, (0.0, 0.0), (0.1, 0.2))
    with pytest.raises(InputError):
        blowup_probe(u, (0.0, 0.0), (0.1,), samples=4)
