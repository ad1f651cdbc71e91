import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlab.errors import DomainError, InputError
from amlab.hamiltonian import (
    AnisotropicQuadratic,
    ConeSpec,
    LegendreDual,
    Quadratic,
    SeparablePower,
    Tabulated,
    check_H1_H2,
    cone,
    legendre,
    mollify,
    reflect,
    separable_power_curvature_range,
)

A = np.array([[2.0, 0.5], [0.5, 1.0]])


def test_quadratic_values():
    H = Quadratic(2)
    v, g, h = H.eval(np.array([3.0, 4.0]))
    assert v == pytest.approx(12.5)
    assert np.allclose(g, [3.0, 4.0])
    assert np.allclose(h, np.eye(2))


def test_anisotropic_legendre_closed_form():
    H = AnisotropicQuadratic(A)
    q = np.array([0.3, -0.7])
    L, p = legendre(H, q)
    assert L == pytest.approx(0.5 * q @ np.linalg.solve(A, q), rel=1e-12)
    assert np.allclose(A @ p, q)


def test_nonfinite_input_rejected():
    with pytest.raises(InputError):
        Quadratic(2).value([np.nan, 0.0])
    with pytest.raises(InputError):
        Quadratic(2).value([1.0, 2.0, 3.0])


def test_cone_closed_forms():
    assert cone(ConeSpec(2.0, Quadratic(2)), [1.0, 0.0]) == pytest.approx(2.0, abs=1e-12)
    d = np.array([0.4, -1.1])
    C = cone(ConeSpec(1.3, AnisotropicQuadratic(A)), d)
    assert C == pytest.approx(math.sqrt(2 * 1.3 * d @ np.linalg.solve(A, d)), rel=1e-10)
    assert cone(ConeSpec(1.0, Quadratic(3)), np.zeros(3)) == 0.0


@settings(max_examples=30, deadline=None)
@given(x=st.lists(st.floats(-5, 5), min_size=2, max_size=2), sigma=st.floats(0.1, 10), t=st.floats(0.1, 10))
def test_cone_homogeneity_and_bounds(x, sigma, t):
    H = AnisotropicQuadratic(A)
    x = np.asarray(x)
    C = float(cone(ConeSpec(sigma, H), x))
    r = float(np.linalg.norm(x))
    assert math.sqrt(2 * sigma / H.Lam) * r * (1 - 1e-12) <= C + 1e-12
    assert C <= math.sqrt(2 * sigma / H.lam) * r * (1 + 1e-12) + 1e-12
    assert float(cone(ConeSpec(sigma, H), t * x)) == pytest.approx(t * C, rel=1e-9, abs=1e-12)


def test_separable_curvature_range_matches_sampling():
    for alpha in (1.5, 3.0, 4.0):
        H = SeparablePower(1, alpha, radius=2.0)
        t = np.linspace(-2, 2, 2001)
        lo, hi = separable_power_curvature_range(alpha, 2.0)
        vals = H.d2f(t)
        assert vals.min() == pytest.approx(lo, rel=1e-12)
        assert vals.max() == pytest.approx(hi, rel=1e-12)


def test_mollified_quadratic_is_exact():
    P = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    M = mollify(AnisotropicQuadratic(A), 0.3)
    assert np.abs(M.value(P) - AnisotropicQuadratic(A).value(P)).max() <= 1e-12


def test_mollified_normalization_and_convergence():
    base = SeparablePower(2, 4.0)
    P = np.random.default_rng(1).uniform(-1, 1, (200, 2))
    dists = []
    for gamma in (0.2, 0.1, 0.05):
        M = mollify(base, gamma)
        assert abs(M.value(np.zeros(2))) <= 1e-12
        assert np.abs(M.grad(np.zeros(2))).max() <= 1e-10
        dists.append(np.abs(M.value(P) - base.value(P)).max())
    assert dists[0] > dists[1] > dists[2]
    # second-order convergence of the even bump
    assert dists[1] / dists[2] == pytest.approx(4.0, rel=0.1)


def test_tabulated_reproduces_smooth_table_and_rejects_outside():
    ax = np.linspace(-2, 2, 41)
    P = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
    H = Tabulated((ax, ax), 0.5 * (P**2).sum(-1), 1.0, 1.0)
    q = np.random.default_rng(2).uniform(-1.9, 1.9, (30, 2))
    assert np.allclose(H.value(q), 0.5 * (q**2).sum(1), atol=1e-10)
    assert np.allclose(H.grad(q), q, atol=1e-8)
    with pytest.raises(DomainError):
        H.value([2.5, 0.0])


def test_tabulated_normalization_required():
    ax = np.linspace(-1, 1, 9)
    P = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
    with pytest.raises(InputError):
        Tabulated((ax, ax), 0.5 * (P**2).sum(-1) + 1.0, 1.0, 1.0)


def test_reflection():
    H = AnisotropicQuadratic(A)
    p = np.array([0.3, 0.9])
    R = reflect(H)
    assert R.value(p) == pytest.approx(H.value(-p))
    assert np.allclose(R.grad(p), -H.grad(-p))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_legendre_fenchel_young(seed):
    H = SeparablePower(2, 3.0)
    rng = np.random.default_rng(seed)
    p, q = rng.uniform(-1.5, 1.5, (2, 2))
    L, pstar = legendre(H, q)
    assert H.value(p) + L >= p @ q - 1e-10
    assert H.value(pstar) + L == pytest.approx(pstar @ q, abs=1e-10)


def test_biconjugation():
    P = np.random.default_rng(3).uniform(-1, 1, (50, 2))
    for H in (SeparablePower(2, 1.5), AnisotropicQuadratic(A)):
        L, _ = legendre(LegendreDual(H), P)
        assert np.abs(L - H.value(P)).max() <= 1e-10


def test_convexity_report():
    assert check_H1_H2(SeparablePower(2, 4.0), [(-2, 2), (-2, 2)]).passed
    bad = SeparablePower(2, 4.0, lam=2.0, Lam=13.0)
    rep = check_H1_H2(bad, [(-2, 2), (-2, 2)])
    assert not rep.passed and any("below lam" in v for v in rep.violations)


def test_invalid_constants():
    with pytest.raises(InputError):
        Quadratic(2, 2.0, 1.0)
    with pytest.raises(InputError):
        SeparablePower(2, 2.0)
