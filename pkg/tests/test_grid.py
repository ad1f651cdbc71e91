import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlab.errors import ConfigError, InputError
from amlab.grid import GridField, build_grid, from_bytes, from_csv, gradient, hessian, to_bytes, to_csv


def test_spacing_and_masks():
    g = build_grid([(-1.0, 1.0), (0.0, 2.0)], 21)
    assert g.h == pytest.approx(0.1)
    assert g.size == 441
    assert g.boundary_mask().sum() == 4 * 20
    assert (g.boundary_mask() ^ g.interior_mask()).all()


def test_unequal_spacing_rejected():
    with pytest.raises((ConfigError, InputError)):
        build_grid([(0.0, 1.0), (0.0, 2.0)], 11)


def test_subgrid_slices_match_coordinates():
    g = build_grid([(-3.0, 3.0)] * 2, 61)
    sub, sl = g.subgrid([-1.0, -2.0], [1.0, 2.0])
    assert np.allclose(g.coords()[sl], sub.coords())
    with pytest.raises(ConfigError):
        g.subgrid([-1.05, 0.0], [1.0, 1.0])


def test_node_index_outside():
    g = build_grid([(0.0, 1.0)], 11)
    with pytest.raises(InputError):
        g.node_index([1.5])


def test_field_rejects_nonfinite_and_is_readonly():
    g = build_grid([(0.0, 1.0)] * 2, 5)
    with pytest.raises(InputError):
        GridField(g, np.full(g.shape, np.nan))
    f = GridField(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_differences_exact_on_quadratics():
    g = build_grid([(-1.0, 1.0)] * 2, 11)
    f = GridField.from_function(g, lambda x: x[..., 0] ** 2 + 3 * x[..., 0] * x[..., 1] - x[..., 1])
    X = g.coords()
    D = gradient(f)
    assert np.allclose(D[..., 0], 2 * X[..., 0] + 3 * X[..., 1], atol=1e-12)
    assert np.allclose(D[..., 1], 3 * X[..., 0] - 1, atol=1e-12)
    H = hessian(f)
    assert np.allclose(H, np.array([[2.0, 3.0], [3.0, 0.0]]), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 3), nodes=st.integers(3, 6), seed=st.integers(0, 2**32 - 1))
def test_serialization_round_trip(n, nodes, seed):
    g = build_grid([(-1.0, 2.0)] * n, nodes)
    vals = np.random.default_rng(seed).normal(size=g.shape) * 10.0 ** np.random.default_rng(seed).integers(-5, 5)
    f = GridField(g, vals, "ü-label")
    back = from_bytes(to_bytes(f))
    assert back.grid == g and back.label == f.label
    assert np.array_equal(back.values, vals)
    again = from_csv(to_csv(f), g)
    assert np.array_equal(again.values, vals)
    assert to_bytes(back) == to_bytes(f)


def test_bad_magic():
    with pytest.raises(InputError):
        from_bytes(b"NOTAGRID" + bytes(32))
