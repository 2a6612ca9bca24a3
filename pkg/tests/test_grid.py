import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipfsi.config import SimConfig
from slipfsi.errors import ConfigError, ExtrapolationError, GhostLayerError
from slipfsi.grid import (
    AnnulusGrid,
    GridField,
    boundary_quadrature,
    build_annulus_grid,
    discrete_operator,
    interpolate,
)

from conftest import slope


def test_grid_shape_and_boundaries():
    g = AnnulusGrid(8, 16, 1.0, 2.0)
    assert g.shape == (8, 16) and g.xy.shape == (2, 8, 16)
    assert len(g.inner_nodes) == 16 and len(boundary_quadrature(g)) == 16
    assert g.r[0] == 1.0 and g.r[-1] == 2.0
    assert build_annulus_grid(SimConfig(n_r=9, n_theta=12)).shape == (9, 12)


def test_degenerate_geometry_rejected():
    with pytest.raises(ConfigError):
        AnnulusGrid(8, 16, 2.0, 1.0)
    with pytest.raises(ConfigError):
        AnnulusGrid(4, 16, 1.0, 2.0)


def test_area_and_circumference():
    # the area integrand r is linear, so the radial trapezoid rule is exact,
    # and the periodic rule is exact for the circle; both beat O(h^2)
    for n in (8, 16, 32):
        g = AnnulusGrid(n, 2 * n, 1.0, 2.0)
        assert abs(g.area() - np.pi * 3) <= 1e-12
        assert abs(boundary_quadrature(g).weights.sum() - 2 * np.pi) <= 1e-12


def test_quadrature_second_order_for_curved_integrand():
    errs, hs = [], []
    for n in (8, 16, 32):
        g = AnnulusGrid(n, 2 * n, 1.0, 2.0)
        errs.append(abs(g.integrate(g.R**2) - np.pi / 2 * (16 - 1)))
        hs.append(g.hr)
    assert slope(hs, errs) >= 1.8


def test_discrete_operator_examples():
    g = AnnulusGrid(32, 64, 0.5, 1.5)
    x, y = g.xy
    c = np.full(g.shape, 3.0)
    grad = discrete_operator(GridField(c, 0, np.full(64, 3.0), np.full(64, 3.0)), "gradient", g)
    assert np.max(np.abs(grad.values)) <= 1e-12
    errs = []
    for n in (16, 32):
        gg = AnnulusGrid(n, 2 * n, 0.5, 1.5)
        r2 = gg.R**2
        lo, hi = (gg.r[0] - gg.hr) ** 2 * np.ones(2 * n), (gg.r[-1] + gg.hr) ** 2 * np.ones(2 * n)
        lap = discrete_operator(GridField(r2, 0, lo, hi), "laplacian", gg)
        errs.append(np.max(np.abs(lap.values - 4)))
    assert errs[-1] <= 1e-10  # quadratic is reproduced exactly by the stencil
    v = np.stack([-y, x])
    div = discrete_operator(GridField(v, 0), "divergence", g, one_sided=True)
    assert np.max(np.abs(div.values)) <= 1e-12


def test_unfilled_ghosts_rejected():
    g = AnnulusGrid(8, 16, 1.0, 2.0)
    with pytest.raises(GhostLayerError):
        discrete_operator(GridField(np.zeros(g.shape)), "gradient", g)


def test_gridfield_rejects_nonfinite():
    with pytest.raises(ValueError):
        GridField(np.array([[np.nan]]))


def test_boundary_quadrature_orientation():
    g = AnnulusGrid(8, 16, 1.0, 2.0)
    q = boundary_quadrature(g, "inner")
    assert np.allclose(q.normals[0], [-1, 0])
    assert np.allclose(q.weights.sum(), 2 * np.pi)
    assert np.max(np.abs(np.einsum("k,ki->i", q.weights, q.normals))) <= 1e-12
    qo = boundary_quadrature(g, "outer")
    assert np.allclose(qo.normals[0], [1, 0])


def test_interpolation_exact_cases():
    g = AnnulusGrid(12, 24, 1.0, 2.0)
    f = 2.0 * g.R + 0.5 * np.arange(g.n_theta) * g.hth
    assert interpolate(f, g.xy[:, 3, 5], g) == pytest.approx(f[3, 5], abs=1e-14)
    rng = np.random.default_rng(0)
    r = rng.uniform(1.0, 2.0, 40)
    th = rng.uniform(0.0, 2 * np.pi - g.hth, 40)
    vals = interpolate(f, np.stack([r * np.cos(th), r * np.sin(th)], -1), g)
    assert np.allclose(vals, 2 * r + 0.5 * th, atol=1e-12)
    with pytest.raises(ExtrapolationError):
        interpolate(f, [3.0, 0.0], g)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_gradient_of_linear_field_is_exact(a, b, c):
    g = AnnulusGrid(10, 20, 0.5, 1.5)
    x, y = g.xy
    f = a * x + b * y + c
    grad = discrete_operator(GridField(f), "gradient", g, one_sided=True).values
    assert np.allclose(grad[0], a, atol=1e-10) and np.allclose(grad[1], b, atol=1e-10)
