import numpy as np
import pytest
from hypothesis import given, strategies as st

from coulomb_lab.geometry import (
    GeometryError,
    MetricSpec,
    ResolutionError,
    boundary_restrict,
    build_grid,
    flat_metric,
    load_metric_config,
    mean_curvature_H,
    mean_curvature_tau,
    normal_derivative,
    tau_analytic,
    warped_metric,
)


def test_flat_grid_is_identity(flat16):
    assert np.all(flat16.a == 1.0)
    assert np.all(flat16.ginv == np.eye(3)[:, :, None, None, None])


def test_warped_determinant_matches_analytic(warped16):
    X3 = warped16.X[2]
    assert np.allclose(warped16.a, np.exp(2 * X3), rtol=1e-14)


def test_resolution_precondition():
    with pytest.raises(ResolutionError):
        build_grid(flat_metric(), 4, 3)


def test_quadrature_integrates_volume(warped16):
    # int_0^1 e^{2 x3} dx3 = (e^2 - 1) / 2
    assert warped16.volume == pytest.approx((np.e**2 - 1) / 2, rel=1e-3)


def test_flat_tau_vanishes(flat16):
    for face in (0, 1):
        assert np.all(mean_curvature_tau(flat16, face).values == 0.0)


def test_warped_tau_signs():
    g = build_grid(warped_metric((0.0, 1.0)), 16, 33)
    assert np.allclose(tau_analytic(g, 0).values, 2.0, atol=1e-12)
    assert np.allclose(tau_analytic(g, 1).values, -2.0, atol=1e-12)
    assert np.allclose(tau_analytic(g, 0, path="lateral").values, 2.0, atol=1e-12)
    # stencil value: O(h^2) from the one-sided difference of e^{2 x3}
    assert np.abs(mean_curvature_tau(g, 0).values - 2.0).max() < 10 * g.h_norm**2
    assert np.abs(mean_curvature_tau(g, 1).values + 2.0).max() < 10 * g.h_norm**2
    assert np.allclose(mean_curvature_H(g, 0).values, 0.5 * mean_curvature_tau(g, 0).values)


def test_tau_converges_at_second_order():
    errs = []
    for m in (9, 17, 33):
        g = build_grid(warped_metric((0.0, 1.0)), 8, m)
        errs.append(np.abs(mean_curvature_tau(g, 0).values - 2.0).max())
    assert np.log2(errs[0] / errs[1]) > 1.8 and np.log2(errs[1] / errs[2]) > 1.8


def test_normal_derivative_linear_is_exact(flat16):
    X3 = flat16.X[2]
    assert np.all(boundary_restrict(X3, flat16, 0).values == 0.0)
    assert np.allclose(normal_derivative(X3, flat16, 0).values, 1.0, atol=1e-13)
    assert np.allclose(normal_derivative(X3, flat16, 1).values, -1.0, atol=1e-13)


def test_normal_derivative_constant(flat16):
    c = np.full(flat16.shape, 2.5)
    assert np.allclose(boundary_restrict(c, flat16, 1).values, 2.5)
    assert np.allclose(normal_derivative(c, flat16, 1).values, 0.0, atol=1e-12)


def test_normal_derivative_sine_face1():
    g = build_grid(flat_metric(), 8, 65)
    v = np.sin(np.pi * g.X[2])
    err = np.abs(normal_derivative(v, g, 1).values - np.pi).max()
    # leading error of the 3-point one-sided stencil is pi^3 h^2 / 3
    assert err < 11 * g.h_norm**2


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_tau_paths_agree(c1, c2):
    g = build_grid(warped_metric((0.0, c1, c2)), 8, 9)
    for face in (0, 1):
        assert np.allclose(tau_analytic(g, face).values, tau_analytic(g, face, "lateral").values, atol=1e-12)


def test_rejects_non_adapted_metric():
    def g(x1, x2, x3):
        out = np.zeros((3, 3) + np.shape(x1))
        out[0, 0] = out[1, 1] = out[2, 2] = 1.0
        out[0, 2] = out[2, 0] = 0.1
        return out

    with pytest.raises(GeometryError):
        build_grid(MetricSpec(g), 8, 9)


def test_load_metric_config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("family = warped\nphi = 0, 0.5\nresolutions = 16x17, 32x33\nseed = 7\neps = 0.1\n")
    spec, cfg = load_metric_config(p)
    assert spec.family == "warped" and spec.params["phi"] == [0.0, 0.5]
    assert cfg["resolutions"] == [(16, 17), (32, 33)]
    assert cfg["seed"] == 7 and cfg["eps"] == "0.1"


def test_load_metric_config_rejects_unknown_family(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("family = spherical\n")
    with pytest.raises(GeometryError):
        load_metric_config(p)
