import numpy as np
import pytest
from hypothesis import given, strategies as st

from coulomb_lab.forms import (
    DegreeError,
    FormField,
    codifferential,
    conductor_project,
    covariant_d,
    covariant_d_star,
    d0,
    d0_adjoint,
    d1,
    d1_adjoint,
    exterior_d,
    hodge_star_1to2,
    hodge_star_2to1,
    inner0,
    inner1,
    inner2,
    laplacian,
    laplacian_expansion,
    project0,
    project1,
    wedge_dot,
)
from coulomb_lab.geometry import build_grid, flat_metric, warped_metric
from coulomb_lab.lie import ShapeError

from conftest import random_eta

seeds = st.integers(0, 2**32 - 1)


def e(k):
    return np.eye(3)[k][:, None, None, None]


def test_d_of_constant_is_zero(grid8):
    u = FormField(0, np.ones((3,) + grid8.shape), grid8)
    assert np.abs(exterior_d(u).data).max() <= 1e-12


def test_d_of_linear_x3(grid8):
    u = FormField(0, e(0) * grid8.X[2], grid8)
    du = exterior_d(u).data
    assert np.allclose(du[2], e(0) * np.ones(grid8.shape), atol=1e-12)
    assert np.abs(du[:2]).max() == 0.0


@given(seeds)
def test_d_squared_vanishes(seed):
    g = build_grid(warped_metric((0.0, 1.0)), 8, 9)
    u = np.random.default_rng(seed).standard_normal((3,) + g.shape)
    assert np.abs(d1(g, d0(g, u))).max() <= 1e-9


@given(seeds)
def test_codifferential_squared_vanishes(seed):
    g = build_grid(warped_metric((0.0, 1.0)), 8, 9)
    w = np.random.default_rng(seed).standard_normal((3, 3) + g.shape)
    assert np.abs(d0_adjoint(g, d1_adjoint(g, w))).max() <= 1e-8


@given(seeds, st.sampled_from(["flat", "warped"]))
def test_stokes_adjointness_degree0(seed, fam):
    g = build_grid(flat_metric() if fam == "flat" else warped_metric((0.0, 1.0)), 8, 9)
    rng = np.random.default_rng(seed)
    u = project0(rng.standard_normal((3,) + g.shape))
    v = rng.standard_normal((3, 3) + g.shape)
    defect = inner1(g, d0(g, u), v) - inner0(g, u, d0_adjoint(g, v))
    assert abs(defect) <= 1e-11 * np.sqrt(inner0(g, u, u) * inner1(g, v, v))


@given(seeds, st.sampled_from(["flat", "warped"]))
def test_stokes_adjointness_degree1(seed, fam):
    g = build_grid(flat_metric() if fam == "flat" else warped_metric((0.0, 1.0)), 8, 9)
    rng = np.random.default_rng(seed)
    a = project1(rng.standard_normal((3, 3) + g.shape))
    w = rng.standard_normal((3, 3) + g.shape)
    defect = inner2(g, d1(g, a), w) - inner1(g, a, d1_adjoint(g, w))
    assert abs(defect) <= 1e-11 * np.sqrt(inner1(g, a, a) * inner2(g, w, w))


@given(seeds)
def test_covariant_adjointness(seed):
    g = build_grid(warped_metric((0.0, 1.0)), 8, 9)
    rng = np.random.default_rng(seed)
    eta = FormField(1, random_eta(g, rng), g)
    u = FormField(0, project0(rng.standard_normal((3,) + g.shape)), g)
    v = FormField(1, rng.standard_normal((3, 3) + g.shape), g)
    defect = covariant_d(eta, u).inner(v) - u.inner(covariant_d_star(eta, v))
    assert abs(defect) <= 1e-11 * u.norm() * v.norm()


def test_codifferential_zero(grid8):
    assert np.all(codifferential(FormField.zeros(1, grid8)).data == 0)


def test_codifferential_analytic_flat():
    errs = []
    for m in (17, 33):
        g = build_grid(flat_metric(), 8, m)
        X3 = g.X[2]
        v = np.zeros((3, 3) + g.shape)
        v[2, 0] = np.sin(np.pi * X3)
        got = codifferential(FormField(1, v, g), trace=True).data[0]
        errs.append(np.abs(got + np.pi * np.cos(np.pi * X3)).max())
    assert errs[1] < errs[0] / 3.5


def test_wedge_dot_examples(flat8):
    a = np.zeros((3, 3) + flat8.shape)
    b = np.zeros_like(a)
    a[0, 0] = 1.0
    b[0, 1] = 1.0
    A, B = FormField(1, a, flat8), FormField(1, b, flat8)
    assert np.allclose(wedge_dot(A, B).data, e(2) * np.ones(flat8.shape))
    b2 = np.zeros_like(a)
    b2[1, 1] = 1.0
    assert np.all(wedge_dot(A, FormField(1, b2, flat8)).data == 0)


@given(seeds)
def test_wedge_dot_antisymmetric(seed):
    g = build_grid(warped_metric((0.0, 1.0)), 8, 9)
    rng = np.random.default_rng(seed)
    a = FormField(1, rng.standard_normal((3, 3) + g.shape), g)
    b = FormField(1, rng.standard_normal((3, 3) + g.shape), g)
    assert np.abs(wedge_dot(a, a).data).max() <= 1e-12
    assert np.abs((wedge_dot(a, b) + wedge_dot(b, a)).data).max() <= 1e-12


def test_covariant_reduces_to_flat(grid8):
    rng = np.random.default_rng(1)
    u = FormField(0, rng.standard_normal((3,) + grid8.shape), grid8)
    v = FormField(1, rng.standard_normal((3, 3) + grid8.shape), grid8)
    zero = FormField.zeros(1, grid8)
    assert np.array_equal(covariant_d(zero, u).data, exterior_d(u).data)
    assert np.allclose(covariant_d_star(zero, v).data, codifferential(v).data, atol=0)


def test_covariant_d_of_constant_is_bracket(grid8):
    rng = np.random.default_rng(2)
    eta = random_eta(grid8, rng)
    c = np.array([0.3, -0.2, 1.0])
    u = FormField(0, np.broadcast_to(c[:, None, None, None], (3,) + grid8.shape).copy(), grid8)
    got = covariant_d(FormField(1, eta, grid8), u).data
    expect = np.stack([np.cross(eta[i], u.data, axis=0) for i in range(3)])
    assert np.allclose(got, expect, atol=1e-12)


def test_laplacian_of_eigenfunction():
    # nodes clear of the boundary closure converge at high order; the
    # closure rows themselves carry an O(h) truncation error
    deep, near = [], []
    for m in (33, 65):
        g = build_grid(flat_metric(), 8, m)
        f = FormField(0, e(0) * np.sin(np.pi * g.X[2]), g)
        err = np.abs(laplacian(None, f).data - np.pi**2 * f.data)
        deep.append(err[..., 8:-8].max())
        near.append(err[..., 1:8].max())
    assert deep[1] < deep[0] / 3.5
    assert near[1] < near[0] / 1.8


def test_laplacian_of_zero(grid8):
    assert np.all(laplacian(None, FormField.zeros(0, grid8)).data == 0)


def _paths(m):
    g = build_grid(warped_metric((0.0, 1.0)), 8, m)
    X1, X2, X3 = g.X
    eta = np.zeros((3, 3) + g.shape)
    eta[0, 1] = 0.3 * np.sin(np.pi * X3) * np.cos(2 * np.pi * X2)
    eta[2, 2] = 0.2 * np.sin(2 * np.pi * X1) * X3
    f = FormField(0, project0(np.stack([np.sin(np.pi * X3) * np.cos(2 * np.pi * X1),
                                        np.sin(2 * np.pi * X3), X3 * (1 - X3)])), g)
    A = FormField(1, eta, g)
    a, b = laplacian(A, f).data, laplacian_expansion(A, f).data
    return float(np.abs(a - b).max() / np.abs(a).max())


def test_laplacian_paths_converge():
    e1, e2 = _paths(17), _paths(33)
    assert e2 < e1 / 3.0


@pytest.mark.xfail(strict=True, reason="product rule fails for difference quotients; the two paths agree only to O(h^2)")
def test_laplacian_paths_agree_to_roundoff():
    assert _paths(17) <= 1e-10


def test_hodge_star_flat_pattern(flat8):
    w = np.zeros((3, 3) + flat8.shape)
    w[0, 0] = 1.0
    out = hodge_star_2to1(FormField(2, w, flat8)).data
    assert np.allclose(out[0, 0], 1.0) and np.abs(out[1:]).max() == 0


@given(seeds)
def test_hodge_star_involution_flat(seed):
    g = build_grid(flat_metric(), 8, 9)
    a = FormField(1, np.random.default_rng(seed).standard_normal((3, 3) + g.shape), g)
    assert np.allclose(hodge_star_2to1(hodge_star_1to2(a)).data, a.data, atol=1e-12)


def test_hodge_star_warped_dense_oracle(warped8):
    g = warped8
    rng = np.random.default_rng(3)
    w = rng.standard_normal((3, 3) + g.shape)
    got = hodge_star_2to1(FormField(2, w, g)).data
    # dense oracle: star on 1-forms is a * g^{-1}; its nodewise inverse maps 2 -> 1
    S = g.a[None, None] * g.ginv
    Sm = np.transpose(S, (2, 3, 4, 0, 1))
    rhs = np.transpose(w, (2, 3, 4, 0, 1))  # (..., component, coefficient)
    expect = np.transpose(np.linalg.solve(Sm, rhs), (3, 4, 0, 1, 2))
    assert np.allclose(expect, got, atol=1e-10)


def test_conductor_projection_examples(flat8):
    a = np.zeros((3, 3) + flat8.shape)
    a[0, 0] = 1.0
    p = conductor_project(FormField(1, a, flat8)).data
    assert np.all(p[0, 0, :, :, 0] == 0) and np.all(p[0, 0, :, :, -1] == 0)
    assert np.all(p[0, 0, :, :, 1:-1] == 1)
    f = conductor_project(FormField(0, np.ones((3,) + flat8.shape), flat8))
    assert f.is_conductor() and np.all(f.data[..., 1:-1] == 1)
    assert np.array_equal(conductor_project(f).data, f.data)


def test_degree_and_shape_errors(flat8):
    with pytest.raises(DegreeError):
        FormField(3, np.zeros((3,) + flat8.shape), flat8)
    with pytest.raises(ShapeError):
        FormField(1, np.zeros((3,) + flat8.shape), flat8)
    with pytest.raises(DegreeError):
        exterior_d(FormField.zeros(2, flat8))
