import numpy as np
import pytest
from hypothesis import given, strategies as st

from coulomb_lab.bundle import (
    GaugeFixError,
    GaugeTransform,
    HorizontalForm,
    boundary_operator_T,
    certify_horizontal,
    coulomb_curvature,
    coulomb_gauge_fix,
    faces_sup,
    gauge_act,
    gauge_act_arrays,
    horizontal_project,
    maurer_cartan,
    orbit_displacement,
    verify_bct,
    verify_smooth1,
)
from coulomb_lab.forms import FormField, conductor_project, covariant_d0, covariant_d0_adjoint, deriv, inner0, inner1, project0
from coulomb_lab.geometry import build_grid, flat_metric, warped_metric
from coulomb_lab.lie import ValidationError, su2
from coulomb_lab.solver import ConnectionState, green_arrays
from coulomb_lab.spans import bump, interior_realize
from coulomb_lab.studies import random_conductor, random_modes

from conftest import random_eta

seeds = st.integers(0, 2**32 - 1)


def smooth0(grid, rng, scale=1.0):
    return FormField(0, scale * random_conductor(grid, random_modes(rng, 3), 0).data, grid)


def smooth1(grid, rng, scale=1.0):
    return FormField(1, scale * random_conductor(grid, random_modes(rng, 9), 1).data, grid)


# ---- gauge action ---------------------------------------------------------


def test_identity_acts_trivially(grid8):
    eta = random_eta(grid8, np.random.default_rng(0))
    A = ConnectionState(grid8, eta)
    B = gauge_act(A, GaugeTransform.identity(grid8))
    assert np.array_equal(B.eta_array, A.eta_array)


def test_flat_action_is_maurer_cartan(grid8):
    X = smooth0(grid8, np.random.default_rng(1), 0.5)
    g = GaugeTransform.exp(X)
    out = gauge_act_arrays(grid8, None, g.values)
    # oracle: exp(-X) d(exp X) with the same nodal difference, projected to su(2)
    gm = np.moveaxis(g.values, (-2, -1), (0, 1))
    ginv = np.conj(np.swapaxes(g.values, -1, -2))
    for i in range(3):
        dg = np.moveaxis(deriv(grid8, gm, i), (0, 1), (-2, -1))
        assert np.allclose(out[i], su2.to_coeffs(ginv @ dg), atol=1e-13)


@given(seeds)
def test_gauge_action_inverse(seed):
    g8 = build_grid(warped_metric((0.0, 1.0)), 8, 9)
    rng = np.random.default_rng(seed)
    A = ConnectionState(g8, random_eta(g8, rng))
    g = GaugeTransform.exp(smooth0(g8, rng, 0.7))
    back = gauge_act(gauge_act(A, g), g.inverse())
    assert np.abs(back.eta_array - A.eta_array).max() <= 1e-10


def test_gauge_action_composition_converges():
    errs = []
    for m in (9, 17, 33):
        gr = build_grid(flat_metric(), m - 1, m)
        rng = np.random.default_rng(2)
        g = GaugeTransform.exp(smooth0(gr, rng, 0.5))
        h = GaugeTransform.exp(smooth0(gr, rng, 0.5))
        A = ConnectionState.flat(gr)
        lhs = gauge_act(gauge_act(A, g), h).eta_array
        rhs = gauge_act(A, g @ h).eta_array
        errs.append(np.abs(lhs - rhs).max())
    assert errs[2] < errs[1] < errs[0]


def test_projector_equivariance_converges():
    # P_{A.g}(Ad(g^-1) w) = Ad(g^-1) P_A(w) up to discretization error
    from coulomb_lab.bundle import _ad_inv, _apply_ad

    errs = []
    for m in (9, 17, 33):
        gr = build_grid(flat_metric(), m - 1, m)
        rng = np.random.default_rng(4)
        g = GaugeTransform.exp(smooth0(gr, rng, 0.5))
        w = smooth1(gr, rng)
        A = ConnectionState.flat(gr, tol=1e-12)
        R = _ad_inv(g.values, su2)
        lhs = horizontal_project(gauge_act(A, g), FormField(1, _apply_ad(R, w.data), gr), tol=1e-12).data
        rhs = _apply_ad(R, horizontal_project(A, w, tol=1e-12).data)
        errs.append(np.abs(lhs - rhs).max())
    assert errs[2] < errs[1] < errs[0]
    assert errs[1] / errs[2] > 2.5


def test_gauge_transform_checks_faces(flat8):
    vals = np.broadcast_to(np.eye(2, dtype=complex), flat8.shape + (2, 2)).copy()
    vals[0, 0, 0] = np.array([[0, 1], [-1, 0]])
    with pytest.raises(ValidationError):
        GaugeTransform(vals, flat8)


# ---- gauge fixing -----------------------------------------------------------


def test_gauge_fix_zero(flat8):
    g, rep = coulomb_gauge_fix(ConnectionState.flat(flat8), FormField.zeros(1, flat8))
    assert rep.iterations == 0 and g.distance_to_identity() == 0.0


@given(seeds)
def test_gauge_fix_random_small(seed):
    g8 = build_grid(warped_metric((0.0, 1.0)), 8, 9)
    rng = np.random.default_rng(seed)
    A = ConnectionState(g8, random_eta(g8, rng, 0.1), tol=1e-12)
    eta = FormField(1, random_eta(g8, rng, 0.05), g8)
    g, rep = coulomb_gauge_fix(A, eta)
    assert rep.iterations <= 10 and rep.residual <= 1e-9
    total = gauge_act_arrays(g8, A.eta_array + eta.data, g.values)
    F = covariant_d0_adjoint(g8, A.eta_array, total - A.eta_array)
    assert np.sqrt(inner0(g8, F, F)) <= 1e-9


def test_gauge_fix_horizontal_input_is_fixed(flat8):
    A = ConnectionState.flat(flat8, tol=1e-12)
    h = horizontal_project(A, smooth1(flat8, np.random.default_rng(3), 0.01), tol=1e-13)
    g, rep = coulomb_gauge_fix(A, h.form)
    assert g.distance_to_identity() <= 1e-9


def test_gauge_fix_vertical_returns_to_slice(warped8):
    A = ConnectionState.flat(warped8, tol=1e-12)
    gamma = smooth0(warped8, np.random.default_rng(4), 0.01)
    eta = orbit_displacement(A, gamma)
    g, _ = coulomb_gauge_fix(A, eta)
    back = gauge_act_arrays(warped8, eta.data, g.values)
    assert np.sqrt(inner1(warped8, back, back)) <= 1e-6 * gamma.norm()


def test_gauge_fix_rejects_large(flat8):
    with pytest.raises(ValidationError):
        coulomb_gauge_fix(ConnectionState.flat(flat8), FormField(1, random_eta(flat8, np.random.default_rng(0), 5.0), flat8))


def test_gauge_fix_reports_nonconvergence(flat8):
    eta = FormField(1, random_eta(flat8, np.random.default_rng(0), 0.05), flat8)
    with pytest.raises(GaugeFixError) as info:
        coulomb_gauge_fix(ConnectionState.flat(flat8), eta, maxiter=1, tol=1e-15)
    assert info.value.report is not None


# ---- projector and curvature --------------------------------------------------


@given(seeds)
def test_projector_properties(seed):
    g8 = build_grid(warped_metric((0.0, 1.0)), 8, 9)
    rng = np.random.default_rng(seed)
    A = ConnectionState(g8, random_eta(g8, rng), tol=1e-12)
    om = conductor_project(FormField(1, rng.standard_normal((3, 3) + g8.shape), g8))
    P = horizontal_project(A, om).form
    PP = horizontal_project(A, P).form
    assert (PP - P).norm() <= 1e-8 * om.norm()
    dv = covariant_d0_adjoint(g8, A.eta_array, P.data)
    assert np.sqrt(inner0(g8, dv, dv)) <= 1e-8 * om.norm()
    gam = project0(rng.standard_normal((3,) + g8.shape))
    dg = covariant_d0(g8, A.eta_array, gam)
    assert abs(inner1(g8, P.data, dg)) <= 1e-8 * om.norm() * np.sqrt(inner0(g8, gam, gam))


def test_projector_kills_vertical(warped8):
    rng = np.random.default_rng(6)
    A = ConnectionState(warped8, random_eta(warped8, rng), tol=1e-12)
    gam = project0(rng.standard_normal((3,) + warped8.shape))
    om = FormField(1, covariant_d0(warped8, A.eta_array, gam), warped8)
    assert horizontal_project(A, om).form.norm() <= 1e-8 * om.norm()


def test_certify_horizontal(warped8):
    A = ConnectionState.flat(warped8, tol=1e-12)
    om = smooth1(warped8, np.random.default_rng(7))
    with pytest.raises(ValidationError):
        certify_horizontal(A, om)
    h = horizontal_project(A, om)
    assert isinstance(certify_horizontal(A, h.form), HorizontalForm)


def test_curvature_antisymmetric(warped8):
    rng = np.random.default_rng(8)
    A = ConnectionState(warped8, random_eta(warped8, rng, 0.1), tol=1e-12)
    a = horizontal_project(A, smooth1(warped8, rng))
    b = horizontal_project(A, smooth1(warped8, rng))
    Rab, _ = coulomb_curvature(A, a, b)
    Rba, _ = coulomb_curvature(A, b, a)
    Raa, _ = coulomb_curvature(A, a, a)
    assert np.abs(Raa.data).max() <= 1e-12
    assert np.abs((Rab + Rba).data).max() <= 1e-12


def test_curvature_needs_certified_forms(flat8):
    with pytest.raises(ValidationError):
        coulomb_curvature(ConnectionState.flat(flat8), FormField.zeros(1, flat8), FormField.zeros(1, flat8))


def test_curvature_of_constructed_pair(flat16):
    X1, X2, X3 = flat16.X
    psi = bump((X1 - 0.5) / 0.17) * bump((X2 - 0.5) / 0.17) * bump((X3 - 0.5) / 0.17)
    cert = interior_realize(psi, np.eye(3)[0], np.eye(3)[1], grid=flat16)
    (t,) = cert.terms
    a, b = t.forms(flat16)
    A = ConnectionState.flat(flat16, tol=1e-12)
    R, _ = coulomb_curvature(A, certify_horizontal(A, a), certify_horizontal(A, b))
    target = np.zeros((3,) + flat16.shape)
    target[2] = psi
    u, _ = green_arrays(A, target, tol=1e-12)
    assert np.abs(R.data + 2 * u).max() <= 1e-9 * np.abs(u).max()


# ---- boundary operator and identities ---------------------------------------


def test_T_vanishes_for_interior_laplacian(warped16):
    A = ConnectionState.flat(warped16, tol=1e-12)
    X3 = warped16.X[2]
    phi = np.zeros((3,) + warped16.shape)
    phi[1] = bump((X3 - 0.5) / 0.2) * np.cos(2 * np.pi * warped16.X[0])
    u, _ = green_arrays(A, phi, tol=1e-12)
    assert faces_sup(boundary_operator_T(A, FormField(0, u, warped16), lap=phi)) == 0.0


@pytest.mark.parametrize("amp, expect", [(1.0, np.pi), (np.pi**2, np.pi**3)])
def test_T_of_green_sine(amp, expect):
    for m in (17, 33):
        g = build_grid(flat_metric(), 8, m)
        f = np.zeros((3,) + g.shape)
        f[0] = amp * np.sin(np.pi * g.X[2])
        A = ConnectionState.flat(g, tol=1e-13)
        u, _ = green_arrays(A, f, tol=1e-13)
        T = boundary_operator_T(A, FormField(0, u, g))
        for face in (0, 1):
            assert np.abs(T[face][0] - expect).max() <= 5 * amp * g.h_norm**2
            assert np.abs(T[face][1:]).max() <= 1e-9


def test_T_warped_matches_1d_oracle():
    # f = G(w) with w = cos(pi x3) e1 and phi = x3: dw(nu) = 0 and 2 tau w = 4 on both faces
    errs = []
    for m in (17, 33, 65):
        g = build_grid(warped_metric((0.0, 1.0)), 8, m)
        w = np.zeros((3,) + g.shape)
        w[0] = np.cos(np.pi * g.X[2])
        A = ConnectionState.flat(g, tol=1e-13)
        u, _ = green_arrays(A, w, tol=1e-13)
        T = boundary_operator_T(A, FormField(0, u, g))
        errs.append(max(np.abs(T[k][0] - 4.0).max() for k in (0, 1)))
    assert errs[0] < 0.1
    assert errs[2] < errs[1] / 1.8 < errs[0] / 3.2


def test_T_tau_flip_changes_value(warped8):
    f = FormField(0, random_conductor(warped8, random_modes(np.random.default_rng(0), 3), 0).data, warped8)
    A = ConnectionState.flat(warped8)
    assert faces_sup({k: a - b for (k, a), b in zip(boundary_operator_T(A, f).items(),
                                                   boundary_operator_T(A, f, tau_sign=-1).values())}) > 0


def test_bct_zero_beta(warped8):
    A = ConnectionState.flat(warped8, tol=1e-12)
    a = horizontal_project(A, smooth1(warped8, np.random.default_rng(9)))
    b = certify_horizontal(A, FormField.zeros(1, warped8))
    assert verify_bct(A, a, b).residual == 0.0


def test_bct_corrected_residual_converges():
    res = []
    for n, m in ((8, 9), (16, 17)):
        g = build_grid(warped_metric((0.0, 1.0)), n, m)
        rng = np.random.default_rng(10)
        a = FormField(1, random_conductor(g, random_modes(rng, 9), 1).data, g)
        b = FormField(1, random_conductor(g, random_modes(rng, 9), 1).data, g)
        rep = verify_bct(ConnectionState.flat(g), a, b, require_horizontal=False)
        res.append(rep.corrected)
    assert np.log2(res[0] / res[1]) >= 0.9


def test_bct_rejects_non_horizontal(warped8):
    A = ConnectionState.flat(warped8)
    a = smooth1(warped8, np.random.default_rng(11))
    with pytest.raises(ValidationError):
        verify_bct(A, a, a)


def test_smooth1_interior_supported(flat16):
    A = ConnectionState.flat(flat16, tol=1e-12)
    X1, X3 = flat16.X[0], flat16.X[2]
    w1 = np.zeros((3,) + flat16.shape)
    w2 = np.zeros_like(w1)
    w1[0] = bump((X3 - 0.5) / 0.2) * np.cos(2 * np.pi * X1)
    w2[1] = bump((X3 - 0.5) / 0.2)
    g1, _ = green_arrays(A, w1, tol=1e-12)
    g2, _ = green_arrays(A, w2, tol=1e-12)
    rep = verify_smooth1(FormField(0, g1, flat16), FormField(0, g2, flat16), w1, w2)
    assert max(rep.t_residuals) == 0.0
    assert rep.residual <= 0.05


def test_smooth1_rejects_non_kernel(flat8):
    f = FormField(0, random_conductor(flat8, random_modes(np.random.default_rng(0), 3), 0).data, flat8)
    with pytest.raises(ValidationError):
        verify_smooth1(f, f, t_tol=1e-6)
