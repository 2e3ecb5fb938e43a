"""Gauge action, Coulomb gauge, horizontal projection, curvature and T_A.

Gauge transformations are stored as arrays (Nx, Ny, Nz, n, n) of group
matrices.  Connections are :class:`~coulomb_lab.solver.ConnectionState`
objects carrying the 1-form eta = nabla_A - d.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forms import (
    FormField,
    covariant_d0,
    covariant_d0_adjoint,
    d0,
    gradient_accurate,
    d0_adjoint_trace,
    deriv,
    inner0,
    inner1,
    laplacian_full,
    project0,
    raise_index,
    wedge_dot_arrays,
)
from .geometry import DomainGrid
from .lie import ValidationError, expm_batch, su2
from .solver import ConnectionState, SolveReport, green_arrays
from .stencils import one_sided_derivative3

__all__ = [
    "GaugeFixError",
    "GaugeTransform",
    "HorizontalForm",
    "gauge_act",
    "gauge_act_arrays",
    "coulomb_gauge_fix",
    "GaugeFixReport",
    "orbit_displacement",
    "horizontal_project",
    "connection_form",
    "certify_horizontal",
    "coulomb_curvature",
    "face_trace_derivative",
    "boundary_operator_T",
    "faces_sup",
    "lap_bracket",
    "verify_bct",
    "BctReport",
    "verify_smooth1",
    "Smooth1Report",
]

HORIZONTAL_TOL = 1e-8
PROJECTOR_TOL = 1e-12


class GaugeFixError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# --------------------------------------------------------------------------
# gauge transformations
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaugeTransform:
    """A group element per node, identity on both faces."""

    values: np.ndarray
    grid: DomainGrid
    algebra: object = su2
    check: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        n = self.algebra.n
        if v.shape != self.grid.shape + (n, n):
            raise ValidationError(f"gauge transform needs shape {self.grid.shape + (n, n)}")
        object.__setattr__(self, "values", v)
        if self.check:
            eye = np.eye(n)
            faces = np.concatenate([v[:, :, 0].reshape(-1, n, n), v[:, :, -1].reshape(-1, n, n)])
            if np.abs(faces - eye).max() > 1e-12:
                raise ValidationError("gauge transform is not the identity on the faces")

    @classmethod
    def identity(cls, grid, algebra=su2):
        v = np.broadcast_to(np.eye(algebra.n, dtype=complex), grid.shape + (algebra.n, algebra.n))
        return cls(v.copy(), grid, algebra)

    @classmethod
    def exp(cls, X: FormField):
        """exp of a conductor 0-form, nodewise."""
        if X.degree != 0:
            raise ValidationError("exp takes a 0-form")
        return cls(exp_field(X.data, X.algebra), X.grid, X.algebra)

    def inverse(self):
        return GaugeTransform(np.conj(np.swapaxes(self.values, -1, -2)), self.grid, self.algebra)

    def __matmul__(self, other):
        return GaugeTransform(self.values @ other.values, self.grid, self.algebra)

    def distance_to_identity(self):
        """Max over nodes of the operator norm of g - e."""
        eye = np.eye(self.algebra.n)
        return float(np.linalg.norm(self.values - eye, ord=2, axis=(-2, -1)).max())


def exp_field(X, algebra=su2):
    """Coefficient field (L, Nx, Ny, Nz) -> group matrices (Nx, Ny, Nz, n, n)."""
    return expm_batch(algebra.to_matrix(X))


def _ad_inv(values, algebra):
    """Ad(g^{-1}) as (Nx, Ny, Nz, L, L) coefficient matrices."""
    return algebra.ad_matrices(np.conj(np.swapaxes(values, -1, -2)))


def _apply_ad(R, coeffs):
    """Apply nodewise (..., L, L) to coefficient arrays (L, ...) or (3, L, ...)."""
    if coeffs.ndim == R.ndim - 1:
        return np.einsum("...kl,l...->k...", R, coeffs)
    return np.stack([np.einsum("...kl,l...->k...", R, c) for c in coeffs])


def maurer_cartan(grid: DomainGrid, values, algebra=su2):
    """Projection onto the algebra of g^{-1} D_i g, as a 1-form array."""
    gm = np.moveaxis(values, (-2, -1), (0, 1))  # (n, n, Nx, Ny, Nz)
    ginv = np.conj(np.swapaxes(values, -1, -2))
    out = []
    for i in range(3):
        dg = np.moveaxis(deriv(grid, gm, i), (0, 1), (-2, -1))
        out.append(algebra.to_coeffs(ginv @ dg))
    return np.stack(out)


def gauge_act_arrays(grid: DomainGrid, eta, values, algebra=su2):
    """eta' = P(g^{-1} dg) + Ad(g^{-1}) eta with P the orthogonal projection.

    The projection kills the Hermitian part of the difference quotient, so
    acting by g and then by g^{-1} returns eta to roundoff.
    """
    out = maurer_cartan(grid, values, algebra)
    if eta is not None:
        out = out + _apply_ad(_ad_inv(values, algebra), eta)
    return out


def gauge_act(A: ConnectionState, g: GaugeTransform) -> ConnectionState:
    """The connection A . g."""
    if not isinstance(g, GaugeTransform):
        raise ValidationError("gauge_act needs a GaugeTransform")
    return A.with_eta(gauge_act_arrays(A.grid, A.eta_array, g.values, A.algebra))


def orbit_displacement(A: ConnectionState, gamma: FormField):
    """eta with A + eta = A . exp(gamma): a purely vertical displacement."""
    g = exp_field(gamma.data, gamma.algebra)
    out = gauge_act_arrays(A.grid, A.eta_array, g, A.algebra)
    if A.eta_array is not None:
        out = out - A.eta_array
    return FormField(1, out, A.grid, A.algebra)


# --------------------------------------------------------------------------
# Coulomb gauge fixing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaugeFixReport:
    iterations: int
    residual: float
    tol: float
    history: tuple = ()
    solves: tuple = ()

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "tol": self.tol,
            "history": list(self.history),
        }


def _coulomb_residual(A, total, X):
    grid, alg = A.grid, A.algebra
    g = exp_field(X, alg)
    new = gauge_act_arrays(grid, total, g, alg)
    diff = new if A.eta_array is None else new - A.eta_array
    F = covariant_d0_adjoint(grid, A.eta_array, diff, alg)
    return F, g


def coulomb_gauge_fix(
    A: ConnectionState, eta: FormField, tol=1e-9, maxiter=50, smallness=0.1, solve_tol=1e-11
):
    """Find g = exp(X) with d*_A((A + eta) . g - A) = 0 near X = 0.

    Newton-type iteration X <- X - G_A F(X) with the Green operator of A as
    the approximate inverse.  Returns (GaugeTransform, GaugeFixReport).
    """
    grid, alg = A.grid, A.algebra
    if eta.degree != 1 or not eta.is_conductor():
        raise ValidationError("eta must be a conductor 1-form")
    limit = smallness * np.sqrt(grid.volume)
    if eta.norm() > limit:
        raise ValidationError(f"||eta|| = {eta.norm():.3e} exceeds the smallness bound {limit:.3e}")
    total = eta.data if A.eta_array is None else A.eta_array + eta.data
    X = np.zeros((alg.dim,) + grid.shape)
    history = []
    solves = []
    for it in range(maxiter + 1):
        F, g = _coulomb_residual(A, total, X)
        res = float(np.sqrt(max(inner0(grid, F, F, alg), 0.0)))
        history.append(res)
        if res <= tol:
            rep = GaugeFixReport(it, res, tol, tuple(history), tuple(solves))
            return GaugeTransform(g, grid, alg), rep
        if it == maxiter:
            break
        step, srep = green_arrays(A, F, tol=solve_tol)
        solves.append(srep.iterations)
        X = X - step
    rep = GaugeFixReport(maxiter, history[-1], tol, tuple(history), tuple(solves))
    raise GaugeFixError(
        f"gauge fixing did not reach {tol:.1e} in {maxiter} iterations (eta outside the slice?)", rep
    )


# --------------------------------------------------------------------------
# horizontal projection and curvature
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HorizontalForm:
    """A conductor 1-form certified to satisfy d*_A alpha = 0."""

    form: FormField
    state: ConnectionState
    residual: float

    @property
    def data(self):
        return self.form.data


def _codiv_ratio(A, v):
    grid, alg = A.grid, A.algebra
    dv = covariant_d0_adjoint(grid, A.eta_array, v, alg)
    nv = np.sqrt(inner1(grid, v, v, alg))
    if nv == 0:
        return 0.0
    return float(np.sqrt(inner0(grid, dv, dv, alg)) / nv)


def certify_horizontal(A: ConnectionState, alpha: FormField, tol=HORIZONTAL_TOL) -> HorizontalForm:
    if alpha.degree != 1:
        raise ValidationError("horizontal forms are 1-forms")
    if not alpha.is_conductor():
        raise ValidationError("form is not conductor")
    r = _codiv_ratio(A, alpha.data)
    if r > tol:
        raise ValidationError(f"form is not horizontal: ||d*_A a|| / ||a|| = {r:.3e}")
    return HorizontalForm(alpha, A, r)


def connection_form(A: ConnectionState, v, tol=PROJECTOR_TOL, x0=None):
    """G_A d*_A v for a 1-form array v; returns (0-form array, SolveReport)."""
    rhs = covariant_d0_adjoint(A.grid, A.eta_array, v, A.algebra)
    return green_arrays(A, rhs, tol=tol, x0=x0)


def horizontal_project(A: ConnectionState, omega: FormField, tol=PROJECTOR_TOL) -> HorizontalForm:
    """P_A omega = omega - d_A G_A d*_A omega."""
    if omega.degree != 1:
        raise ValidationError("horizontal_project takes a 1-form")
    if not omega.is_conductor():
        raise ValidationError("horizontal_project needs a conductor 1-form")
    u, _rep = connection_form(A, omega.data, tol=tol)
    out = omega.data - covariant_d0(A.grid, A.eta_array, u, A.algebra)
    form = FormField(1, out, omega.grid, omega.algebra)
    return HorizontalForm(form, A, _codiv_ratio(A, out))


def coulomb_curvature(A: ConnectionState, alpha: HorizontalForm, beta: HorizontalForm, tol=None):
    """R_A(alpha, beta) = -2 G_A [alpha . beta]."""
    for x in (alpha, beta):
        if not isinstance(x, HorizontalForm):
            raise ValidationError("coulomb_curvature needs certified horizontal forms")
        if x.residual > HORIZONTAL_TOL:
            raise ValidationError("input is not horizontal")
    w = wedge_dot_arrays(A.grid, alpha.data, beta.data, A.algebra)
    u, rep = green_arrays(A, w, tol=tol)
    return FormField(0, -2.0 * u, A.grid, A.algebra), rep


# --------------------------------------------------------------------------
# boundary traces
# --------------------------------------------------------------------------


def face_trace_derivative(grid: DomainGrid, values, face: int):
    """Inward normal derivative at a face with the four-point stencil."""
    v = np.asarray(values)
    h = grid.h_norm
    if face == 0:
        return one_sided_derivative3(v[..., 0], v[..., 1], v[..., 2], v[..., 3], h)
    return one_sided_derivative3(v[..., -1], v[..., -2], v[..., -3], v[..., -4], h)


def _face(values, grid, face):
    return np.asarray(values)[..., grid.face_index(face)]


def _eta_normal(A: ConnectionState, face):
    """eta(nu) on a face, nu the inward unit normal."""
    if A.eta_array is None:
        return None
    return A.grid.inward_sign(face) * _face(A.eta_array[2], A.grid, face)


def _cov_normal_trace(A: ConnectionState, values, face):
    """d_A(values)(nu) on a face."""
    out = face_trace_derivative(A.grid, values, face)
    en = _eta_normal(A, face)
    if en is not None:
        out = out + A.algebra.bracket_coeffs(en, _face(values, A.grid, face))
    return out


def faces_sup(trace: dict) -> float:
    """Combined sup norm over both faces of a {face: array (L, Nx, Ny)} dict."""
    return max(float(np.sqrt((v**2).sum(axis=0)).max()) for v in trace.values())


def boundary_operator_T(A: ConnectionState, f: FormField, lap=None, tau_sign=1.0):
    """T_A f = d_A(Delta_A f)(nu) + 2 tau Delta_A f on each face.

    ``lap`` may supply Delta_A f on the full grid (for example from a
    product-rule expansion); otherwise the operator's interior values are
    used with the face layers extrapolated.  ``tau_sign`` exists for
    fault-injection tests.  Returns {face: (L, Nx, Ny) array}.
    """
    if f.degree != 0:
        raise ValidationError("T_A takes a 0-form")
    grid = A.grid
    L = laplacian_full(grid, A.eta_array, f.data, A.algebra) if lap is None else np.asarray(lap)
    out = {}
    for face in (0, 1):
        tau = tau_sign * grid.tau[face]
        out[face] = _cov_normal_trace(A, L, face) + 2.0 * tau * _face(L, grid, face)
    return out


def lap_bracket(grid: DomainGrid, g1, g2, lap1, lap2, algebra=su2):
    """Delta[g1, g2] = [Delta g1, g2] + [g1, Delta g2] - 2 [dg1 . dg2] (flat).

    The gradients use fourth-order biased rows at the faces: this expansion
    feeds boundary traces, where the SBP closure error would be
    differentiated once more.
    """
    return (
        algebra.bracket_coeffs(lap1, g2)
        + algebra.bracket_coeffs(g1, lap2)
        - 2.0 * wedge_dot_arrays(grid, gradient_accurate(grid, g1), gradient_accurate(grid, g2), algebra)
    )


# --------------------------------------------------------------------------
# boundary identities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BctReport:
    residual: float
    per_face: tuple
    corrected: float
    horizontality: tuple

    def as_dict(self):
        return {
            "residual": self.residual,
            "per_face": list(self.per_face),
            "corrected": self.corrected,
            "horizontality": list(self.horizontality),
        }


def verify_bct(A: ConnectionState, alpha, beta, tau_sign=1.0, require_horizontal=True):
    """Residual of d_A[a.b](nu) + 2 tau [a.b] on the faces.

    ``corrected`` adds [d*_A a, b(nu)] + [a(nu), d*_A b], which makes the
    identity hold for conductor inputs that are not horizontal.
    """
    grid, alg = A.grid, A.algebra
    forms = []
    hz = []
    for x in (alpha, beta):
        if isinstance(x, HorizontalForm):
            forms.append(x.data)
            hz.append(x.residual)
        else:
            if x.degree != 1 or not x.is_conductor():
                raise ValidationError("verify_bct needs conductor 1-forms")
            r = _codiv_ratio(A, x.data)
            if require_horizontal and r > HORIZONTAL_TOL:
                raise ValidationError(f"input is not horizontal ({r:.3e})")
            forms.append(x.data)
            hz.append(r)
    a, b = forms
    X = wedge_dot_arrays(grid, a, b, alg)
    dsa = _cov_codiv_trace(A, a)
    dsb = _cov_codiv_trace(A, b)
    per_face = []
    corrected = 0.0
    for face in (0, 1):
        s = grid.inward_sign(face)
        tau = tau_sign * grid.tau[face]
        r = _cov_normal_trace(A, X, face) + 2.0 * tau * _face(X, grid, face)
        per_face.append(float(np.sqrt((r**2).sum(axis=0)).max()))
        a_nu = s * _face(a[2], grid, face)
        b_nu = s * _face(b[2], grid, face)
        rc = (
            r
            + alg.bracket_coeffs(_face(dsa, grid, face), b_nu)
            + alg.bracket_coeffs(a_nu, _face(dsb, grid, face))
        )
        corrected = max(corrected, float(np.sqrt((rc**2).sum(axis=0)).max()))
    return BctReport(max(per_face), tuple(per_face), corrected, tuple(hz))


def _cov_codiv_trace(A, v):
    out = d0_adjoint_trace(A.grid, v)
    if A.eta_array is not None:
        out = out - wedge_dot_arrays(A.grid, A.eta_array, v, A.algebra)
    return out


@dataclass(frozen=True)
class Smooth1Report:
    residual: float
    per_face: tuple
    expansion_error: float
    t_residuals: tuple

    def as_dict(self):
        return {
            "residual": self.residual,
            "per_face": list(self.per_face),
            "expansion_error": self.expansion_error,
            "t_residuals": list(self.t_residuals),
        }


def verify_smooth1(g1: FormField, g2: FormField, lap1=None, lap2=None, t_tol=None):
    """Check the bracket identity for T_0 on two elements of its kernel.

    Residual: d(Delta[g1,g2])(nu) + 2 tau Delta[g1,g2]
    - 3[Delta g1, dg2(nu)] - 3[dg1(nu), Delta g2], sup over faces, with
    Delta[g1, g2] from the product-rule expansion.  ``expansion_error`` is
    the relative sup difference between that expansion and the operator
    Laplacian of the bracket at interior nodes.  ``t_tol`` (if given) is the
    largest accepted sup |T_0 g_i|.
    """
    grid, alg = g1.grid, g1.algebra
    A = ConnectionState.flat(grid, alg)
    L1 = laplacian_full(grid, None, g1.data, alg) if lap1 is None else np.asarray(lap1)
    L2 = laplacian_full(grid, None, g2.data, alg) if lap2 is None else np.asarray(lap2)
    t1 = faces_sup(boundary_operator_T(A, g1, lap=L1))
    t2 = faces_sup(boundary_operator_T(A, g2, lap=L2))
    if t_tol is not None and max(t1, t2) > t_tol:
        raise ValidationError(f"inputs are not in the kernel of T_0 (sup {max(t1, t2):.3e})")
    Lb = lap_bracket(grid, g1.data, g2.data, L1, L2, alg)
    per_face = []
    for face in (0, 1):
        tau = grid.tau[face]
        lhs = face_trace_derivative(grid, Lb, face) + 2.0 * tau * _face(Lb, grid, face)
        rhs = 3.0 * alg.bracket_coeffs(
            _face(L1, grid, face), face_trace_derivative(grid, g2.data, face)
        ) + 3.0 * alg.bracket_coeffs(face_trace_derivative(grid, g1.data, face), _face(L2, grid, face))
        per_face.append(float(np.sqrt(((lhs - rhs) ** 2).sum(axis=0)).max()))
    br = alg.bracket_coeffs(g1.data, g2.data)
    op = laplacian_full(grid, None, br, alg)
    inner = (slice(None),) * 3 + (slice(1, -1),)
    scale = max(np.abs(Lb[inner]).max(), 1e-300)
    exp_err = float(np.abs(op[inner] - Lb[inner]).max() / scale)
    return Smooth1Report(max(per_face), tuple(per_face), exp_err, (t1, t2))
