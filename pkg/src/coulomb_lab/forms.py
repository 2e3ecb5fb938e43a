"""Lie-algebra-valued 0-, 1- and 2-forms on the slab grid and their calculus.

Storage is collocated and in basis coefficients of the algebra:

* 0-form: array (L, Nx, Ny, Nz)
* 1-form: array (3, L, Nx, Ny, Nz), component i multiplies dx_{i+1}
* 2-form: array (3, L, Nx, Ny, Nz), components (dx2^dx3, dx3^dx1, dx1^dx2)

where L is the algebra dimension.  The array-level kernels (``d0``, ``d1``,
``d0_adjoint`` ...) are what the solvers call; :class:`FormField` wraps them
with degree and shape checks.

The codifferential is the exact adjoint of ``d`` under the weighted inner
products, restricted to conductor fields: the transpose of the stencil is
applied and the result projected onto the conductor subspace.  The SBP
property of the x3 operator makes the unprojected adjoint coincide with the
consistent formula -a^{-1} sum_i D_i(a g^{ij} v_j) at every interior node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DomainGrid
from .lie import AlgebraDescriptor, ShapeError, ValidationError, su2
from .stencils import explicit_first_derivative, extrapolate_face, periodic_first_derivative

__all__ = [
    "DegreeError",
    "FormField",
    "L2InnerProduct",
    "deriv",
    "deriv_T",
    "gradient_accurate",
    "d0",
    "d1",
    "d0_adjoint",
    "d1_adjoint",
    "d0_adjoint_trace",
    "project0",
    "project1",
    "project2",
    "inner0",
    "inner1",
    "inner2",
    "wedge_dot_arrays",
    "bracket_form_arrays",
    "covariant_d0",
    "covariant_d0_adjoint",
    "laplacian_arrays",
    "laplacian_full",
    "exterior_d",
    "codifferential",
    "wedge_dot",
    "bracket_form",
    "covariant_d",
    "covariant_d_star",
    "laplacian",
    "laplacian_expansion",
    "hodge_star_1to2",
    "hodge_star_2to1",
    "conductor_project",
    "is_conductor",
]

CONDUCTOR_TOL = 1e-12


class DegreeError(ValueError):
    pass


# --------------------------------------------------------------------------
# one-axis derivatives
# --------------------------------------------------------------------------


def deriv(grid: DomainGrid, x, i: int):
    """D_i applied to the trailing three grid axes of ``x``."""
    if i == 0:
        return periodic_first_derivative(x, -3, grid.h_lat)
    if i == 1:
        return periodic_first_derivative(x, -2, grid.h_lat)
    return x @ grid.D3.T


def deriv_T(grid: DomainGrid, x, i: int):
    """Plain transpose D_i^T (no weights)."""
    if i == 0:
        return -periodic_first_derivative(x, -3, grid.h_lat)
    if i == 1:
        return -periodic_first_derivative(x, -2, grid.h_lat)
    return x @ grid.D3


# --------------------------------------------------------------------------
# conductor projections
# --------------------------------------------------------------------------


def project0(u):
    out = np.array(u, copy=True)
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    return out


def project1(v):
    out = np.array(v, copy=True)
    out[:2, ..., 0] = 0.0
    out[:2, ..., -1] = 0.0
    return out


def project2(w):
    out = np.array(w, copy=True)
    out[2, ..., 0] = 0.0
    out[2, ..., -1] = 0.0
    return out


_PROJECT = {0: project0, 1: project1, 2: project2}


def _tangential_trace(data, degree):
    if degree == 0:
        return np.concatenate([data[..., 0].ravel(), data[..., -1].ravel()])
    if degree == 1:
        return np.concatenate([data[:2, ..., 0].ravel(), data[:2, ..., -1].ravel()])
    return np.concatenate([data[2, ..., 0].ravel(), data[2, ..., -1].ravel()])


# --------------------------------------------------------------------------
# metric contractions and inner products
# --------------------------------------------------------------------------


def raise_index(grid: DomainGrid, v):
    """(g^{-1} v)_i = sum_j g^{ij} v_j for a 1-form array."""
    return np.einsum("ij...,j...->i...", grid.ginv, v)


def lower_index(grid: DomainGrid, v):
    return np.einsum("ij...,j...->i...", grid.g, v)


def _metric2_apply(grid, w):
    return np.einsum("cd...,d...->c...", grid.metric2, w)


def inner0(grid: DomainGrid, u, v, algebra=su2):
    return float(np.sum(grid.W * algebra.inner_coeffs(u, v)))


def inner1(grid: DomainGrid, u, v, algebra=su2):
    gv = raise_index(grid, v)
    return float(sum(np.sum(grid.W * algebra.inner_coeffs(u[i], gv[i])) for i in range(3)))


def inner2(grid: DomainGrid, u, v, algebra=su2):
    mv = _metric2_apply(grid, v)
    return float(sum(np.sum(grid.W * algebra.inner_coeffs(u[c], mv[c])) for c in range(3)))


_INNER = {0: inner0, 1: inner1, 2: inner2}


# --------------------------------------------------------------------------
# exterior derivative and its adjoint (array level)
# --------------------------------------------------------------------------


def d0(grid: DomainGrid, u):
    return np.stack([deriv(grid, u, i) for i in range(3)])


def gradient_accurate(grid: DomainGrid, u):
    """d0 with fourth-order biased x3 rows instead of the SBP closure."""
    D = explicit_first_derivative(grid.n_norm, grid.h_norm)
    return np.stack([deriv(grid, u, 0), deriv(grid, u, 1), np.asarray(u) @ D.T])


def d1(grid: DomainGrid, a):
    return np.stack(
        [
            deriv(grid, a[2], 1) - deriv(grid, a[1], 2),
            deriv(grid, a[0], 2) - deriv(grid, a[2], 0),
            deriv(grid, a[1], 0) - deriv(grid, a[0], 1),
        ]
    )


def d0_adjoint(grid: DomainGrid, v, project=True):
    """Exact adjoint of d0: W^{-1} sum_i D_i^T (W (g^{-1} v)_i)."""
    gv = raise_index(grid, v)
    W = grid.W
    acc = sum(deriv_T(grid, W * gv[i], i) for i in range(3))
    out = acc / W
    return project0(out) if project else out


def d0_adjoint_trace(grid: DomainGrid, v):
    """Consistent codifferential -a^{-1} sum_i D_i(a (g^{-1}v)_i) on all nodes.

    Agrees with :func:`d0_adjoint` at interior nodes; on the faces it is the
    value to use for boundary traces.
    """
    gv = raise_index(grid, v)
    a = grid.a
    return -sum(deriv(grid, a * gv[i], i) for i in range(3)) / a


def d1_adjoint(grid: DomainGrid, w, project=True):
    """Exact adjoint of d1 on 2-forms, output a 1-form."""
    W = grid.W
    mw = W * _metric2_apply(grid, w)
    t0 = deriv_T(grid, mw[1], 2) - deriv_T(grid, mw[2], 1)
    t1 = deriv_T(grid, mw[2], 0) - deriv_T(grid, mw[0], 2)
    t2 = deriv_T(grid, mw[0], 1) - deriv_T(grid, mw[1], 0)
    # t_j = sum_{c,i} eps_{cij} D_i^T(mw_c) collects the coefficient of alpha_j
    t = np.stack([t0, t1, t2]) / W
    out = lower_index(grid, t)
    return project1(out) if project else out


# --------------------------------------------------------------------------
# algebraic operations (array level)
# --------------------------------------------------------------------------


def wedge_dot_arrays(grid: DomainGrid, alpha, beta, algebra=su2):
    gb = raise_index(grid, beta)
    return sum(algebra.bracket_coeffs(alpha[i], gb[i]) for i in range(3))


def bracket_form_arrays(alpha, phi, algebra=su2):
    return np.stack([algebra.bracket_coeffs(alpha[i], phi) for i in range(3)])


def covariant_d0(grid: DomainGrid, eta, u, algebra=su2):
    du = d0(grid, u)
    if eta is None:
        return du
    return du + bracket_form_arrays(eta, u, algebra)


def covariant_d0_adjoint(grid: DomainGrid, eta, v, algebra=su2, project=True):
    out = d0_adjoint(grid, v, project=False)
    if eta is not None:
        out = out - wedge_dot_arrays(grid, eta, v, algebra)
    return project0(out) if project else out


def laplacian_arrays(grid: DomainGrid, eta, f, algebra=su2):
    """Delta_A f = d*_A d_A f with zero face values."""
    return covariant_d0_adjoint(grid, eta, covariant_d0(grid, eta, f, algebra), algebra)


def laplacian_full(grid: DomainGrid, eta, f, algebra=su2):
    """Delta_A f with face values filled by cubic extrapolation.

    The interior stencil is used unchanged; the two face layers are
    extrapolated from the four nearest interior layers.  This is the form of
    Delta_A f that boundary traces are taken from.
    """
    L = laplacian_arrays(grid, eta, f, algebra)
    L[..., 0] = extrapolate_face(L[..., 1], L[..., 2], L[..., 3], L[..., 4])
    L[..., -1] = extrapolate_face(L[..., -2], L[..., -3], L[..., -4], L[..., -5])
    return L


# --------------------------------------------------------------------------
# FormField and the public operations
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FormField:
    """A sampled algebra-valued p-form on a :class:`DomainGrid`."""

    degree: int
    data: np.ndarray
    grid: DomainGrid
    algebra: AlgebraDescriptor = su2

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise DegreeError("degree must be 0, 1 or 2")
        data = np.asarray(self.data, dtype=float)
        expect = (self.algebra.dim,) + self.grid.shape
        if self.degree > 0:
            expect = (3,) + expect
        if data.shape != expect:
            raise ShapeError(f"degree-{self.degree} field needs shape {expect}, got {data.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, degree, grid, algebra=su2):
        shape = (algebra.dim,) + grid.shape
        if degree > 0:
            shape = (3,) + shape
        return cls(degree, np.zeros(shape), grid, algebra)

    @classmethod
    def from_function(cls, grid, fn, algebra=su2):
        """0-form from fn(x1, x2, x3) -> coefficient array (L, ...)."""
        vals = np.asarray(fn(*grid.X), dtype=float)
        return cls(0, np.broadcast_to(vals, (algebra.dim,) + grid.shape).copy(), grid, algebra)

    def matrices(self):
        """Matrix view with the (n, n) axes last."""
        return self.algebra.to_matrix(self.data if self.degree == 0 else np.moveaxis(self.data, 1, 0))

    def _like(self, data, degree=None):
        return FormField(self.degree if degree is None else degree, data, self.grid, self.algebra)

    def __add__(self, other):
        _check_pair(self, other)
        return self._like(self.data + other.data)

    def __sub__(self, other):
        _check_pair(self, other)
        return self._like(self.data - other.data)

    def __neg__(self):
        return self._like(-self.data)

    def __mul__(self, s):
        return self._like(float(s) * self.data)

    __rmul__ = __mul__

    def inner(self, other):
        _check_pair(self, other)
        return _INNER[self.degree](self.grid, self.data, other.data, self.algebra)

    def norm(self):
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def sup(self):
        """Max over nodes of the pointwise Euclidean coefficient norm."""
        d = self.data
        axes = (0,) if self.degree == 0 else (0, 1)
        return float(np.sqrt((d**2).sum(axis=axes)).max())

    def is_conductor(self, tol=CONDUCTOR_TOL):
        return is_conductor(self, tol)


def _check_pair(a: FormField, b: FormField):
    if a.degree != b.degree:
        raise DegreeError("degree mismatch")
    if a.grid is not b.grid and a.grid.shape != b.grid.shape:
        raise ShapeError("fields live on different grids")
    if a.algebra.dim != b.algebra.dim:
        raise ShapeError("algebra mismatch")


class L2InnerProduct:
    """Weighted inner product sum_nodes w a <.,.>, with the induced form metric."""

    def __init__(self, grid: DomainGrid, algebra=su2):
        self.grid = grid
        self.algebra = algebra

    def __call__(self, u: FormField, v: FormField) -> float:
        _check_pair(u, v)
        return _INNER[u.degree](self.grid, u.data, v.data, self.algebra)

    def norm(self, u: FormField) -> float:
        return float(np.sqrt(max(self(u, u), 0.0)))


def is_conductor(u: FormField, tol=CONDUCTOR_TOL) -> bool:
    tr = _tangential_trace(u.data, u.degree)
    return bool(tr.size == 0 or np.abs(tr).max() <= tol)


def conductor_project(u: FormField) -> FormField:
    """Zero the tangential trace on both faces."""
    return u._like(_PROJECT[u.degree](u.data))


def exterior_d(u: FormField) -> FormField:
    if u.degree == 0:
        return u._like(d0(u.grid, u.data), 1)
    if u.degree == 1:
        return u._like(d1(u.grid, u.data), 2)
    raise DegreeError("d of a 2-form would be a 3-form; not supported")


def codifferential(v: FormField, trace: bool = False) -> FormField:
    """Discrete d*.

    Default: adjoint of ``d`` restricted to conductor fields (output is a
    conductor field).  ``trace=True`` on a 1-form returns the consistent
    formula on every node, including faces.
    """
    if v.degree == 1:
        data = d0_adjoint_trace(v.grid, v.data) if trace else d0_adjoint(v.grid, v.data)
        return v._like(data, 0)
    if v.degree == 2:
        return v._like(d1_adjoint(v.grid, v.data, project=not trace), 1)
    raise DegreeError("d* of a 0-form is not defined")


def wedge_dot(alpha: FormField, beta: FormField) -> FormField:
    """[alpha . beta] = sum_{ij} g^{ij} [alpha_i, beta_j]."""
    if alpha.degree != 1 or beta.degree != 1:
        raise DegreeError("wedge_dot takes two 1-forms")
    _check_pair(alpha, beta)
    return alpha._like(wedge_dot_arrays(alpha.grid, alpha.data, beta.data, alpha.algebra), 0)


def bracket_form(alpha: FormField, phi: FormField) -> FormField:
    if alpha.degree != 1 or phi.degree != 0:
        raise DegreeError("bracket_form takes a 1-form and a 0-form")
    if alpha.data.shape[1:] != phi.data.shape:
        raise ShapeError("shape mismatch")
    return alpha._like(bracket_form_arrays(alpha.data, phi.data, alpha.algebra))


def _eta_of(A):
    eta = getattr(A, "eta", A)
    if eta is None:
        return None
    if isinstance(eta, FormField):
        if eta.degree != 1:
            raise DegreeError("connection form must be a 1-form")
        if not eta.is_conductor():
            raise ValidationError("connection form is not a conductor 1-form")
        return eta.data
    return np.asarray(eta)


def covariant_d(A, u: FormField) -> FormField:
    """d_A u = du + [eta, u]; ``A`` is a ConnectionState or a 1-form eta."""
    if u.degree != 0:
        raise DegreeError("covariant_d takes a 0-form")
    return u._like(covariant_d0(u.grid, _eta_of(A), u.data, u.algebra), 1)


def covariant_d_star(A, v: FormField, trace: bool = False) -> FormField:
    """d*_A v = d*v - [eta . v], projected to conductor unless ``trace``."""
    if v.degree != 1:
        raise DegreeError("covariant_d_star takes a 1-form")
    eta = _eta_of(A)
    if trace:
        out = d0_adjoint_trace(v.grid, v.data)
        if eta is not None:
            out = out - wedge_dot_arrays(v.grid, eta, v.data, v.algebra)
        return v._like(out, 0)
    return v._like(covariant_d0_adjoint(v.grid, eta, v.data, v.algebra), 0)


def laplacian(A, f: FormField) -> FormField:
    """Delta_A f = d*_A d_A f (zero on faces)."""
    if f.degree != 0:
        raise DegreeError("laplacian takes a 0-form")
    return f._like(laplacian_arrays(f.grid, _eta_of(A), f.data, f.algebra))


def laplacian_expansion(A, f: FormField) -> FormField:
    """Independent evaluation of Delta_A f about the flat connection.

    Delta f + [d*h, f] - [h.[h, f]] - 2[h.df] with h = eta; zero on faces.
    Equal to :func:`laplacian` in the continuum; the two discrete paths
    differ by the failure of the product rule for difference quotients.
    """
    if f.degree != 0:
        raise DegreeError("laplacian_expansion takes a 0-form")
    grid, alg = f.grid, f.algebra
    h = _eta_of(A)
    out = laplacian_arrays(grid, None, f.data, alg)
    if h is not None:
        dsh = d0_adjoint(grid, h, project=False)
        out = (
            out
            + alg.bracket_coeffs(dsh, f.data)
            - wedge_dot_arrays(grid, h, bracket_form_arrays(h, f.data, alg), alg)
            - 2.0 * wedge_dot_arrays(grid, h, d0(grid, f.data), alg)
        )
    return f._like(project0(out))


def hodge_star_1to2(alpha: FormField) -> FormField:
    """(*alpha)_c = a sum_j g^{cj} alpha_j in the (23, 31, 12) basis."""
    if alpha.degree != 1:
        raise DegreeError("hodge_star_1to2 takes a 1-form")
    grid = alpha.grid
    return alpha._like(grid.a * raise_index(grid, alpha.data), 2)


def hodge_star_2to1(omega: FormField) -> FormField:
    """Inverse of :func:`hodge_star_1to2` via the cofactor (minor) identity.

    The inverse of a g^{-1} is a^{-1} g = a cof(g^{-1}), and the cofactor
    matrix of g^{-1} is the 2-form metric stored on the grid.
    """
    if omega.degree != 2:
        raise DegreeError("hodge_star_2to1 takes a 2-form")
    grid = omega.grid
    return omega._like(grid.a * _metric2_apply(grid, omega.data), 1)
