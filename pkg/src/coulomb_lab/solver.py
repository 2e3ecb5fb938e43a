"""Green operators for the covariant Laplacian with Dirichlet (conductor) data.

The unknowns are the interior nodes; face values are held at zero.  Delta_A
is self-adjoint and positive in the weighted inner product, so the solver is
plain preconditioned CG in that inner product with a Jacobi preconditioner
built from the flat part of the operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .forms import (
    FormField,
    covariant_d0,
    d0,
    d0_adjoint,
    deriv,
    inner0,
    inner1,
    laplacian_arrays,
    project0,
)
from .geometry import BoundaryField, DomainGrid, normal_derivative
from .lie import ValidationError, su2
from .stencils import explicit_first_derivative, narrow_second_derivative

__all__ = [
    "SolverError",
    "DegeneracyError",
    "SolveReport",
    "ConnectionState",
    "pcg",
    "jacobi_diagonal",
    "green",
    "green_arrays",
    "scalar_laplacian",
    "scalar_green",
    "fourier_green",
    "hopf_normal_derivative",
    "poincare_estimate",
]

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegeneracyError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    tol: float
    breakdown: bool = False
    scale: Optional[str] = None

    @property
    def converged(self):
        return (not self.breakdown) and self.residual <= self.tol

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "tol": self.tol,
            "breakdown": self.breakdown,
            "scale": self.scale,
        }


# --------------------------------------------------------------------------
# CG
# --------------------------------------------------------------------------


def pcg(apply, b, inner, precond=None, tol=DEFAULT_TOL, maxiter=1000, x0=None):
    """Preconditioned conjugate gradients in a user-supplied inner product.

    ``apply`` and ``precond`` must be self-adjoint for ``inner``.  Returns
    (x, SolveReport); the reported residual is recomputed from b - A x at the
    end rather than taken from the recursion.
    """
    bnorm = np.sqrt(inner(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, tol)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    r = b - apply(x) if x0 is not None else b.copy()
    if np.sqrt(inner(r, r)) / bnorm <= tol:
        return x, SolveReport(0, float(np.sqrt(inner(r, r)) / bnorm), tol)
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = inner(r, z)
    breakdown = False
    it = 0
    for it in range(1, maxiter + 1):
        Ap = apply(p)
        pAp = inner(p, Ap)
        if not pAp > 0.0:
            breakdown = True
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.sqrt(inner(r, r)) / bnorm <= tol:
            break
        z = precond(r) if precond is not None else r
        rz_new = inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    rtrue = b - apply(x)
    res = float(np.sqrt(inner(rtrue, rtrue)) / bnorm)
    return x, SolveReport(it, res, tol, breakdown)


def jacobi_diagonal(grid: DomainGrid):
    """Diagonal of the flat-part operator W^{-1} sum_i D_i^T W g^{ii} D_i."""
    W = grid.W
    diag = np.zeros(grid.shape)
    c = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]) / grid.h_lat
    for i, axis in ((0, 0), (1, 1)):
        q = W * grid.ginv[i, i]
        for k, ck in zip(range(-2, 3), c):
            if ck:
                diag += ck**2 * np.roll(q, -k, axis)
    q = W * grid.ginv[2, 2]
    diag += q @ (grid.D3**2)
    diag /= W
    diag[..., 0] = 1.0
    diag[..., -1] = 1.0
    return diag


def _max_iter(n_unknowns):
    return int(20 * np.sqrt(n_unknowns)) + 1


# --------------------------------------------------------------------------
# connection state
# --------------------------------------------------------------------------


class ConnectionState:
    """A connection d + eta with eta a conductor 1-form, plus solver settings.

    ``eta=None`` is the flat connection.  The Jacobi diagonal is cached on
    first use; the state is otherwise immutable.
    """

    def __init__(self, grid: DomainGrid, eta=None, algebra=su2, tol=DEFAULT_TOL, maxiter=None):
        if eta is not None:
            if isinstance(eta, FormField):
                if eta.degree != 1:
                    raise ValidationError("connection form must be a 1-form")
                if not eta.is_conductor():
                    raise ValidationError("connection form is not a conductor 1-form")
                eta = eta.data
            else:
                eta = np.asarray(eta, dtype=float)
                FormField(1, eta, grid, algebra)  # shape check
                if not FormField(1, eta, grid, algebra).is_conductor():
                    raise ValidationError("connection form is not a conductor 1-form")
        self.grid = grid
        self._eta = None if eta is None else np.array(eta, copy=True)
        self.algebra = algebra
        self.tol = float(tol)
        n = algebra.dim * grid.n_lat**2 * (grid.n_norm - 2)
        self.maxiter = _max_iter(n) if maxiter is None else int(maxiter)
        self._diag = None

    @classmethod
    def flat(cls, grid, algebra=su2, **kw):
        return cls(grid, None, algebra, **kw)

    @property
    def eta_array(self):
        return self._eta

    @property
    def eta(self):
        if self._eta is None:
            return FormField.zeros(1, self.grid, self.algebra)
        return FormField(1, self._eta, self.grid, self.algebra)

    def with_eta(self, eta):
        return ConnectionState(self.grid, eta, self.algebra, self.tol, self.maxiter)

    @property
    def diagonal(self):
        if self._diag is None:
            self._diag = jacobi_diagonal(self.grid)
        return self._diag

    def apply(self, f):
        return laplacian_arrays(self.grid, self._eta, f, self.algebra)

    def inner(self, x, y):
        return inner0(self.grid, x, y, self.algebra)

    def check_symmetry(self, probes=3, seed=0, tol=1e-10):
        """Random probes of <Lu, v> = <u, Lv> and <u, Lu> > 0."""
        rng = np.random.default_rng(seed)
        shape = (self.algebra.dim,) + self.grid.shape
        worst = 0.0
        for _ in range(probes):
            u = project0(rng.standard_normal(shape))
            v = project0(rng.standard_normal(shape))
            Lu, Lv = self.apply(u), self.apply(v)
            scale = np.sqrt(self.inner(Lu, Lu) * self.inner(v, v))
            worst = max(worst, abs(self.inner(Lu, v) - self.inner(u, Lv)) / scale)
            if self.inner(u, Lu) <= 0:
                raise ValidationError("covariant Laplacian is not positive on a probe")
        if worst > tol:
            raise ValidationError(f"covariant Laplacian symmetry defect {worst:.3e}")
        return worst

    def __repr__(self):
        kind = "flat" if self._eta is None else "eta"
        return f"ConnectionState({kind}, {self.grid!r})"


# --------------------------------------------------------------------------
# Green operators
# --------------------------------------------------------------------------


def green_arrays(A: ConnectionState, f, tol=None, x0=None, raise_on_fail=True):
    """Solve Delta_A u = f on interior nodes, u = 0 on faces (array level)."""
    tol = A.tol if tol is None else tol
    b = project0(np.asarray(f, dtype=float))
    diag = A.diagonal
    u, rep = pcg(
        A.apply,
        b,
        A.inner,
        precond=lambda r: r / diag,
        tol=tol,
        maxiter=A.maxiter,
        x0=None if x0 is None else project0(x0),
    )
    if raise_on_fail and not rep.converged:
        raise SolverError(
            f"CG stopped after {rep.iterations} iterations at residual {rep.residual:.3e}", rep
        )
    return u, rep


def green(A: ConnectionState, f: FormField, tol=None, x0=None, scale=None):
    """G_A f: the conductor 0-form u with Delta_A u = f in the interior.

    ``scale`` is recorded in the report as metadata only; there is a single
    discrete solve regardless of the Sobolev scale it stands for.
    """
    if f.degree != 0:
        raise ValidationError("green takes a 0-form")
    u, rep = green_arrays(A, f.data, tol=tol, x0=None if x0 is None else x0.data)
    if scale is not None:
        rep = SolveReport(rep.iterations, rep.residual, rep.tol, rep.breakdown, str(scale))
    return FormField(0, u, f.grid, f.algebra), rep


def scalar_laplacian(grid: DomainGrid, u):
    """Flat Dirichlet Laplacian d*d of a real array (Nx, Ny, Nz)."""
    return d0_adjoint(grid, d0(grid, u))


def scalar_green(grid: DomainGrid, phi, tol=DEFAULT_TOL, require_support=True, method="cg"):
    """Solve the flat scalar Dirichlet problem Delta u = phi.

    ``phi`` must be nonnegative and not identically zero; with
    ``require_support`` it must also vanish within two cells of each face.
    The result is checked to be strictly positive at every interior node.
    ``method`` is "cg" (the summation-by-parts operator) or "fourier"
    (see :func:`fourier_green`).
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != grid.shape:
        raise ValidationError("phi must be a real array on the grid")
    if phi.min() < 0:
        raise ValidationError("phi must be nonnegative")
    if not np.any(phi[..., 1:-1] > 0):
        raise ValidationError("phi must not vanish identically")
    if require_support and (np.any(phi[..., :3] != 0) or np.any(phi[..., -3:] != 0)):
        raise ValidationError("phi must vanish within two cells of each face")
    if method == "fourier":
        u = fourier_green(grid, phi)
    elif method == "cg":
        W = grid.W
        diag = jacobi_diagonal(grid)
        u, rep = pcg(
            lambda x: scalar_laplacian(grid, x),
            project0(phi),
            lambda x, y: float(np.sum(W * x * y)),
            precond=lambda r: r / diag,
            tol=tol,
            maxiter=_max_iter(grid.n_lat**2 * (grid.n_norm - 2)),
        )
        if not rep.converged:
            raise SolverError("scalar Green solve did not converge", rep)
    else:
        raise ValueError("method must be 'cg' or 'fourier'")
    if u[..., 1:-1].min() <= 0:
        raise DegeneracyError("G phi is not positive at every interior node")
    return u


def _lateral_symbols(n, h):
    """Symbols of the periodic fourth-order first and (negated) second differences."""
    k1 = 2 * np.pi * np.fft.fftfreq(n)
    k2 = 2 * np.pi * np.fft.rfftfreq(n)
    first = lambda k: (8 * np.sin(k) - np.sin(2 * k)) / (6 * h)
    second = lambda k: (30 - 32 * np.cos(k) + 2 * np.cos(2 * k)) / (12 * h * h)
    return first(k1)[:, None], first(k2)[None, :], second(k1)[:, None], second(k2)[None, :]


def fourier_green(grid: DomainGrid, f):
    """Flat Dirichlet Green operator for metrics that depend on x3 only.

    Laterally diagonal in Fourier space; in x3 a narrow fourth-order stencil
    with one-sided closures, solved exactly mode by mode.  The discrete error
    is smooth up to the faces, so normal derivatives of the solution converge
    at the faces, unlike the CG solution of the wide summation-by-parts
    operator.  ``f`` has shape (..., n_lat, n_lat, n_norm).
    """
    f = np.asarray(f, dtype=float)
    g = grid.g
    if np.abs(g - g[:, :, :1, :1, :]).max() > 1e-13:
        raise ValidationError("fourier_green needs a metric independent of x1, x2")
    gi = grid.ginv[:, :, 0, 0, :]
    X1, X2, X3 = (c[0, 0, :] for c in grid.X)
    gm = np.moveaxis(grid.spec.g(X1, X2, X3), (0, 1), (-2, -1))
    dgm = np.moveaxis(grid.spec.derivative3(X1, X2, X3), (0, 1), (-2, -1))
    c = 0.5 * np.trace(np.linalg.solve(gm, dgm), axis1=-2, axis2=-1)
    m = grid.n_norm
    D1 = explicit_first_derivative(m, grid.h_norm)
    D2 = narrow_second_derivative(m, grid.h_norm)
    op = -(D2 + c[:, None] * D1)[1:-1, 1:-1]
    l1, l2, s1, s2 = _lateral_symbols(grid.n_lat, grid.h_lat)
    K = (
        gi[0, 0][None, None, :] * s1[..., None]
        + gi[1, 1][None, None, :] * s2[..., None]
        + 2 * gi[0, 1][None, None, :] * (l1 * l2)[..., None]
    )
    mats = op[None, None] + K[..., 1:-1, None] * np.eye(m - 2)[None, None]
    lead = f.shape[:-3]
    fh = np.fft.rfft2(f.reshape((-1,) + grid.shape), axes=(1, 2))[..., 1:-1]
    uh = np.linalg.solve(mats[None], fh[..., None])[..., 0]
    u = np.zeros((fh.shape[0],) + grid.shape)
    u[..., 1:-1] = np.fft.irfft2(uh, s=(grid.n_lat, grid.n_lat), axes=(1, 2))
    return u.reshape(lead + grid.shape)


def hopf_normal_derivative(grid: DomainGrid, gphi, face: int, min_margin=0.0):
    """Inward normal derivative of G phi on one face and its minimum.

    Returns (BoundaryField, margin).  A margin at or below ``min_margin``
    raises :class:`DegeneracyError`.
    """
    nd = normal_derivative(gphi, grid, face)
    margin = float(np.min(nd.values))
    if margin <= min_margin:
        raise DegeneracyError(
            f"normal derivative of G phi on face {face} has margin {margin:.3e}"
        )
    return nd, margin


# --------------------------------------------------------------------------
# Poincare constant
# --------------------------------------------------------------------------


def poincare_estimate(A: ConnectionState, samples: int = 20, seed=0, method="sample", iters=30):
    """Estimate sup ||f|| / ||d_A f|| over conductor 0-forms.

    ``method="sample"`` returns the max over ``samples`` random smooth
    conductor fields; ``method="inverse_power"`` runs inverse iteration on
    Delta_A and returns 1 / sqrt(lambda_min), the sharp constant.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    grid, alg = A.grid, A.algebra
    rng = np.random.default_rng(seed)
    shape = (alg.dim,) + grid.shape
    eta = A.eta_array

    def ratio(f):
        df = covariant_d0(grid, eta, f, alg)
        return np.sqrt(inner0(grid, f, f, alg) / inner1(grid, df, df, alg))

    if method == "sample":
        best = 0.0
        for _ in range(samples):
            f = _random_smooth(grid, rng, alg.dim)
            best = max(best, float(ratio(f)))
        return best
    if method != "inverse_power":
        raise ValueError("method must be 'sample' or 'inverse_power'")
    v = project0(rng.standard_normal(shape))
    v = v / np.sqrt(A.inner(v, v))
    lam = None
    for _ in range(iters):
        w, _rep = green_arrays(A, v, tol=1e-12, x0=None)
        w = w / np.sqrt(A.inner(w, w))
        lam_new = A.inner(w, A.apply(w))
        v = w
        if lam is not None and abs(lam_new - lam) <= 1e-13 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(1.0 / np.sqrt(lam))


def _random_smooth(grid, rng, dim, modes=3):
    """Random conductor field from a few low Fourier / sine modes."""
    X1, X2, X3 = grid.X
    out = np.zeros((dim,) + grid.shape)
    for k in range(dim):
        for _ in range(modes):
            m1, m2 = rng.integers(0, 3, size=2)
            m3 = rng.integers(1, 4)
            ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
            out[k] += (
                rng.standard_normal()
                * np.cos(2 * np.pi * m1 * X1 + ph1)
                * np.cos(2 * np.pi * m2 * X2 + ph2)
                * np.sin(np.pi * m3 * X3)
            )
    return project0(out)
