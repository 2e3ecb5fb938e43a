"""Horizontal lifts of loops of connections and their holonomy.

A loop t -> A + eta(t) in the space of connections is lifted to a path of
gauge transformations g(t) with g' = g gamma, where gamma cancels the
vertical part of the velocity of A(t) . g(t):

    gamma = -G_B d*_B(Ad(g^{-1}) eta'),    B = A(t) . g(t).

The lift is integrated with a fourth-order Runge-Kutta-Munthe-Kaas scheme,
so g stays in the group to roundoff.  The endpoint g(1) is the holonomy.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bundle import (
    GaugeTransform,
    HorizontalForm,
    _ad_inv,
    _apply_ad,
    coulomb_curvature,
    certify_horizontal,
    exp_field,
    gauge_act_arrays,
)
from .forms import FormField, covariant_d0, covariant_d0_adjoint, inner0, inner1
from .lie import ValidationError, logm_batch
from .solver import ConnectionState, SolverError, green_arrays

__all__ = [
    "LiftError",
    "ConnectionLoop",
    "HolonomyResult",
    "horizontal_lift",
    "holonomy_log",
    "square_loop",
    "retrace_loop",
    "HolonomyStudy",
    "curvature_holonomy_study",
    "fitted_order",
]

LIFT_TOL = 1e-11
DEFAULT_STEPS = 64
HOLONOMY_SIGN = -1.0  # log(hol) ~ -eps^2 R(alpha, beta) for the counterclockwise square


class LiftError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True, eq=False)
class ConnectionLoop:
    """Piecewise-linear loop t -> A + eta(t) through sampled conductor 1-forms.

    ``ts`` are increasing parameters in [0, 1] starting at 0 and ending at 1;
    ``etas`` has shape (len(ts), 3, L, Nx, Ny, Nz).  Closure means
    eta(1) = eta(0).
    """

    base: ConnectionState
    ts: np.ndarray
    etas: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        etas = np.asarray(self.etas, dtype=float)
        grid, alg = self.base.grid, self.base.algebra
        if ts.ndim != 1 or ts.size < 8:
            raise ValidationError("a loop needs at least 8 samples")
        if abs(ts[0]) > 0 or abs(ts[-1] - 1) > 0 or np.any(np.diff(ts) <= 0):
            raise ValidationError("samples must increase from 0 to 1")
        if etas.shape != (ts.size, 3, alg.dim) + grid.shape:
            raise ValidationError("etas must have shape (samples, 3, L, Nx, Ny, Nz)")
        for e in etas:
            if not FormField(1, e, grid, alg).is_conductor(1e-12):
                raise ValidationError("loop samples must be conductor 1-forms")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "etas", etas)

    @property
    def closed(self):
        return float(np.abs(self.etas[-1] - self.etas[0]).max()) <= 1e-12

    @property
    def grid(self):
        return self.base.grid

    def segment(self, t):
        k = int(np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, self.ts.size - 2))
        return k

    def eta(self, t, k=None):
        k = self.segment(t) if k is None else k
        t0, t1 = self.ts[k], self.ts[k + 1]
        s = (t - t0) / (t1 - t0)
        return (1 - s) * self.etas[k] + s * self.etas[k + 1]

    def velocity(self, k):
        return (self.etas[k + 1] - self.etas[k]) / (self.ts[k + 1] - self.ts[k])

    def connection(self, t, k=None):
        e = self.eta(t, k)
        if self.base.eta_array is not None:
            e = e + self.base.eta_array
        return e

    def reversed(self):
        return ConnectionLoop(self.base, 1.0 - self.ts[::-1], self.etas[::-1].copy())


def square_loop(A: ConnectionState, alpha, beta, eps, samples_per_side=2):
    """Loop eps (x alpha + y beta) around the unit square in the (x, y) plane."""
    a = np.asarray(getattr(alpha, "data", alpha), dtype=float)
    b = np.asarray(getattr(beta, "data", beta), dtype=float)
    corners = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]
    pts = []
    for (x0, y0), (x1, y1) in zip(corners, corners[1:]):
        for s in np.arange(samples_per_side) / samples_per_side:
            pts.append((x0 + s * (x1 - x0), y0 + s * (y1 - y0)))
    pts.append(corners[-1])
    ts = np.linspace(0.0, 1.0, len(pts))
    etas = np.stack([eps * (x * a + y * b) for x, y in pts])
    return ConnectionLoop(A, ts, etas)


def retrace_loop(A: ConnectionState, alpha, eps, samples=8):
    """Out along eps alpha and straight back."""
    a = np.asarray(getattr(alpha, "data", alpha), dtype=float)
    half = samples // 2
    s = np.concatenate([np.linspace(0, 1, half + 1), np.linspace(1, 0, half + 1)[1:]])
    ts = np.linspace(0.0, 1.0, s.size)
    return ConnectionLoop(A, ts, np.stack([eps * x * a for x in s]))


@dataclass(frozen=True, eq=False)
class HolonomyResult:
    g_end: GaugeTransform
    vertical_residuals: np.ndarray
    steps: int
    order: str = "RKMK4"
    solves: int = 0

    def log(self):
        return holonomy_log(self.g_end)

    def face_defect(self):
        v = self.g_end.values
        eye = np.eye(v.shape[-1])
        return float(max(np.abs(v[:, :, 0] - eye).max(), np.abs(v[:, :, -1] - eye).max()))


def holonomy_log(g: GaugeTransform) -> FormField:
    """Nodewise log of a gauge transform near the identity, as a 0-form."""
    alg = g.algebra
    X = logm_batch(g.values)
    return FormField(0, alg.to_coeffs(X), g.grid, alg)


def _mul_exp(values, theta, algebra):
    return values @ exp_field(theta, algebra)


def _dexpinv(theta, gamma, algebra):
    """Inverse derivative of exp for g = g0 exp(theta), to third order."""
    b1 = algebra.bracket_coeffs(theta, gamma)
    b2 = algebra.bracket_coeffs(theta, b1)
    return gamma + 0.5 * b1 + b2 / 12.0


def horizontal_lift(loop: ConnectionLoop, steps=DEFAULT_STEPS, tol=LIFT_TOL) -> HolonomyResult:
    """Integrate g' = g gamma(t, g) from g(0) = e around the loop.

    Step boundaries are aligned with the loop samples when ``steps`` is a
    multiple of the number of segments, so the velocity is constant within
    each step.
    """
    if not loop.closed:
        raise ValidationError("loop is not closed")
    grid, alg = loop.grid, loop.base.algebra
    nseg = loop.ts.size - 1
    per = max(1, int(np.ceil(steps / nseg)))
    g = GaugeTransform.identity(grid, alg).values
    residuals = []
    warm = [None]
    solves = 0

    def rhs(t, k, gvals):
        nonlocal solves
        eta = gauge_act_arrays(grid, loop.connection(t, k), gvals, alg)
        B = ConnectionState(grid, eta, alg, tol=tol)
        vel = _apply_ad(_ad_inv(gvals, alg), loop.velocity(k))
        src = covariant_d0_adjoint(grid, eta, vel, alg)
        try:
            u, rep = green_arrays(B, src, tol=tol, x0=warm[0])
        except SolverError as exc:
            raise LiftError(str(exc), step=len(residuals)) from exc
        solves += 1
        warm[0] = u
        gamma = -u
        return gamma, eta, vel

    for k in range(nseg):
        t0, t1 = loop.ts[k], loop.ts[k + 1]
        h = (t1 - t0) / per
        for m in range(per):
            t = t0 + m * h
            k1, eta, vel = rhs(t, k, g)
            th = 0.5 * h * k1
            k2 = _dexpinv(th, rhs(t + 0.5 * h, k, _mul_exp(g, th, alg))[0], alg)
            th = 0.5 * h * k2
            k3 = _dexpinv(th, rhs(t + 0.5 * h, k, _mul_exp(g, th, alg))[0], alg)
            th = h * k3
            k4 = _dexpinv(th, rhs(t + h, k, _mul_exp(g, th, alg))[0], alg)
            theta = h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            # verticality of the lifted velocity at the start of the step
            lifted = vel + covariant_d0(grid, eta, k1, alg)
            div = covariant_d0_adjoint(grid, eta, lifted, alg)
            scale = np.sqrt(inner1(grid, lifted, lifted, alg)) or 1.0
            residuals.append(np.sqrt(inner0(grid, div, div, alg)) / scale)
            g = _mul_exp(g, theta, alg)
    eye = np.eye(alg.n)
    g[:, :, 0] = eye
    g[:, :, -1] = eye
    return HolonomyResult(GaugeTransform(g, grid, alg), np.array(residuals), nseg * per, "RKMK4", solves)


# --------------------------------------------------------------------------
# small-loop study
# --------------------------------------------------------------------------


def fitted_order(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if hs.size < 2 or np.any(errs <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@dataclass(eq=False)
class HolonomyStudy:
    eps: list
    coeff_error: list
    curvature_norm: float
    rows: list = field(default_factory=list)

    @property
    def order(self):
        return fitted_order(self.eps, self.coeff_error)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "coeff_error", "fitted_order"])
        order = self.order
        for i, (e, err) in enumerate(zip(self.eps, self.coeff_error)):
            running = fitted_order(self.eps[: i + 1], self.coeff_error[: i + 1]) if i else float("nan")
            o = running if i < len(self.eps) - 1 else order
            w.writerow([f"{float(e):.12e}", f"{float(err):.12e}", f"{float(o):.12e}"])
        return buf.getvalue()


def _sup(x):
    return float(np.sqrt((x**2).sum(axis=0)).max())


def curvature_holonomy_study(A: ConnectionState, alpha, beta, eps_list=(0.2, 0.1, 0.05),
                             steps=DEFAULT_STEPS, tol=LIFT_TOL, relative=True) -> HolonomyStudy:
    """Compare log(hol(eps square)) / eps^2 with R_A(alpha, beta) = -2 G_A [alpha . beta].

    ``coeff_error`` is the sup-norm discrepancy, divided by the sup norm of
    R when ``relative`` is set and R is nonzero.
    """
    ha = alpha if isinstance(alpha, HorizontalForm) else certify_horizontal(A, alpha)
    hb = beta if isinstance(beta, HorizontalForm) else certify_horizontal(A, beta)
    R, _ = coulomb_curvature(A, ha, hb, tol=tol)
    rnorm = _sup(R.data)
    errs, rows = [], []
    for eps in eps_list:
        res = horizontal_lift(square_loop(A, ha.form, hb.form, eps), steps=steps, tol=tol)
        coeff = HOLONOMY_SIGN * res.log().data / eps**2
        err = _sup(coeff - R.data)
        if relative and rnorm > 0:
            err /= rnorm
        errs.append(err)
        rows.append({"eps": eps, "coeff_error": err, "max_vertical": float(res.vertical_residuals.max()),
                     "face_defect": res.face_defect()})
    return HolonomyStudy(list(map(float, eps_list)), errs, rnorm, rows)
