"""Realizing 0-forms as sums of wedge-dot products of co-closed 1-forms.

Every term is built the same way.  On a box with local fractional
coordinates (t1, t2, t3), a profile ``h = -I eta(t2) + g^{33} a^2 psi`` is
integrated along x2 to give F, a cutoff G = phi(t1) v2(t2) v3(t3) is formed,
and

    alpha = d*(-F A *dx1),    beta = d*(G B *dx2).

Both are co-closed because the discrete d* squares to zero, both satisfy
conductor conditions because d* returns conductor forms, and
[alpha . beta] = D2 F D1 G / a^2 [A, B], which equals psi [A, B] wherever
D1 G = 1.  On the flat metric this is the classical interior construction;
near a face (v3 = 1 up to the face) it is the boundary-chart variant.

Boxes have lateral side 1 (a full period) and are placed by the cover
routines; the normal extent is either an interior interval or a half-open
interval starting at a face.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .bundle import boundary_operator_T, faces_sup, lap_bracket
from .forms import (
    FormField,
    d0,
    d0_adjoint,
    d1_adjoint,
    laplacian_full,
    project0,
    raise_index,
)
from .geometry import DomainGrid
from .lie import LieElement, ValidationError, commutator_decompose, double_bracket_triple, su2
from .solver import ConnectionState, fourier_green, hopf_normal_derivative, scalar_green
from .stencils import one_sided_derivative3

__all__ = [
    "SupportError",
    "CompatibilityError",
    "SpanError",
    "BumpProfile",
    "Cube",
    "SpanTerm",
    "SpanCertificate",
    "smooth_step",
    "bump",
    "interior_realize",
    "interior_span",
    "boundary_realize",
    "boundary_compatibility",
    "realize_boundary_data",
    "BoundaryDataResult",
    "decompose_gauge_element",
    "DecompositionReport",
    "boundary_flat_partition",
    "lateral_partition",
    "case_analysis",
    "fit_interior_cube",
    "fit_boundary_cube",
    "default_phi",
]


class SupportError(ValueError):
    pass


class CompatibilityError(ValueError):
    pass


class SpanError(RuntimeError):
    def __init__(self, message, stage=None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------


def _e(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    out[m] = np.exp(-1.0 / t[m])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _e(t)
    b = _e(1.0 - t)
    return a / (a + b)


def bump(t):
    """exp(-1 / (1 - t^2)) on (-1, 1), zero outside."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


@dataclass(frozen=True)
class BumpProfile:
    """Ordered fractions a < j < k < i < c < d < l < b of a unit interval.

    (c, d) is the core that must contain the support of psi, eta lives on
    (k, i), and the cutoffs equal 1 on the core.  ``ramp`` is where the
    x2-cutoff starts to rise; it sits between i and c, late enough that the
    difference stencil applied to the integrated eta never meets a nonzero
    cutoff value on desk-scale grids.
    """

    j: float = 0.02
    k: float = 0.04
    i: float = 0.10
    c: float = 0.30
    d: float = 0.70
    l: float = 0.90
    ramp: float = 0.27

    def __post_init__(self):
        seq = (0.0, self.j, self.k, self.i, self.c, self.d, self.l, 1.0)
        if not all(x < y for x, y in zip(seq, seq[1:])):
            raise ValueError("profile fractions must satisfy 0 < j < k < i < c < d < l < 1")
        if not self.i <= self.ramp < self.c:
            raise ValueError("ramp must lie in [i, c)")

    @property
    def core(self):
        return self.c, self.d

    @property
    def eta_centre(self):
        return 0.5 * (self.k + self.i)

    def _eta_raw(self, t):
        return bump((np.asarray(t, dtype=float) - self.eta_centre) * 2.0 / (self.i - self.k))

    @property
    def eta_scale(self):
        val, _err = quad(lambda s: float(self._eta_raw(s)), self.k, self.i, epsabs=1e-14, epsrel=1e-13)
        return 1.0 / val

    def eta(self, t):
        """Normalized bump on (k, i) with unit integral in t."""
        return self.eta_scale * self._eta_raw(t)

    def plateau(self, t):
        """1 on [i, (d + 3l)/4], supported in (j, l); used for phi."""
        t = np.asarray(t, dtype=float)
        top = 0.25 * (self.d + 3 * self.l)
        return smooth_step((t - self.j) / (self.i - self.j)) * (1 - smooth_step((t - top) / (self.l - top)))

    def phi(self, t):
        """(t - m) * plateau(t), m the core midpoint; slope 1 on the plateau."""
        t = np.asarray(t, dtype=float)
        return (t - 0.5 * (self.c + self.d)) * self.plateau(t)

    def v_lateral(self, t):
        """1 on [c, d], rising on (ramp, c), falling on (d, l)."""
        t = np.asarray(t, dtype=float)
        up = smooth_step((t - self.ramp) / (self.c - self.ramp))
        down = 1 - smooth_step((t - self.d) / (self.l - self.d))
        return up * down

    def v_interior(self, t):
        """1 on [c, d], supported in (i, l)."""
        t = np.asarray(t, dtype=float)
        up = smooth_step((t - self.i) / (self.c - self.i))
        down = 1 - smooth_step((t - self.d) / (self.l - self.d))
        return up * down

    def v_face(self, t):
        """1 on [0, d], supported in [0, l)."""
        t = np.asarray(t, dtype=float)
        return 1 - smooth_step((t - self.d) / (self.l - self.d))


DEFAULT_PROFILE = BumpProfile()


# --------------------------------------------------------------------------
# boxes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Cube:
    """A chart box: lateral origins (side 1) and a normal interval.

    ``face`` is None for an interior box [o3, o3 + s3] inside (0, 1), or 0/1
    for a half-open box of depth s3 starting at that face.
    """

    o1: float
    o2: float
    o3: float = 0.0
    s3: float = 1.0
    face: Optional[int] = None

    def local(self, grid: DomainGrid):
        t1 = np.mod(grid.x1 - self.o1, 1.0)
        t2 = np.mod(grid.x2 - self.o2, 1.0)
        if self.face is None:
            t3 = (grid.x3 - self.o3) / self.s3
        elif self.face == 0:
            t3 = grid.x3 / self.s3
        else:
            t3 = (1.0 - grid.x3) / self.s3
        return t1, t2, t3

    def as_dict(self):
        return {"o1": self.o1, "o2": self.o2, "o3": self.o3, "s3": self.s3, "face": self.face}

    @classmethod
    def from_dict(cls, d):
        return cls(d["o1"], d["o2"], d["o3"], d["s3"], d["face"])


def aligned_cube(grid: DomainGrid, o1, o2, profile=DEFAULT_PROFILE, **kw):
    """Shift o2 so that the eta centre falls on an x2 node."""
    h = grid.h_lat
    target = o2 + profile.eta_centre
    o2 = np.round(target / h) * h - profile.eta_centre
    return Cube(float(np.mod(o1, 1.0)), float(np.mod(o2, 1.0)), **kw)


# --------------------------------------------------------------------------
# one term
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpanTerm:
    """Recipe for one pair (alpha, beta); forms are built on demand."""

    cube: Cube
    psi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    kind: str = "interior"

    def forms(self, grid, profile=DEFAULT_PROFILE, algebra=su2):
        a, b, _ = _term_scalars(grid, self.cube, self.psi, profile)
        alpha = np.einsum("i...,k->ik...", a, self.A)
        beta = np.einsum("i...,k->ik...", b, self.B)
        return FormField(1, alpha, grid, algebra), FormField(1, beta, grid, algebra)


def _stencil_symbol(n, h):
    """Fourier symbol of the periodic fourth-order central difference."""
    k = 2 * np.pi * np.fft.rfftfreq(n)
    return 1j * (8 * np.sin(k) - np.sin(2 * k)) / (6 * h)


def _antiderivative_x2(values, h):
    """C with D2 C = values - mean, D2 the lateral difference operator.

    Exact up to roundoff for the mean-free part without a Nyquist mode,
    which is spectrally small for smooth input.
    """
    n = values.shape[1]
    lam = _stencil_symbol(n, h)
    vh = np.fft.rfft(values, axis=1)
    out = np.zeros_like(vh)
    ok = np.abs(lam) > 1e-12 / h
    out[:, ok, :] = vh[:, ok, :] / lam[ok][None, :, None]
    return np.fft.irfft(out, n=n, axis=1)


def _term_scalars(grid: DomainGrid, cube: Cube, psi, profile: BumpProfile):
    """Scalar 1-forms (a, b) with alpha = a A and beta = b B, plus diagnostics.

    The profile h = g^{33} a^2 psi - I eta - J nu has zero mean and zero
    alternating sum along every x2 line (nu is a two-node dipole next to the
    eta centre), so F with D2 F = h exists on the periodic grid and is
    obtained exactly by dividing by the stencil symbol.
    """
    t1, t2, t3 = cube.local(grid)
    h = grid.h_lat
    n = grid.n_lat
    weight = grid.ginv[2, 2] * grid.a**2
    wpsi = weight * psi
    eta_line = profile.eta(t2)
    etot = eta_line.sum() * h
    if etot <= 0:
        raise SpanError("eta has no support on this grid")
    eta_n = eta_line / etot
    p = int(np.argmax(eta_n))
    alt = (-1.0) ** np.arange(n)
    nu = np.zeros(n)
    nu[p] = alt[p] / (2 * h)
    nu[(p + 1) % n] = -alt[p] / (2 * h)
    I = wpsi.sum(axis=1) * h
    J = np.einsum("j,ijk->ik", alt, wpsi) * h - I * (alt @ eta_n) * h
    hprof = wpsi - I[:, None, :] * eta_n[None, :, None] - J[:, None, :] * nu[None, :, None]
    F = _antiderivative_x2(hprof, h)
    # fix the free constant so F vanishes on the seam of the box
    seam = int(np.argmin(t2))
    F = F - F[:, seam : seam + 1, :]
    v3 = profile.v_interior(t3) if cube.face is None else profile.v_face(t3)
    G = (
        profile.phi(t1)[:, None, None]
        * profile.v_lateral(t2)[None, :, None]
        * v3[None, None, :]
    )
    ag = grid.a * grid.ginv
    w1 = -F[None] * ag[:, 0]
    w2 = G[None] * ag[:, 1]
    a = d1_adjoint(grid, w1)
    b = d1_adjoint(grid, w2)
    return a, b, {"F": F, "G": G, "h": hprof, "I": I, "t": (t1, t2, t3)}


def _scalar_wedge(grid, a, b):
    return np.einsum("i...,i...->...", a, raise_index(grid, b))


def _check_support(grid, cube, psi, profile, tol=0.0):
    t1, t2, t3 = cube.local(grid)
    c, d = profile.core
    in1 = (t1 > c) & (t1 < d)
    in2 = (t2 > c) & (t2 < d)
    if cube.face is None:
        if cube.o3 < 0 or cube.o3 + cube.s3 > 1 + 1e-12:
            raise SupportError("interior box leaves the slab")
        in3 = (t3 > c) & (t3 < d)
    else:
        in3 = (t3 >= 0) & (t3 < d)
    mask = in1[:, None, None] & in2[None, :, None] & in3[None, None, :]
    outside = np.abs(np.where(mask, 0.0, psi)).max()
    if outside > tol:
        raise SupportError(f"psi is nonzero outside the core of the box (max {outside:.3e})")


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


@dataclass(eq=False)
class SpanCertificate:
    """Terms whose wedge-dot sum realizes ``target``, with residuals.

    ``error`` is the sup over nodes of the pointwise coefficient norm of
    sum [alpha_i . beta_i] - target; ``div_residual`` the largest sup of
    d* alpha_i, d* beta_i; ``cbc_trace`` the largest tangential trace of any
    alpha_i, beta_i on the faces.
    """

    target: FormField
    terms: list
    reconstruction: np.ndarray
    error: float
    div_residual: float
    cbc_trace: float
    profile: BumpProfile = DEFAULT_PROFILE
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.target.grid

    @property
    def cbc(self):
        return self.cbc_trace <= 1e-12

    def __len__(self):
        return len(self.terms)

    def materialize(self, idx):
        t = self.terms[idx]
        return t.forms(self.grid, self.profile, self.target.algebra)

    def recheck(self):
        """Recompute the sum from the recipes; returns (reconstruction, error)."""
        rec, *_ = _stream(self.grid, self.terms, self.profile, self.target.algebra)
        return rec, _sup_err(rec, self.target.data)


def _sup_err(x, y):
    return float(np.sqrt(((x - y) ** 2).sum(axis=0)).max()) if x.size else 0.0


def _stream(grid, terms, profile, algebra):
    """Accumulate sum [alpha . beta] over terms, tracking residuals."""
    rec = np.zeros((algebra.dim,) + grid.shape)
    div = 0.0
    cbc = 0.0
    leak = 0.0
    for t in terms:
        a, b, diag = _term_scalars(grid, t.cube, t.psi, profile)
        s = _scalar_wedge(grid, a, b)
        AB = algebra.bracket_coeffs(t.A, t.B)
        rec += np.einsum("...,k->k...", s, AB)
        na = np.abs(t.A).max()
        nb = np.abs(t.B).max()
        div = max(div, np.abs(d0_adjoint(grid, a)).max() * na, np.abs(d0_adjoint(grid, b)).max() * nb)
        tr = max(np.abs(a[:2, ..., [0, -1]]).max() * na, np.abs(b[:2, ..., [0, -1]]).max() * nb)
        cbc = max(cbc, tr)
    return rec, float(div), float(cbc), leak


def _certify(target, terms, profile, diagnostics=None):
    grid, alg = target.grid, target.algebra
    rec, div, cbc, _ = _stream(grid, terms, profile, alg)
    return SpanCertificate(
        target, list(terms), rec, _sup_err(rec, target.data), div, cbc, profile, diagnostics or {}
    )


def _as_coeffs(x, algebra):
    if isinstance(x, LieElement):
        return np.asarray(x.coeffs, dtype=float)
    return np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# single-box constructions
# --------------------------------------------------------------------------


def _require_semisimple(algebra):
    if not algebra.semisimple:
        raise ValidationError("span constructions need a semisimple algebra")


def fit_interior_cube(grid: DomainGrid, psi, profile=DEFAULT_PROFILE):
    """A box whose core contains the support of psi, or None if none fits."""
    nz = np.abs(psi) > 0
    if not nz.any():
        return aligned_cube(grid, 0.0, 0.0, profile)
    c, d = profile.core
    width = d - c
    lat = []
    for axis, x in ((0, grid.x1), (1, grid.x2)):
        cols = nz.any(axis=tuple(a for a in range(3) if a != axis))
        arc = _support_arc(cols, grid.h_lat)
        if arc is None or arc[1] - arc[0] >= width - 2e-9:
            return None
        mid = 0.5 * (arc[0] + arc[1])
        lat.append(mid - 0.5 * (c + d))
    zs = grid.x3[nz.any(axis=(0, 1))]
    zlo, zhi = zs.min(), zs.max()
    # largest interior box centred on the support
    zc = 0.5 * (zlo + zhi)
    s3 = 2.0 * min(zc, 1.0 - zc)
    if s3 <= 0:
        return None
    o3 = zc - 0.5 * s3
    core_lo, core_hi = o3 + c * s3, o3 + d * s3
    if not (core_lo < zlo and zhi < core_hi):
        return None
    cube = aligned_cube(grid, lat[0], lat[1], profile, o3=o3, s3=s3)
    try:
        _check_support(grid, cube, psi, profile)
    except SupportError:
        return None
    return cube


def _support_arc(cols, h):
    """Smallest periodic arc [lo, hi] (in x) containing all True entries."""
    idx = np.flatnonzero(cols)
    if idx.size == 0:
        return None
    n = cols.size
    if idx.size == n:
        return None
    # largest gap of False entries decides where the arc starts
    gaps = np.diff(np.concatenate([idx, [idx[0] + n]]))
    g = int(np.argmax(gaps))
    lo = idx[(g + 1) % idx.size]
    hi = idx[g]
    if hi < lo:
        hi += n
    # nodes lo-1 and hi+1 are zero: the open support lies within them
    return (lo - 1) * h, (hi + 1) * h


def interior_realize(psi, A, B, cube: Optional[Cube] = None, grid=None, profile=DEFAULT_PROFILE,
                     algebra=su2) -> SpanCertificate:
    """One term with [alpha . beta] = psi [A, B] for psi supported in a box core.

    ``psi`` is a real array on the grid or a real 0-form; ``A``, ``B`` are
    LieElements or coefficient vectors.  The box is fitted automatically
    when not given.
    """
    _require_semisimple(algebra)
    if grid is None:
        grid = psi.grid
    psi = np.asarray(getattr(psi, "data", psi), dtype=float)
    if psi.shape != grid.shape:
        raise ValidationError("psi must be a real array on the grid")
    if np.any(psi[..., :3] != 0) or np.any(psi[..., -3:] != 0):
        raise SupportError("interior psi must vanish within two cells of the faces")
    if cube is None:
        cube = fit_interior_cube(grid, psi, profile)
        if cube is None:
            raise SupportError("support of psi does not fit in a single box core")
    if cube.face is not None:
        raise ValidationError("interior_realize needs an interior box")
    _check_support(grid, cube, psi, profile)
    A = _as_coeffs(A, algebra)
    B = _as_coeffs(B, algebra)
    target = FormField(0, np.einsum("...,k->k...", psi, algebra.bracket_coeffs(A, B)), grid, algebra)
    terms = [] if not np.any(psi) else [SpanTerm(cube, psi, A, B, "interior")]
    return _certify(target, terms, profile, {"cube": cube.as_dict()})


def case_analysis(grid: DomainGrid, cube: Cube, psi, profile=DEFAULT_PROFILE):
    """Theta = h * dG/dx1 (analytic) against the weighted psi, region by region.

    Returns a dict region -> max |Theta - g^{33} a^2 psi| over the nodes of
    that region.  Every entry is zero up to roundoff when the construction is
    right.
    """
    _a, _b, diag = _term_scalars(grid, cube, psi, profile)
    t1, t2, t3 = diag["t"]
    hprof = diag["h"]
    v3 = profile.v_interior(t3) if cube.face is None else profile.v_face(t3)
    # analytic x1-derivative of G: plateau is 1 on the core, so phi' = 1 there
    tt = t1
    eps = 1e-6
    dphi = (profile.phi(tt + eps) - profile.phi(tt - eps)) / (2 * eps)
    Gx = dphi[:, None, None] * profile.v_lateral(t2)[None, :, None] * v3[None, None, :]
    theta = hprof * Gx
    wpsi = grid.ginv[2, 2] * grid.a**2 * psi
    c, d = profile.core
    in1 = ((t1 > c) & (t1 < d))[:, None, None]
    if cube.face is None:
        in3 = ((t3 > c) & (t3 < d))[None, None, :]
    else:
        in3 = ((t3 >= 0) & (t3 < d))[None, None, :]
    y = t2[None, :, None]
    regions = {
        "outside_x1_x3": ~(in1 & in3),
        "y_below_i": (in1 & in3) & (y <= profile.i),
        "y_between_i_c": (in1 & in3) & (y > profile.i) & (y < c),
        "core": (in1 & in3) & (y >= c) & (y <= d),
        "y_above_d": (in1 & in3) & (y > d),
    }
    out = {}
    for name, m in regions.items():
        m = np.broadcast_to(m, grid.shape)
        out[name] = float(np.abs(theta - wpsi)[m].max()) if m.any() else 0.0
    return out


def boundary_compatibility(grid: DomainGrid, psi, face: int, step=1e-4):
    """sup over the face of |d psi(nu) + 2 tau psi|.

    A callable psi(x1, x2, x3) is differentiated with a four-point one-sided
    stencil of width ``step`` and paired with the analytic tau; an array is
    differentiated on the grid and paired with the grid tau.
    """
    from .geometry import tau_analytic

    k = grid.face_index(face)
    s = grid.inward_sign(face)
    if callable(psi):
        X1 = grid.X[0][..., k]
        X2 = grid.X[1][..., k]
        x3 = grid.x3[k]
        vals = [np.asarray(psi(X1, X2, np.full_like(X1, x3 + s * m * step)), dtype=float) for m in range(4)]
        dn = one_sided_derivative3(*vals, step)
        tau = tau_analytic(grid, face).values
        return float(np.abs(dn + 2 * tau * vals[0]).max())
    psi = np.asarray(psi, dtype=float)
    from .bundle import face_trace_derivative

    dn = face_trace_derivative(grid, psi, face)
    return float(np.abs(dn + 2 * grid.tau[face] * psi[..., k]).max())


def boundary_realize(psi, A, B, face: int, cube: Optional[Cube] = None, grid=None,
                     profile=DEFAULT_PROFILE, algebra=su2, compat_tol=1e-8) -> SpanCertificate:
    """One conductor term with [alpha . beta] = psi [A, B] near a face.

    ``psi`` must satisfy d psi(nu) + 2 tau psi = 0 on the face (checked with
    ``compat_tol``), be supported laterally in a box core and vanish at
    depth >= d * s3 from the face.
    """
    _require_semisimple(algebra)
    if callable(psi) and not isinstance(psi, np.ndarray):
        if grid is None:
            raise ValidationError("grid is required with a callable psi")
        compat = boundary_compatibility(grid, psi, face)
        psi_arr = np.asarray(psi(*grid.X), dtype=float)
    else:
        if grid is None:
            grid = psi.grid
        psi_arr = np.asarray(getattr(psi, "data", psi), dtype=float)
        compat = boundary_compatibility(grid, psi_arr, face)
    scale = max(np.abs(psi_arr).max(), 1.0)
    if compat > compat_tol * scale:
        raise CompatibilityError(
            f"d psi(nu) + 2 tau psi = {compat:.3e} on face {face} exceeds {compat_tol:.1e}"
        )
    if cube is None:
        cube = fit_boundary_cube(grid, psi_arr, face, profile)
        if cube is None:
            raise SupportError("support of psi does not fit in a single boundary box")
    if cube.face != face:
        raise ValidationError("box is attached to the other face")
    _check_support(grid, cube, psi_arr, profile)
    A = _as_coeffs(A, algebra)
    B = _as_coeffs(B, algebra)
    target = FormField(0, np.einsum("...,k->k...", psi_arr, algebra.bracket_coeffs(A, B)), grid, algebra)
    terms = [] if not np.any(psi_arr) else [SpanTerm(cube, psi_arr, A, B, "boundary")]
    cert = _certify(target, terms, profile, {"cube": cube.as_dict(), "compatibility": compat})
    if terms:
        _a, _b, diag = _term_scalars(grid, cube, psi_arr, profile)
        # normal derivative of F on the face: zero in the continuum for compatible psi
        from .bundle import face_trace_derivative

        cert.diagnostics["normal_F_trace"] = float(np.abs(face_trace_derivative(grid, diag["F"], face)).max())
    return cert


def fit_boundary_cube(grid, psi, face, profile=DEFAULT_PROFILE):
    nz = np.abs(psi) > 0
    if not nz.any():
        return aligned_cube(grid, 0.0, 0.0, profile, face=face)
    c, d = profile.core
    lat = []
    for axis in (0, 1):
        cols = nz.any(axis=tuple(a for a in range(3) if a != axis))
        arc = _support_arc(cols, grid.h_lat)
        if arc is None or arc[1] - arc[0] >= d - c - 2e-9:
            return None
        lat.append(0.5 * (arc[0] + arc[1]) - 0.5 * (c + d))
    cube = aligned_cube(grid, lat[0], lat[1], profile, o3=0.0, s3=1.0, face=face)
    try:
        _check_support(grid, cube, psi, profile)
    except SupportError:
        return None
    return cube


# --------------------------------------------------------------------------
# partitions of unity and covers
# --------------------------------------------------------------------------


def lateral_partition(grid: DomainGrid, n_boxes=4, profile=DEFAULT_PROFILE):
    """Boxes along one lateral axis and a partition of unity on their cores.

    Returns (origins, weights) with weights of shape (n_boxes, n_lat); each
    weight is supported in the open core of its box.
    """
    c, d = profile.core
    h = grid.h_lat
    origins = []
    raw = []
    for m in range(n_boxes):
        o = m / n_boxes
        o = float(np.mod(np.round((o + profile.eta_centre) / h) * h - profile.eta_centre, 1.0))
        origins.append(o)
        t = np.mod(grid.x1 - o, 1.0)
        raw.append(bump((t - 0.5 * (c + d)) / (0.5 * (d - c))))
    raw = np.array(raw)
    total = raw.sum(axis=0)
    if total.min() <= 0:
        raise SpanError("lateral cores do not cover the circle")
    return origins, raw / total


def boundary_flat_partition(grid: DomainGrid, profile=DEFAULT_PROFILE):
    """Three weights in x3: face-0 chart, interior box, face-1 chart.

    The face weights are identically 1 near their face (so their normal
    derivative vanishes there) and supported in [0, 0.5) / (0.5, 1]; the
    interior weight is supported in the core of the interior box (0, 1).
    """
    c, d = profile.core
    mid = 0.5 * (c + d)
    x = grid.x3
    lam0 = 1 - smooth_step((x - c) / (mid - c))
    lam1 = smooth_step((x - mid) / (d - mid))
    lam_int = 1 - lam0 - lam1
    return lam0, lam_int, lam1


def _components(mask):
    """Connected components of a support mask with periodic lateral wrap."""
    from scipy import ndimage

    lab, n = ndimage.label(mask)
    if n == 0:
        return []
    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for axis in (0, 1):
        a = np.take(lab, 0, axis=axis)
        b = np.take(lab, -1, axis=axis)
        for u, v in zip(a.ravel(), b.ravel()):
            if u and v:
                ru, rv = find(u), find(v)
                if ru != rv:
                    parent[max(ru, rv)] = min(ru, rv)
    roots = sorted({find(x) for x in range(1, n + 1)})
    return [np.isin(lab, [x for x in range(1, n + 1) if find(x) == r]) for r in roots]


def _normal_cover(zlo, zhi, profile=DEFAULT_PROFILE):
    """Interior boxes (o3, s3) whose open cores cover [zlo, zhi]."""
    c, d = profile.core
    half = 0.5 * (d - c)

    def core(zc):
        s = 2 * min(zc, 1 - zc)
        return zc - half * s, zc + half * s, s

    lo, hi, s = core(0.5)
    if lo < zlo and zhi < hi:
        return [(0.0, 1.0)]
    boxes = []
    # march from the bottom: first centre with core below zlo
    zc = min(0.5, 0.97 * zlo / (1 - 2 * half)) if zlo < 0.5 else None
    top = zlo
    if zc is not None:
        while True:
            lo, hi, s = core(zc)
            boxes.append((zc - 0.5 * s, s))
            top = hi
            if hi > zhi or zc >= 0.5:
                break
            zc = min(0.5, 0.97 * hi / (1 - 2 * half))
    # mirror image from the top
    up = []
    if top <= zhi:
        zc = max(0.5, 1 - 0.97 * (1 - zhi) / (1 - 2 * half))
        while True:
            lo, hi, s = core(zc)
            up.append((zc - 0.5 * s, s))
            if lo < top or zc <= 0.5:
                break
            zc = max(0.5, 1 - 0.97 * (1 - lo) / (1 - 2 * half))
    out = []
    for b in boxes + up:
        if all(abs(b[0] - o[0]) > 1e-12 or abs(b[1] - o[1]) > 1e-12 for o in out):
            out.append(b)
    return out


def _normal_weights(grid, boxes, profile=DEFAULT_PROFILE):
    c, d = profile.core
    raw = []
    for o3, s3 in boxes:
        t = (grid.x3 - o3) / s3
        raw.append(bump((t - 0.5 * (c + d)) / (0.5 * (d - c))))
    raw = np.array(raw)
    total = raw.sum(axis=0)
    return raw, total


def _split_by_algebra(psi_coeffs, algebra):
    """For each basis component k: (pair (i, j), 1 / scale)."""
    from .lie import basis_pair

    out = []
    for k in range(algebra.dim):
        i, j, c = basis_pair(k, algebra)
        out.append((k, np.eye(algebra.dim)[i], np.eye(algebra.dim)[j], 1.0 / c))
    return out


def interior_span(Psi: FormField, profile=DEFAULT_PROFILE, n_lateral=4) -> SpanCertificate:
    """Realize an interior-supported 0-form as a sum of wedge-dot products.

    Each connected component of the support gets a single box when it fits
    in one core; otherwise it is covered by lateral boxes (``n_lateral`` per
    axis) times normal boxes, with a subordinate partition of unity.  Each
    piece is split over basis elements with the bracket table.
    """
    grid, alg = Psi.grid, Psi.algebra
    _require_semisimple(alg)
    data = Psi.data
    if np.any(data[..., :3] != 0) or np.any(data[..., -3:] != 0):
        raise SupportError("Psi must vanish within two cells of the faces")
    mask = np.any(data != 0, axis=0)
    pairs = _split_by_algebra(data, alg)
    terms = []
    covers = []
    for comp in _components(mask):
        piece = np.where(comp[None], data, 0.0)
        cube = fit_interior_cube(grid, comp.astype(float), profile)
        if cube is not None:
            covers.append({"boxes": 1})
            for k, A, B, s in pairs:
                if np.any(piece[k]):
                    terms.append(SpanTerm(cube, s * piece[k], A, B, "interior"))
            continue
        zs = grid.x3[comp.any(axis=(0, 1))]
        boxes3 = _normal_cover(zs.min() - grid.h_norm, zs.max() + grid.h_norm, profile)
        raw3, tot3 = _normal_weights(grid, boxes3, profile)
        zmask = comp.any(axis=(0, 1))
        if np.any(tot3[zmask] <= 0):
            raise SpanError("normal boxes do not cover the support", stage="interior_span")
        w3 = np.where(tot3 > 0, raw3 / np.where(tot3 > 0, tot3, 1.0), 0.0)
        origins, lam = lateral_partition(grid, n_lateral, profile)
        count = 0
        for m1, o1 in enumerate(origins):
            for m2, o2 in enumerate(origins):
                lat = lam[m1][:, None] * lam[m2][None, :]
                for b, (o3, s3) in enumerate(boxes3):
                    weight = lat[:, :, None] * w3[b][None, None, :]
                    cube = Cube(o1, o2, o3, s3)
                    for k, A, B, s in pairs:
                        p = weight * piece[k]
                        if np.any(p != 0):
                            terms.append(SpanTerm(cube, s * p, A, B, "interior"))
                            count += 1
        covers.append({"boxes": len(origins) ** 2 * len(boxes3), "normal_boxes": [list(b) for b in boxes3]})
    return _certify(Psi, terms, profile, {"covers": covers})


# --------------------------------------------------------------------------
# boundary data (two bracket layers)
# --------------------------------------------------------------------------


@dataclass(eq=False)
class BoundaryDataResult:
    """Pairs (g_k, h_k) with T_0(sum [g_k, h_k]) = F and their Laplacians."""

    pairs: list
    laps: list
    residual: float
    per_face: tuple
    hopf_margin: tuple
    gphi: Optional[np.ndarray] = None

    def bracket_sum(self, algebra=su2):
        if not self.pairs:
            return None
        return sum(algebra.bracket_coeffs(g.data, h.data) for g, h in self.pairs)

    def lap_sum(self, grid, algebra=su2):
        if not self.pairs:
            return None
        return sum(
            lap_bracket(grid, g.data, h.data, lg, lh, algebra)
            for (g, h), (lg, lh) in zip(self.pairs, self.laps)
        )


def _normal_cutoff(s):
    """1 on [0, 1/4], supported in [0, 1/2)."""
    return 1 - smooth_step((np.asarray(s) - 0.25) / 0.25)


def default_phi(grid: DomainGrid):
    """Nonnegative lateral-constant bump in x3 centred at 1/2."""
    return np.broadcast_to(bump((grid.x3 - 0.5) / 0.3), grid.shape).copy()


def realize_boundary_data(Fdata: dict, grid: DomainGrid, algebra=su2, phi=None, tol=1e-12,
                          min_margin=0.0) -> BoundaryDataResult:
    """Two-layer brackets whose boundary operator reproduces given face data.

    ``Fdata`` maps face -> coefficient array (L, n_lat, n_lat).  Each basis
    component f_k e_k is written as f_k / s [[A, B], C]; h = G(phi) C and
    g = G(f~) [A, B] where f~ extends f_k / (3 s dG(phi)(nu)) from each face
    with a cutoff and the factor exp(-2 tau x3).  The Green solves use
    :func:`fourier_green`, whose solutions have face derivatives accurate
    enough for the third-order boundary trace taken here.
    """
    _require_semisimple(algebra)
    A0 = ConnectionState.flat(grid, algebra)
    phi = default_phi(grid) if phi is None else np.asarray(phi, dtype=float)
    gphi = scalar_green(grid, phi, method="fourier")
    dn = {}
    margins = []
    for face in (0, 1):
        nd, m = hopf_normal_derivative(grid, gphi, face, min_margin=min_margin)
        dn[face] = nd.values
        margins.append(m)
    pairs, laps = [], []
    for k in range(algebra.dim):
        vals = {f: np.asarray(Fdata.get(f, np.zeros((algebra.dim, grid.n_lat, grid.n_lat))))[k] for f in (0, 1)}
        if all(not np.any(v) for v in vals.values()):
            continue
        a, b, j, s = double_bracket_triple(k, algebra)
        ext = np.zeros(grid.shape)
        for face in (0, 1):
            fk = vals[face] / (3.0 * s * dn[face])
            dist = grid.inward_distance(face)
            tau = grid.tau[face]
            ext += fk[:, :, None] * _normal_cutoff(dist)[None, None, :] * np.exp(
                -2.0 * tau[:, :, None] * dist[None, None, :]
            )
        AB = algebra.bracket_coeffs(np.eye(algebra.dim)[a], np.eye(algebra.dim)[b])
        C = np.eye(algebra.dim)[j]
        rhs_g = np.einsum("...,k->k...", ext, AB)
        g = fourier_green(grid, rhs_g)
        h = np.einsum("...,k->k...", gphi, C)
        pairs.append((FormField(0, g, grid, algebra), FormField(0, h, grid, algebra)))
        laps.append((rhs_g, np.einsum("...,k->k...", phi, C)))
    result = BoundaryDataResult(pairs, laps, 0.0, (0.0, 0.0), tuple(margins), gphi)
    if pairs:
        lap = result.lap_sum(grid, algebra)
        f = FormField(0, result.bracket_sum(algebra), grid, algebra)
        T = boundary_operator_T(A0, f, lap=lap)
        per = tuple(
            _sup_err(T[face], np.asarray(Fdata.get(face, np.zeros_like(T[face])))) for face in (0, 1)
        )
        result.residual = max(per)
        result.per_face = per
    return result


# --------------------------------------------------------------------------
# full decomposition
# --------------------------------------------------------------------------


@dataclass(eq=False)
class DecompositionReport:
    """g = f + (g - f): a bracket layer f and wedge-dot terms for Delta(g - f)."""

    u: dict
    boundary: BoundaryDataResult
    t_residual: float
    certificate: SpanCertificate
    w: np.ndarray

    @property
    def reconstruction_error(self):
        return self.certificate.error

    @property
    def total_residual(self):
        return max(self.t_residual, self.certificate.error)

    def as_dict(self):
        return {
            "u_sup": faces_sup(self.u),
            "f_pairs": len(self.boundary.pairs),
            "boundary_residual": self.boundary.residual,
            "hopf_margin": list(self.boundary.hopf_margin),
            "t_residual": self.t_residual,
            "terms": len(self.certificate.terms),
            "reconstruction_error": self.certificate.error,
            "div_residual": self.certificate.div_residual,
            "cbc_trace": self.certificate.cbc_trace,
            "total_residual": self.total_residual,
        }


def decompose_gauge_element(g: FormField, profile=DEFAULT_PROFILE, n_lateral=4, lap=None,
                            tol=1e-12) -> DecompositionReport:
    """Split a conductor 0-form into a bracket layer plus a wedge-dot layer.

    u = T_0(g); f = sum [g_k, h_k] with T_0(f) = u; then Delta(g - f) is
    realized with interior boxes and boundary charts under a partition of
    unity that is flat in the normal direction at the faces.  ``lap`` may
    supply Delta g on the full grid.
    """
    grid, alg = g.grid, g.algebra
    _require_semisimple(alg)
    if not g.is_conductor(1e-10):
        raise SpanError("g must vanish on the faces", stage="input")
    A0 = ConnectionState.flat(grid, alg)
    Lg = laplacian_full(grid, None, g.data, alg) if lap is None else np.asarray(lap)
    u = boundary_operator_T(A0, g, lap=Lg)
    try:
        bd = realize_boundary_data(u, grid, alg, tol=tol)
    except Exception as exc:  # tag the stage and re-raise
        raise SpanError(str(exc), stage="boundary-data") from exc
    if bd.pairs:
        Lf = bd.lap_sum(grid, alg)
        w = Lg - Lf
    else:
        w = Lg.copy()
    diff = FormField(0, np.zeros_like(w), grid, alg)
    T = boundary_operator_T(A0, diff, lap=w)
    t_res = faces_sup(T)
    compat_tol = 1.01 * t_res + 1e-10
    terms = []
    lam0, lam_int, lam1 = boundary_flat_partition(grid, profile)
    origins, lat = lateral_partition(grid, n_lateral, profile)
    pairs = _split_by_algebra(w, alg)
    layers = ((0, lam0), (None, lam_int), (1, lam1))
    for m1, o1 in enumerate(origins):
        for m2, o2 in enumerate(origins):
            wl = lat[m1][:, None] * lat[m2][None, :]
            for face, lam in layers:
                cube = Cube(o1, o2, 0.0, 1.0, face)
                weight = wl[:, :, None] * lam[None, None, :]
                for k, A, B, s in pairs:
                    psi = s * weight * w[k]
                    if not np.any(psi):
                        continue
                    if face is not None:
                        c = boundary_compatibility(grid, psi, face)
                        if c > compat_tol:
                            raise SpanError(
                                f"boundary compatibility {c:.3e} exceeds {compat_tol:.3e}", stage="wedge-layer"
                            )
                    try:
                        _check_support(grid, cube, psi, profile)
                    except SupportError as exc:
                        raise SpanError(str(exc), stage="wedge-layer") from exc
                    terms.append(SpanTerm(cube, psi, A, B, "interior" if face is None else "boundary"))
    target = FormField(0, w, grid, alg)
    cert = _certify(target, terms, profile, {"compat_tol": compat_tol})
    return DecompositionReport(u, bd, t_res, cert, w)
