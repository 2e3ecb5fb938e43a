"""The slab domain T^2 x [0, 1] with a normal-adapted metric.

Coordinates x1, x2 are periodic with period 1, x3 runs over [0, 1].  The two
boundary faces are F0 = {x3 = 0} (inward normal +x3) and F1 = {x3 = 1}
(inward normal -x3).  Metrics satisfy g13 = g23 = 0 and g33 = 1 everywhere,
so x3 is a unit-speed normal coordinate near both faces.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .stencils import one_sided_derivative, sbp_first_derivative

__all__ = [
    "GeometryError",
    "ResolutionError",
    "MetricSpec",
    "flat_metric",
    "warped_metric",
    "load_metric_config",
    "DomainGrid",
    "BoundaryField",
    "FACES",
    "build_grid",
    "mean_curvature_tau",
    "mean_curvature_H",
    "tau_analytic",
    "boundary_restrict",
    "normal_derivative",
]

FACES = (0, 1)
MIN_LAT = 8
MIN_NORM = 9


class GeometryError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricSpec:
    """Analytic metric g_ij(x) on [0,1]^3.

    ``g`` maps coordinate arrays (x1, x2, x3) of a common shape S to an array
    of shape (3, 3, *S).  ``dg3`` optionally gives the x3-derivative in the
    same layout; when absent a centred difference of ``g`` is used.
    """

    g: Callable
    family: str = "custom"
    params: dict = field(default_factory=dict)
    dg3: Optional[Callable] = None

    def derivative3(self, x1, x2, x3, step=1e-6):
        if self.dg3 is not None:
            return self.dg3(x1, x2, x3)
        return (self.g(x1, x2, x3 + step) - self.g(x1, x2, x3 - step)) / (2 * step)


def flat_metric() -> MetricSpec:
    def g(x1, x2, x3):
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3))
        out = np.zeros((3, 3) + shape)
        for i in range(3):
            out[i, i] = 1.0
        return out

    def dg3(x1, x2, x3):
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3))
        return np.zeros((3, 3) + shape)

    return MetricSpec(g=g, family="flat", params={}, dg3=dg3)


def warped_metric(phi=(0.0, 1.0)) -> MetricSpec:
    """g = diag(e^{2 phi(x3)}, e^{2 phi(x3)}, 1), phi a polynomial in x3.

    ``phi`` lists coefficients in increasing degree; the default phi(x3) = x3
    gives a = e^{2 x3} and tau = +2 on F0, -2 on F1.
    """
    coeffs = tuple(float(c) for c in phi)
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()

    def g(x1, x2, x3):
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3))
        e = np.broadcast_to(np.exp(2.0 * poly(np.asarray(x3, dtype=float))), shape)
        out = np.zeros((3, 3) + shape)
        out[0, 0] = e
        out[1, 1] = e
        out[2, 2] = 1.0
        return out

    def dg3(x1, x2, x3):
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(x3))
        x3 = np.asarray(x3, dtype=float)
        e = np.broadcast_to(2.0 * dpoly(x3) * np.exp(2.0 * poly(x3)), shape)
        out = np.zeros((3, 3) + shape)
        out[0, 0] = e
        out[1, 1] = e
        return out

    return MetricSpec(g=g, family="warped", params={"phi": list(coeffs)}, dg3=dg3)


def _parse_resolutions(text):
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        if "x" in item:
            a, b = item.split("x")
            out.append((int(a), int(b)))
        else:
            n = int(item)
            out.append((n, n + 1))
    return out


def load_metric_config(path):
    """Read a key-value config file.

    Recognised keys: ``family`` (flat | warped), ``phi`` (comma-separated
    polynomial coefficients), ``n_lat``, ``n_norm``, ``resolutions``
    (``16x17, 32x33``), ``seed``, plus any extra keys, which are returned
    verbatim.  Sections are optional; keys from all sections are merged.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    raw = {}
    for section in parser.sections():
        for k, v in parser.items(section):
            raw[k.strip().lower()] = v.strip()
    family = raw.get("family", "flat")
    if family == "flat":
        spec = flat_metric()
    elif family == "warped":
        phi = [float(c) for c in raw.get("phi", "0, 1").split(",") if c.strip()]
        spec = warped_metric(phi)
    else:
        raise GeometryError(f"unknown metric family {family!r}")
    cfg = dict(raw)
    cfg["family"] = family
    if "n_lat" in raw:
        cfg["n_lat"] = int(raw["n_lat"])
    if "n_norm" in raw:
        cfg["n_norm"] = int(raw["n_norm"])
    if "resolutions" in raw:
        cfg["resolutions"] = _parse_resolutions(raw["resolutions"])
    if "seed" in raw:
        cfg["seed"] = int(raw["seed"])
    return spec, cfg


# --------------------------------------------------------------------------
# grid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryField:
    """Values on the nodes of one face, shape (..., n_lat, n_lat)."""

    values: np.ndarray
    face: int

    def sup(self):
        v = np.asarray(self.values)
        if v.ndim > 2:
            return float(np.sqrt((v**2).sum(axis=tuple(range(v.ndim - 2)))).max())
        return float(np.abs(v).max())

    def __add__(self, other):
        return BoundaryField(self.values + other.values, self.face)

    def __sub__(self, other):
        return BoundaryField(self.values - other.values, self.face)


class DomainGrid:
    """Nodes, metric tensors and quadrature weights on the slab.

    Attributes are arrays over nodes with shape (n_lat, n_lat, n_norm):
    ``g`` and ``ginv`` carry two leading (3, 3) axes, ``a`` is sqrt(det g),
    ``w`` the quadrature weight and ``W = w * a`` the volume weight.
    """

    def __init__(self, spec: MetricSpec, n_lat: int, n_norm: int):
        if n_lat < MIN_LAT or n_norm < MIN_NORM:
            raise ResolutionError(
                f"need n_lat >= {MIN_LAT} and n_norm >= {MIN_NORM}, got {n_lat}, {n_norm}"
            )
        self.spec = spec
        self.n_lat = int(n_lat)
        self.n_norm = int(n_norm)
        self.h_lat = 1.0 / n_lat
        self.h_norm = 1.0 / (n_norm - 1)
        self.x1 = np.arange(n_lat) * self.h_lat
        self.x2 = np.arange(n_lat) * self.h_lat
        self.x3 = np.linspace(0.0, 1.0, n_norm)
        self.shape = (n_lat, n_lat, n_norm)
        X1, X2, X3 = np.meshgrid(self.x1, self.x2, self.x3, indexing="ij")
        self.X = (X1, X2, X3)

        g = np.asarray(spec.g(X1, X2, X3), dtype=float)
        if g.shape != (3, 3) + self.shape:
            raise GeometryError("metric callback returned the wrong shape")
        if np.abs(g - np.swapaxes(g, 0, 1)).max() > 1e-12:
            raise GeometryError("metric is not symmetric")
        if max(np.abs(g[0, 2]).max(), np.abs(g[1, 2]).max(), np.abs(g[2, 2] - 1).max()) > 1e-12:
            raise GeometryError("metric is not normal-adapted (need g13 = g23 = 0, g33 = 1)")
        gm = np.moveaxis(g, (0, 1), (-2, -1))
        if np.linalg.eigvalsh(gm).min() <= 0:
            raise GeometryError("metric is not positive-definite at every node")
        self.g = g
        self.ginv = np.moveaxis(np.linalg.inv(gm), (-2, -1), (0, 1))
        self.det = np.linalg.det(gm)
        self.a = np.sqrt(self.det)

        self.D3, self.w3 = sbp_first_derivative(n_norm, self.h_norm)
        self.w = np.broadcast_to(self.h_lat**2 * self.w3, self.shape).copy()
        self.W = self.w * self.a

    # ---- derived tensors ---------------------------------------------------

    @cached_property
    def metric2(self):
        """Metric on 2-forms in the basis (dx2^dx3, dx3^dx1, dx1^dx2).

        Equal to the cofactor matrix of g^{-1}, i.e. g / det(g).
        """
        gi = self.ginv
        out = np.empty_like(gi)
        for c in range(3):
            for d in range(3):
                i1, i2 = (c + 1) % 3, (c + 2) % 3
                j1, j2 = (d + 1) % 3, (d + 2) % 3
                out[c, d] = gi[i1, j1] * gi[i2, j2] - gi[i1, j2] * gi[i2, j1]
        return out

    @cached_property
    def volume(self):
        return float(self.W.sum())

    @cached_property
    def interior(self):
        m = np.ones(self.shape, dtype=bool)
        m[:, :, 0] = False
        m[:, :, -1] = False
        return m

    def face_index(self, face):
        if face not in FACES:
            raise ValueError("face must be 0 (x3 = 0) or 1 (x3 = 1)")
        return 0 if face == 0 else self.n_norm - 1

    def inward_sign(self, face):
        return 1.0 if face == 0 else -1.0

    def inward_distance(self, face):
        """Distance from the face along x3, shape (n_norm,)."""
        return self.x3 if face == 0 else 1.0 - self.x3

    @cached_property
    def tau(self):
        """tau on each face, dict face -> (n_lat, n_lat) array."""
        return {f: mean_curvature_tau(self, f).values for f in FACES}

    def __repr__(self):
        return f"DomainGrid({self.spec.family}, n_lat={self.n_lat}, n_norm={self.n_norm})"


def build_grid(spec: MetricSpec, n_lat: int, n_norm: int) -> DomainGrid:
    return DomainGrid(spec, n_lat, n_norm)


# --------------------------------------------------------------------------
# boundary quantities
# --------------------------------------------------------------------------


def boundary_restrict(values, grid: DomainGrid, face: int) -> BoundaryField:
    """Copy the face nodes of a nodal array (..., n_lat, n_lat, n_norm)."""
    values = np.asarray(values)
    return BoundaryField(values[..., grid.face_index(face)].copy(), face)


def normal_derivative(values, grid: DomainGrid, face: int) -> BoundaryField:
    """Derivative along the inward normal with the 3-point one-sided stencil."""
    v = np.asarray(values)
    h = grid.h_norm
    if face == 0:
        d = one_sided_derivative(v[..., 0], v[..., 1], v[..., 2], h)
    else:
        d = one_sided_derivative(v[..., -1], v[..., -2], v[..., -3], h)
    return BoundaryField(d, face)


def mean_curvature_tau(grid: DomainGrid, face: int) -> BoundaryField:
    """tau = (inward derivative of a) / a on the face."""
    da = normal_derivative(grid.a, grid, face).values
    return BoundaryField(da / grid.a[..., grid.face_index(face)], face)


def mean_curvature_H(grid: DomainGrid, face: int) -> BoundaryField:
    """Mean curvature H = tau / 2."""
    t = mean_curvature_tau(grid, face)
    return BoundaryField(0.5 * t.values, face)


def tau_analytic(grid: DomainGrid, face: int, path: str = "a") -> BoundaryField:
    """tau from the analytic metric derivative.

    ``path="a"`` uses Jacobi's formula d(log a) = tr(g^{-1} dg) / 2;
    ``path="lateral"`` uses the determinant of the lateral 2x2 block, which
    equals det g when g33 = 1 and g13 = g23 = 0.
    """
    k = grid.face_index(face)
    X1, X2, X3 = (c[..., k] for c in grid.X)
    g = grid.spec.g(X1, X2, X3)
    dg = grid.spec.derivative3(X1, X2, X3)
    s = grid.inward_sign(face)
    if path == "a":
        gm = np.moveaxis(g, (0, 1), (-2, -1))
        dgm = np.moveaxis(dg, (0, 1), (-2, -1))
        val = 0.5 * np.trace(np.linalg.solve(gm, dgm), axis1=-2, axis2=-1)
    elif path == "lateral":
        det2 = g[0, 0] * g[1, 1] - g[0, 1] ** 2
        ddet2 = dg[0, 0] * g[1, 1] + g[0, 0] * dg[1, 1] - 2 * g[0, 1] * dg[0, 1]
        val = 0.5 * ddet2 / det2
    else:
        raise ValueError("path must be 'a' or 'lateral'")
    return BoundaryField(s * val, face)
