"""One-dimensional difference operators used on the slab grid.

Normal direction: diagonal-norm summation-by-parts first derivative with a
fourth-order central interior and second-order boundary closure.  Its norm H
is the quadrature rule along x3, so ``H^-1 D^T H = -D + H^-1 B`` with
``B = diag(-1, 0, ..., 0, 1)``.  That identity is what makes the discrete
codifferential both an exact adjoint and a consistent difference operator at
every interior node.

Lateral directions: fourth-order central differences with periodic wrap.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "sbp_first_derivative",
    "periodic_first_derivative",
    "one_sided_derivative",
    "extrapolate_face",
    "one_sided_derivative3",
    "explicit_first_derivative",
    "narrow_second_derivative",
]

_SBP_BLOCK = np.array(
    [
        [-24 / 17, 59 / 34, -4 / 17, -3 / 34, 0.0, 0.0],
        [-1 / 2, 0.0, 1 / 2, 0.0, 0.0, 0.0],
        [4 / 43, -59 / 86, 0.0, 59 / 86, -4 / 43, 0.0],
        [3 / 98, 0.0, -59 / 98, 0.0, 32 / 49, -4 / 49],
    ]
)
_SBP_NORM = np.array([17 / 48, 59 / 48, 43 / 48, 49 / 48])
_CENTRAL4 = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])


def sbp_first_derivative(m: int, h: float):
    """Return (D, w): the SBP derivative matrix and its diagonal norm."""
    if m < 9:
        raise ValueError("SBP operator needs at least 9 nodes")
    D = np.zeros((m, m))
    D[:4, :6] = _SBP_BLOCK
    for n in range(4, m - 4):
        D[n, n - 2 : n + 3] = _CENTRAL4
    D[-4:, -6:] = -_SBP_BLOCK[::-1, ::-1]
    w = np.ones(m)
    w[:4] = _SBP_NORM
    w[-4:] = _SBP_NORM[::-1]
    return D / h, w * h


def periodic_first_derivative(x, axis, h):
    """Fourth-order central derivative with periodic wrap along ``axis``."""
    r1p = np.roll(x, -1, axis)
    r1m = np.roll(x, 1, axis)
    r2p = np.roll(x, -2, axis)
    r2m = np.roll(x, 2, axis)
    return (8.0 * (r1p - r1m) - (r2p - r2m)) / (12.0 * h)


def one_sided_derivative(v0, v1, v2, h):
    """Three-point second-order derivative into the domain from node 0."""
    return (-3.0 * v0 + 4.0 * v1 - v2) / (2.0 * h)


def extrapolate_face(v1, v2, v3, v4):
    """Cubic extrapolation to the face from the four nearest interior nodes."""
    return 4.0 * v1 - 6.0 * v2 + 4.0 * v3 - v4


def one_sided_derivative3(v0, v1, v2, v3, h):
    """Four-point third-order derivative into the domain from node 0."""
    return (-11.0 * v0 + 18.0 * v1 - 9.0 * v2 + 2.0 * v3) / (6.0 * h)


def explicit_first_derivative(m, h):
    """Fourth-order x3 derivative with explicit biased rows at the ends.

    Not summation-by-parts, so it carries no adjoint structure; it is used
    where only accuracy matters (product-rule expansions near a face).
    """
    if m < 5:
        raise ValueError("need at least 5 nodes")
    D = np.zeros((m, m))
    for r in range(2, m - 2):
        D[r, r - 2 : r + 3] = [1.0, -8.0, 0.0, 8.0, -1.0]
    first = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
    second = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])
    D[0, :5] = first
    D[1, :5] = second
    D[-1, -5:] = -first[::-1]
    D[-2, -5:] = -second[::-1]
    return D / (12.0 * h)


def narrow_second_derivative(m, h):
    """Fourth-order second derivative; rows 1 and m-2 use one-sided closures.

    The end rows are left zero (Dirichlet nodes).
    """
    if m < 6:
        raise ValueError("need at least 6 nodes")
    D = np.zeros((m, m))
    for r in range(2, m - 2):
        D[r, r - 2 : r + 3] = [-1.0, 16.0, -30.0, 16.0, -1.0]
    near = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0])
    D[1, :6] = near
    D[-2, -6:] = near[::-1]
    return D / (12.0 * h * h)
