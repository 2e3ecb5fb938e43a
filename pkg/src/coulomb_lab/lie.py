"""Matrix Lie algebra and group arithmetic.

Elements are small complex matrices.  The algebra is described by an
:class:`AlgebraDescriptor` (basis matrices, structure constants, Gram matrix),
so field-level code can work on real coefficient arrays and only fall back to
matrices where a group element is involved.  The default algebra is su(2) with
basis ``e_k = -(i/2) sigma_k``, for which ``[e1, e2] = e3`` cyclically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "AlgebraDescriptor",
    "su2",
    "LieElement",
    "GroupElement",
    "BasisDecomposition",
    "ShapeError",
    "ValidationError",
    "DomainError",
    "bracket",
    "trace_inner",
    "adjoint_action",
    "exp",
    "log",
    "commutator_decompose",
    "LOG_RADIUS",
]

ATOL = 1e-12
LOG_RADIUS = 1.0  # operator-norm distance from the identity accepted by log


class ShapeError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class DomainError(ValueError):
    pass


# --------------------------------------------------------------------------
# algebra descriptor
# --------------------------------------------------------------------------


class AlgebraDescriptor:
    """Basis, bracket table and trace Gram matrix of a compact matrix algebra.

    Parameters
    ----------
    name : str
    basis : array (dim, n, n) of anti-Hermitian matrices
    semisimple : bool
        Capability flag.  Span constructions refuse algebras without it.
    special : bool
        Whether elements are traceless and group elements have det 1.
    """

    def __init__(self, name, basis, semisimple=True, special=True):
        basis = np.asarray(basis, dtype=complex)
        if basis.ndim != 3 or basis.shape[1] != basis.shape[2]:
            raise ShapeError("basis must have shape (dim, n, n)")
        self.name = name
        self.basis = basis
        self.dim = basis.shape[0]
        self.n = basis.shape[1]
        self.semisimple = bool(semisimple)
        self.special = bool(special)
        # gram[i, j] = Re tr(e_i^H e_j)
        self.gram = np.real(np.einsum("iab,jab->ij", basis.conj(), basis))
        self.gram_inv = np.linalg.inv(self.gram)
        # structure constants: [e_i, e_j] = sum_k C[k, i, j] e_k
        comm = np.einsum("iab,jbc->ijac", basis, basis) - np.einsum(
            "jab,ibc->ijac", basis, basis
        )
        C = np.einsum("kl,lab,ijab->kij", self.gram_inv, basis.conj(), comm).real
        C[np.abs(C) < 1e-14] = 0.0
        self.structure = C
        self._nonzero = [
            (k, i, j, C[k, i, j]) for k, i, j in zip(*np.nonzero(C))
        ]

    def __repr__(self):
        return f"AlgebraDescriptor({self.name!r}, dim={self.dim}, n={self.n})"

    # ---- coefficient <-> matrix ------------------------------------------

    def to_matrix(self, coeffs):
        """Coefficients (dim, ...) -> matrices (..., n, n)."""
        coeffs = np.asarray(coeffs)
        return np.einsum("k...,kab->...ab", coeffs, self.basis)

    def to_coeffs(self, mats):
        """Orthogonal projection of matrices (..., n, n) onto the algebra.

        Uses the real trace pairing, so anything outside the algebra (for
        example a Hermitian part produced by a finite difference) is dropped.
        """
        mats = np.asarray(mats)
        raw = np.real(np.einsum("kab,...ab->k...", self.basis.conj(), mats))
        return np.einsum("kl,l...->k...", self.gram_inv, raw)

    # ---- field-level helpers ---------------------------------------------

    def bracket_coeffs(self, x, y):
        """Nodewise bracket of coefficient arrays of shape (dim, ...)."""
        x = np.asarray(x)
        y = np.asarray(y)
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape), dtype=np.result_type(x, y))
        for k, i, j, c in self._nonzero:
            out[k] += c * (x[i] * y[j])
        return out

    def inner_coeffs(self, x, y):
        """Nodewise trace inner product of coefficient arrays, shape (...)."""
        return np.einsum("i...,ij,j...->...", x, self.gram, y)

    def ad_matrices(self, g):
        """Matrix of Ad(g) on coefficients, for g of shape (..., n, n).

        Returns R with shape (..., dim, dim) so that
        coeffs(g x g^-1) = R @ coeffs(x).
        """
        g = np.asarray(g, dtype=complex)
        ginv = np.conj(np.swapaxes(g, -1, -2))
        conj = np.einsum("...ab,jbc,...cd->j...ad", g, self.basis, ginv)
        R = self.to_coeffs(conj)  # (k, j, ...)
        return np.moveaxis(np.moveaxis(R, 0, -1), 0, -1)

    @cached_property
    def ad_basis(self):
        """ad(e_i) as (dim, dim, dim): ad_basis[i][k, j] = C[k, i, j]."""
        return np.transpose(self.structure, (1, 0, 2))


def _su2_basis():
    s1 = np.array([[0, 1], [1, 0]], dtype=complex)
    s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
    s3 = np.array([[1, 0], [0, -1]], dtype=complex)
    return np.stack([-0.5j * s for s in (s1, s2, s3)])


su2 = AlgebraDescriptor("su2", _su2_basis(), semisimple=True, special=True)


# --------------------------------------------------------------------------
# element types
# --------------------------------------------------------------------------


def _check_square(mat):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {mat.shape}")


@dataclass(frozen=True)
class LieElement:
    """Element of the matrix Lie algebra, stored as an anti-Hermitian matrix."""

    mat: np.ndarray
    algebra: AlgebraDescriptor = field(default=su2, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.mat, dtype=complex)
        _check_square(m)
        if m.shape[0] != self.algebra.n:
            raise ShapeError("matrix size does not match the algebra")
        if np.abs(m + m.conj().T).max() > ATOL * max(1.0, np.abs(m).max()):
            raise ValidationError("Lie algebra element must be anti-Hermitian")
        if self.algebra.special and abs(np.trace(m)) > ATOL:
            raise ValidationError("Lie algebra element must be traceless")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @classmethod
    def from_coeffs(cls, coeffs, algebra=su2):
        return cls(algebra.to_matrix(np.asarray(coeffs, dtype=float)), algebra)

    @property
    def coeffs(self):
        return self.algebra.to_coeffs(self.mat)

    def __add__(self, other):
        return LieElement(self.mat + other.mat, self.algebra)

    def __sub__(self, other):
        return LieElement(self.mat - other.mat, self.algebra)

    def __neg__(self):
        return LieElement(-self.mat, self.algebra)

    def __mul__(self, s):
        return LieElement(float(s) * self.mat, self.algebra)

    __rmul__ = __mul__

    def norm(self):
        return float(np.sqrt(trace_inner(self, self)))

    def allclose(self, other, atol=1e-12):
        return bool(np.allclose(self.mat, other.mat, atol=atol, rtol=0))


@dataclass(frozen=True)
class GroupElement:
    """Element of the compact matrix group, stored as a unitary matrix."""

    mat: np.ndarray
    algebra: AlgebraDescriptor = field(default=su2, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.mat, dtype=complex)
        _check_square(m)
        if m.shape[0] != self.algebra.n:
            raise ShapeError("matrix size does not match the algebra")
        if np.abs(m.conj().T @ m - np.eye(m.shape[0])).max() > ATOL * 10:
            raise ValidationError("group element must be unitary")
        if self.algebra.special and abs(np.linalg.det(m) - 1) > ATOL * 10:
            raise ValidationError("group element must have determinant 1")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @classmethod
    def identity(cls, algebra=su2):
        return cls(np.eye(algebra.n, dtype=complex), algebra)

    def __matmul__(self, other):
        return GroupElement(self.mat @ other.mat, self.algebra)

    def inverse(self):
        return GroupElement(self.mat.conj().T, self.algebra)


@dataclass(frozen=True)
class BasisDecomposition:
    """Terms (coefficient, left, right) with sum coefficient*[left, right] = target."""

    terms: tuple

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def reconstruct(self, algebra=su2):
        out = np.zeros((algebra.n, algebra.n), dtype=complex)
        for c, left, right in self.terms:
            out = out + c * bracket(left, right).mat
        return LieElement(out, algebra)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def _same_dim(x, y):
    if x.mat.shape != y.mat.shape:
        raise ShapeError(f"dimension mismatch: {x.mat.shape} vs {y.mat.shape}")


def bracket(x: LieElement, y: LieElement) -> LieElement:
    """Matrix commutator xy - yx."""
    _same_dim(x, y)
    return LieElement(x.mat @ y.mat - y.mat @ x.mat, x.algebra)


def trace_inner(x: LieElement, y: LieElement) -> float:
    """Trace inner product Re tr(x^H y)."""
    _same_dim(x, y)
    return float(np.real(np.trace(x.mat.conj().T @ y.mat)))


def adjoint_action(g: GroupElement, x: LieElement) -> LieElement:
    """Ad(g) x = g x g^-1."""
    if g.mat.shape != x.mat.shape:
        raise ShapeError("group and algebra dimensions differ")
    m = g.mat
    if np.abs(m.conj().T @ m - np.eye(m.shape[0])).max() > 1e-10:
        raise ValidationError("adjoint action needs a unitary group element")
    return LieElement(m @ x.mat @ m.conj().T, x.algebra)


def expm_batch(X, order=18):
    """Matrix exponential of a stack (..., n, n) by scaling and squaring.

    The Taylor series is truncated at ``order`` after scaling the input to
    operator norm below 1/2, which puts the truncation error under 1e-16.
    """
    X = np.asarray(X, dtype=complex)
    norms = np.linalg.norm(X, ord=2, axis=(-2, -1)) if X.ndim > 2 else np.array(
        np.linalg.norm(X, ord=2)
    )
    nmax = float(np.max(norms)) if norms.size else 0.0
    s = 0 if nmax <= 0.5 else int(np.ceil(np.log2(nmax / 0.5)))
    Y = X / (2.0**s)
    eye = np.broadcast_to(np.eye(X.shape[-1], dtype=complex), X.shape)
    term = eye.copy()
    out = eye.copy()
    for k in range(1, order + 1):
        term = term @ Y / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def logm_batch(G, order=60):
    """Inverse of :func:`expm_batch` near the identity.

    Takes square roots (Denman-Beavers) until the argument is within 0.05 of
    the identity, evaluates the log series there, and scales back.
    """
    G = np.asarray(G, dtype=complex)
    eye = np.broadcast_to(np.eye(G.shape[-1], dtype=complex), G.shape)
    dist = np.linalg.norm(G - eye, ord=2, axis=(-2, -1)) if G.ndim > 2 else np.array(
        np.linalg.norm(G - eye, ord=2)
    )
    if dist.size and float(np.max(dist)) >= LOG_RADIUS:
        raise DomainError(
            f"log is only defined within operator-norm distance {LOG_RADIUS} of e"
        )
    Y = G.copy()
    k = 0
    while True:
        d = np.linalg.norm(Y - eye, ord=2, axis=(-2, -1)) if Y.ndim > 2 else np.array(
            np.linalg.norm(Y - eye, ord=2)
        )
        if not d.size or float(np.max(d)) < 0.05:
            break
        # Denman-Beavers square root iteration
        Z = eye.copy()
        Yk = Y.copy()
        for _ in range(30):
            Yn = 0.5 * (Yk + np.linalg.inv(Z))
            Zn = 0.5 * (Z + np.linalg.inv(Yk))
            if np.abs(Yn - Yk).max() < 1e-16:
                Yk, Z = Yn, Zn
                break
            Yk, Z = Yn, Zn
        Y = Yk
        k += 1
    E = Y - eye
    term = eye.copy()
    out = np.zeros_like(Y)
    for j in range(1, order + 1):
        term = term @ E
        out = out + ((-1) ** (j + 1)) * term / j
    return out * (2.0**k)


def exp(x: LieElement) -> GroupElement:
    """Group exponential."""
    return GroupElement(expm_batch(x.mat), x.algebra)


def log(g: GroupElement) -> LieElement:
    """Group logarithm, defined when ||g - e||_op < LOG_RADIUS."""
    L = logm_batch(g.mat)
    L = 0.5 * (L - L.conj().T)
    if g.algebra.special:
        L = L - np.trace(L) / L.shape[0] * np.eye(L.shape[0])
    return LieElement(L, g.algebra)


def commutator_decompose(x: LieElement) -> BasisDecomposition:
    """Write x as a sum of brackets of basis elements.

    For each basis element e_k a pair (e_i, e_j) with [e_i, e_j]
    proportional to e_k is taken from the structure constants; for su(2)
    this is the cyclic table, e.g. e3 -> (1, e1, e2).
    """
    alg = x.algebra
    if not alg.semisimple:
        raise ValidationError("commutator decomposition needs a semisimple algebra")
    coeffs = alg.to_coeffs(x.mat)
    terms = []
    for k in range(alg.dim):
        ck = float(coeffs[k])
        if abs(ck) <= ATOL:
            continue
        i, j, c = _bracket_pair(alg, k)
        terms.append(
            (
                ck / c,
                LieElement.from_coeffs(np.eye(alg.dim)[i], alg),
                LieElement.from_coeffs(np.eye(alg.dim)[j], alg),
            )
        )
    return BasisDecomposition(tuple(terms))


def _bracket_pair(alg, k):
    """Basis pair (i, j), i < j in cyclic order, whose bracket hits only e_k."""
    C = alg.structure
    best = None
    for s in range(1, alg.dim):
        for i in range(alg.dim):
            j = (i + s) % alg.dim
            col = C[:, i, j]
            if abs(col[k]) > 1e-12 and np.count_nonzero(np.abs(col) > 1e-12) == 1:
                return i, j, float(col[k])
            if abs(col[k]) > 1e-12 and best is None:
                best = (i, j, float(col[k]))
    if best is None:
        raise ValidationError(f"basis element {k} is not a bracket of basis elements")
    return best


def basis_pair(k, algebra=su2):
    """Basis indices (i, j) and scale c with [e_i, e_j] = c e_k."""
    return _bracket_pair(algebra, k)


def double_bracket_triple(k, algebra=su2):
    """Basis indices (a, b, c) and scale s with [[e_a, e_b], e_c] = s e_k."""
    i, j, c1 = _bracket_pair(algebra, k)
    a, b, c2 = _bracket_pair(algebra, i)
    return a, b, j, c1 * c2
