"""Dense real symmetric matrices and the handful of spectral quantities the
experiments need: operator and Hilbert-Schmidt norms, Diag/Off split,
effective rank, Loewner order and Hadamard products.

Eigenvalues come from LAPACK (``numpy.linalg.eigvalsh``) by default.  A cyclic
Jacobi solver is kept alongside as an independent route and is what the test
suite uses as its oracle; pass ``method="jacobi"`` to use it directly.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, InputError

SYMMETRY_TOL = 1e-12
PSD_RTOL = 1e-10


class SymMatrix:
    """Immutable dense symmetric matrix.

    Input is symmetrized as ``(A + A^T) / 2``; ``asymmetry`` keeps the largest
    ``|A_ij - A_ji|`` seen at construction and ``symmetrized`` flags inputs
    whose asymmetry exceeded ``1e-12`` (relative to the largest entry).
    """

    __slots__ = ("_a", "asymmetry", "symmetrized")

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InputError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("matrix has non-finite entries")
        asym = float(np.max(np.abs(a - a.T)))
        scale = max(1.0, float(np.max(np.abs(a))))
        if asym > 0.0:
            a = (a + a.T) / 2.0
        a.setflags(write=False)
        self._a = a
        self.asymmetry = asym
        self.symmetrized = asym > SYMMETRY_TOL * scale

    # constructors -------------------------------------------------------
    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls(np.eye(n))

    @classmethod
    def zeros(cls, n: int) -> "SymMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def diagonal(cls, values: Sequence[float]) -> "SymMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    # accessors ----------------------------------------------------------
    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def values(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self._a

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a
        return self._a.astype(dtype)

    def trace(self) -> float:
        return float(np.trace(self._a))

    def __add__(self, other):
        return SymMatrix(self._a + as_array(other))

    def __sub__(self, other):
        return SymMatrix(self._a - as_array(other))

    def __mul__(self, scalar):
        return SymMatrix(self._a * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SymMatrix(-self._a)

    def __matmul__(self, other):
        return self._a @ np.asarray(other, dtype=float)

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self._a.shape == other._a.shape and bool(np.array_equal(self._a, other._a))

    def __hash__(self):
        return hash((self._a.shape, self._a.tobytes()))

    def __repr__(self):
        return f"SymMatrix(dim={self.dim})"


class MatrixFamily:
    """Non-empty ordered family of symmetric matrices sharing one dimension."""

    __slots__ = ("members", "_stack")

    def __init__(self, members: Iterable):
        mats = tuple(m if isinstance(m, SymMatrix) else SymMatrix(m) for m in members)
        if not mats:
            raise InputError("matrix family must be non-empty")
        dims = {m.dim for m in mats}
        if len(dims) != 1:
            raise InputError(f"family members have different dimensions: {sorted(dims)}")
        self.members = mats
        stack = np.stack([m.values for m in mats])
        stack.setflags(write=False)
        self._stack = stack

    @property
    def dim(self) -> int:
        return self.members[0].dim

    @property
    def stack(self) -> np.ndarray:
        """Members as a read-only ``(k, n, n)`` array."""
        return self._stack

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    def max_spectral_norm(self) -> float:
        return max(spectral_norm(m) for m in self.members)

    def __repr__(self):
        return f"MatrixFamily(size={len(self)}, dim={self.dim})"


def as_sym(A) -> SymMatrix:
    return A if isinstance(A, SymMatrix) else SymMatrix(A)


def as_array(A) -> np.ndarray:
    return A.values if isinstance(A, SymMatrix) else np.asarray(A, dtype=float)


def _check_same_dim(A: SymMatrix, B: SymMatrix) -> None:
    if A.dim != B.dim:
        raise InputError(f"dimension mismatch: {A.dim} vs {B.dim}")


# eigenvalues -----------------------------------------------------------------

def jacobi_eigenvalues(a, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.

    Sweeps stop once the off-diagonal Frobenius mass drops below
    ``tol * ||A||_HS``, or when a sweep no longer reduces it (round-off floor).
    """
    a = np.array(as_array(a), dtype=float)
    n = a.shape[0]
    scale = float(np.sqrt(np.sum(a * a)))
    if scale == 0.0 or n == 1:
        return np.sort(np.diag(a).copy())
    iu = np.triu_indices(n, 1)

    def off_mass():
        return float(np.sqrt(2.0 * np.sum(a[iu] ** 2)))

    prev = np.inf
    for _ in range(max_sweeps):
        off = off_mass()
        if off < tol * scale or off >= prev:
            break
        prev = off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                # hypot avoids overflow of theta**2 for nearly diagonal pivots
                t = 1.0 / (abs(theta) + np.hypot(theta, 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    if off_mass() > 1e-10 * scale:
        raise DomainError("Jacobi iteration failed to converge")
    return np.sort(np.diag(a).copy())


def eigenvalues(A, method: str = "lapack") -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix."""
    a = as_sym(A).values
    if method == "lapack":
        return np.linalg.eigvalsh(a)
    if method == "jacobi":
        return jacobi_eigenvalues(a)
    raise InputError(f"unknown eigenvalue method {method!r}")


def spectral_norm(A, method: str = "lapack") -> float:
    """Operator norm, i.e. the largest absolute eigenvalue."""
    ev = eigenvalues(A, method)
    return float(max(abs(ev[0]), abs(ev[-1])))


def batch_spectral_norm(stack: np.ndarray) -> np.ndarray:
    """Operator norms of a ``(..., n, n)`` stack of symmetric matrices."""
    ev = np.linalg.eigvalsh(np.asarray(stack, dtype=float))
    return np.maximum(np.abs(ev[..., 0]), np.abs(ev[..., -1]))


def min_eigenvalue(A) -> float:
    return float(eigenvalues(A)[0])


def hs_norm(A) -> float:
    a = as_sym(A).values
    m = float(np.abs(a).max())
    if m == 0.0:
        return 0.0
    # scale first so tiny or huge entries neither underflow nor overflow
    b = a / m
    return m * float(np.sqrt(np.sum(b * b)))


def diag_part(A) -> SymMatrix:
    a = as_sym(A).values
    return SymMatrix(np.diag(np.diag(a)))


def off_part(A) -> SymMatrix:
    a = as_sym(A).values
    return SymMatrix(a - np.diag(np.diag(a)))


def effective_rank(A) -> float:
    """``Tr(A) / ||A||`` for a non-zero positive semidefinite matrix."""
    A = as_sym(A)
    ev = eigenvalues(A)
    top = float(max(abs(ev[0]), abs(ev[-1])))
    if top == 0.0:
        raise DomainError("effective rank of the zero matrix is undefined")
    if ev[0] < -PSD_RTOL * top:
        raise DomainError(f"matrix is not positive semidefinite (min eigenvalue {ev[0]:.3e})")
    return A.trace() / top


def hadamard(A, B) -> SymMatrix:
    A, B = as_sym(A), as_sym(B)
    _check_same_dim(A, B)
    return SymMatrix(A.values * B.values)


def psd_leq(A, B, tol: float = 0.0) -> bool:
    """True iff ``B - A`` is positive semidefinite up to ``-tol``."""
    if tol < 0:
        raise InputError("tol must be non-negative")
    A, B = as_sym(A), as_sym(B)
    _check_same_dim(A, B)
    return bool(np.linalg.eigvalsh(B.values - A.values)[0] >= -tol)


def sqrt_psd(A) -> SymMatrix:
    """Symmetric PSD square root; tiny negative eigenvalues are clipped to zero."""
    A = as_sym(A)
    w, v = np.linalg.eigh(A.values)
    top = max(abs(w[0]), abs(w[-1]), 0.0)
    if w[0] < -PSD_RTOL * max(top, 1e-300):
        raise DomainError("matrix is not positive semidefinite")
    return SymMatrix((v * np.sqrt(np.clip(w, 0.0, None))) @ v.T)


# fixture text format ------------------------------------------------------------

def format_matrix(A) -> str:
    a = as_sym(A).values
    lines = [str(a.shape[0])]
    lines += [" ".join(repr(float(x)) for x in row) for row in a]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> SymMatrix:
    """Parse ``dim`` followed by ``dim`` rows of ``dim`` decimals."""
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 1:
        raise InputError("first line must hold the dimension")
    try:
        dim = int(rows[0][0])
        data = [[float(x) for x in r] for r in rows[1:]]
    except ValueError as exc:
        raise InputError(f"malformed matrix text: {exc}") from None
    if dim <= 0 or len(data) != dim or any(len(r) != dim for r in data):
        raise InputError(f"expected {dim} rows of {dim} values")
    return SymMatrix(data)


def read_matrix(path) -> SymMatrix:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, A) -> None:
    Path(path).write_text(format_matrix(A))


# random fixtures -----------------------------------------------------------------

def random_symmetric(n: int, gen: np.random.Generator, scale: float | None = None) -> SymMatrix:
    """GOE-style matrix: Gaussian entries with variance ``scale**2`` (default ``1/n``)."""
    s = 1.0 / np.sqrt(n) if scale is None else scale
    g = gen.standard_normal((n, n)) * s
    return SymMatrix((g + g.T) / np.sqrt(2.0))


def random_psd(n: int, gen: np.random.Generator, rank: int | None = None) -> SymMatrix:
    k = n if rank is None else rank
    g = gen.standard_normal((n, k)) / np.sqrt(k)
    return SymMatrix(g @ g.T)


def random_orthogonal(n: int, gen: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR with sign correction)."""
    q, r = np.linalg.qr(gen.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_family(k: int, n: int, gen: np.random.Generator, psd: bool = False,
                  zero_diagonal: bool = False) -> MatrixFamily:
    members = []
    for _ in range(k):
        m = random_psd(n, gen) if psd else random_symmetric(n, gen)
        if zero_diagonal:
            m = off_part(m)
        members.append(m)
    return MatrixFamily(members)
