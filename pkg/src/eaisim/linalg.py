"""Dense complex linear algebra used throughout the simulator.

Two arithmetic backends share one interface:

* ``Backend()`` works on ``complex128`` numpy arrays and delegates to
  LAPACK through numpy/scipy.
* ``Backend(digits=...)`` works on numpy object arrays holding ``mpmath``
  complex numbers at the requested decimal precision. It exists because
  mode recovery squares the condition number of the probe matrix; with
  probe lines a millimetre from a 0.1 mm chain that product exceeds 1e14
  and float64 simply cannot carry the information.

Module-level functions (``solve``, ``eig_hermitian``, ``pinv``) take an
optional ``backend`` argument and default to float64.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import mpmath
import numpy as np
import scipy.linalg

__all__ = [
    "Backend",
    "FLOAT64",
    "EigDecomposition",
    "LinAlgError",
    "SingularMatrixError",
    "NonHermitianError",
    "solve",
    "eig_hermitian",
    "pinv",
    "fix_phase",
]

MAX_CONDITION = 1e14


class LinAlgError(ValueError):
    """Base class for numerical failures in this module."""


class SingularMatrixError(LinAlgError):
    def __init__(self, message: str, condition: float = np.inf):
        super().__init__(message)
        self.condition = condition


class NonHermitianError(LinAlgError):
    pass


@dataclass(frozen=True)
class Backend:
    """Arithmetic backend.

    Parameters
    ----------
    digits : int or None
        ``None`` selects float64. An integer selects mpmath arithmetic with
        that many significant decimal digits.
    """

    digits: int | None = None

    def __post_init__(self):
        if self.digits is not None and self.digits < 16:
            raise ValueError("extended precision needs at least 16 digits")

    @property
    def extended(self) -> bool:
        return self.digits is not None

    @cached_property
    def ctx(self):
        ctx = mpmath.MPContext()
        ctx.dps = self.digits if self.digits is not None else 15
        return ctx

    @property
    def eps(self) -> float:
        if self.digits is None:
            return float(np.finfo(float).eps)
        return 10.0 ** (-self.digits)

    # -- elementwise -----------------------------------------------------
    @cached_property
    def _vexp(self):
        return np.vectorize(self.ctx.exp, otypes=[object])

    @cached_property
    def _vsqrt(self):
        return np.vectorize(self.ctx.sqrt, otypes=[object])

    @cached_property
    def _vconv(self):
        ctx = self.ctx
        return np.vectorize(lambda v: ctx.mpc(complex(v)), otypes=[object])

    @cached_property
    def _vabs(self):
        return np.vectorize(lambda v: abs(v), otypes=[object])

    @cached_property
    def _vreal(self):
        return np.vectorize(lambda v: v.real, otypes=[object])

    @property
    def pi(self):
        return self.ctx.pi if self.extended else np.pi

    def scalar(self, value):
        """Lift a python/numpy number into the backend's scalar type."""
        return self.ctx.mpc(complex(value)) if self.extended else complex(value)

    def real_scalar(self, value):
        return self.ctx.mpf(float(value)) if self.extended else float(value)

    def asarray(self, a) -> np.ndarray:
        if not self.extended:
            return np.asarray(a, dtype=complex)
        a = np.asarray(a)
        if a.dtype == object:
            return a
        return self._vconv(a) if a.size else np.empty(a.shape, dtype=object)

    def to_complex(self, a) -> np.ndarray:
        """Round to a complex128 array (no-op for float64)."""
        a = np.asarray(a)
        if a.dtype != object:
            return a.astype(complex)
        return np.vectorize(complex, otypes=[complex])(a) if a.size else a.astype(complex)

    def to_real(self, a) -> np.ndarray:
        a = np.asarray(a)
        if a.dtype != object:
            return np.real(a).astype(float)
        return np.vectorize(lambda v: float(v.real) if hasattr(v, "real") else float(v),
                            otypes=[float])(a)

    def zeros(self, shape) -> np.ndarray:
        if not self.extended:
            return np.zeros(shape, dtype=complex)
        out = np.empty(shape, dtype=object)
        out.fill(self.ctx.mpc(0))
        return out

    def eye(self, n: int) -> np.ndarray:
        out = self.zeros((n, n))
        for i in range(n):
            out[i, i] = self.scalar(1.0)
        return out

    def exp(self, a):
        return self._vexp(a) if self.extended else np.exp(a)

    def sqrt(self, a):
        return self._vsqrt(a) if self.extended else np.sqrt(a)

    def abs(self, a):
        return self._vabs(a) if self.extended else np.abs(a)

    def real(self, a):
        return self._vreal(a) if self.extended else np.real(a)

    def conj(self, a):
        return np.conj(a)

    def norm(self, a):
        """Frobenius / Euclidean norm, returned as a python float."""
        if not self.extended:
            return float(np.linalg.norm(a))
        a = np.asarray(a, dtype=object).ravel()
        return float(self.ctx.sqrt(self.ctx.fsum(abs(v) ** 2 for v in a)))

    # -- matrix conversions ---------------------------------------------
    def _to_mp(self, a):
        a = np.atleast_2d(np.asarray(a, dtype=object))
        return self.ctx.matrix(a.tolist())

    @staticmethod
    def _from_mp(m) -> np.ndarray:
        out = np.empty((m.rows, m.cols), dtype=object)
        for i in range(m.rows):
            for j in range(m.cols):
                out[i, j] = m[i, j]
        return out

    # -- decompositions -------------------------------------------------
    def lu_solve(self, A, B):
        if not self.extended:
            return scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), B)
        B2 = np.array(B, dtype=object)
        vector = B2.ndim == 1
        X = _object_lu_solve(self._lu_factor(A), B2.reshape(B2.shape[0], -1))
        return X[:, 0] if vector else X

    def _lu_factor(self, A):
        """Partial-pivot LU of an object array; row operations stay vectorised."""
        LU = np.array(A, dtype=object)
        n = LU.shape[0]
        perm = np.arange(n)
        mag = self._vabs
        for k in range(n):
            p = k + int(np.argmax(self.to_real(mag(LU[k:, k]))))
            if p != k:
                LU[[k, p]] = LU[[p, k]]
                perm[[k, p]] = perm[[p, k]]
            if LU[k, k] == 0:
                raise SingularMatrixError("zero pivot in LU factorisation", np.inf)
            LU[k + 1:, k] = LU[k + 1:, k] / LU[k, k]
            LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
        return LU, perm

    def eigh(self, A):
        """Eigenpairs of a Hermitian matrix, ascending eigenvalues."""
        if not self.extended:
            return np.linalg.eigh(A)
        E, Q = self.ctx.eighe(self._to_mp(A))
        vals = np.array([E[i].real if hasattr(E[i], "real") else E[i] for i in range(len(E))],
                        dtype=object)
        vecs = self._from_mp(Q)
        order = np.argsort(self.to_real(vals), kind="stable")
        return vals[order], vecs[:, order]

    def svd(self, A):
        """Thin SVD ``A = U diag(s) Vh``."""
        if not self.extended:
            return np.linalg.svd(A, full_matrices=False)
        A = np.asarray(A, dtype=object)
        m, n = A.shape
        if m >= n:
            U, S, V = self.ctx.svd_c(self._to_mp(A), full_matrices=False)
            U, Vh = self._from_mp(U), self._from_mp(V)
        else:
            U2, S, V2 = self.ctx.svd_c(self._to_mp(A.conj().T), full_matrices=False)
            U, Vh = self._from_mp(V2).conj().T, self._from_mp(U2).conj().T
        s = np.array([S[i] for i in range(len(S))], dtype=object)
        order = np.argsort(-self.to_real(s), kind="stable")
        return U[:, order], s[order], Vh[order, :]


FLOAT64 = Backend()


@dataclass(frozen=True)
class EigDecomposition:
    """Eigenvalues sorted descending with matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def _object_lu_solve(factors, B: np.ndarray) -> np.ndarray:
    LU, perm = factors
    n = LU.shape[0]
    X = B[perm].copy()
    for i in range(1, n):
        X[i] = X[i] - LU[i, :i] @ X[:i]
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            X[i] = X[i] - LU[i, i + 1:] @ X[i + 1:]
        X[i] = X[i] / LU[i, i]
    return X


def _check_finite(A, name="matrix"):
    A = np.asarray(A)
    if A.dtype != object and not np.all(np.isfinite(A)):
        raise LinAlgError(f"{name} contains NaN or Inf")


def solve(A, B, backend: Backend = FLOAT64, max_condition: float = MAX_CONDITION):
    """Solve ``A X = B`` by LU factorisation.

    Raises `SingularMatrixError` when the 2-norm condition number of ``A``
    exceeds ``max_condition`` (the float64 default is 1e14; extended
    precision scales the limit with the working precision).
    """
    A = backend.asarray(A)
    B = backend.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise LinAlgError(f"solve needs a square matrix, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise LinAlgError(f"right-hand side has {B.shape[0]} rows, matrix has {A.shape[0]}")
    _check_finite(A)
    _check_finite(B, "right-hand side")
    cond = _condition(A, backend)
    limit = max_condition if not backend.extended else max_condition / backend.eps * 1e-16
    if not np.isfinite(cond) or cond > limit:
        raise SingularMatrixError(f"matrix is singular to working precision (cond ~ {cond:.3g})", cond)
    return backend.lu_solve(A, B)


def _condition(A, backend: Backend) -> float:
    if A.size == 0:
        return 1.0
    # a float64 estimate is enough unless it approaches 1/eps
    s = np.linalg.svd(backend.to_complex(A), compute_uv=False)
    if backend.extended and (s[-1] == 0 or s[0] / s[-1] > 1e14):
        s = backend.to_real(backend.svd(A)[1])
    if s[0] == 0.0:
        return np.inf
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def fix_phase(vectors: np.ndarray, backend: Backend = FLOAT64) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive."""
    V = np.array(vectors, copy=True)
    mags = backend.to_real(backend.abs(V)) if backend.extended else np.abs(V)
    for j in range(V.shape[1]):
        k = int(np.argmax(mags[:, j]))
        pivot = V[k, j]
        if mags[k, j] == 0:
            continue
        V[:, j] = V[:, j] * (abs(pivot) / pivot)
    return V


def eig_hermitian(A, symmetrize: bool = False, backend: Backend = FLOAT64) -> EigDecomposition:
    """Hermitian eigendecomposition with descending eigenvalues.

    With ``symmetrize`` the Hermitian part ``(A + A^H)/2`` is used;
    otherwise ``A`` must already be Hermitian to 1e-8 relative.
    """
    A = backend.asarray(A)
    _check_finite(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise LinAlgError(f"eig_hermitian needs a square matrix, got shape {A.shape}")
    herm = (A + A.conj().T) / 2
    if not symmetrize:
        scale = backend.norm(A)
        if backend.norm(A - A.conj().T) > 1e-8 * max(scale, np.finfo(float).tiny):
            raise NonHermitianError("matrix is not Hermitian; pass symmetrize=True to use its Hermitian part")
    vals, vecs = backend.eigh(herm)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    vecs = fix_phase(vecs, backend)
    if not backend.extended:
        vals = np.asarray(vals, dtype=float)
    return EigDecomposition(vals, vecs)


@dataclass(frozen=True)
class PseudoInverse:
    matrix: np.ndarray
    rank: int
    singular_values: np.ndarray


def pinv(A, rel_tol: float = 1e-10, backend: Backend = FLOAT64) -> PseudoInverse:
    """Moore-Penrose pseudo-inverse by truncated SVD.

    Singular values below ``rel_tol * s_max`` are discarded; the number
    kept is reported as ``rank``.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    A = backend.asarray(A)
    _check_finite(A)
    m, n = A.shape
    if A.size == 0 or backend.norm(A) == 0.0:
        return PseudoInverse(backend.zeros((n, m)), 0, np.zeros(min(m, n)))
    U, s, Vh = backend.svd(A)
    s_real = backend.to_real(s)
    keep = s_real > rel_tol * s_real[0]
    rank = int(np.count_nonzero(keep))
    Ur, sr, Vr = U[:, keep], s[keep], Vh[keep, :]
    inv = (Vr.conj().T / sr) @ Ur.conj().T
    return PseudoInverse(inv, rank, s_real)


def warn_rank(rank: int, needed: int, what: str = "probe matrix"):
    warnings.warn(f"{what} has numerical rank {rank} < {needed}", stacklevel=3)
