"""Dense real symmetric-matrix kernel.

Everything downstream (pencil evaluation, the SDP solver, certificate
extraction, block diagonalization) funnels through the handful of
primitives in this module: symmetric eigendecomposition, semidefinite
factorization, Kronecker products, the isometric symmetric vectorization
``svec``/``smat``, nullspaces and polar factors.

Tolerances are parameters with stated defaults and are interpreted
relative to ``1 + ||.||_F`` unless noted otherwise.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SQRT2 = float(np.sqrt(2.0))


class NotPsdError(ValueError):
    """Matrix expected positive semidefinite has an eigenvalue below -tol."""

    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})"
        )


class NearSingularError(ValueError):
    """Matrix expected invertible is numerically singular."""


class EigenConvergenceError(RuntimeError):
    """The symmetric eigensolver failed to converge."""


def symmetry_defect(a: np.ndarray) -> float:
    """Largest absolute entry of ``a - a.T``, scaled by ``1 + max|a|``."""
    a = np.asarray(a, dtype=float)
    scale = 1.0 + (np.max(np.abs(a)) if a.size else 0.0)
    return float(np.max(np.abs(a - a.T)) / scale) if a.size else 0.0


def require_symmetric(a: np.ndarray, tol: float = 1e-12, what: str = "matrix") -> np.ndarray:
    """Validate symmetry of ``a`` within ``tol`` and return the symmetrized copy."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    if symmetry_defect(a) > tol:
        raise ValueError(f"{what} is not symmetric (defect {symmetry_defect(a):.3e} > {tol:.1e})")
    return 0.5 * (a + a.T)


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition ``a = Q diag(w) Q.T`` of a symmetric matrix.

    Returns eigenvalues in ascending order and an orthogonal ``Q``.
    Raises :class:`EigenConvergenceError` if the underlying iteration
    does not converge.
    """
    a = np.asarray(a, dtype=float)
    try:
        w, q = np.linalg.eigh(0.5 * (a + a.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure is rare
        raise EigenConvergenceError(str(exc)) from exc
    return w, q


def psd_factor(a: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Factor a PSD matrix as ``a ~= W.T @ W`` with ``W`` of shape (r, n).

    ``r`` is the number of eigenvalues above ``tol``; eigenvalues in
    ``[-tol, tol]`` are truncated to zero.  Raises :class:`NotPsdError`
    when an eigenvalue falls below ``-tol``.
    """
    w, q = sym_eig(a)
    if w[0] < -tol:
        raise NotPsdError(w[0])
    keep = w > tol
    return (np.sqrt(w[keep])[:, None] * q[:, keep].T)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with entries ``(kron(a, b))[(i,k),(j,l)] = a[i,j] b[k,l]``."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def nullspace(m: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (columns) of ``{v : m @ v ~= 0}``.

    A vector counts as null when its singular value is below
    ``tol * (1 + ||m||_F)``.  The basis may be empty (shape ``(n, 0)``).
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return np.eye(m.shape[1])
    _, s, vt = np.linalg.svd(m)
    cutoff = tol * (1.0 + np.linalg.norm(m))
    rank = int(np.sum(s > cutoff))
    return vt[rank:].T


def polar_orthogonal(t: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthogonal polar factor ``U = t (t.T t)^{-1/2}`` of an invertible ``t``.

    Raises :class:`NearSingularError` when the smallest singular value of
    ``t`` is at most ``tol`` times the largest.
    """
    t = np.asarray(t, dtype=float)
    u, s, vt = np.linalg.svd(t)
    if s[-1] <= tol * max(s[0], 1e-300):
        raise NearSingularError(
            f"matrix is numerically singular (sigma_min/sigma_max = {s[-1] / max(s[0], 1e-300):.3e})"
        )
    return u @ vt


# ---------------------------------------------------------------------------
# Symmetric vectorization.  Convention: pairs (i, j) with i <= j in row-major
# order; diagonal entries unscaled, off-diagonal entries scaled by sqrt(2), so
# that <svec(A), svec(B)> = trace(A B).
# ---------------------------------------------------------------------------


def svec_dim(n: int) -> int:
    """Length of ``svec`` of an ``n x n`` symmetric matrix."""
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def _svec_index(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n)
    weights = np.where(i == j, 1.0, SQRT2)
    return i, j, weights


def svec(a: np.ndarray) -> np.ndarray:
    """Isometric vectorization of a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    i, j, w = _svec_index(a.shape[0])
    return w * a[i, j]


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if svec_dim(n) != v.size:
        raise ValueError(f"vector of length {v.size} is not a valid svec")
    i, j, w = _svec_index(n)
    m = np.zeros((n, n))
    m[i, j] = v / w
    m[j, i] = m[i, j]
    return m


@lru_cache(maxsize=None)
def smat_basis(n: int) -> np.ndarray:
    """Stack of ``smat`` images of the standard basis, shape (svec_dim, n, n)."""
    k = svec_dim(n)
    out = np.zeros((k, n, n))
    i, j, w = _svec_index(n)
    idx = np.arange(k)
    out[idx, i, j] = 1.0 / w
    out[idx, j, i] = 1.0 / w
    return out


def svec_batch(mats: np.ndarray) -> np.ndarray:
    """Apply :func:`svec` along the first axis of a (k, n, n) stack."""
    mats = np.asarray(mats, dtype=float)
    i, j, w = _svec_index(mats.shape[-1])
    return mats[..., i, j] * w


def min_eigenvalue(a: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])
