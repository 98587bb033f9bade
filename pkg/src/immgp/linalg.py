"""Dense SPD linear algebra and Kronecker assembly.

Thin, numerically careful wrappers around LAPACK (via numpy/scipy) used by
every likelihood evaluation in the package: Cholesky factorization with a
jitter schedule for near-singular covariances, triangular solves,
log-determinants, Kronecker products, and the trace form needed by the
gradient of the GP scale parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import DimensionMismatch, NotPositiveDefinite

# Jitter multipliers tried in order; each is scaled by mean(diag(A)).
DEFAULT_JITTER_SCHEDULE = (0.0, 1e-10, 1e-8, 1e-6)

_SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Attributes
    ----------
    lower : ndarray, shape (n, n)
        Lower-triangular factor L with L @ L.T = A + jitter * I.
    jitter : float
        The diagonal shift that made the factorization succeed (0 when the
        matrix was positive definite as given).
    """

    lower: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def chol_spd(A: np.ndarray, jitter_schedule=DEFAULT_JITTER_SCHEDULE) -> SpdFactor:
    """Cholesky-factor a symmetric matrix, escalating jitter until it works.

    Parameters
    ----------
    A : ndarray, shape (n, n)
        Symmetric matrix, positive definite up to roundoff. Symmetry is
        checked to 1e-9 relative tolerance.
    jitter_schedule : sequence of float
        Multipliers of mean(diag(A)) added to the diagonal, tried in order.

    Returns
    -------
    SpdFactor
        Factor of A + eps * I for the smallest eps in the schedule that
        succeeds; the eps used is recorded on the factor.

    Raises
    ------
    DimensionMismatch
        If A is not square.
    NotPositiveDefinite
        If A is not symmetric to tolerance or no eps in the schedule works.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), 1.0)
    if np.max(np.abs(A - A.T)) > _SYMMETRY_TOL * scale:
        raise NotPositiveDefinite("matrix is not symmetric to tolerance 1e-9")

    diag_mean = float(np.mean(np.diag(A)))
    base = diag_mean if diag_mean > 0 else 1.0
    n = A.shape[0]
    for mult in jitter_schedule:
        eps = mult * base
        try:
            L = np.linalg.cholesky(A if eps == 0.0 else A + eps * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        return SpdFactor(lower=L, jitter=eps)
    raise NotPositiveDefinite(
        f"Cholesky failed for all jitter values {tuple(jitter_schedule)} * {base:.3e}"
    )


def logdet(f: SpdFactor) -> float:
    """Log-determinant of the factored matrix, 2 * sum(log(diag(L)))."""
    return 2.0 * float(np.sum(np.log(np.diag(f.lower))))


def solve(f: SpdFactor, B: np.ndarray) -> np.ndarray:
    """Solve A @ X = B given the factor of A.

    Raises
    ------
    DimensionMismatch
        If B's leading dimension does not match the factor.
    """
    B = np.asarray(B, dtype=float)
    if B.shape[0] != f.dim:
        raise DimensionMismatch(
            f"rhs has leading dimension {B.shape[0]}, factor is {f.dim}x{f.dim}"
        )
    return cho_solve((f.lower, True), B)


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product with block (i, j) equal to A[i, j] * B."""
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def trace_prod(f: SpdFactor, y: np.ndarray, G: np.ndarray) -> float:
    """Trace of (A^-1 - A^-1 y y^T A^-1) @ G without forming A^-1.

    Uses one solve against the columns of G for the first term and one
    solve against y for the rank-one correction.

    Raises
    ------
    DimensionMismatch
        If y or G do not match the factor dimension.
    """
    y = np.asarray(y, dtype=float)
    G = np.asarray(G, dtype=float)
    n = f.dim
    if y.shape != (n,) or G.shape != (n, n):
        raise DimensionMismatch(
            f"expected y of shape ({n},) and G of shape ({n}, {n}), "
            f"got {y.shape} and {G.shape}"
        )
    a = solve(f, y)
    first = float(np.trace(solve(f, G)))
    return first - float(a @ G @ a)
