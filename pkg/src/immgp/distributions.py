"""Seeded samplers and log-densities for the model's prior families.

All samplers take an explicit ``numpy.random.Generator`` (PCG64) so that
every draw in the package is a pure function of (parameters, rng state).
``make_rng`` / ``split_rng`` give deterministic root and sub-streams.

Parameterizations:

* gamma(a, b): density b^a / Gamma(a) * x^(a-1) * exp(-b x), mean a / b
* Wishart(W, nu): density prop. to |X|^((nu-D-1)/2) exp(-Tr(W^-1 X)/2),
  mean nu * W
* multivariate normal given mean and a *precision* (inverse covariance)
* log-normal(mu, r): ln x is normal with mean mu and variance r
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, multigammaln

from .errors import (
    DimensionMismatch,
    DofTooSmall,
    NonPositiveParameter,
    NonPositiveVariance,
    OutOfRange,
)
from .linalg import chol_spd, logdet

LN_2PI = float(np.log(2.0 * np.pi))


def make_rng(seed: int) -> np.random.Generator:
    """Root generator (PCG64) for a 64-bit seed."""
    return np.random.default_rng(np.uint64(seed))


def split_rng(seed: int, n: int) -> list[np.random.Generator]:
    """n independent sub-streams derived deterministically from one seed."""
    seq = np.random.SeedSequence(np.uint64(seed))
    return [np.random.default_rng(child) for child in seq.spawn(n)]


def mvn_sample(mean: np.ndarray, precision: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, precision^-1).

    With L the lower Cholesky factor of the precision, x = mean + L^-T z
    for z standard normal has exactly the target covariance.
    """
    mean = np.asarray(mean, dtype=float)
    f = chol_spd(np.asarray(precision, dtype=float))
    if mean.shape != (f.dim,):
        raise DimensionMismatch(
            f"mean has shape {mean.shape}, precision is {f.dim}x{f.dim}"
        )
    z = rng.standard_normal(f.dim)
    from scipy.linalg import solve_triangular

    return mean + solve_triangular(f.lower, z, lower=True, trans="T")


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, precision: np.ndarray) -> float:
    """Exact log density of N(mean, precision^-1) at x."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    f = chol_spd(np.asarray(precision, dtype=float))
    if x.shape != mean.shape or x.shape != (f.dim,):
        raise DimensionMismatch(
            f"x {x.shape}, mean {mean.shape}, precision {f.dim}x{f.dim}"
        )
    d = x - mean
    # quadratic form d^T P d through the factor of P: ||L^T d||^2
    q = float(np.sum((f.lower.T @ d) ** 2))
    return 0.5 * logdet(f) - 0.5 * f.dim * LN_2PI - 0.5 * q


def wishart_sample(scale: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Wishart draw with mean dof * scale, via the Bartlett construction.

    Raises
    ------
    DofTooSmall
        If dof < dim(scale).
    """
    W = np.asarray(scale, dtype=float)
    d = W.shape[0]
    if dof < d:
        raise DofTooSmall(f"dof {dof} < dimension {d}")
    L = chol_spd(W).lower
    A = np.zeros((d, d))
    tril = np.tril_indices(d, k=-1)
    A[tril] = rng.standard_normal(len(tril[0]))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(dof - np.arange(d)))
    LA = L @ A
    return LA @ LA.T


def wishart_logpdf(X: np.ndarray, scale: np.ndarray, dof: float) -> float:
    """Log density of the Wishart with mean dof * scale at SPD X."""
    X = np.asarray(X, dtype=float)
    W = np.asarray(scale, dtype=float)
    d = W.shape[0]
    if dof < d:
        raise DofTooSmall(f"dof {dof} < dimension {d}")
    fX = chol_spd(X)
    fW = chol_spd(W)
    # Tr(W^-1 X) via solve against the factor of W
    from .linalg import solve

    tr = float(np.trace(solve(fW, X)))
    return (
        0.5 * (dof - d - 1.0) * logdet(fX)
        - 0.5 * tr
        - 0.5 * dof * logdet(fW)
        - 0.5 * dof * d * np.log(2.0)
        - multigammaln(0.5 * dof, d)
    )


def gamma_sample(a: float, b: float, rng: np.random.Generator) -> float:
    """Gamma draw with shape a and rate b (mean a / b)."""
    if a <= 0 or b <= 0:
        raise NonPositiveParameter(f"gamma requires a > 0 and b > 0, got a={a}, b={b}")
    return float(rng.gamma(a, 1.0 / b))


def gamma_logpdf(x: float, a: float, b: float) -> float:
    """Log density a*ln(b) - lnGamma(a) + (a-1)*ln(x) - b*x."""
    if a <= 0 or b <= 0:
        raise NonPositiveParameter(f"gamma requires a > 0 and b > 0, got a={a}, b={b}")
    if x <= 0:
        raise NonPositiveParameter(f"gamma density evaluated at x={x} <= 0")
    return a * np.log(b) - float(gammaln(a)) + (a - 1.0) * np.log(x) - b * x


def lognormal_sample(mu: float, r: float, rng: np.random.Generator) -> float:
    """Positive draw whose log is N(mu, r)."""
    if r <= 0:
        raise NonPositiveVariance(f"log-normal requires variance r > 0, got {r}")
    return float(np.exp(rng.normal(mu, np.sqrt(r))))


def lognormal_logpdf(w: float, mu: float, r: float) -> float:
    """Log density of the log-normal, including the -ln(w) Jacobian term."""
    if r <= 0:
        raise NonPositiveVariance(f"log-normal requires variance r > 0, got {r}")
    if w <= 0:
        raise NonPositiveParameter(f"log-normal density evaluated at w={w} <= 0")
    lw = np.log(w)
    return -lw - 0.5 * np.log(2.0 * np.pi * r) - (lw - mu) ** 2 / (2.0 * r)


def stirling_unsigned(N: int) -> list[int]:
    """Unsigned Stirling numbers of the first kind, [s(N,1), ..., s(N,N)].

    Exact integer recurrence s(N, c) = s(N-1, c-1) + (N-1) * s(N-1, c).
    These are the coefficients of the rising factorial:
    sum_c s(N, c) x^c = x (x+1) ... (x+N-1).

    Raises
    ------
    OutOfRange
        If N is outside [1, 30]; beyond 30 the values need log-space
        handling which no caller here requires.
    """
    if not 1 <= N <= 30:
        raise OutOfRange(f"N must be in [1, 30], got {N}")
    row = [1]
    for n in range(2, N + 1):
        prev = row
        row = [0] * n
        for c in range(n):
            above = prev[c - 1] if c >= 1 else 0
            right = prev[c] if c < n - 1 else 0
            row[c] = above + (n - 1) * right
    return row
