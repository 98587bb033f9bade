"""Domain types and covariance construction for the mixture model.

A mixture component r owns an input-space Gaussian (mean ``mu``, precision
``R``) and a zero-mean multi-output GP over its members' outputs: the
covariance between output l at x and output k at x' is
``sigma0 * K[l, k] * k_w(x, x')`` with an ARD squared-exponential ``k_w``,
plus independent per-output noise.

Stacked outputs use the output-major layout throughout the package: for a
component with members (x_1..x_n) the stacked vector is
(y_1[out 0], ..., y_n[out 0], y_1[out 1], ..., y_n[out M-1]).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .linalg import SpdFactor, chol_spd, kron, logdet, solve

LN_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Hyperparams:
    """Fixed top-level prior parameters.

    a0, b0   gamma prior on the DP concentration alpha
    mu0, R0  Gaussian prior on component input means (R0 is a precision)
    W0, nu0  Wishart prior on component input precisions
    a1, b1   gamma prior on the GP scale sigma0
    W1, nu1  Wishart prior on the inter-output matrix K
    mu1, r1  log-normal prior on ARD weights (mean/variance of ln w)
    a2, b2   gamma prior on per-output noise variances
    """

    a0: float
    b0: float
    mu0: np.ndarray
    R0: np.ndarray
    W0: np.ndarray
    nu0: float
    a1: float
    b1: float
    W1: np.ndarray
    nu1: float
    mu1: float
    r1: float
    a2: float
    b2: float

    @property
    def input_dim(self) -> int:
        return len(self.mu0)

    @property
    def output_dim(self) -> int:
        return self.W1.shape[0]

    def validate(self) -> None:
        """Raise if any scalar is non-positive or any SPD field fails at zero jitter."""
        for name in ("a0", "b0", "a1", "b1", "r1", "a2", "b2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"hyperparameter {name} must be positive")
        D, M = self.input_dim, self.output_dim
        if self.nu0 < D:
            raise ValueError(f"nu0={self.nu0} must be >= input dimension {D}")
        if self.nu1 < M:
            raise ValueError(f"nu1={self.nu1} must be >= output dimension {M}")
        for name in ("R0", "W0", "W1"):
            try:
                chol_spd(getattr(self, name), jitter_schedule=(0.0,))
            except NotPositiveDefinite as exc:
                raise ValueError(f"hyperparameter {name} is not SPD: {exc}") from exc


@dataclass
class Component:
    """Parameters of one mixture component.

    mu, R   input Gaussian mean and precision
    sigma0  GP scale (positive)
    K       inter-output similarity matrix (M x M, symmetric PSD)
    w       ARD weights, one per input dimension (positive)
    noise   per-output noise variances (positive)
    """

    mu: np.ndarray
    R: np.ndarray
    sigma0: float
    K: np.ndarray
    w: np.ndarray
    noise: np.ndarray

    def copy(self) -> "Component":
        return Component(
            mu=self.mu.copy(),
            R=self.R.copy(),
            sigma0=self.sigma0,
            K=self.K.copy(),
            w=self.w.copy(),
            noise=self.noise.copy(),
        )


@dataclass
class MixtureState:
    """One configuration of the hidden variables.

    alpha        DP concentration
    assignments  component id per datum, shape (N,)
    components   live components keyed by id
    """

    alpha: float
    assignments: np.ndarray
    components: dict[int, Component]

    def copy(self) -> "MixtureState":
        return MixtureState(
            alpha=self.alpha,
            assignments=self.assignments.copy(),
            components={r: c.copy() for r, c in self.components.items()},
        )

    def members(self, r: int) -> np.ndarray:
        """Indices of data assigned to component r, ascending."""
        return np.flatnonzero(self.assignments == r)

    def counts(self) -> dict[int, int]:
        ids, n = np.unique(self.assignments, return_counts=True)
        return dict(zip(ids.tolist(), n.tolist()))

    def next_id(self) -> int:
        return max(self.components, default=-1) + 1

    def check(self) -> None:
        """Raise if assignments reference dead ids or a component is empty."""
        used = set(np.unique(self.assignments).tolist())
        live = set(self.components)
        if not used <= live:
            raise ValueError(f"assignments reference missing components {used - live}")
        if live - used:
            raise ValueError(f"components without members: {live - used}")


@dataclass(frozen=True)
class Dataset:
    """Paired inputs X (N x D) and outputs Y (N x M), all finite."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or self.Y.ndim != 2:
            raise DimensionMismatch("X and Y must be 2-d arrays")
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionMismatch(
                f"X has {self.X.shape[0]} rows but Y has {self.Y.shape[0]}"
            )
        if not (np.isfinite(self.X).all() and np.isfinite(self.Y).all()):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @property
    def output_dim(self) -> int:
        return self.Y.shape[1]


def kernel(x: np.ndarray, x2: np.ndarray, w: np.ndarray) -> float:
    """ARD squared-exponential: exp(-0.5 * sum_d w_d^2 (x_d - x2_d)^2)."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    w = np.asarray(w, dtype=float)
    if not (x.shape == x2.shape == w.shape):
        raise DimensionMismatch(
            f"x {x.shape}, x2 {x2.shape}, w {w.shape} must all agree"
        )
    return float(np.exp(-0.5 * np.sum((w * (x - x2)) ** 2)))


def kernel_matrix(Xr: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Symmetric kernel matrix over the rows of Xr, unit diagonal."""
    Z = np.asarray(Xr, dtype=float) * np.asarray(w, dtype=float)
    sq = np.sum(Z**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    Kx = np.exp(-0.5 * d2)
    np.fill_diagonal(Kx, 1.0)
    return Kx


def cross_kernel(xstar: np.ndarray, Xr: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Kernel values between one input and each row of Xr, shape (N_r,)."""
    diff = (np.asarray(Xr, dtype=float) - np.asarray(xstar, dtype=float)) * np.asarray(
        w, dtype=float
    )
    return np.exp(-0.5 * np.sum(diff**2, axis=1))


def stack_outputs(Yr: np.ndarray) -> np.ndarray:
    """Flatten an (N_r, M) output table to the output-major stacked vector."""
    return np.asarray(Yr, dtype=float).T.reshape(-1)


def unstack_outputs(y: np.ndarray, n_points: int) -> np.ndarray:
    """Inverse of stack_outputs; returns the (N_r, M) table."""
    y = np.asarray(y, dtype=float)
    if y.size % n_points:
        raise DimensionMismatch(f"cannot reshape {y.size} values to {n_points} rows")
    return y.reshape(-1, n_points).T


def assemble_sigma(c: Component, Xr: np.ndarray) -> np.ndarray:
    """Covariance of the stacked outputs of a component.

    sigma0 * kron(K, K_x) + kron(diag(noise), I), an (M n) x (M n) matrix
    in the output-major layout.
    """
    Kx = kernel_matrix(Xr, c.w)
    n = Kx.shape[0]
    return c.sigma0 * kron(c.K, Kx) + kron(np.diag(c.noise), np.eye(n))


def log_marginal_y(
    c: Component, Xr: np.ndarray, yr: np.ndarray, return_factor: bool = False
):
    """Log density of the stacked outputs under the component's GP.

    -0.5 * (n ln(2 pi) + ln|Sigma| + y^T Sigma^-1 y) with Sigma from
    ``assemble_sigma``. An empty member set has log density 0 by
    convention (needed transiently while indicators move).
    """
    Xr = np.atleast_2d(np.asarray(Xr, dtype=float))
    yr = np.asarray(yr, dtype=float)
    if Xr.shape[0] == 0:
        return (0.0, None) if return_factor else 0.0
    sigma = assemble_sigma(c, Xr)
    if yr.shape != (sigma.shape[0],):
        raise DimensionMismatch(
            f"stacked outputs have shape {yr.shape}, expected ({sigma.shape[0]},)"
        )
    f = chol_spd(sigma)
    val = -0.5 * (f.dim * LN_2PI + logdet(f) + float(yr @ solve(f, yr)))
    return (val, f) if return_factor else val


def marginal_cov_single(c: Component) -> np.ndarray:
    """Covariance of one datum's M outputs under the component alone.

    With a unit kernel self-similarity, sigma0 * K + diag(noise).
    """
    return c.sigma0 * c.K + np.diag(c.noise)


def conditional_y_given_members(
    c: Component, X_members: np.ndarray, Y_members: np.ndarray, x_new: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of a new datum's outputs given member outputs.

    Builds the joint stacked covariance over members plus the new point and
    conditions on the members' outputs. Returns (mean, covariance), each of
    output dimension M. With no members this is the marginal
    (0, sigma0 * K + diag(noise)).
    """
    X_members = np.atleast_2d(np.asarray(X_members, dtype=float))
    M = c.K.shape[0]
    n = X_members.shape[0]
    if n == 0:
        return np.zeros(M), marginal_cov_single(c)
    pts = np.vstack([X_members, np.asarray(x_new, dtype=float)[None, :]])
    sigma = assemble_sigma(c, pts)
    # output-major over n+1 points: new point occupies slot n of each block
    new_idx = np.arange(M) * (n + 1) + n
    old_idx = np.setdiff1d(np.arange(M * (n + 1)), new_idx)
    S_oo = sigma[np.ix_(old_idx, old_idx)]
    S_no = sigma[np.ix_(new_idx, old_idx)]
    S_nn = sigma[np.ix_(new_idx, new_idx)]
    f = chol_spd(S_oo)
    y_old = stack_outputs(Y_members)
    mean = S_no @ solve(f, y_old)
    cov = S_nn - S_no @ solve(f, S_no.T)
    return mean, 0.5 * (cov + cov.T)


def mvn_logpdf_cov(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log density of N(mean, cov) at x, for small covariance-form Gaussians."""
    f = chol_spd(np.asarray(cov, dtype=float))
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    return -0.5 * (f.dim * LN_2PI + logdet(f) + float(d @ solve(f, d)))


def sample_component(hp: Hyperparams, rng: np.random.Generator) -> Component:
    """Draw a full set of component parameters from their priors.

    Draw order is fixed (mu, R, sigma0, K, then each ARD weight, then each
    noise variance) so a seeded generator reproduces the component exactly.
    """
    from .distributions import (
        gamma_sample,
        lognormal_sample,
        mvn_sample,
        wishart_sample,
    )

    mu = mvn_sample(hp.mu0, hp.R0, rng)
    R = wishart_sample(hp.W0, hp.nu0, rng)
    sigma0 = gamma_sample(hp.a1, hp.b1, rng)
    K = wishart_sample(hp.W1, hp.nu1, rng)
    w = np.array([lognormal_sample(hp.mu1, hp.r1, rng) for _ in range(hp.input_dim)])
    noise = np.array([gamma_sample(hp.a2, hp.b2, rng) for _ in range(hp.output_dim)])
    return Component(mu=mu, R=R, sigma0=sigma0, K=K, w=w, noise=noise)
