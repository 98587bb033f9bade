"""Gibbs sampler over indicators, component parameters, and concentration.

One sweep updates, in order: every indicator z_i (auxiliary-component scheme
with one fresh prior-drawn candidate), the input-space parameters (mu, R,
conjugate draws), the output-space parameters (sigma0 by Hamiltonian Monte
Carlo, K / w / noise by independence Metropolis-Hastings with prior
proposals), and finally the concentration alpha (log-space random walk MH).

Two exact evaluation strategies back the likelihood-heavy steps:

* ``IndicatorCaches`` keeps, per component, the Cholesky factor and inverse
  of the stacked-output covariance so that each candidate evaluation during
  an indicator scan is a cheap conditional instead of a fresh O(n^3)
  factorization.
* ``OutputModel`` whitens the covariance by the per-output noise, which
  turns sigma0 * K (x) Kx + diag(noise) (x) I into a Kronecker-structured
  eigenproblem: one n x n eigendecomposition per ARD weight vector, after
  which every (sigma0, K, noise) evaluation is O(n M). This makes the HMC
  trajectory and the MH proposal loops affordable without approximation.

Both agree with the dense Cholesky path (``model.log_marginal_y``) to
floating-point accuracy; the test suite pins that equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import dpotri
from scipy.special import gammaln

from .distributions import (
    gamma_logpdf,
    gamma_sample,
    lognormal_logpdf,
    lognormal_sample,
    make_rng,
    mvn_logpdf,
    mvn_sample,
    wishart_logpdf,
    wishart_sample,
)
from .errors import ImmgpError, NumericalError
from .linalg import chol_spd, logdet, solve
from .model import (
    LN_2PI,
    Component,
    Dataset,
    Hyperparams,
    MixtureState,
    conditional_y_given_members,
    cross_kernel,
    kernel_matrix,
    log_marginal_y,
    marginal_cov_single,
    mvn_logpdf_cov,
    sample_component,
    stack_outputs,
)

# Hamiltonian error beyond which a trajectory is declared divergent.
DIVERGENCE_THRESHOLD = 1000.0


@dataclass
class SamplerConfig:
    """Knobs for one MCMC run.

    Defaults follow the benchmark protocol: 4000 sweeps with the first
    2000 discarded.
    """

    n_sweeps: int = 4000
    burn_in: int = 2000
    hmc_step: float = 0.1
    hmc_leapfrog: int = 10
    mh_tries_per_param: int = 5
    alpha_proposal_scale: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be >= 1")
        if not 0 <= self.burn_in < self.n_sweeps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_sweeps")
        if self.hmc_leapfrog < 1:
            raise ValueError("hmc_leapfrog must be >= 1")
        if self.hmc_step <= 0:
            raise ValueError("hmc_step must be positive")
        if self.mh_tries_per_param < 1:
            raise ValueError("mh_tries_per_param must be >= 1")
        if self.alpha_proposal_scale <= 0:
            raise ValueError("alpha_proposal_scale must be positive")


@dataclass
class SweepDiagnostics:
    """Per-sweep record: component count, acceptance rates, log joint."""

    sweep: int
    n_components: int
    n_moves: int
    log_joint: float
    acc_sigma0: float
    acc_K: float
    acc_w: float
    acc_noise: float
    acc_alpha: float
    hmc_divergences: int


@dataclass
class Chain:
    """Retained post-burn-in states plus the full diagnostic trace."""

    samples: list[MixtureState]
    diagnostics: list[SweepDiagnostics]


# ---------------------------------------------------------------------------
# Spectral form of the stacked-output covariance
# ---------------------------------------------------------------------------


class OutputModel:
    """Noise-whitened spectral evaluator for one component's member set.

    For fixed members and ARD weights, caches the eigendecomposition of the
    input kernel matrix; log marginal likelihoods for any (sigma0, K, noise)
    then cost O(n M) plus an M x M eigendecomposition.
    """

    def __init__(self, Xr: np.ndarray, Ytable: np.ndarray):
        self.X = np.atleast_2d(np.asarray(Xr, dtype=float))
        self.Y = np.atleast_2d(np.asarray(Ytable, dtype=float))
        self.n = self.X.shape[0]
        self.M = self.Y.shape[1]
        self.lamx: np.ndarray | None = None
        self.YU: np.ndarray | None = None
        self.w: np.ndarray | None = None

    def set_w(self, w: np.ndarray) -> None:
        """Recompute the kernel eigendecomposition for new ARD weights."""
        Kx = kernel_matrix(self.X, w)
        lamx, Ux = np.linalg.eigh(Kx)
        np.maximum(lamx, 0.0, out=lamx)
        self.lamx = lamx
        self.YU = Ux.T @ self.Y
        self.w = np.array(w, dtype=float, copy=True)

    def snapshot(self):
        return self.lamx, self.YU, self.w

    def restore(self, snap) -> None:
        self.lamx, self.YU, self.w = snap

    def _whitened(self, K: np.ndarray, noise: np.ndarray):
        """Eigen-pieces of the whitened covariance for fixed (K, noise).

        Returns (lam2, ysq, ld_noise): the outer-product eigenvalues of
        Ktil (x) Kx, the squared rotated outputs, and n * sum(log noise).
        """
        s = 1.0 / np.sqrt(noise)
        Ktil = K * np.outer(s, s)
        lamk, Uk = np.linalg.eigh(Ktil)
        np.maximum(lamk, 0.0, out=lamk)
        T = (self.YU * s[None, :]) @ Uk
        lam2 = np.outer(self.lamx, lamk)
        return lam2, T**2, self.n * float(np.sum(np.log(noise)))

    def loglik(self, sigma0: float, K: np.ndarray, noise: np.ndarray) -> float:
        """Log marginal density of the stacked member outputs."""
        lam2, ysq, ld_noise = self._whitened(K, noise)
        denom = sigma0 * lam2 + 1.0
        ld = ld_noise + float(np.sum(np.log(denom)))
        quad = float(np.sum(ysq / denom))
        return -0.5 * (self.n * self.M * LN_2PI + ld + quad)

    def sigma0_closure(self, K: np.ndarray, noise: np.ndarray, a1: float, b1: float):
        """Potential and gradient of sigma0 with (K, noise) frozen.

        The returned callable maps sigma0 to (E, dE/dsigma0) where E is the
        negative log of prior times likelihood, dropping sigma0-free terms
        in neither (they cost nothing and keep E comparable across calls).
        """
        lam2, ysq, ld_noise = self._whitened(K, noise)
        const = 0.5 * (self.n * self.M * LN_2PI + ld_noise)

        def potential(sigma0: float) -> tuple[float, float]:
            denom = sigma0 * lam2 + 1.0
            E = (
                (1.0 - a1) * np.log(sigma0)
                + b1 * sigma0
                + 0.5 * float(np.sum(np.log(denom)))
                + 0.5 * float(np.sum(ysq / denom))
                + const
            )
            dE = (
                (1.0 - a1) / sigma0
                + b1
                + 0.5 * float(np.sum(lam2 / denom))
                - 0.5 * float(np.sum(lam2 * ysq / denom**2))
            )
            return E, dE

        return potential


def sigma0_potential_grad(
    c: Component, Xr: np.ndarray, Ytable: np.ndarray, a1: float, b1: float
) -> tuple[float, float]:
    """Potential energy of sigma0 and its analytic gradient.

    E = (1 - a1) ln(sigma0) + b1 sigma0 + 0.5 ln|Sigma| + 0.5 y^T Sigma^-1 y
    up to a sigma0-free constant that is included for comparability.
    """
    om = OutputModel(Xr, Ytable)
    om.set_w(c.w)
    return om.sigma0_closure(c.K, c.noise, a1, b1)(c.sigma0)


# ---------------------------------------------------------------------------
# Indicator updates
# ---------------------------------------------------------------------------


def _spd_inverse(factor) -> np.ndarray:
    """Explicit inverse from a Cholesky factor (LAPACK dpotri)."""
    inv, info = dpotri(factor.lower, lower=1)
    if info != 0:
        raise NumericalError(f"dpotri failed with info={info}")
    W = np.tril(inv)
    return W + np.tril(W, -1).T


class _CompCache:
    """Factorization state for one component's current member set."""

    __slots__ = ("members", "y", "a", "W", "n")

    def __init__(self, comp: Component, data: Dataset, members: np.ndarray):
        self.members = members
        self.n = members.size
        Xr = data.X[members]
        self.y = stack_outputs(data.Y[members])
        _, f = log_marginal_y(comp, Xr, self.y, return_factor=True)
        self.a = solve(f, self.y)
        self.W = _spd_inverse(f)


class IndicatorCaches:
    """Per-component factorizations reused across one indicator scan.

    Rebuilds lazily after membership changes; parameter changes require a
    fresh instance (sweeps construct one per scan).
    """

    def __init__(self, state: MixtureState, data: Dataset):
        self.state = state
        self.data = data
        self.cache: dict[int, _CompCache] = {}
        self.counts: dict[int, int] = state.counts()

    def _get(self, r: int) -> _CompCache:
        c = self.cache.get(r)
        if c is None:
            c = _CompCache(self.state.components[r], self.data, self.state.members(r))
            self.cache[r] = c
        return c

    def invalidate(self, r: int) -> None:
        self.cache.pop(r, None)

    def drop(self, r: int) -> None:
        self.cache.pop(r, None)
        self.counts.pop(r, None)

    def move(self, i: int, r_old: int, r_new: int) -> None:
        self.counts[r_old] = self.counts.get(r_old, 0) - 1
        self.counts[r_new] = self.counts.get(r_new, 0) + 1
        self.invalidate(r_old)
        self.invalidate(r_new)

    def cond_member(self, i: int, r: int) -> float:
        """Log density of datum i's outputs given the other members of its
        own component, read off the cached joint precision."""
        cache = self._get(r)
        comp = self.state.components[r]
        M = comp.K.shape[0]
        if cache.n == 1:
            return mvn_logpdf_cov(
                self.data.Y[i], np.zeros(M), marginal_cov_single(comp)
            )
        pos = int(np.searchsorted(cache.members, i))
        idx = pos + cache.n * np.arange(M)
        Paa = cache.W[np.ix_(idx, idx)]
        u = cache.W[idx, :] @ cache.y
        fa = chol_spd(Paa)
        quad = float(u @ solve(fa, u))
        return 0.5 * logdet(fa) - 0.5 * M * LN_2PI - 0.5 * quad

    def cond_nonmember(self, i: int, r: int) -> float:
        """Log density of datum i's outputs as a hypothetical member of r."""
        cache = self._get(r)
        comp = self.state.components[r]
        M = comp.K.shape[0]
        k = cross_kernel(self.data.X[i], self.data.X[cache.members], comp.w)
        amat = cache.a.reshape(M, cache.n)
        mean = comp.sigma0 * (comp.K @ (amat @ k))
        W4 = cache.W.reshape(M, cache.n, M, cache.n)
        Wk = np.tensordot(W4, k, axes=([3], [0]))
        T = np.tensordot(k, Wk, axes=([0], [1]))
        cov = (
            comp.sigma0 * comp.K
            + np.diag(comp.noise)
            - comp.sigma0**2 * (comp.K @ T @ comp.K)
        )
        return mvn_logpdf_cov(self.data.Y[i], mean, 0.5 * (cov + cov.T))


def gp_conditional_logpdf(i: int, r, state: MixtureState, data: Dataset) -> float:
    """Log density of y_i under the Gaussian conditional of component r.

    ``r`` is a live component id or a Component instance standing in for a
    fresh (empty) candidate. Conditions on the outputs of r's members other
    than i; with no such members this is the single-point marginal.
    """
    if isinstance(r, Component):
        comp = r
        members = np.empty(0, dtype=int)
    else:
        comp = state.components[r]
        members = state.members(r)
        members = members[members != i]
    mean, cov = conditional_y_given_members(
        comp, data.X[members], data.Y[members], data.X[i]
    )
    return mvn_logpdf_cov(data.Y[i], mean, cov)


def indicator_log_weights(
    i: int,
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    aux_component: Component,
):
    """Unnormalized log weights of the indicator conditional for datum i.

    Weight of an existing component: count excluding i, times the GP
    conditional of y_i, times the input density of x_i. Weight of the
    auxiliary (new) component: alpha times the fresh-component marginal of
    y_i times its input density. Components left with no other member are
    not listed as existing; the auxiliary slot stands for them.

    Returns (candidate ids, log weights); the last id is -1 for the
    auxiliary. This is the reference (dense) evaluation path; sweeps use
    the cached equivalent.
    """
    x_i, y_i = data.X[i], data.Y[i]
    counts = state.counts()
    r_self = int(state.assignments[i])
    ids = []
    logw = []
    for r in sorted(state.components):
        n_minus = counts[r] - (1 if r == r_self else 0)
        if n_minus == 0:
            continue
        comp = state.components[r]
        ll = gp_conditional_logpdf(i, r, state, data)
        ids.append(r)
        logw.append(np.log(n_minus) + ll + mvn_logpdf(x_i, comp.mu, comp.R))
    ll_new = mvn_logpdf_cov(y_i, np.zeros(data.output_dim), marginal_cov_single(aux_component))
    ids.append(-1)
    logw.append(
        np.log(state.alpha) + ll_new + mvn_logpdf(x_i, aux_component.mu, aux_component.R)
    )
    return ids, np.array(logw)


def _categorical(logw: np.ndarray, rng: np.random.Generator) -> int:
    m = np.max(logw)
    if not np.isfinite(m):
        raise NumericalError("all indicator weights vanished")
    p = np.exp(logw - m)
    cum = np.cumsum(p)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def _update_one_indicator(
    i: int,
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    rng: np.random.Generator,
    caches: IndicatorCaches,
    aux_component: Component | None = None,
) -> bool:
    """Resample z_i in place; returns True if the datum changed component.

    The auxiliary candidate carries fresh prior-drawn parameters, except
    when removing i would empty its component: then that component's own
    parameters serve as the auxiliary (the standard auxiliary-variable
    scheme with one candidate), so no prior draw is consumed. Tests may
    override the auxiliary explicitly via ``aux_component``.
    """
    r_old = int(state.assignments[i])
    singleton = caches.counts[r_old] == 1
    if aux_component is not None:
        aux = aux_component
        aux_is_old = False
    elif singleton:
        aux = state.components[r_old]
        aux_is_old = True
    else:
        aux = sample_component(hp, rng)
        aux_is_old = False

    x_i, y_i = data.X[i], data.Y[i]
    cand = []
    logw = []
    for r in sorted(state.components):
        n_minus = caches.counts[r] - (1 if r == r_old else 0)
        if n_minus == 0:
            continue
        comp = state.components[r]
        if r == r_old:
            ll = caches.cond_member(i, r)
        else:
            ll = caches.cond_nonmember(i, r)
        cand.append(r)
        logw.append(np.log(n_minus) + ll + mvn_logpdf(x_i, comp.mu, comp.R))
    ll_new = mvn_logpdf_cov(y_i, np.zeros(data.output_dim), marginal_cov_single(aux))
    logw.append(np.log(state.alpha) + ll_new + mvn_logpdf(x_i, aux.mu, aux.R))

    idx = _categorical(np.array(logw), rng)

    if idx < len(cand):
        r_new = cand[idx]
        if r_new == r_old:
            return False
        state.assignments[i] = r_new
        caches.move(i, r_old, r_new)
        if singleton:
            del state.components[r_old]
            caches.drop(r_old)
        return True

    # auxiliary chosen
    if aux_is_old:
        return False
    new_id = state.next_id()
    state.components[new_id] = aux.copy()
    state.assignments[i] = new_id
    caches.move(i, r_old, new_id)
    if singleton:
        del state.components[r_old]
        caches.drop(r_old)
    return True


def update_indicator(
    i: int,
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    rng: np.random.Generator,
    aux_component: Component | None = None,
) -> MixtureState:
    """Resample the component assignment of datum i (in place)."""
    caches = IndicatorCaches(state, data)
    _update_one_indicator(i, state, data, hp, rng, caches, aux_component)
    return state


# ---------------------------------------------------------------------------
# Input-space conjugate updates
# ---------------------------------------------------------------------------


def posterior_mu(
    r: int,
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw mu_r from its Gaussian full conditional and store it.

    Posterior precision R0 + N_r R_r, posterior mean
    (R0 + N_r R_r)^-1 (R0 mu0 + R_r sum_j x_j); with no members this is
    the prior.
    """
    comp = state.components[r]
    members = state.members(r)
    if members.size == 0:
        draw = mvn_sample(hp.mu0, hp.R0, rng)
    else:
        P = hp.R0 + members.size * comp.R
        b = hp.R0 @ hp.mu0 + comp.R @ data.X[members].sum(axis=0)
        mean = np.linalg.solve(P, b)
        draw = mvn_sample(mean, P, rng)
    comp.mu = draw
    return draw


def posterior_R(
    r: int,
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw R_r from its Wishart full conditional and store it.

    Scale (W0^-1 + sum_j (x_j - mu)(x_j - mu)^T)^-1 with nu0 + N_r
    degrees of freedom; the prior when the component is empty.
    """
    comp = state.components[r]
    members = state.members(r)
    f0 = chol_spd(hp.W0)
    W0inv = solve(f0, np.eye(hp.input_dim))
    if members.size:
        d = data.X[members] - comp.mu
        S = d.T @ d
    else:
        S = 0.0
    scale_inv = W0inv + S
    fs = chol_spd(scale_inv)
    scale = solve(fs, np.eye(hp.input_dim))
    draw = wishart_sample(0.5 * (scale + scale.T), hp.nu0 + members.size, rng)
    comp.R = draw
    return draw


# ---------------------------------------------------------------------------
# Output-space updates: HMC for sigma0, prior-proposal MH for K, w, noise
# ---------------------------------------------------------------------------


def _hmc_sigma0(
    om: OutputModel,
    comp: Component,
    hp: Hyperparams,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> tuple[bool, bool]:
    """One HMC trajectory for sigma0 in log coordinates.

    The leapfrog runs on theta = ln(sigma0) with the potential
    U(theta) = E(exp(theta)) - theta, whose extra term is the Jacobian of
    the transform, so the invariant density in sigma0 is exactly
    prior times likelihood. Returns (accepted, divergent).
    """
    potential = om.sigma0_closure(comp.K, comp.noise, hp.a1, hp.b1)

    def U_and_grad(theta: float) -> tuple[float, float]:
        sigma = np.exp(theta)
        if not np.isfinite(sigma) or sigma <= 0.0:
            return np.inf, np.inf
        E, dE = potential(sigma)
        return E - theta, sigma * dE - 1.0

    theta0 = float(np.log(comp.sigma0))
    U0, g = U_and_grad(theta0)
    p0 = rng.standard_normal()
    eps = cfg.hmc_step
    theta, p = theta0, p0 - 0.5 * eps * g
    diverged = False
    for step in range(cfg.hmc_leapfrog):
        theta = theta + eps * p
        U1, g = U_and_grad(theta)
        if not np.isfinite(U1):
            diverged = True
            break
        if step < cfg.hmc_leapfrog - 1:
            p = p - eps * g
    if not diverged:
        p = p - 0.5 * eps * g
        dH = (U1 + 0.5 * p * p) - (U0 + 0.5 * p0 * p0)
        if not np.isfinite(dH) or abs(dH) > DIVERGENCE_THRESHOLD:
            diverged = True
    # a rejected trajectory still consumes the accept draw, keeping the
    # stream layout identical whether or not the proposal was sane
    u = rng.random()
    if diverged:
        return False, True
    if np.log(u) < -dH:
        comp.sigma0 = float(np.exp(theta))
        return True, False
    return False, False


def hmc_update_sigma0(
    r: int,
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> float:
    """Update sigma0 of component r by one HMC trajectory; returns it."""
    comp = state.components[r]
    members = state.members(r)
    if members.size == 0:
        raise ValueError("hmc_update_sigma0 requires a component with members")
    om = OutputModel(data.X[members], data.Y[members])
    om.set_w(comp.w)
    _hmc_sigma0(om, comp, hp, cfg, rng)
    return comp.sigma0


def _mh_K(om, comp, hp, cfg, rng) -> tuple[int, int]:
    """Independence MH on K with the Wishart prior as proposal."""
    acc = 0
    cur = None if om is None else om.loglik(comp.sigma0, comp.K, comp.noise)
    for _ in range(cfg.mh_tries_per_param):
        prop = wishart_sample(hp.W1, hp.nu1, rng)
        if om is None:
            comp.K = prop
            acc += 1
            continue
        ll = om.loglik(comp.sigma0, prop, comp.noise)
        if np.log(rng.random()) < ll - cur:
            comp.K = prop
            cur = ll
            acc += 1
    return acc, cfg.mh_tries_per_param


def _mh_w(om, comp, hp, cfg, rng, d: int) -> tuple[int, int]:
    """Independence MH on one ARD weight with its log-normal prior."""
    acc = 0
    cur = None if om is None else om.loglik(comp.sigma0, comp.K, comp.noise)
    for _ in range(cfg.mh_tries_per_param):
        prop = lognormal_sample(hp.mu1, hp.r1, rng)
        w_prop = comp.w.copy()
        w_prop[d] = prop
        if om is None:
            comp.w = w_prop
            acc += 1
            continue
        snap = om.snapshot()
        om.set_w(w_prop)
        ll = om.loglik(comp.sigma0, comp.K, comp.noise)
        if np.log(rng.random()) < ll - cur:
            comp.w = w_prop
            cur = ll
            acc += 1
        else:
            om.restore(snap)
    return acc, cfg.mh_tries_per_param


def _mh_noise(om, comp, hp, cfg, rng, ell: int) -> tuple[int, int]:
    """Independence MH on one noise variance with its gamma prior."""
    acc = 0
    cur = None if om is None else om.loglik(comp.sigma0, comp.K, comp.noise)
    for _ in range(cfg.mh_tries_per_param):
        prop = gamma_sample(hp.a2, hp.b2, rng)
        noise_prop = comp.noise.copy()
        noise_prop[ell] = prop
        if om is None:
            comp.noise = noise_prop
            acc += 1
            continue
        ll = om.loglik(comp.sigma0, comp.K, noise_prop)
        if np.log(rng.random()) < ll - cur:
            comp.noise = noise_prop
            cur = ll
            acc += 1
    return acc, cfg.mh_tries_per_param


def _output_model_for(r: int, state: MixtureState, data: Dataset) -> OutputModel | None:
    members = state.members(r)
    if members.size == 0:
        return None
    om = OutputModel(data.X[members], data.Y[members])
    om.set_w(state.components[r].w)
    return om


def mh_update_K(r, state, data, hp, cfg, rng) -> np.ndarray:
    """MH-update K_r from its prior proposal; returns the new K."""
    _mh_K(_output_model_for(r, state, data), state.components[r], hp, cfg, rng)
    return state.components[r].K


def mh_update_w(r, d, state, data, hp, cfg, rng) -> float:
    """MH-update the d-th ARD weight of component r; returns it."""
    _mh_w(_output_model_for(r, state, data), state.components[r], hp, cfg, rng, d)
    return float(state.components[r].w[d])


def mh_update_noise(r, ell, state, data, hp, cfg, rng) -> float:
    """MH-update the ell-th noise variance of component r; returns it."""
    _mh_noise(_output_model_for(r, state, data), state.components[r], hp, cfg, rng, ell)
    return float(state.components[r].noise[ell])


# ---------------------------------------------------------------------------
# Concentration update
# ---------------------------------------------------------------------------


def alpha_log_target(alpha: float, c: int, N: int, a0: float, b0: float) -> float:
    """Unnormalized log posterior of alpha given the component count.

    (c + a0 - 1) ln(alpha) - b0 alpha + lnGamma(alpha) - lnGamma(N + alpha).
    The combinatorial coefficient tying c to the partition is alpha-free
    and cancels from every MH ratio, so it is omitted here.
    """
    return (
        (c + a0 - 1.0) * np.log(alpha)
        - b0 * alpha
        + float(gammaln(alpha))
        - float(gammaln(N + alpha))
    )


def mh_update_alpha(
    state: MixtureState,
    hp: Hyperparams,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> float:
    """Log-space random-walk MH on alpha; returns the (possibly new) value.

    Proposing ln(alpha') ~ N(ln(alpha), scale^2) and working with the
    density of theta = ln(alpha) absorbs the proposal asymmetry: the extra
    + theta term below is the Jacobian of the transform.
    """
    c = len(state.components)
    N = len(state.assignments)
    theta = np.log(state.alpha)
    theta_prop = theta + cfg.alpha_proposal_scale * rng.standard_normal()
    cur = alpha_log_target(state.alpha, c, N, hp.a0, hp.b0) + theta
    prop = alpha_log_target(float(np.exp(theta_prop)), c, N, hp.a0, hp.b0) + theta_prop
    if np.log(rng.random()) < prop - cur:
        state.alpha = float(np.exp(theta_prop))
    return state.alpha


# ---------------------------------------------------------------------------
# Sweep and chain
# ---------------------------------------------------------------------------


def log_joint(state: MixtureState, data: Dataset, hp: Hyperparams) -> float:
    """Log density of (alpha, Z, Theta, D) under the full model.

    Prior terms for alpha and every component parameter, the exchangeable
    partition probability of Z given alpha, the input densities, and the
    stacked-output GP marginals.
    """
    N = data.n
    counts = state.counts()
    c = len(state.components)
    lp = gamma_logpdf(state.alpha, hp.a0, hp.b0)
    lp += (
        c * np.log(state.alpha)
        + sum(float(gammaln(n_r)) for n_r in counts.values())
        + float(gammaln(state.alpha))
        - float(gammaln(state.alpha + N))
    )
    for r in sorted(state.components):
        comp = state.components[r]
        members = state.members(r)
        lp += mvn_logpdf(comp.mu, hp.mu0, hp.R0)
        lp += wishart_logpdf(comp.R, hp.W0, hp.nu0)
        lp += gamma_logpdf(comp.sigma0, hp.a1, hp.b1)
        lp += wishart_logpdf(comp.K, hp.W1, hp.nu1)
        lp += sum(lognormal_logpdf(v, hp.mu1, hp.r1) for v in comp.w)
        lp += sum(gamma_logpdf(v, hp.a2, hp.b2) for v in comp.noise)
        for i in members:
            lp += mvn_logpdf(data.X[i], comp.mu, comp.R)
        lp += log_marginal_y(comp, data.X[members], stack_outputs(data.Y[members]))
    return float(lp)


def _prior_terms_log_joint(state: MixtureState, data: Dataset, hp: Hyperparams) -> float:
    """Everything in log_joint except the stacked-output GP marginals."""
    N = data.n
    counts = state.counts()
    c = len(state.components)
    lp = gamma_logpdf(state.alpha, hp.a0, hp.b0)
    lp += (
        c * np.log(state.alpha)
        + sum(float(gammaln(n_r)) for n_r in counts.values())
        + float(gammaln(state.alpha))
        - float(gammaln(state.alpha + N))
    )
    for r in sorted(state.components):
        comp = state.components[r]
        members = state.members(r)
        lp += mvn_logpdf(comp.mu, hp.mu0, hp.R0)
        lp += wishart_logpdf(comp.R, hp.W0, hp.nu0)
        lp += gamma_logpdf(comp.sigma0, hp.a1, hp.b1)
        lp += wishart_logpdf(comp.K, hp.W1, hp.nu1)
        lp += sum(lognormal_logpdf(v, hp.mu1, hp.r1) for v in comp.w)
        lp += sum(gamma_logpdf(v, hp.a2, hp.b2) for v in comp.noise)
        for i in members:
            lp += mvn_logpdf(data.X[i], comp.mu, comp.R)
    return float(lp)


def _sweep(
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    sweep_index: int = 0,
) -> tuple[MixtureState, SweepDiagnostics]:
    caches = IndicatorCaches(state, data)
    moves = 0
    for i in range(data.n):
        moves += _update_one_indicator(i, state, data, hp, rng, caches)

    acc = {"sigma0": [0, 0], "K": [0, 0], "w": [0, 0], "noise": [0, 0]}
    divergences = 0
    marg_sum = 0.0
    for r in sorted(state.components):
        posterior_mu(r, state, data, hp, rng)
        posterior_R(r, state, data, hp, rng)
        comp = state.components[r]
        members = state.members(r)
        om = OutputModel(data.X[members], data.Y[members])
        om.set_w(comp.w)
        ok, div = _hmc_sigma0(om, comp, hp, cfg, rng)
        acc["sigma0"][0] += ok
        acc["sigma0"][1] += 1
        divergences += div
        a, t = _mh_K(om, comp, hp, cfg, rng)
        acc["K"][0] += a
        acc["K"][1] += t
        for d in range(data.input_dim):
            a, t = _mh_w(om, comp, hp, cfg, rng, d)
            acc["w"][0] += a
            acc["w"][1] += t
        for ell in range(data.output_dim):
            a, t = _mh_noise(om, comp, hp, cfg, rng, ell)
            acc["noise"][0] += a
            acc["noise"][1] += t
        marg_sum += om.loglik(comp.sigma0, comp.K, comp.noise)

    alpha_before = state.alpha
    mh_update_alpha(state, hp, cfg, rng)
    acc_alpha = float(state.alpha != alpha_before)

    lj = _prior_terms_log_joint(state, data, hp) + marg_sum

    def rate(key):
        got, tried = acc[key]
        return got / tried if tried else 1.0

    diag = SweepDiagnostics(
        sweep=sweep_index,
        n_components=len(state.components),
        n_moves=moves,
        log_joint=lj,
        acc_sigma0=rate("sigma0"),
        acc_K=rate("K"),
        acc_w=rate("w"),
        acc_noise=rate("noise"),
        acc_alpha=acc_alpha,
        hmc_divergences=divergences,
    )
    return state, diag


def sweep(
    state: MixtureState,
    data: Dataset,
    hp: Hyperparams,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> MixtureState:
    """One full Gibbs sweep: indicators, component parameters, alpha."""
    state, _ = _sweep(state, data, hp, cfg, rng)
    return state


def init_state_from_prior(
    n: int, hp: Hyperparams, rng: np.random.Generator
) -> MixtureState:
    """Ancestral prior draw of (alpha, Z, component parameters) for n data."""
    alpha = gamma_sample(hp.a0, hp.b0, rng)
    assignments = np.zeros(n, dtype=int)
    components: dict[int, Component] = {}
    counts: list[int] = []
    for i in range(n):
        weights = np.array(counts + [alpha], dtype=float)
        cum = np.cumsum(weights)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        if idx == len(counts):
            components[idx] = sample_component(hp, rng)
            counts.append(1)
        else:
            counts[idx] += 1
        assignments[i] = idx
    return MixtureState(alpha=alpha, assignments=assignments, components=components)


def run(data: Dataset, hp: Hyperparams, cfg: SamplerConfig) -> Chain:
    """Run the sampler from a prior-drawn initial state.

    Executes cfg.n_sweeps sweeps, discards the first cfg.burn_in states,
    and records diagnostics for every sweep. Numerical failures abort with
    the sweep index attached.
    """
    cfg.validate()
    if data.n < 1:
        raise ValueError("dataset must be non-empty")
    rng = make_rng(cfg.seed)
    state = init_state_from_prior(data.n, hp, rng)
    samples: list[MixtureState] = []
    diagnostics: list[SweepDiagnostics] = []
    for t in range(cfg.n_sweeps):
        try:
            state, diag = _sweep(state, data, hp, cfg, rng, sweep_index=t)
        except ImmgpError as exc:
            raise NumericalError(f"sweep {t}: {exc}") from exc
        diagnostics.append(diag)
        if t >= cfg.burn_in:
            samples.append(state.copy())
    return Chain(samples=samples, diagnostics=diagnostics)
