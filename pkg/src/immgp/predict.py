"""Posterior predictive machinery: responsibilities, per-component GP
prediction, and chain averaging.

Two modes: ``immgp1`` spreads a test point over the live components of
each retained sample; ``immgp2`` also allows a fresh component, whose
input marginal (an intractable integral over the input-space priors) is
estimated by Monte Carlo with prior draws shared across the call, and
whose predictive mean contribution is zero under the zero-mean GP priors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import make_rng, mvn_logpdf, mvn_sample, wishart_sample
from .linalg import chol_spd, logdet, solve
from .model import (
    Component,
    Dataset,
    Hyperparams,
    MixtureState,
    cross_kernel,
    kernel_matrix,
    log_marginal_y,
    stack_outputs,
)

MODES = ("immgp1", "immgp2")


@dataclass(frozen=True)
class Prediction:
    """Chain-averaged prediction at one test input.

    mean              averaged predictive mean (M,)
    per_sample_means  optional (L, M) table of per-sample contributions
    mode              'immgp1' or 'immgp2'
    new_weight_mean   average responsibility of the fresh component
                      (immgp2 only, else None)
    new_marginal_se   Monte Carlo standard error of the fresh component's
                      input marginal estimate (immgp2 only, else None)
    """

    mean: np.ndarray
    per_sample_means: np.ndarray | None
    mode: str
    new_weight_mean: float | None = None
    new_marginal_se: float | None = None


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def draw_input_prior(
    hp: Hyperparams, mc_draws: int, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Prior draws of (mu, R) used to estimate the fresh-component input
    marginal; one shared set per predict call keeps the cost bounded."""
    return [
        (mvn_sample(hp.mu0, hp.R0, rng), wishart_sample(hp.W0, hp.nu0, rng))
        for _ in range(mc_draws)
    ]


def _new_input_logmarginal(
    xstar: np.ndarray, draws: list[tuple[np.ndarray, np.ndarray]]
) -> tuple[float, float]:
    """Monte Carlo estimate (log mean, standard error of the mean) of the
    input density of a fresh component at xstar."""
    logp = np.array([mvn_logpdf(xstar, mu, R) for mu, R in draws])
    m = np.max(logp)
    vals = np.exp(logp - m)
    mean = float(np.mean(vals))
    se = float(np.std(vals) / np.sqrt(len(vals))) * float(np.exp(m))
    return float(np.log(mean) + m), se


def responsibilities(
    xstar: np.ndarray,
    sample: MixtureState,
    hp: Hyperparams,
    mode: str = "immgp1",
    mc_draws: int = 100,
    rng: np.random.Generator | None = None,
    prior_draws: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[list[int], np.ndarray]:
    """Posterior probability of each candidate component for a test input.

    Existing component r carries prior weight N_r / (alpha + N) and input
    density at its (mu_r, R_r); in immgp2 mode a fresh component carries
    prior weight alpha / (alpha + N) and the Monte Carlo input marginal.
    Returns (ids, probs) with -1 standing for the fresh component; probs
    are normalized to sum to one.
    """
    _check_mode(mode)
    xstar = np.asarray(xstar, dtype=float)
    counts = sample.counts()
    ids = sorted(sample.components)
    logw = [
        np.log(counts[r])
        + mvn_logpdf(xstar, sample.components[r].mu, sample.components[r].R)
        for r in ids
    ]
    if mode == "immgp2":
        if prior_draws is None:
            if mc_draws < 1:
                raise ValueError("mc_draws must be >= 1 in immgp2 mode")
            if rng is None:
                rng = make_rng(0)
            prior_draws = draw_input_prior(hp, mc_draws, rng)
        log_marg, _ = _new_input_logmarginal(xstar, prior_draws)
        ids = ids + [-1]
        logw.append(np.log(sample.alpha) + log_marg)
    logw = np.array(logw)
    p = np.exp(logw - np.max(logw))
    p /= p.sum()
    return ids, p


def component_predict(
    xstar: np.ndarray, r: int, sample: MixtureState, data: Dataset
) -> tuple[np.ndarray, np.ndarray]:
    """Exact GP posterior of the noise-free outputs at xstar under
    component r.

    mean = Kstar Sigma^-1 y_r and cov = sigma0 K - Kstar Sigma^-1 Kstar^T
    with Kstar = sigma0 K (x) k(xstar, members).
    """
    comp = sample.components[r]
    members = sample.members(r)
    if members.size == 0:
        raise ValueError(f"component {r} has no members")
    Xr = data.X[members]
    y = stack_outputs(data.Y[members])
    _, f = log_marginal_y(comp, Xr, y, return_factor=True)
    k = cross_kernel(np.asarray(xstar, dtype=float), Xr, comp.w)
    Kstar = comp.sigma0 * np.kron(comp.K, k[None, :])
    mean = Kstar @ solve(f, y)
    cov = comp.sigma0 * comp.K - Kstar @ solve(f, Kstar.T)
    return mean, 0.5 * (cov + cov.T)


def predict(
    xstar: np.ndarray,
    chain,
    data: Dataset,
    hp: Hyperparams,
    mode: str = "immgp1",
    mc_draws: int = 100,
    rng: np.random.Generator | None = None,
    keep_per_sample: bool = False,
) -> Prediction:
    """Average the mixture predictive mean over all retained samples.

    Per sample, the prediction is the responsibility-weighted mixture of
    per-component GP means; the fresh component contributes a zero mean
    with its responsibility (immgp2). The result is the plain average of
    the per-sample contributions, so it does not depend on sample order.
    """
    _check_mode(mode)
    samples = chain.samples if hasattr(chain, "samples") else list(chain)
    if not samples:
        raise ValueError("chain has no retained samples")
    xstar = np.asarray(xstar, dtype=float)
    M = data.output_dim
    prior_draws = None
    if mode == "immgp2":
        if rng is None:
            rng = make_rng(0)
        prior_draws = draw_input_prior(hp, mc_draws, rng)
    per_sample = np.zeros((len(samples), M))
    new_weights = []
    ses = []
    for s_idx, sample in enumerate(samples):
        ids, probs = responsibilities(
            xstar, sample, hp, mode=mode, prior_draws=prior_draws
        )
        mean_s = np.zeros(M)
        for r, p in zip(ids, probs):
            if r == -1:
                new_weights.append(p)
                continue
            m, _ = component_predict(xstar, r, sample, data)
            mean_s += p * m
        per_sample[s_idx] = mean_s
    if mode == "immgp2" and prior_draws is not None:
        _, se = _new_input_logmarginal(xstar, prior_draws)
        ses.append(se)
    return Prediction(
        mean=per_sample.mean(axis=0),
        per_sample_means=per_sample if keep_per_sample else None,
        mode=mode,
        new_weight_mean=float(np.mean(new_weights)) if new_weights else None,
        new_marginal_se=float(np.mean(ses)) if ses else None,
    )


def _mvn_logpdf_rows(
    Xrows: np.ndarray, mean: np.ndarray, precision: np.ndarray
) -> np.ndarray:
    """Row-wise Gaussian log density in precision form."""
    f = chol_spd(precision)
    d = Xrows - mean[None, :]
    q = np.sum((d @ f.lower) ** 2, axis=1)
    return 0.5 * logdet(f) - 0.5 * f.dim * np.log(2.0 * np.pi) - 0.5 * q


def predict_many(
    Xstar: np.ndarray,
    chain,
    data: Dataset,
    hp: Hyperparams,
    mode: str = "immgp1",
    mc_draws: int = 100,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Averaged predictive means for a batch of test inputs, shape (T, M).

    Same estimator as ``predict`` but factorizes each (sample, component)
    covariance once and reuses it across all test rows, which is what the
    command-line prediction path uses.
    """
    _check_mode(mode)
    samples = chain.samples if hasattr(chain, "samples") else list(chain)
    if not samples:
        raise ValueError("chain has no retained samples")
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    T = Xstar.shape[0]
    M = data.output_dim
    N = data.n
    new_logmarg = None
    if mode == "immgp2":
        if rng is None:
            rng = make_rng(0)
        prior_draws = draw_input_prior(hp, mc_draws, rng)
        new_logmarg = np.array(
            [_new_input_logmarginal(x, prior_draws)[0] for x in Xstar]
        )
    total = np.zeros((T, M))
    for sample in samples:
        ids = sorted(sample.components)
        counts = sample.counts()
        n_cand = len(ids) + (1 if mode == "immgp2" else 0)
        logw = np.zeros((T, n_cand))
        comp_means = np.zeros((T, n_cand, M))
        for j, r in enumerate(ids):
            comp = sample.components[r]
            members = sample.members(r)
            Xr = data.X[members]
            y = stack_outputs(data.Y[members])
            _, f = log_marginal_y(comp, Xr, y, return_factor=True)
            a = solve(f, y)
            amat = a.reshape(M, members.size)
            Kc = np.exp(
                -0.5
                * np.sum(
                    ((Xstar[:, None, :] - Xr[None, :, :]) * comp.w[None, None, :]) ** 2,
                    axis=2,
                )
            )
            comp_means[:, j, :] = comp.sigma0 * (Kc @ amat.T) @ comp.K
            logw[:, j] = np.log(counts[r]) + _mvn_logpdf_rows(Xstar, comp.mu, comp.R)
        if mode == "immgp2":
            logw[:, -1] = np.log(sample.alpha) + new_logmarg
            # fresh-component predictive mean is zero; comp_means stays 0
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        total += np.einsum("tc,tcm->tm", w, comp_means)
    return total / len(samples)
