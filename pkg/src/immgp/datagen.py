"""Ancestral sampling from the generative model and the benchmark presets.

``generate`` draws a full synthetic dataset: concentration, sequential
component assignments, per-component parameters from their priors, inputs
from each component's Gaussian, and each component's stacked outputs
jointly from its GP covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import gamma_sample, make_rng, mvn_sample
from .errors import BadSplit
from .linalg import chol_spd
from .model import (
    Component,
    Dataset,
    Hyperparams,
    MixtureState,
    assemble_sigma,
    sample_component,
    unstack_outputs,
)


@dataclass(frozen=True)
class GeneratedSet:
    """A synthetic dataset together with the state that produced it."""

    dataset: Dataset
    true_assignments: np.ndarray
    true_state: MixtureState
    seed: int


def generation_preset(D: int, M: int) -> Hyperparams:
    """Fixed hyperparameters of the synthetic benchmark generator."""
    return Hyperparams(
        a0=1.0,
        b0=1.0,
        mu0=np.zeros(D),
        R0=np.eye(D) / 10.0,
        W0=np.eye(D) / (10.0 * D),
        nu0=float(D),
        a1=1.0,
        b1=1.0,
        W1=np.eye(M) / M,
        nu1=float(M),
        mu1=0.0,
        r1=0.01,
        a2=0.1,
        b2=1.0,
    )


def inference_preset(X_train: np.ndarray, M: int) -> Hyperparams:
    """Benchmark inference hyperparameters, anchored to the training inputs.

    Same as the generation preset except the input-space prior: mu0 is the
    training mean, R0 the inverse sample covariance R_x, and W0 = R_x / D.
    """
    X_train = np.asarray(X_train, dtype=float)
    D = X_train.shape[1]
    mu_x = X_train.mean(axis=0)
    cov = np.cov(X_train, rowvar=False)
    cov = np.atleast_2d(cov)
    f = chol_spd(cov)
    from .linalg import solve

    R_x = solve(f, np.eye(D))
    R_x = 0.5 * (R_x + R_x.T)
    base = generation_preset(D, M)
    return Hyperparams(
        a0=base.a0,
        b0=base.b0,
        mu0=mu_x,
        R0=R_x,
        W0=R_x / D,
        nu0=base.nu0,
        a1=base.a1,
        b1=base.b1,
        W1=base.W1,
        nu1=base.nu1,
        mu1=base.mu1,
        r1=base.r1,
        a2=base.a2,
        b2=base.b2,
    )


def generate(N: int, D: int, M: int, hp: Hyperparams, seed: int) -> GeneratedSet:
    """Draw N examples ancestrally from the full model.

    Sequence: alpha from its gamma prior; assignments one by one (join an
    existing component with probability proportional to its size, open a
    new one with probability proportional to alpha, drawing the new
    component's parameters from their priors); each input from its
    component's Gaussian; finally each component's stacked outputs jointly
    from the GP covariance over its inputs.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = make_rng(seed)
    alpha = gamma_sample(hp.a0, hp.b0, rng)
    assignments = np.zeros(N, dtype=int)
    components: dict[int, Component] = {}
    counts: list[int] = []
    X = np.zeros((N, D))
    for i in range(N):
        weights = np.array(counts + [alpha], dtype=float)
        cum = np.cumsum(weights)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        if idx == len(counts):
            components[idx] = sample_component(hp, rng)
            counts.append(1)
        else:
            counts[idx] += 1
        assignments[i] = idx
        comp = components[idx]
        X[i] = mvn_sample(comp.mu, comp.R, rng)

    Y = np.zeros((N, M))
    for r in sorted(components):
        members = np.flatnonzero(assignments == r)
        comp = components[r]
        sigma = assemble_sigma(comp, X[members])
        f = chol_spd(sigma)
        y = f.lower @ rng.standard_normal(f.dim)
        Y[members] = unstack_outputs(y, members.size)

    state = MixtureState(alpha=alpha, assignments=assignments, components=components)
    return GeneratedSet(
        dataset=Dataset(X=X, Y=Y),
        true_assignments=assignments.copy(),
        true_state=state,
        seed=seed,
    )


def resample_dataset(
    state: MixtureState, D: int, M: int, rng: np.random.Generator
) -> Dataset:
    """Redraw (X, Y) given fixed assignments and parameters.

    Used by joint-distribution sampler checks: inputs from each member's
    component Gaussian, then each component's stacked outputs jointly.
    """
    N = len(state.assignments)
    X = np.zeros((N, D))
    Y = np.zeros((N, M))
    for r in sorted(state.components):
        comp = state.components[r]
        members = state.members(r)
        for i in members:
            X[i] = mvn_sample(comp.mu, comp.R, rng)
        sigma = assemble_sigma(comp, X[members])
        f = chol_spd(sigma)
        y = f.lower @ rng.standard_normal(f.dim)
        Y[members] = unstack_outputs(y, members.size)
    return Dataset(X=X, Y=Y)


def split(
    gs: GeneratedSet, n_train: int, seed: int
) -> tuple[Dataset, Dataset, np.ndarray]:
    """Uniform random train/test split without replacement.

    Returns (train, test, test_truth) where test_truth holds the true
    component id of each test row. Row order within each part follows the
    original dataset.
    """
    N = gs.dataset.n
    if not 1 <= n_train < N:
        raise BadSplit(f"n_train must be in [1, {N - 1}], got {n_train}")
    perm = make_rng(seed).permutation(N)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    train = Dataset(X=gs.dataset.X[train_idx], Y=gs.dataset.Y[train_idx])
    test = Dataset(X=gs.dataset.X[test_idx], Y=gs.dataset.Y[test_idx])
    return train, test, gs.true_assignments[test_idx]
