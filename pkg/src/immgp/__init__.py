"""Dirichlet process mixtures of multi-output Gaussian processes.

A library and CLI for vector-valued regression with an open-ended number
of GP experts: full MCMC inference (Gibbs scans over assignments,
conjugate input-space draws, Hamiltonian Monte Carlo and
Metropolis-Hastings for the GP hyperparameters) and Monte-Carlo averaged
prediction over the retained posterior samples.
"""

from .datagen import GeneratedSet, generate, generation_preset, inference_preset, split
from .gibbs import (
    Chain,
    SamplerConfig,
    SweepDiagnostics,
    gp_conditional_logpdf,
    hmc_update_sigma0,
    mh_update_alpha,
    mh_update_K,
    mh_update_noise,
    mh_update_w,
    posterior_R,
    posterior_mu,
    run,
    sweep,
    update_indicator,
)
from .model import (
    Component,
    Dataset,
    Hyperparams,
    MixtureState,
    assemble_sigma,
    cross_kernel,
    kernel,
    kernel_matrix,
    log_marginal_y,
    sample_component,
    stack_outputs,
    unstack_outputs,
)
from .predict import Prediction, component_predict, predict, predict_many, responsibilities

__all__ = [
    "Chain",
    "Component",
    "Dataset",
    "GeneratedSet",
    "Hyperparams",
    "MixtureState",
    "Prediction",
    "SamplerConfig",
    "SweepDiagnostics",
    "assemble_sigma",
    "component_predict",
    "cross_kernel",
    "generate",
    "generation_preset",
    "gp_conditional_logpdf",
    "hmc_update_sigma0",
    "inference_preset",
    "kernel",
    "kernel_matrix",
    "log_marginal_y",
    "mh_update_K",
    "mh_update_alpha",
    "mh_update_noise",
    "mh_update_w",
    "posterior_R",
    "posterior_mu",
    "predict",
    "predict_many",
    "responsibilities",
    "run",
    "sample_component",
    "split",
    "stack_outputs",
    "sweep",
    "unstack_outputs",
    "update_indicator",
]

__version__ = "0.1.0"
