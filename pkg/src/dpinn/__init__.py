"""Bayesian physics-informed neural networks with domain decomposition."""

import jax

# HMC acceptance ratios are sensitive to rounding; everything runs in float64.
jax.config.update("jax_enable_x64", True)

from dpinn.network import (  # noqa: E402
    EvaluationError,
    JetOutput,
    NetworkArch,
    forward,
    forward_batch,
    forward_jet,
    grad_params,
    init_params,
    jet_batch,
)

__version__ = "0.1.0"

__all__ = [
    "EvaluationError",
    "JetOutput",
    "NetworkArch",
    "forward",
    "forward_batch",
    "forward_jet",
    "grad_params",
    "init_params",
    "jet_batch",
]
