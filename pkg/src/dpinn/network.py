"""Fully-connected tanh networks with input jets and parameter gradients.

Input derivatives are propagated forward as truncated second-order Taylor
jets (value, first derivative and diagonal second derivative per input
direction).  Gradients with respect to the flat parameter vector go through
``jax.grad``, so any scalar functional built from :func:`forward` /
:func:`forward_jet` can be differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np


class EvaluationError(FloatingPointError):
    """Raised when a network evaluation or gradient is not finite."""


@dataclass(frozen=True)
class NetworkArch:
    input_dim: int = 2
    hidden_layers: int = 5
    hidden_width: int = 64
    activation: str = "tanh"

    def __post_init__(self):
        if self.input_dim not in (2, 3):
            raise ValueError(f"input_dim must be 2 or 3, got {self.input_dim}")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("hidden_layers and hidden_width must be >= 1")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [1]

    @property
    def shapes(self) -> list[tuple[tuple[int, int], int]]:
        sizes = self.layer_sizes
        return [((a, b), b) for a, b in zip(sizes[:-1], sizes[1:])]

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for (a, b), _ in self.shapes)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "activation": self.activation,
        }


class JetOutput(NamedTuple):
    """Network value with input derivatives.

    For a single point ``u`` is a scalar, ``du`` and ``d2u_diag`` have shape
    ``(input_dim,)``.  Batched evaluation adds a leading point axis.
    """

    u: jnp.ndarray
    du: jnp.ndarray
    d2u_diag: jnp.ndarray


def init_params(arch: NetworkArch, seed: int, scale_rule: str = "xavier") -> np.ndarray:
    """Draw a flat parameter vector; biases start at zero for ``xavier``."""
    rng = np.random.default_rng(seed)
    chunks = []
    for (fan_in, fan_out), nb in arch.shapes:
        if scale_rule == "xavier":
            std = np.sqrt(2.0 / (fan_in + fan_out))
            chunks.append(rng.normal(0.0, std, size=fan_in * fan_out))
            chunks.append(np.zeros(nb))
        elif scale_rule == "unit_normal":
            chunks.append(rng.normal(size=fan_in * fan_out))
            chunks.append(rng.normal(size=nb))
        else:
            raise ValueError(f"unknown scale_rule {scale_rule!r}")
    return np.concatenate(chunks)


def unflatten(arch: NetworkArch, theta):
    """Split a flat vector into ``[(W, b), ...]`` with ``W`` of shape (fan_in, fan_out)."""
    if theta.shape[-1] != arch.n_params:
        raise ValueError(
            f"parameter vector has length {theta.shape[-1]}, arch needs {arch.n_params}"
        )
    layers = []
    k = 0
    for (fan_in, fan_out), nb in arch.shapes:
        w = theta[k : k + fan_in * fan_out].reshape(fan_in, fan_out)
        k += fan_in * fan_out
        b = theta[k : k + nb]
        k += nb
        layers.append((w, b))
    return layers


def _check_points(arch, points):
    points = jnp.asarray(points, dtype=jnp.float64)
    if points.shape[-1] != arch.input_dim:
        raise ValueError(
            f"point dimension {points.shape[-1]} does not match input_dim {arch.input_dim}"
        )
    return points


def forward_batch(arch: NetworkArch, theta, points) -> jnp.ndarray:
    """Network output at every row of ``points`` (shape ``(N, input_dim)``)."""
    points = _check_points(arch, points)
    layers = unflatten(arch, jnp.asarray(theta))
    a = points
    for w, b in layers[:-1]:
        a = jnp.tanh(a @ w + b)
    w, b = layers[-1]
    return (a @ w + b)[..., 0]


def forward(arch: NetworkArch, theta, point) -> jnp.ndarray:
    point = _check_points(arch, point)
    if point.ndim != 1:
        raise ValueError("forward expects a single point; use forward_batch")
    return forward_batch(arch, theta, point[None, :])[0]


def jet_batch(arch: NetworkArch, theta, points) -> JetOutput:
    """Value, gradient and diagonal Hessian with respect to the inputs.

    Each input direction ``i`` carries its own first and second order
    coefficients; for ``z = a W + b`` and ``s = tanh(z)``::

        ds  = (1 - s^2) dz
        d2s = (1 - s^2) d2z - 2 s (1 - s^2) dz^2
    """
    points = _check_points(arch, points)
    layers = unflatten(arch, jnp.asarray(theta))
    n, d = points.shape
    a = points
    # direction axis in front: (d, N, width)
    da = jnp.broadcast_to(jnp.eye(d)[:, None, :], (d, n, d))
    d2a = jnp.zeros((d, n, d))
    for w, b in layers[:-1]:
        z = a @ w + b
        dz = da @ w
        d2z = d2a @ w
        s = jnp.tanh(z)
        g = 1.0 - s * s
        a = s
        da = g * dz
        d2a = g * d2z - 2.0 * s * g * dz * dz
    w, b = layers[-1]
    u = (a @ w + b)[:, 0]
    du = (da @ w)[..., 0].T
    d2u = (d2a @ w)[..., 0].T
    return JetOutput(u, du, d2u)


def forward_jet(arch: NetworkArch, theta, point) -> JetOutput:
    point = _check_points(arch, point)
    if point.ndim != 1:
        raise ValueError("forward_jet expects a single point; use jet_batch")
    jet = jet_batch(arch, theta, point[None, :])
    return JetOutput(jet.u[0], jet.du[0], jet.d2u_diag[0])


def grad_params(arch: NetworkArch, theta, functional: Callable) -> np.ndarray:
    """Gradient of ``functional(theta)`` with respect to every parameter.

    ``functional`` must be traceable by JAX, i.e. built from :func:`forward`,
    :func:`forward_jet`, their batched variants and ``jax.numpy`` operations.
    """
    theta = jnp.asarray(theta, dtype=jnp.float64)
    if theta.shape != (arch.n_params,):
        raise ValueError(
            f"parameter vector has shape {theta.shape}, arch needs ({arch.n_params},)"
        )
    value, grad = jax.value_and_grad(functional)(theta)
    if not (np.isfinite(float(value)) and bool(jnp.all(jnp.isfinite(grad)))):
        raise EvaluationError("functional or its gradient is not finite")
    return np.asarray(grad)
