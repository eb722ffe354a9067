"""Log-posterior assembly for decomposed Bayesian PINNs.

The sampled state is one flat vector: the parameters of every subdomain
network in subdomain order, followed by the raw entries of the inferred
diffusion coefficient(s).  Every likelihood factor is an independent
Gaussian, so the log-posterior is a fixed-order sum of blocks::

    prior + data + residual + ic + bc + interface_avg + interface_flux + soft_lambda

With a single subdomain and no interface points the interface and soft
blocks vanish and the density is the plain single-network BPINN posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from dpinn.data import TrainingSet
from dpinn.network import NetworkArch, forward_batch, jet_batch
from dpinn.pde import PdeSpec, normal_flux, residual

MODES = ("forward", "inverse_none", "inverse_soft", "inverse_hard")
TRANSFORMS = ("identity", "exp")
BLOCK_ORDER = ("data", "residual", "ic", "bc", "interface_avg", "interface_flux", "soft_lambda")

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SubdomainModel:
    index: int
    arch: NetworkArch
    theta: np.ndarray


@dataclass
class LambdaState:
    mode: str = "forward"
    raw: np.ndarray = field(default_factory=lambda: np.zeros(0))
    transform: str = "exp"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        self.raw = np.atleast_1d(np.asarray(self.raw, dtype=float))
        if self.mode == "forward" and self.raw.size:
            raise ValueError("forward mode carries no inferred coefficients")

    @classmethod
    def initial(cls, mode: str, n_subdomains: int, transform: str = "exp", value: float = 0.0):
        return cls(mode, np.full(expected_lambda_size(mode, n_subdomains), value), transform)

    def apply(self, raw):
        return jnp.exp(raw) if self.transform == "exp" else raw


def expected_lambda_size(mode: str, n_subdomains: int) -> int:
    if mode == "forward":
        return 0
    if mode == "inverse_hard" or n_subdomains == 1:
        return 1
    return n_subdomains


@dataclass
class PosteriorSpec:
    pde: PdeSpec
    models: list[SubdomainModel]
    lambda_state: LambdaState
    data: TrainingSet
    prior_std_theta: float = 1.0
    lambda_prior: tuple[float, float] = (0.0, 1.0)
    soft_constraint_sigma: float = 0.05
    interface_sides: str = "one_sided"

    def __post_init__(self):
        n = len(self.models)
        if [m.index for m in self.models] != list(range(n)):
            raise ValueError("models must be indexed 0..n-1 in order")
        arches = {m.arch for m in self.models}
        if len(arches) != 1:
            raise ValueError("all subdomain networks must share one architecture")
        if self.data.n_subdomains != n:
            raise ValueError(f"data has {self.data.n_subdomains} subdomains, {n} models given")
        if self.arch.input_dim != self.pde.input_dim:
            raise ValueError("network input_dim does not match the PDE")
        if self.prior_std_theta <= 0 or self.lambda_prior[1] <= 0 or self.soft_constraint_sigma <= 0:
            raise ValueError("prior and constraint standard deviations must be positive")
        if self.interface_sides not in ("one_sided", "mirrored"):
            raise ValueError(f"unknown interface_sides {self.interface_sides!r}")
        want = expected_lambda_size(self.lambda_state.mode, n)
        if self.lambda_state.raw.size != want:
            raise ValueError(f"{self.lambda_state.mode} needs {want} raw lambda entries")
        if n > 1 and len(self.data.cdc) == 0:
            raise ValueError("a decomposed posterior needs interface (cdc) points")
        self.data.validate()
        self._jitted = None

    # -- state layout ------------------------------------------------------
    @property
    def arch(self) -> NetworkArch:
        return self.models[0].arch

    @property
    def n_subdomains(self) -> int:
        return len(self.models)

    @property
    def n_theta(self) -> int:
        return self.arch.n_params * self.n_subdomains

    @property
    def state_size(self) -> int:
        return self.n_theta + self.lambda_state.raw.size

    @property
    def mode(self) -> str:
        return self.lambda_state.mode

    def initial_state(self) -> np.ndarray:
        return np.concatenate([m.theta for m in self.models] + [self.lambda_state.raw])

    def split(self, state):
        p = self.arch.n_params
        thetas = [state[q * p : (q + 1) * p] for q in range(self.n_subdomains)]
        return thetas, state[self.n_theta :]

    def diffusion_per_subdomain(self, state):
        """Diffusion coefficient seen by each subdomain's residual."""
        n = self.n_subdomains
        if self.mode == "forward":
            return jnp.full(n, self.pde.diffusion)
        _, raw = self.split(state)
        lam = self.lambda_state.apply(raw)
        if lam.shape[0] == 1:
            return jnp.repeat(lam, n)
        return lam

    def effective_lambda(self, state):
        """The inferred coefficient(s) after the transform (empty when forward)."""
        _, raw = self.split(state)
        return self.lambda_state.apply(raw)

    def _lam_vector(self, d):
        return (d,) + tuple(self.pde.lam[1:])

    # -- compiled evaluation -----------------------------------------------
    def _compile(self):
        if self._jitted is None:
            f = lambda s: _log_posterior(self, s)  # noqa: E731
            self._jitted = (jax.jit(f), jax.jit(jax.value_and_grad(f)))
        return self._jitted

    def logp_and_grad(self, state) -> tuple[float, np.ndarray]:
        _, vg = self._compile()
        v, g = vg(jnp.asarray(state, dtype=jnp.float64))
        return float(v), np.asarray(g)

    def logp(self, state) -> float:
        f, _ = self._compile()
        return float(f(jnp.asarray(state, dtype=jnp.float64)))


def _gauss(pred, targ, sigma):
    r = (pred - targ) / sigma
    return jnp.sum(-0.5 * _LOG_2PI - jnp.log(sigma) - 0.5 * r * r)


def log_lik_gaussian_block(predictions, targets, sigmas) -> float:
    """Sum of independent Gaussian log-densities; an empty block contributes 0."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if not (predictions.shape == targets.shape == sigmas.shape):
        raise ValueError(
            f"length mismatch: {predictions.shape}, {targets.shape}, {sigmas.shape}"
        )
    if np.any(~(sigmas > 0)):
        raise ValueError("standard deviations must be positive")
    if predictions.size == 0:
        return 0.0
    r = (predictions - targets) / sigmas
    return float(np.sum(-0.5 * _LOG_2PI - np.log(sigmas) - 0.5 * r * r))


def _check_state(spec: PosteriorSpec, state):
    state = jnp.asarray(state, dtype=jnp.float64)
    if state.shape != (spec.state_size,):
        raise ValueError(f"state has shape {state.shape}, expected ({spec.state_size},)")
    return state


def log_prior(spec: PosteriorSpec, state):
    """Independent N(0, s^2) on network parameters and N(m, s^2) on raw lambda."""
    state = _check_state(spec, state)
    return _log_prior(spec, state)


def _log_prior(spec, state):
    theta, raw = state[: spec.n_theta], state[spec.n_theta :]
    s = spec.prior_std_theta
    val = jnp.sum(-0.5 * _LOG_2PI - math.log(s) - 0.5 * (theta / s) ** 2)
    if raw.shape[0]:
        m, sl = spec.lambda_prior
        val = val + jnp.sum(-0.5 * _LOG_2PI - math.log(sl) - 0.5 * ((raw - m) / sl) ** 2)
    return val


def _point_block(spec, state, block):
    thetas, _ = spec.split(state)
    total = 0.0
    for q in range(spec.n_subdomains):
        b = block.select(q)
        if len(b) == 0:
            continue
        pred = forward_batch(spec.arch, thetas[q], b.points)
        total = total + _gauss(pred, b.values, b.sigma)
    return total


def log_lik_data(spec, state):
    return _point_block(spec, _check_state(spec, state), spec.data.u)


def log_lik_ic(spec, state):
    return _point_block(spec, _check_state(spec, state), spec.data.ic)


def log_lik_bc(spec, state):
    return _point_block(spec, _check_state(spec, state), spec.data.bc)


def log_lik_residual(spec, state):
    """Residual likelihood; each subdomain uses its own (or the shared) coefficient."""
    state = _check_state(spec, state)
    thetas, _ = spec.split(state)
    diff = spec.diffusion_per_subdomain(state)
    total = 0.0
    for q in range(spec.n_subdomains):
        b = spec.data.phi.select(q)
        if len(b) == 0:
            continue
        jet = jet_batch(spec.arch, thetas[q], b.points)
        phi = residual(spec.pde, jet, b.points, lam=spec._lam_vector(diff[q]))
        total = total + _gauss(phi, b.values, b.sigma)
    return total


def _interface_terms(spec, state):
    thetas, _ = spec.split(state)
    diff = spec.diffusion_per_subdomain(state)
    cdc = spec.data.cdc
    normal = np.zeros(spec.pde.n_space)
    normal[0] = 1.0
    avg_total, flux_total = 0.0, 0.0
    for k in range(spec.n_subdomains - 1):
        m = cdc.subdomain == k
        if not np.any(m):
            raise ValueError(f"interface {k} has no collocation points")
        pts = cdc.points[m]
        lo = jet_batch(spec.arch, thetas[k], pts)
        hi = jet_batch(spec.arch, thetas[k + 1], pts)
        u_avg = 0.5 * (lo.u + hi.u)
        f_lo = normal_flux(spec.pde, lo, normal, lam=spec._lam_vector(diff[k]))
        f_hi = normal_flux(spec.pde, hi, normal, lam=spec._lam_vector(diff[k + 1]))
        f_avg = 0.5 * (f_lo + f_hi)
        avg_total = avg_total + _gauss(lo.u, u_avg, cdc.sigma_avg[m])
        flux_total = flux_total + _gauss(f_lo, f_avg, cdc.sigma_flux[m])
        if spec.interface_sides == "mirrored":
            avg_total = avg_total + _gauss(hi.u, u_avg, cdc.sigma_avg[m])
            flux_total = flux_total + _gauss(f_hi, f_avg, cdc.sigma_flux[m])
    return avg_total, flux_total


def log_lik_interface(spec, state):
    """Solution-average plus normal-flux continuity at every cut (0 for one subdomain)."""
    state = _check_state(spec, state)
    if spec.n_subdomains == 1:
        return jnp.asarray(0.0)
    a, f = _interface_terms(spec, state)
    return a + f


def log_lik_soft_lambda(spec, state):
    """Pulls neighbouring coefficients together, one factor per interface point."""
    if spec.mode != "inverse_soft":
        raise ValueError(f"soft-constraint block does not apply in mode {spec.mode!r}")
    state = _check_state(spec, state)
    return _soft(spec, state)


def _soft(spec, state):
    lam = spec.diffusion_per_subdomain(state)
    s = spec.soft_constraint_sigma
    total = 0.0
    for k in range(spec.n_subdomains - 1):
        n_k = int(np.sum(spec.data.cdc.subdomain == k))
        mis = lam[k] - 0.5 * (lam[k] + lam[k + 1])
        total = total + n_k * (-0.5 * _LOG_2PI - math.log(s) - 0.5 * (mis / s) ** 2)
    return total


def log_lik_blocks(spec: PosteriorSpec, state) -> dict:
    """Every applicable likelihood block, keyed in :data:`BLOCK_ORDER`."""
    state = _check_state(spec, state)
    return _blocks(spec, state)


def _blocks(spec, state):
    out = {
        "data": _point_block(spec, state, spec.data.u),
        "residual": log_lik_residual(spec, state),
        "ic": _point_block(spec, state, spec.data.ic),
        "bc": _point_block(spec, state, spec.data.bc),
    }
    if spec.n_subdomains > 1:
        out["interface_avg"], out["interface_flux"] = _interface_terms(spec, state)
    if spec.mode == "inverse_soft" and spec.n_subdomains > 1:
        out["soft_lambda"] = _soft(spec, state)
    return out


def _log_posterior(spec, state):
    total = _log_prior(spec, state)
    blocks = _blocks(spec, state)
    for name in BLOCK_ORDER:
        if name in blocks:
            total = total + blocks[name]
    return total


def log_posterior(spec: PosteriorSpec, state) -> float:
    """Unnormalised log-posterior; may be -inf/nan, which samplers must reject."""
    _check_state(spec, state)
    return spec.logp(state)


def grad_log_posterior(spec: PosteriorSpec, state) -> np.ndarray:
    _check_state(spec, state)
    return spec.logp_and_grad(state)[1]


def build_posterior(
    pde: PdeSpec,
    data: TrainingSet,
    arch: NetworkArch,
    thetas,
    mode: str = "forward",
    transform: str = "exp",
    lambda_init: float = 0.0,
    **kwargs,
) -> PosteriorSpec:
    """Convenience constructor: one model per subdomain from a list of parameter vectors."""
    n = data.n_subdomains
    models = [SubdomainModel(q, arch, np.asarray(thetas[q], dtype=float)) for q in range(n)]
    lam = LambdaState.initial(mode, n, transform, lambda_init)
    return PosteriorSpec(pde, models, lam, data, **kwargs)
