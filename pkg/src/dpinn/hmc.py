"""Hamiltonian Monte Carlo with an identity mass matrix.

``run_chain`` works on any target exposing ``logp_and_grad(state)``
returning ``(log_density, gradient)``; :class:`~dpinn.posterior.PosteriorSpec`
is one such target.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from dpinn.network import forward_batch

log = logging.getLogger(__name__)

# Energy error beyond which a trajectory counts as divergent.
DIVERGENCE_THRESHOLD = 1000.0
MAX_CONSECUTIVE_DIVERGENT = 100


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.01
    n_leapfrog: int = 50
    burn_in: int = 1000
    n_samples: int = 1500
    seed: int = 0
    adapt: bool = True
    target_accept: float = 0.75
    # Uniform relative jitter of the step size per iteration; breaks the
    # near-periodic trajectories a fixed step * n_leapfrog can hit.
    jitter: float = 0.1

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.n_leapfrog < 1 or self.n_samples < 1 or self.burn_in < 0:
            raise ValueError("n_leapfrog and n_samples must be >= 1, burn_in >= 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Chain:
    samples: np.ndarray
    accept_rate: float
    divergence_count: int
    step_size: float
    log_probs: np.ndarray
    burn_in_accept_rate: float = float("nan")
    burn_in_divergences: int = 0
    rng_state: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.samples)


def leapfrog(state, momentum, step_size, n_steps, grad_fn):
    """Velocity Verlet on the potential -log p; ``grad_fn`` returns grad log p.

    Returns ``(state, momentum)``; non-finite values raise ``FloatingPointError``.
    """
    q = np.array(state, dtype=float)
    p = np.array(momentum, dtype=float)
    p = p + 0.5 * step_size * np.asarray(grad_fn(q))
    for i in range(n_steps):
        q = q + step_size * p
        g = np.asarray(grad_fn(q))
        p = p + (step_size if i < n_steps - 1 else 0.5 * step_size) * g
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise FloatingPointError("leapfrog produced non-finite values")
    return q, p


def _trajectory(q, p, eps, n_steps, logp_and_grad, g0):
    """Leapfrog reusing the gradient at the start; returns ``None`` on divergence."""
    p = p + 0.5 * eps * g0
    for i in range(n_steps):
        q = q + eps * p
        lp, g = logp_and_grad(q)
        if not (np.isfinite(lp) and np.all(np.isfinite(g))):
            return None
        p = p + (eps if i < n_steps - 1 else 0.5 * eps) * g
    return q, p, lp, g


class _DualAveraging:
    """Step-size adaptation toward a target acceptance rate (Nesterov dual averaging)."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.m = 0

    def update(self, accept_prob) -> float:
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def run_chain(target, cfg: HmcConfig, init, resume: Chain | None = None, progress_every: int = 0) -> Chain:
    """Sample ``cfg.n_samples`` states after ``cfg.burn_in`` discarded iterations.

    When ``resume`` is given, sampling continues from its last state, step
    size and random-generator state, skipping burn-in; the returned chain
    holds only the new samples.
    """
    rng = np.random.default_rng(cfg.seed)
    q = np.array(init, dtype=float)
    eps = cfg.step_size
    burn_in = cfg.burn_in
    if resume is not None:
        q = np.array(resume.samples[-1], dtype=float)
        eps = resume.step_size
        rng.bit_generator.state = resume.rng_state
        burn_in = 0
    if not np.all(np.isfinite(q)):
        raise ValueError("initial state is not finite")
    lp, g = target.logp_and_grad(q)
    if not (np.isfinite(lp) and np.all(np.isfinite(g))):
        raise SamplerError("log density is not finite at the initial state")

    da = _DualAveraging(eps, cfg.target_accept) if (cfg.adapt and burn_in > 0) else None
    samples = np.empty((cfg.n_samples, q.size))
    log_probs = np.empty(cfg.n_samples)
    n_acc = n_acc_burn = n_div = n_div_burn = consecutive = 0

    total = burn_in + cfg.n_samples
    for it in range(total):
        sampling = it >= burn_in
        if da is not None and it == burn_in:
            eps = da.final
        this_eps = eps * (1.0 + cfg.jitter * rng.uniform(-1.0, 1.0)) if cfg.jitter else eps
        p0 = rng.standard_normal(q.size)
        res = _trajectory(q, p0, this_eps, cfg.n_leapfrog, target.logp_and_grad, g)
        accept_prob = 0.0
        divergent = res is None
        if not divergent:
            q1, p1, lp1, g1 = res
            dH = (-lp1 + 0.5 * p1 @ p1) - (-lp + 0.5 * p0 @ p0)
            if not np.isfinite(dH) or dH > DIVERGENCE_THRESHOLD:
                divergent = True
            else:
                accept_prob = min(1.0, math.exp(-dH)) if dH > 0 else 1.0
        u = rng.uniform()
        if not divergent and u < accept_prob:
            q, lp, g = q1, lp1, g1
            if sampling:
                n_acc += 1
            else:
                n_acc_burn += 1
        if divergent:
            if sampling:
                n_div += 1
            else:
                n_div_burn += 1
            consecutive += 1
            if consecutive >= MAX_CONSECUTIVE_DIVERGENT:
                raise SamplerError(
                    f"{consecutive} consecutive divergent proposals at iteration {it} "
                    f"(step size {this_eps:.3g}); the posterior is too stiff for this step size"
                )
        else:
            consecutive = 0
        if da is not None and not sampling:
            eps = da.update(accept_prob)
        if sampling:
            samples[it - burn_in] = q
            log_probs[it - burn_in] = lp
        if progress_every and (it + 1) % progress_every == 0:
            log.info("hmc iter %d/%d eps=%.3g logp=%.6g div=%d/%d", it + 1, total, this_eps, lp,
                     n_div_burn, n_div)

    return Chain(
        samples=samples,
        accept_rate=n_acc / cfg.n_samples,
        divergence_count=n_div,
        step_size=eps,
        log_probs=log_probs,
        burn_in_accept_rate=(n_acc_burn / burn_in) if burn_in else float("nan"),
        burn_in_divergences=n_div_burn,
        rng_state=rng.bit_generator.state,
    )


@dataclass
class PredictiveSummary:
    mean: np.ndarray
    std: np.ndarray
    lambda_samples: np.ndarray | None = None
    lambda_mean: np.ndarray | None = None
    lambda_std: np.ndarray | None = None


def predictive_samples(chain: Chain, spec, points) -> np.ndarray:
    """Network output of every sample at every point, shape (n_samples, n_points)."""
    if len(chain) == 0:
        raise ValueError("empty chain")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = spec.data.decomp.bounds
    if np.any(points[:, 0] < lo - 1e-12) or np.any(points[:, 0] > hi + 1e-12):
        raise ValueError("evaluation point lies outside every subdomain")
    sub = spec.data.decomp.subdomain_of(points[:, 0])
    out = np.empty((len(chain), len(points)))
    for q in range(spec.n_subdomains):
        m = sub == q
        if np.any(m):
            out[:, m] = network_samples(chain, spec, q, points[m])
    return out


def network_samples(chain: Chain, spec, q: int, points) -> np.ndarray:
    """Output of subdomain q's network for every sample, wherever the points lie."""
    p = spec.arch.n_params
    points = np.atleast_2d(np.asarray(points, dtype=float))
    thetas = jnp.asarray(chain.samples[:, q * p : (q + 1) * p])
    f = jax.vmap(lambda th: forward_batch(spec.arch, th, points))
    return np.asarray(f(thetas))


def predictive_summary(chain: Chain, spec, points) -> PredictiveSummary:
    """Per-point mean and population std over samples; plus lambda statistics when inferred."""
    preds = predictive_samples(chain, spec, points)
    summary = PredictiveSummary(preds.mean(axis=0), preds.std(axis=0))
    if spec.mode != "forward":
        raw = chain.samples[:, spec.n_theta :]
        lam = np.asarray(spec.lambda_state.apply(jnp.asarray(raw)))
        summary.lambda_samples = lam
        summary.lambda_mean = lam.mean(axis=0)
        summary.lambda_std = lam.std(axis=0)
    return summary


def save_chain(chain: Chain, path, header: dict | None = None) -> None:
    """Checkpoint: one ``# {json}`` header line, then one CSV row per sample."""
    meta = dict(header or {})
    meta.update(
        accept_rate=chain.accept_rate,
        divergence_count=chain.divergence_count,
        burn_in_divergences=chain.burn_in_divergences,
        step_size=chain.step_size,
        burn_in_accept_rate=None if math.isnan(chain.burn_in_accept_rate) else chain.burn_in_accept_rate,
        rng_state=chain.rng_state,
        n_samples=len(chain),
        dim=int(chain.samples.shape[1]),
    )
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["log_prob"] + [f"s{i}" for i in range(chain.samples.shape[1])])
    for lp, row in zip(chain.log_probs, chain.samples):
        w.writerow([repr(float(lp))] + [repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def load_chain(path) -> tuple[Chain, dict]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("chain file lacks its JSON header line")
        meta = json.loads(first[2:])
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    chain = Chain(
        samples=data[:, 1:].copy(),
        accept_rate=meta["accept_rate"],
        divergence_count=meta["divergence_count"],
        step_size=meta["step_size"],
        log_probs=data[:, 0].copy(),
        burn_in_accept_rate=float("nan") if meta.get("burn_in_accept_rate") is None else meta["burn_in_accept_rate"],
        burn_in_divergences=meta.get("burn_in_divergences", 0),
        rng_state=meta["rng_state"],
    )
    return chain, meta
