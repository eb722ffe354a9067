"""MAP warm start for chains: Adam followed by L-BFGS on the negative log-posterior."""

from __future__ import annotations

import logging

import jax
import jax.numpy as jnp
import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)


def adam(logp_fn, init, steps: int, lr: float = 1e-3, b1=0.9, b2=0.999, eps=1e-8, chunk: int = 500):
    """Maximise ``logp_fn`` (a JAX-traceable function) with Adam; returns the final state."""
    vg = jax.value_and_grad(lambda s: -logp_fn(s))

    def step(carry, _):
        x, m, v, k = carry
        f, g = vg(x)
        k = k + 1
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**k)
        vh = v / (1 - b2**k)
        x = x - lr * mh / (jnp.sqrt(vh) + eps)
        return (x, m, v, k), f

    run = jax.jit(lambda c: jax.lax.scan(step, c, None, length=chunk))
    x = jnp.asarray(init, dtype=jnp.float64)
    carry = (x, jnp.zeros_like(x), jnp.zeros_like(x), jnp.asarray(0.0))
    done = 0
    while done < steps:
        carry, fs = run(carry)
        done += chunk
        log.debug("adam %d: -logp=%.6g", done, float(fs[-1]))
        if not bool(jnp.all(jnp.isfinite(carry[0]))):
            raise FloatingPointError("Adam diverged")
    return np.asarray(carry[0])


def lbfgs(target, init, maxiter: int = 2000):
    """Polish with L-BFGS using the target's ``logp_and_grad``."""

    def fun(x):
        lp, g = target.logp_and_grad(x)
        if not np.isfinite(lp):
            return np.inf, np.zeros_like(x)
        return -lp, -g

    res = minimize(fun, np.asarray(init, dtype=float), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "maxcor": 50, "ftol": 1e-15, "gtol": 1e-10})
    log.debug("lbfgs: %s after %d iterations, -logp=%.6g", res.message, res.nit, res.fun)
    return res.x


def find_map(spec, init, adam_steps: int = 2000, lbfgs_steps: int = 2000, lr: float = 1e-3):
    from dpinn.posterior import _log_posterior

    x = np.asarray(init, dtype=float)
    if adam_steps:
        x = adam(lambda s: _log_posterior(spec, s), x, adam_steps, lr=lr)
    if lbfgs_steps:
        x = lbfgs(spec, x, lbfgs_steps)
    return x
