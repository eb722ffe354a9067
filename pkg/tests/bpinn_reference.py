"""Standalone single-network BPINN log-posterior in plain numpy.

Written independently of ``dpinn.posterior`` and ``dpinn.network`` (its own
MLP, its own input derivatives, its own residuals) so that the decomposed
posterior with one subdomain can be checked against it term by term.
"""

import math

import numpy as np


def _layers(sizes, theta):
    out, k = [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = theta[k : k + a * b].reshape(a, b)
        k += a * b
        out.append((W, theta[k : k + b]))
        k += b
    assert k == len(theta)
    return out


def mlp_with_derivatives(sizes, theta, pts):
    """u, du/dx_i and d2u/dx_i^2 for every input i, by explicit chain rule."""
    layers = _layers(sizes, np.asarray(theta, float))
    n, d = pts.shape
    h = pts
    J = [np.tile(np.eye(d)[i], (n, 1)) for i in range(d)]  # dh/dx_i
    H = [np.zeros((n, d)) for _ in range(d)]  # d2h/dx_i^2
    for W, b in layers[:-1]:
        z = h @ W + b
        s = np.tanh(z)
        sp = 1 - s * s
        spp = -2 * s * sp
        newJ, newH = [], []
        for i in range(d):
            zi = J[i] @ W
            zii = H[i] @ W
            newJ.append(sp * zi)
            newH.append(sp * zii + spp * zi * zi)
        h, J, H = s, newJ, newH
    W, b = layers[-1]
    u = (h @ W + b)[:, 0]
    du = np.column_stack([(J[i] @ W)[:, 0] for i in range(d)])
    d2u = np.column_stack([(H[i] @ W)[:, 0] for i in range(d)])
    return u, du, d2u


def _residual(pid, lam, pts, u, du, d2u):
    ut = du[:, -1]
    x = pts[:, 0]
    if pid == "burgers":
        return ut + u * du[:, 0] - lam[0] * d2u[:, 0]
    if pid == "fisher_kpp":
        return ut - lam[0] * d2u[:, 0] - lam[1] * u * (1 - u)
    if pid == "fokker_planck_1d":
        return ut - lam[0] * d2u[:, 0]
    if pid == "fokker_planck_2d":
        return ut - lam[0] * (d2u[:, 0] + d2u[:, 1])
    if pid == "allen_cahn":
        mob = 0.2 + np.exp(x) * np.cos(2 * x) ** 2
        f = np.exp(-((x - 0.25) ** 2) / (2 * lam[1] ** 2)) * np.sin(3 * x) ** 2
        return ut - lam[0] * d2u[:, 0] + mob * u**3 - f
    raise ValueError(pid)


def _gauss(pred, targ, sig):
    return float(np.sum(-0.5 * np.log(2 * math.pi * sig**2) - (pred - targ) ** 2 / (2 * sig**2)))


def bpinn_terms(sizes, pid, lam, theta, data, prior_std=1.0, log_lambda=None, lambda_prior=(0.0, 1.0)):
    """Prior, data, residual, IC and BC terms of a single-network BPINN.

    ``data`` maps category -> (points, values, sigma).  With ``log_lambda``
    the diffusion coefficient is exp(log_lambda) and gets its own prior.
    """
    theta = np.asarray(theta, float)
    terms = {"prior": float(np.sum(-0.5 * np.log(2 * math.pi * prior_std**2) - theta**2 / (2 * prior_std**2)))}
    lam = tuple(lam)
    if log_lambda is not None:
        m, s = lambda_prior
        terms["prior"] += float(-0.5 * np.log(2 * math.pi * s**2) - (log_lambda - m) ** 2 / (2 * s**2))
        lam = (math.exp(log_lambda),) + lam[1:]
    for cat in ("u", "ic", "bc"):
        pts, vals, sig = data[cat]
        u = mlp_with_derivatives(sizes, theta, pts)[0] if len(pts) else np.zeros(0)
        terms[cat] = _gauss(u, vals, sig)
    pts, vals, sig = data["phi"]
    u, du, d2u = mlp_with_derivatives(sizes, theta, pts)
    terms["phi"] = _gauss(_residual(pid, lam, pts, u, du, d2u), vals, sig)
    return terms
