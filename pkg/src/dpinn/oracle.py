"""Finite-difference reference solutions for the benchmark PDEs.

The default scheme is Crank-Nicolson in the diffusion term with second-order
Adams-Bashforth for the nonlinear terms (Burgers convection, Fisher-KPP and
Allen-Cahn reactions).  The first step is replaced by two backward-Euler half
steps (Rannacher start-up) so that initial data that jumps at the domain
corners does not leave undamped Crank-Nicolson oscillations behind.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from dpinn.pde import PdeSpec, allen_cahn_mobility, allen_cahn_source, boundary_condition, initial_condition

log = logging.getLogger(__name__)

SCHEMES = ("crank_nicolson", "explicit_rk4")

# Default (nx, nt) per equation; Burgers needs a fine mesh around its shock.
DEFAULT_RESOLUTION = {
    "burgers": (2049, 2001),
    "fisher_kpp": (401, 401),
    "fokker_planck_1d": (401, 401),
    "allen_cahn": (401, 401),
    "fokker_planck_2d": (41, 101),
}


class SolverError(RuntimeError):
    """Stability violation or blow-up in a reference solve."""


@dataclass
class GridSolution:
    pde_id: str
    x_nodes: np.ndarray
    t_nodes: np.ndarray
    values: np.ndarray  # (nt, nx) or (nt, nx, ny)
    y_nodes: np.ndarray | None = None

    def __post_init__(self):
        shape = (len(self.t_nodes), len(self.x_nodes))
        if self.y_nodes is not None:
            shape += (len(self.y_nodes),)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match nodes {shape}")

    @property
    def n_space(self) -> int:
        return 1 if self.y_nodes is None else 2

    def _interpolator(self):
        axes = (self.t_nodes, self.x_nodes) + (() if self.y_nodes is None else (self.y_nodes,))
        return RegularGridInterpolator(axes, self.values, method="linear")

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Bi/trilinear interpolation at network-ordered points ``(x[, y], t)``."""
        points = np.atleast_2d(points)
        reordered = np.column_stack([points[:, -1], points[:, :-1]])
        return self._interpolator()(reordered)

    def max_abs(self, x_lo=-np.inf, x_hi=np.inf) -> float:
        mask = (self.x_nodes >= x_lo - 1e-12) & (self.x_nodes <= x_hi + 1e-12)
        return float(np.max(np.abs(self.values[:, mask])))


def _check_finite(u, t, pde_id):
    if not np.all(np.isfinite(u)):
        raise SolverError(f"{pde_id}: non-finite field at t={t:.6g} (blow-up)")


def _nonlinear_1d(spec: PdeSpec, x, dx):
    """Right-hand side terms other than D u_xx, on the full node vector."""
    lam = spec.lam
    if spec.id == "burgers":

        def N(u):
            ux = np.zeros_like(u)
            ux[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
            return -u * ux

    elif spec.id == "fisher_kpp":
        r = lam[1]

        def N(u):
            return r * u * (1.0 - u)

    elif spec.id == "allen_cahn":
        m = np.asarray(allen_cahn_mobility(x))
        f = np.asarray(allen_cahn_source(x, lam[1]))

        def N(u):
            return -m * u**3 + f

    else:

        def N(u):
            return np.zeros_like(u)

    return N


def _solve_cn_1d(spec, x, t, u0, bc):
    nx, nt = len(x), len(t)
    dx = x[1] - x[0]
    dt = t[1] - t[0]
    D = spec.diffusion
    N = _nonlinear_1d(spec, x, dx)
    m = nx - 2
    r = D / dx**2

    def banded(coef):
        # (I - coef * L) on interior nodes
        ab = np.zeros((3, m))
        ab[0, 1:] = -coef * r
        ab[1, :] = 1.0 + 2.0 * coef * r
        ab[2, :-1] = -coef * r
        return ab

    def lap(u):
        return (u[2:] - 2 * u[1:-1] + u[:-2]) * r

    out = np.empty((nt, nx))
    out[0] = u0
    u = u0.copy()
    u[0], u[-1] = bc(t[0])

    # Rannacher start-up: two backward-Euler half steps.
    be = banded(0.5 * dt)
    half = 0.5 * dt
    v = u.copy()
    for k in range(2):
        tn = t[0] + (k + 1) * half
        lo, hi = bc(tn)
        rhs = v[1:-1] + half * N(v)[1:-1]
        rhs[0] += half * r * lo
        rhs[-1] += half * r * hi
        v[1:-1] = solve_banded((1, 1), be, rhs)
        v[0], v[-1] = lo, hi
    _check_finite(v, t[1], spec.id)
    out[1] = v
    n_prev = N(u)
    u = v

    # the BE half-step matrix equals the CN matrix
    cn = be
    for n in range(1, nt - 1):
        lo1, hi1 = bc(t[n + 1])
        n_cur = N(u)
        rhs = u[1:-1] + 0.5 * dt * lap(u) + dt * (1.5 * n_cur - 0.5 * n_prev)[1:-1]
        rhs[0] += 0.5 * dt * r * lo1
        rhs[-1] += 0.5 * dt * r * hi1
        new = np.empty_like(u)
        new[1:-1] = solve_banded((1, 1), cn, rhs)
        new[0], new[-1] = lo1, hi1
        n_prev, u = n_cur, new
        if n % 200 == 0:
            _check_finite(u, t[n + 1], spec.id)
        out[n + 1] = u
    _check_finite(out[-1], t[-1], spec.id)
    return out


def _solve_rk4_1d(spec, x, t, u0, bc):
    dx = x[1] - x[0]
    dt = t[1] - t[0]
    D = spec.diffusion
    if D * dt / dx**2 > 0.25:
        raise SolverError(
            f"explicit scheme unstable: D*dt/dx^2 = {D * dt / dx**2:.4g} > 0.25; refine nt"
        )
    N = _nonlinear_1d(spec, x, dx)

    def f(u):
        du = N(u)
        du[1:-1] += D * (u[2:] - 2 * u[1:-1] + u[:-2]) / dx**2
        du[0] = du[-1] = 0.0
        return du

    out = np.empty((len(t), len(x)))
    out[0] = u0
    u = u0.copy()
    u[0], u[-1] = bc(t[0])
    for n in range(len(t) - 1):
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u + 0.5 * dt * k2)
        k4 = f(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        u[0], u[-1] = bc(t[n + 1])
        if n % 200 == 0:
            _check_finite(u, t[n + 1], spec.id)
        out[n + 1] = u
    _check_finite(out[-1], t[-1], spec.id)
    return out


def _solve_cn_2d(spec, x, y, t, u0):
    """Crank-Nicolson for u_t = D (u_xx + u_yy) with zero Dirichlet walls."""
    if not spec.is_linear:
        raise SolverError("2D oracle supports only the Fokker-Planck equation")
    nx, ny, nt = len(x), len(y), len(t)
    dx, dy, dt = x[1] - x[0], y[1] - y[0], t[1] - t[0]
    D = spec.diffusion

    def lap1(n, h):
        e = np.ones(n)
        return sparse.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1]) / h**2

    Lx, Ly = lap1(nx - 2, dx), lap1(ny - 2, dy)
    L = D * (sparse.kron(Lx, sparse.identity(ny - 2)) + sparse.kron(sparse.identity(nx - 2), Ly))
    eye = sparse.identity(L.shape[0])
    # one factorisation serves both the BE half steps and CN
    lu = splu((eye - 0.5 * dt * L).tocsc())
    expl = (eye + 0.5 * dt * L).tocsr()

    out = np.zeros((nt, nx, ny))
    out[0] = u0
    v = u0[1:-1, 1:-1].ravel()
    for _ in range(2):
        v = lu.solve(v)
    out[1, 1:-1, 1:-1] = v.reshape(nx - 2, ny - 2)
    for n in range(1, nt - 1):
        v = lu.solve(expl @ v)
        out[n + 1, 1:-1, 1:-1] = v.reshape(nx - 2, ny - 2)
    _check_finite(out[-1], t[-1], spec.id)
    return out


def solve_reference(
    spec: PdeSpec,
    nx: int | None = None,
    nt: int | None = None,
    scheme: str = "crank_nicolson",
    t_final: float | None = None,
    ny: int | None = None,
) -> GridSolution:
    """Solve ``spec`` on a uniform grid spanning its domain up to ``t_final``.

    The row at ``t_nodes[0]`` holds the initial condition at every node
    (including the boundary nodes, even where the IC and BC disagree).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    dnx, dnt = DEFAULT_RESOLUTION[spec.id]
    nx = nx or dnx
    nt = nt or dnt
    t0, t1 = spec.time_bounds
    t1 = t1 if t_final is None else t_final
    (xlo, xhi) = spec.spatial_bounds[0]
    x = np.linspace(xlo, xhi, nx)
    t = np.linspace(t0, t1, nt)
    if nx < 3 or nt < 2:
        raise ValueError("need at least 3 spatial and 2 temporal nodes")

    if spec.n_space == 2:
        if scheme != "crank_nicolson":
            raise ValueError("2D oracle only implements crank_nicolson")
        ny = ny or nx
        ylo, yhi = spec.spatial_bounds[1]
        y = np.linspace(ylo, yhi, ny)
        X, Y = np.meshgrid(x, y, indexing="ij")
        u0 = np.asarray(initial_condition(spec, np.stack([X, Y], axis=-1)), dtype=float)
        values = _solve_cn_2d(spec, x, y, t, u0)
        return GridSolution(spec.id, x, t, values, y_nodes=y)

    u0 = np.asarray(initial_condition(spec, x), dtype=float).reshape(nx)
    ends = np.array([xlo, xhi])

    def bc(tt):
        return boundary_condition(spec, ends, tt)

    if spec.id == "burgers":
        dx, dt = x[1] - x[0], t[1] - t[0]
        cfl = np.max(np.abs(u0)) * dt / dx
        if cfl > 1.0:
            raise SolverError(f"burgers: convective CFL {cfl:.3g} > 1; refine nt")
    if scheme == "crank_nicolson":
        values = _solve_cn_1d(spec, x, t, u0, bc)
    else:
        values = _solve_rk4_1d(spec, x, t, u0, bc)
    return GridSolution(spec.id, x, t, values)


def save_grid(sol: GridSolution, path) -> None:
    """Write ``<path>.csv`` (x[,y],t,u rows) plus a ``<path>.json`` metadata sidecar."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    meta = {
        "schema": 1,
        "pde_id": sol.pde_id,
        "nx": len(sol.x_nodes),
        "nt": len(sol.t_nodes),
        "ny": None if sol.y_nodes is None else len(sol.y_nodes),
        "x_range": [float(sol.x_nodes[0]), float(sol.x_nodes[-1])],
        "t_range": [float(sol.t_nodes[0]), float(sol.t_nodes[-1])],
        "y_range": None if sol.y_nodes is None else [float(sol.y_nodes[0]), float(sol.y_nodes[-1])],
        "csv": csv_path.name,
    }
    with open(csv_path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if sol.y_nodes is None:
            w.writerow(["x", "t", "u"])
            for k, tt in enumerate(sol.t_nodes):
                for i, xx in enumerate(sol.x_nodes):
                    w.writerow([repr(float(xx)), repr(float(tt)), repr(float(sol.values[k, i]))])
        else:
            w.writerow(["x", "y", "t", "u"])
            for k, tt in enumerate(sol.t_nodes):
                for i, xx in enumerate(sol.x_nodes):
                    for j, yy in enumerate(sol.y_nodes):
                        w.writerow([repr(float(xx)), repr(float(yy)), repr(float(tt)),
                                    repr(float(sol.values[k, i, j]))])
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2), encoding="utf-8")


def load_grid(path) -> GridSolution:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if meta.get("schema") != 1:
        raise ValueError(f"unsupported grid schema {meta.get('schema')!r}")
    data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    nx, nt, ny = meta["nx"], meta["nt"], meta["ny"]
    if ny is None:
        x = data[:nx, 0]
        t = data[::nx, 1]
        values = data[:, 2].reshape(nt, nx)
        return GridSolution(meta["pde_id"], x, t, values)
    x = data[: nx * ny : ny, 0]
    y = data[:ny, 1]
    t = data[:: nx * ny, 2]
    values = data[:, 3].reshape(nt, nx, ny)
    return GridSolution(meta["pde_id"], x, t, values, y_nodes=y)
