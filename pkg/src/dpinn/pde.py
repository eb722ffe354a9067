"""Benchmark PDEs: residual operators, interface fluxes, initial and boundary data.

Network inputs are ordered ``(x, t)`` in 1D and ``(x, y, t)`` in 2D, so the
time derivative is always the last entry of a jet's ``du``.

Coefficient vectors per equation:

==================  =================  ==================================
id                  ``lam``            residual
==================  =================  ==================================
burgers             (nu,)              u_t + u u_x - nu u_xx
fisher_kpp          (D, r)             u_t - D u_xx - r u (1 - u)
fokker_planck_1d    (D, sigma)         u_t - D u_xx
fokker_planck_2d    (D, sigma)         u_t - D (u_xx + u_yy)
allen_cahn          (D, l)             u_t - D u_xx + m(x) u^3 - f(x)
==================  =================  ==================================

``sigma`` and ``l`` only enter the initial condition and source term.  The
first entry is always the diffusion coefficient, which is the quantity an
inverse problem infers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import jax.numpy as jnp
import numpy as np

PDE_IDS = ("burgers", "fisher_kpp", "fokker_planck_1d", "fokker_planck_2d", "allen_cahn")
IC_FORMS = ("as_printed", "normalized")
FLUX_FORMS = ("gradient", "conserved")

_FACE_TOL = 1e-9


def default_lambda(pde_id: str) -> tuple[float, ...]:
    if pde_id == "burgers":
        return (0.01 / math.pi,)
    if pde_id == "fisher_kpp":
        return (0.1, 2.0)
    if pde_id in ("fokker_planck_1d", "fokker_planck_2d"):
        return (0.1, 0.2)
    if pde_id == "allen_cahn":
        return (0.01, 0.4)
    raise ValueError(f"unknown PDE id {pde_id!r}")


@dataclass(frozen=True)
class PdeSpec:
    id: str
    lam: tuple[float, ...] = ()
    spatial_bounds: tuple[tuple[float, float], ...] = ()
    time_bounds: tuple[float, float] = (0.0, 1.0)
    ic_form: str = "as_printed"
    flux_form: str = "gradient"
    # Replaces the closed-form IC (used for manufactured-solution checks).
    ic_override: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.id not in PDE_IDS:
            raise ValueError(f"unknown PDE id {self.id!r}")
        if not self.lam:
            object.__setattr__(self, "lam", default_lambda(self.id))
        if not self.spatial_bounds:
            nd = 2 if self.id == "fokker_planck_2d" else 1
            object.__setattr__(self, "spatial_bounds", ((-1.0, 1.0),) * nd)
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        expected = len(default_lambda(self.id))
        if len(self.lam) != expected:
            raise ValueError(f"{self.id} needs {expected} coefficients, got {len(self.lam)}")
        if self.lam[0] <= 0:
            raise ValueError(f"{self.id}: diffusion coefficient must be positive")
        if self.ic_form not in IC_FORMS:
            raise ValueError(f"unknown ic_form {self.ic_form!r}")
        if self.flux_form not in FLUX_FORMS:
            raise ValueError(f"unknown flux_form {self.flux_form!r}")

    @property
    def n_space(self) -> int:
        return len(self.spatial_bounds)

    @property
    def input_dim(self) -> int:
        return self.n_space + 1

    @property
    def diffusion(self) -> float:
        return self.lam[0]

    @property
    def is_linear(self) -> bool:
        return self.id.startswith("fokker_planck")

    @property
    def ic_bc_compatible(self) -> bool:
        """Whether the IC matches the Dirichlet BC at the spatial corners (to 1e-6).

        False for Fisher-KPP (e^{-1} against 0) and for both Fokker-Planck IC
        forms; the oracle then starts from a discontinuous corner.
        """
        if self.n_space != 1:
            return False
        ends = np.array([lo for lo, _ in self.spatial_bounds] + [hi for _, hi in self.spatial_bounds])
        ic = initial_condition(self, ends)
        bc = boundary_condition(self, ends, self.time_bounds[0])
        return bool(np.all(np.abs(ic - bc) <= 1e-6))

    def with_lambda(self, lam) -> "PdeSpec":
        return replace(self, lam=tuple(lam))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "lambda": list(self.lam),
            "spatial_bounds": [list(b) for b in self.spatial_bounds],
            "time_bounds": list(self.time_bounds),
            "ic_form": self.ic_form,
            "flux_form": self.flux_form,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PdeSpec":
        return cls(
            id=d["id"],
            lam=tuple(d.get("lambda") or ()),
            spatial_bounds=tuple(tuple(b) for b in d.get("spatial_bounds") or ()),
            time_bounds=tuple(d.get("time_bounds", (0.0, 1.0))),
            ic_form=d.get("ic_form", "as_printed"),
            flux_form=d.get("flux_form", "gradient"),
        )


# Allen-Cahn mobility and source; fixed parts of the operator, never inferred.
def allen_cahn_mobility(x):
    return 0.2 + jnp.exp(x) * jnp.cos(2.0 * x) ** 2


def allen_cahn_source(x, ell=0.4):
    return jnp.exp(-((x - 0.25) ** 2) / (2.0 * ell**2)) * jnp.sin(3.0 * x) ** 2


def residual(spec: PdeSpec, jet, points, lam=None):
    """PDE residual phi from a (batched or single) jet.

    ``lam`` overrides the coefficient vector; inverse problems pass the
    sampled diffusion coefficient here.  Works on both numpy and traced
    JAX arrays.
    """
    lam = spec.lam if lam is None else lam
    u, du, d2u = jet
    points = jnp.asarray(points)
    u_t = du[..., -1]
    if spec.id == "burgers":
        nu = lam[0]
        return u_t + u * du[..., 0] - nu * d2u[..., 0]
    if spec.id == "fisher_kpp":
        D, r = lam[0], lam[1]
        return u_t - D * d2u[..., 0] - r * u * (1.0 - u)
    if spec.id == "fokker_planck_1d":
        return u_t - lam[0] * d2u[..., 0]
    if spec.id == "fokker_planck_2d":
        return u_t - lam[0] * (d2u[..., 0] + d2u[..., 1])
    if spec.id == "allen_cahn":
        x = points[..., 0]
        return (
            u_t
            - lam[0] * d2u[..., 0]
            + allen_cahn_mobility(x) * u**3
            - allen_cahn_source(x, spec.lam[1])
        )
    raise ValueError(f"unknown PDE id {spec.id!r}")


def _check_normal(normal, n_space):
    normal = np.asarray(normal, dtype=float)
    if normal.shape != (n_space,) or not np.isclose(np.linalg.norm(normal), 1.0, atol=1e-12):
        raise ValueError(f"normal must be a unit vector of length {n_space}, got {normal}")
    return normal


def normal_flux(spec: PdeSpec, jet, normal, lam=None):
    """Interface flux projected on ``normal``.

    The default ``gradient`` form is the plain normal derivative du/dn.  The
    ``conserved`` form uses the PDE's own flux: ``(u^2/2 - nu u_x) n_x`` for
    Burgers and ``-D grad(u) . n`` for the diffusion-type equations.
    """
    normal = _check_normal(normal, spec.n_space)
    lam = spec.lam if lam is None else lam
    u, du, _ = jet
    grad_n = sum(du[..., i] * normal[i] for i in range(spec.n_space) if normal[i] != 0.0)
    if spec.flux_form == "gradient":
        return grad_n
    if spec.id == "burgers":
        return 0.5 * u**2 * normal[0] - lam[0] * grad_n
    return -lam[0] * grad_n


def _on_face(value, bound):
    return abs(value - bound) <= _FACE_TOL


def _as_space(spec: PdeSpec, space) -> np.ndarray:
    """Normalise to shape (..., n_space); 1D accepts bare x values."""
    space = np.asarray(space, dtype=float)
    if spec.n_space == 1:
        if space.ndim >= 2 and space.shape[-1] == 1:
            return space
        return space[..., None]
    if space.shape[-1] != spec.n_space:
        raise ValueError(f"expected {spec.n_space} spatial coordinates, got shape {space.shape}")
    return space


def initial_condition(spec: PdeSpec, space):
    """u at t = t0 in closed form; ``space`` may be batched."""
    if spec.ic_override is not None:
        return spec.ic_override(np.asarray(space, dtype=float))
    space = _as_space(spec, space)
    for i, (lo, hi) in enumerate(spec.spatial_bounds):
        if np.any(space[..., i] < lo - _FACE_TOL) or np.any(space[..., i] > hi + _FACE_TOL):
            raise ValueError("initial-condition point lies outside the spatial domain")
    x = space[..., 0]
    if spec.id == "burgers":
        return -np.sin(np.pi * x)
    if spec.id == "fisher_kpp":
        return np.exp(-(x**2))
    if spec.id == "allen_cahn":
        return 0.5 * np.cos(np.pi * x) ** 2
    sigma = spec.lam[1]
    r2 = np.sum(space**2, axis=-1)
    if spec.id == "fokker_planck_1d":
        pref = 1.0 / np.sqrt(2.0 * np.pi * sigma**2)
    else:
        pref = 1.0 / (2.0 * np.pi * sigma**2)
    if spec.ic_form == "as_printed":
        return pref * np.exp(-0.5 * r2 * sigma**2)
    return pref * np.exp(-0.5 * r2 / sigma**2)


def boundary_condition(spec: PdeSpec, space, t):
    """Dirichlet value on the spatial boundary; every point must lie on a face."""
    space = _as_space(spec, space)
    on_face = np.zeros(space.shape[:-1], dtype=bool)
    for i, (lo, hi) in enumerate(spec.spatial_bounds):
        on_face |= _on_face(space[..., i], lo) | _on_face(space[..., i], hi)
    if not np.all(on_face):
        raise ValueError("boundary-condition point does not lie on a domain face")
    t = np.broadcast_to(np.asarray(t, dtype=float), space.shape[:-1])
    value = 0.5 if spec.id == "allen_cahn" else 0.0
    return np.full(t.shape, value)
