"""Reference solvers: an exact eigenmode check and mesh-halving self-convergence.

Run with ``python3 demos/oracle_convergence.py``.  Takes a few seconds.
"""

import numpy as np

from dpinn.oracle import solve_reference
from dpinn.pde import PdeSpec

# sin(pi x) is an eigenmode of the heat operator with zero walls, so the
# exact solution is known in closed form.
spec = PdeSpec("fokker_planck_1d", ic_override=lambda x: np.sin(np.pi * np.asarray(x)))
D = spec.diffusion
for n in (51, 101, 201, 401):
    sol = solve_reference(spec, nx=n, nt=n)
    X, T = np.meshgrid(sol.x_nodes, sol.t_nodes)
    err = np.max(np.abs(sol.values - np.exp(-D * np.pi**2 * T) * np.sin(np.pi * X)))
    print(f"eigenmode  {n:4d}x{n:<4d} max error {err:.2e}")

# No closed form for the benchmark problems: compare each grid against the
# next finer one at t = 0.5 (the grids stop there) and watch the error fall by ~4 per halving.
print()
# Burgers needs a fine grid to resolve its steep front; a fourth level would
# break the convective CFL limit.
for pid, (nx, nt, levels) in {"fokker_planck_1d": (51, 26, 4), "fisher_kpp": (51, 26, 4),
                              "allen_cahn": (51, 26, 4), "burgers": (401, 201, 3)}.items():
    pde = PdeSpec(pid)
    grids = [solve_reference(pde, nx=(nx - 1) * 2**k + 1, nt=(nt - 1) * 2**k + 1, t_final=0.5) for k in range(levels)]
    xs = np.linspace(-1, 1, 21)
    at = [g.interpolate(np.column_stack([xs, np.full_like(xs, 0.5)])) for g in grids]
    errs = [np.max(np.abs(a - b)) for a, b in zip(at, at[1:])]
    ratios = ", ".join(f"{a / b:.2f}" for a, b in zip(errs, errs[1:]))
    print(f"{pid:18s} successive differences {', '.join(f'{e:.1e}' for e in errs)}  ratios {ratios}")
