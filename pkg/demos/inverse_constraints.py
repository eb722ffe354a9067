"""Inferring the Fokker-Planck diffusion coefficient (true value 0.1).

With two subdomains each network can carry its own estimate.  ``none``
leaves them independent, ``soft`` ties them with a Gaussian penalty and
``hard`` shares a single value.

    python3 demos/inverse_constraints.py                 # small nets, ~2 min
    python3 demos/inverse_constraints.py --preset desk --noise 0.05
"""

import argparse

from dpinn.experiment import ExperimentConfig, run_experiment

QUICK = dict(hidden_layers=2, hidden_width=16, adam_steps=1500, lbfgs_steps=500,
             hmc={"burn_in": 100, "n_samples": 200})

ap = argparse.ArgumentParser()
ap.add_argument("--preset", choices=["quick", "desk", "paper"], default="quick")
ap.add_argument("--noise", type=float, default=0.0)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

extra = QUICK if args.preset == "quick" else {"preset": args.preset}
cache = {}
for constraint in ("none", "soft", "hard"):
    cfg = ExperimentConfig(pde="fokker_planck_1d", problem="IP", scenario="RD", noise=args.noise,
                           constraint=constraint, seed=args.seed, **extra)
    est = run_experiment(cfg, cache=cache).lambda_estimate
    cols = "  ".join(f"D_{i + 1} {m:.5f} +/- {s:.5f} ({e:.2f}%)"
                     for i, (m, s, e) in enumerate(zip(est["mean"], est["std"], est["abs_error_pct"])))
    print(f"{constraint:5s} {cols}")
