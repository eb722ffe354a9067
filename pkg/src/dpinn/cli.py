"""Command-line entry point: ``dpinn run | matrix | oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from dpinn.experiment import (
    PRESETS,
    ConfigError,
    ExperimentError,
    emit_outputs,
    load_config,
    run_experiment,
    run_matrix,
)
from dpinn.oracle import SCHEMES, SolverError, save_grid, solve_reference
from dpinn.pde import IC_FORMS, PDE_IDS, PdeSpec

log = logging.getLogger("dpinn")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="scale preset (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpinn", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for HMC progress)")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("--config", required=True, help="experiment config (JSON, schema 1)")
    _common(run)

    mat = sub.add_parser("matrix", help="run every experiment listed in a matrix file")
    mat.add_argument("--file", required=True, help="matrix file (JSON, schema 1)")
    _common(mat)

    ora = sub.add_parser("oracle", help="solve a reference problem and write the grid CSV + JSON sidecar")
    ora.add_argument("--pde", required=True, choices=PDE_IDS)
    ora.add_argument("--out", required=True, help="output directory")
    ora.add_argument("--nx", type=int)
    ora.add_argument("--nt", type=int)
    ora.add_argument("--scheme", choices=SCHEMES, default="crank_nicolson")
    ora.add_argument("--ic-form", choices=IC_FORMS, default="as_printed")
    return ap


def _cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(preset=args.preset, seed=args.seed, output_dir=args.out)
    if cfg.output_dir is None:
        cfg = cfg.with_overrides(output_dir=str(Path(args.config).with_suffix("")) + "_out")
    bundle = run_experiment(cfg, progress_every=100 if args.verbose > 1 else 0)
    paths = emit_outputs(bundle)
    summary = {"rel_l2_error": bundle.rel_l2_error, "interface_jump": bundle.interface_jump,
               "accept_rate": bundle.accept_rate, "divergence_count": bundle.divergence_count}
    if bundle.lambda_estimate:
        summary["lambda_mean"] = bundle.lambda_estimate["mean"]
        summary["lambda_std"] = bundle.lambda_estimate["std"]
    print(json.dumps(summary))
    print(f"outputs written to {paths['summary'].parent}")
    return 0


def _cmd_matrix(args) -> int:
    out = args.out or str(Path(args.file).with_suffix("")) + "_out"
    rows = run_matrix(args.file, out_dir=out, preset=args.preset, seed=args.seed)
    bad = [r for r in rows if r.status != "ok"]
    for r in rows:
        line = f"{r.status:8s} {r.name}"
        if r.bundle is not None:
            line += f"  rel_l2={r.bundle.rel_l2_error:.4g}"
        if r.error:
            line += f"  {r.error}"
        print(line)
    print(f"{len(rows) - len(bad)}/{len(rows)} experiments succeeded; summary in {Path(out) / 'summary.csv'}")
    return 1 if bad else 0


def _cmd_oracle(args) -> int:
    spec = PdeSpec(args.pde, ic_form=args.ic_form)
    sol = solve_reference(spec, nx=args.nx, nt=args.nt, scheme=args.scheme)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"reference_{args.pde}.csv"
    save_grid(sol, path)
    print(f"wrote {path} and {path.with_suffix('.json')}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 1)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.verbose > 1:
        logging.getLogger("dpinn").setLevel(logging.INFO)
    handlers = {"run": _cmd_run, "matrix": _cmd_matrix, "oracle": _cmd_oracle}
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"dpinn: error: {e}", file=sys.stderr)
        return 2
    except (ExperimentError, SolverError, OSError, ValueError) as e:
        print(f"dpinn: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
