"""Config-driven experiment runner.

An experiment goes oracle -> training set -> posterior -> (optional MAP warm
start) -> HMC chain -> predictive summary -> metrics.  Every random draw is
derived from ``ExperimentConfig.seed``, so a config fully determines its
``summary.json``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from dpinn.data import (
    SCENARIOS,
    Budget,
    DecompositionSpec,
    NoiseSpec,
    TrainingSet,
    default_budget,
    export_dataset,
    sample_training_set,
)
from dpinn.hmc import Chain, HmcConfig, network_samples, predictive_summary, run_chain, save_chain
from dpinn.network import NetworkArch, init_params
from dpinn.optimize import find_map
from dpinn.oracle import SCHEMES, GridSolution, solve_reference
from dpinn.pde import FLUX_FORMS, IC_FORMS, PDE_IDS, PdeSpec
from dpinn.posterior import TRANSFORMS, PosteriorSpec, build_posterior

log = logging.getLogger(__name__)

CONFIG_SCHEMA = 1
PROBLEMS = ("FP", "IP")
DIMS = ("1d", "2d")
VARIANTS = ("base", "DN", "DS", "DNS")
CONSTRAINTS = ("none", "soft", "hard")
NOISE_LEVELS = (0.0, 0.05, 0.10, 0.15)

PRESETS = {
    "desk": dict(hidden_layers=3, hidden_width=32, burn_in=300, n_samples=500,
                 adam_steps=3000, lbfgs_steps=2000),
    "paper": dict(hidden_layers=5, hidden_width=64, burn_in=1000, n_samples=1500,
                  adam_steps=0, lbfgs_steps=0),
}

_HMC_KEYS = ("step_size", "n_leapfrog", "burn_in", "n_samples", "adapt", "target_accept", "jitter")
_MODE_OF = {"none": "inverse_none", "soft": "inverse_soft", "hard": "inverse_hard"}

# Cut of the uneven split: subdomain 1 covers two thirds of [-1, 1].
_UNEVEN_CUT = 1.0 / 3.0
# Interface jumps are checked at this many uniform times (plus snapshots).
_JUMP_TIMES = 21


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    pde: str = "fokker_planck_1d"
    problem: str = "FP"
    dims: str = "1d"
    scenario: str = "BI"
    variant: str = "base"
    noise: float = 0.0
    noise_per_subdomain: tuple[float, ...] | None = None
    n_subdomains: int = 2
    cuts: tuple[float, ...] | None = None
    constraint: str | None = None
    preset: str = "desk"
    seed: int = 0
    snapshot_times: tuple[float, ...] = (0.5,)
    budget: Budget | None = None
    hidden_layers: int | None = None
    hidden_width: int | None = None
    hmc: dict = field(default_factory=dict)
    adam_steps: int | None = None
    lbfgs_steps: int | None = None
    learning_rate: float = 1e-3
    ic_form: str = "as_printed"
    flux_form: str = "gradient"
    sigma_min: float = 0.01
    sigma_phi: float = 0.01
    sigma_avg: float | None = None
    sigma_flux: float | None = None
    soft_sigma: float = 0.05
    interface_sides: str = "one_sided"
    lambda_prior: tuple[float, float] = (0.0, 1.0)
    lambda_transform: str = "exp"
    oracle_nx: int | None = None
    oracle_nt: int | None = None
    oracle_scheme: str = "crank_nicolson"
    eval_points: int | None = None
    name: str = ""
    output_dir: str | None = None
    extended: bool = False

    def __post_init__(self):
        tup = lambda v: None if v is None else tuple(float(x) for x in v)  # noqa: E731
        object.__setattr__(self, "noise_per_subdomain", tup(self.noise_per_subdomain))
        object.__setattr__(self, "cuts", tup(self.cuts))
        object.__setattr__(self, "snapshot_times", tup(self.snapshot_times))
        object.__setattr__(self, "lambda_prior", tup(self.lambda_prior))
        object.__setattr__(self, "noise", float(self.noise))
        object.__setattr__(self, "hmc", dict(self.hmc))
        if isinstance(self.budget, dict):
            object.__setattr__(self, "budget", Budget.from_dict(self.budget))

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = {"schema": CONFIG_SCHEMA}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Budget):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        schema = d.pop("schema", None)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"config schema {schema!r} is not supported (expected {CONFIG_SCHEMA})")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    # -- derived pieces --------------------------------------------------------
    def pde_spec(self) -> PdeSpec:
        return PdeSpec(self.pde, ic_form=self.ic_form, flux_form=self.flux_form)

    def arch(self) -> NetworkArch:
        p = PRESETS[self.preset]
        return NetworkArch(
            input_dim=3 if self.dims == "2d" else 2,
            hidden_layers=self.hidden_layers or p["hidden_layers"],
            hidden_width=self.hidden_width or p["hidden_width"],
        )

    def hmc_config(self) -> HmcConfig:
        p = PRESETS[self.preset]
        kw = dict(burn_in=p["burn_in"], n_samples=p["n_samples"])
        kw.update(self.hmc)
        return HmcConfig(seed=self.seed, **kw)

    def pretrain_steps(self) -> tuple[int, int]:
        p = PRESETS[self.preset]
        a = p["adam_steps"] if self.adam_steps is None else self.adam_steps
        b = p["lbfgs_steps"] if self.lbfgs_steps is None else self.lbfgs_steps
        return int(a), int(b)

    def decomposition(self) -> DecompositionSpec:
        bounds = self.pde_spec().spatial_bounds[0]
        if self.cuts is not None:
            return DecompositionSpec(self.cuts, bounds)
        if self.variant in ("DS", "DNS"):
            return DecompositionSpec((_UNEVEN_CUT,), bounds)
        return DecompositionSpec.equal(self.n_subdomains, bounds)

    def noise_spec(self) -> NoiseSpec:
        levels = self.noise_per_subdomain
        if levels is None and self.variant == "DN":
            levels = (0.0, self.noise)  # left subdomain clean
        elif levels is None and self.variant == "DNS":
            levels = (self.noise, 0.0)  # larger subdomain noisy
        return NoiseSpec(self.noise, levels, seed=self.seed)

    def point_budget(self) -> Budget:
        if self.budget is not None:
            return self.budget
        if self.problem == "IP":
            variant = "IP"
        elif self.variant in ("DS", "DNS"):
            variant = "DS"
        else:
            variant = "base"
        return default_budget(self.pde, self.n_subdomains, variant).for_scenario(self.scenario)

    def mode(self) -> str:
        if self.problem == "FP":
            return "forward"
        if self.n_subdomains == 1:
            return "inverse_none"
        return _MODE_OF[self.constraint or "hard"]

    # -- validation ------------------------------------------------------------
    def validate(self) -> None:
        checks = [
            ("pde", self.pde, PDE_IDS), ("problem", self.problem, PROBLEMS), ("dims", self.dims, DIMS),
            ("scenario", self.scenario, SCENARIOS), ("variant", self.variant, VARIANTS),
            ("preset", self.preset, tuple(PRESETS)), ("ic_form", self.ic_form, IC_FORMS),
            ("flux_form", self.flux_form, FLUX_FORMS), ("lambda_transform", self.lambda_transform, TRANSFORMS),
            ("oracle_scheme", self.oracle_scheme, SCHEMES),
            ("interface_sides", self.interface_sides, ("one_sided", "mirrored")),
        ]
        for key, value, allowed in checks:
            if value not in allowed:
                raise ConfigError(f"{key}={value!r}; expected one of {', '.join(allowed)}")
        if (self.dims == "2d") != (self.pde == "fokker_planck_2d"):
            raise ConfigError("dims 2d goes with pde fokker_planck_2d and only with it")
        if self.n_subdomains < 1:
            raise ConfigError("n_subdomains must be >= 1")
        if self.cuts is not None and len(self.cuts) != self.n_subdomains - 1:
            raise ConfigError(f"{len(self.cuts)} cuts for {self.n_subdomains} subdomains")
        if self.variant != "base" and self.n_subdomains != 2:
            raise ConfigError(f"variant {self.variant} needs exactly two subdomains")
        if self.constraint is not None:
            if self.constraint not in CONSTRAINTS:
                raise ConfigError(f"constraint={self.constraint!r}; expected none, soft or hard")
            if self.problem != "IP":
                raise ConfigError("constraint applies to inverse problems (problem IP) only")
        if set(self.hmc) - set(_HMC_KEYS):
            raise ConfigError(f"unknown hmc keys: {sorted(set(self.hmc) - set(_HMC_KEYS))}")
        if not self.snapshot_times:
            raise ConfigError("at least one snapshot time is required")
        t0, t1 = self.pde_spec().time_bounds
        if any(not t0 <= t <= t1 for t in self.snapshot_times):
            raise ConfigError(f"snapshot times must lie in [{t0}, {t1}]")
        if min(self.sigma_min, self.sigma_phi, self.soft_sigma) <= 0:
            raise ConfigError("likelihood standard deviations must be positive")
        try:
            self.noise_spec().levels(self.n_subdomains)
            self.hmc_config()
            self.arch()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not self.extended:
            check_matrix_cell(self)


def matrix_cell(cfg: ExperimentConfig) -> str:
    pct = f"{cfg.noise * 100:g}%"
    axis = "" if cfg.variant == "base" else f" {cfg.variant}"
    parts = [f"{cfg.problem} {cfg.dims.upper()}{axis}"]
    if cfg.problem == "FP":
        parts.append(cfg.scenario)
    parts += [cfg.pde, f"noise {pct}"]
    return " / ".join(parts)


def _cell_reason(cfg: ExperimentConfig) -> str | None:
    """Why the experiment matrix has no entry for this config, or None when it does."""
    if not any(math.isclose(cfg.noise, v, abs_tol=1e-12) for v in NOISE_LEVELS):
        return "noise levels run from 0 to 15% in 5% steps"
    noisy = cfg.noise > 0
    if cfg.n_subdomains > 2 and not (cfg.pde == "allen_cahn" and cfg.problem == "FP" and cfg.variant == "base"):
        return "three or four subdomains are run for the forward Allen-Cahn problem only"
    if cfg.n_subdomains > 4:
        return "at most four subdomains are run"
    if cfg.dims == "2d":
        if cfg.problem != "FP" or noisy or cfg.variant != "base":
            return "the 2D case is a forward problem without noise"
        return None
    if cfg.problem == "IP":
        if cfg.variant != "base":
            return "inverse problems use the plain two-subdomain split"
        if cfg.scenario != "RD":
            return "inverse problems train on interior data (scenario RD)"
        return None
    # DN and DNS at noise 0 are the clean end of their sweeps (same data as base/DS)
    if cfg.variant == "DS" and cfg.pde != "fokker_planck_1d":
        return "uneven subdomain sizes are run for Fokker-Planck only"
    if cfg.variant == "DNS" and cfg.pde != "fokker_planck_1d":
        return "uneven sizes with uneven noise are run for Fokker-Planck only"
    return None


def check_matrix_cell(cfg: ExperimentConfig) -> None:
    reason = _cell_reason(cfg)
    if reason:
        raise ConfigError(
            f"experiment matrix cell [{matrix_cell(cfg)}] is empty: {reason}; "
            "set \"extended\": true to run it anyway"
        )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return ExperimentConfig.from_dict(d)


# -- results -------------------------------------------------------------------


@dataclass
class Snapshot:
    t: float
    points: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    reference: np.ndarray

    @property
    def rel_l2_error(self) -> float:
        return rel_l2(self.mean, self.reference)


@dataclass
class ResultBundle:
    config: ExperimentConfig
    snapshots: list[Snapshot]
    rel_l2_error: float
    interface_jump: float
    chain: Chain
    dataset: TrainingSet
    posterior: PosteriorSpec
    lambda_estimate: dict | None = None
    lambda_samples: np.ndarray | None = None
    timings: dict = field(default_factory=dict)

    @property
    def accept_rate(self) -> float:
        return self.chain.accept_rate

    @property
    def divergence_count(self) -> int:
        return self.chain.divergence_count

    def snapshot(self, t: float) -> Snapshot:
        for s in self.snapshots:
            if math.isclose(s.t, t):
                return s
        raise KeyError(f"no snapshot at t={t}")


def rel_l2(mean, reference) -> float:
    mean, reference = np.asarray(mean, float), np.asarray(reference, float)
    return float(np.linalg.norm(mean - reference) / np.linalg.norm(reference))


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except ExperimentError:
        raise
    except Exception as e:  # noqa: BLE001
        raise ExperimentError(name, e) from e
    finally:
        timings[name] = time.perf_counter() - start


def evaluation_points(spec: PdeSpec, t: float, n: int | None = None) -> np.ndarray:
    """Uniform snapshot grid at time t: 201 points in 1D, 41 x 41 in 2D by default."""
    (xlo, xhi), *rest = spec.spatial_bounds
    if spec.n_space == 1:
        x = np.linspace(xlo, xhi, n or 201)
        return np.column_stack([x, np.full_like(x, t)])
    (ylo, yhi), = rest
    m = n or 41
    xx, yy = np.meshgrid(np.linspace(xlo, xhi, m), np.linspace(ylo, yhi, m), indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), np.full(m * m, t)])


def interface_points(spec: PdeSpec, cut: float, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if spec.n_space == 1:
        return np.column_stack([np.full_like(times, cut), times])
    ylo, yhi = spec.spatial_bounds[1]
    yy, tt = np.meshgrid(np.linspace(ylo, yhi, 41), times, indexing="ij")
    return np.column_stack([np.full(yy.size, cut), yy.ravel(), tt.ravel()])


def interface_jump(chain: Chain, post: PosteriorSpec, times) -> float:
    """Largest gap between the predictive means of neighbouring networks on the cuts."""
    jump = 0.0
    for k, cut in enumerate(post.data.decomp.cut_positions):
        pts = interface_points(post.pde, cut, times)
        lo = network_samples(chain, post, k, pts).mean(axis=0)
        hi = network_samples(chain, post, k + 1, pts).mean(axis=0)
        jump = max(jump, float(np.max(np.abs(lo - hi))))
    return jump


_ORACLE_CACHE: dict = {}


def _reference(cfg: ExperimentConfig, spec: PdeSpec, cache: dict | None) -> GridSolution:
    cache = _ORACLE_CACHE if cache is None else cache
    key = (spec, cfg.oracle_nx, cfg.oracle_nt, cfg.oracle_scheme)
    if key not in cache:
        cache[key] = solve_reference(spec, nx=cfg.oracle_nx, nt=cfg.oracle_nt, scheme=cfg.oracle_scheme)
    return cache[key]


def run_experiment(cfg: ExperimentConfig, cache: dict | None = None, progress_every: int = 0) -> ResultBundle:
    """Run one experiment end to end; failures name the stage that raised."""
    cfg.validate()
    timings: dict = {}
    with _stage("oracle", timings):
        spec = cfg.pde_spec()
        sol = _reference(cfg, spec, cache)
    with _stage("sampling", timings):
        ts = sample_training_set(
            sol, spec, cfg.decomposition(), cfg.scenario, cfg.point_budget(), cfg.noise_spec(),
            sigma_min=cfg.sigma_min, sigma_phi=cfg.sigma_phi,
            sigma_avg=cfg.sigma_avg, sigma_flux=cfg.sigma_flux,
        )
    with _stage("posterior", timings):
        arch = cfg.arch()
        thetas = [init_params(arch, cfg.seed + 1 + q) for q in range(ts.n_subdomains)]
        post = build_posterior(
            spec, ts, arch, thetas, mode=cfg.mode(), transform=cfg.lambda_transform,
            lambda_init=cfg.lambda_prior[0], lambda_prior=cfg.lambda_prior,
            soft_constraint_sigma=cfg.soft_sigma, interface_sides=cfg.interface_sides,
        )
        init = post.initial_state()
    adam_steps, lbfgs_steps = cfg.pretrain_steps()
    if adam_steps or lbfgs_steps:
        with _stage("warm_start", timings):
            init = find_map(post, init, adam_steps, lbfgs_steps, lr=cfg.learning_rate)
    with _stage("hmc", timings):
        chain = run_chain(post, cfg.hmc_config(), init, progress_every=progress_every)
    with _stage("evaluation", timings):
        snaps = []
        for t in cfg.snapshot_times:
            pts = evaluation_points(spec, t, cfg.eval_points)
            summ = predictive_summary(chain, post, pts)
            snaps.append(Snapshot(t, pts, summ.mean, summ.std, sol.interpolate(pts)))
        head = next((s for s in snaps if math.isclose(s.t, 0.5)), snaps[0])
        t0, t1 = spec.time_bounds
        times = np.union1d(np.linspace(t0, t1, _JUMP_TIMES), cfg.snapshot_times)
        jump = interface_jump(chain, post, times) if ts.n_subdomains > 1 else 0.0
        bundle = ResultBundle(cfg, snaps, head.rel_l2_error, jump, chain, ts, post, timings=timings)
        if post.mode != "forward":
            truth = spec.diffusion
            bundle.lambda_samples = summ.lambda_samples
            bundle.lambda_estimate = {
                "true": truth,
                "mean": [float(v) for v in summ.lambda_mean],
                "std": [float(v) for v in summ.lambda_std],
                "abs_error_pct": [float(100.0 * abs(v - truth) / truth) for v in summ.lambda_mean],
            }
    log.info("%s: rel_l2=%.4g jump=%.3g accept=%.3f", cfg.name or matrix_cell(cfg),
             bundle.rel_l2_error, bundle.interface_jump, chain.accept_rate)
    return bundle


# -- output files ----------------------------------------------------------------


def summary_dict(bundle: ResultBundle) -> dict:
    """Every scalar result plus the config echo; contains no wall-clock values."""
    ch = bundle.chain
    out = {
        "schema": CONFIG_SCHEMA,
        "config": bundle.config.to_dict(),
        "config_digest": bundle.config.digest(),
        "rel_l2_error": bundle.rel_l2_error,
        "interface_jump": bundle.interface_jump,
        "snapshots": [
            {"t": s.t, "rel_l2_error": s.rel_l2_error, "mean_std": float(np.mean(s.std)),
             "file": snapshot_filename(s.t), "n_points": int(len(s.mean))}
            for s in bundle.snapshots
        ],
        "lambda_estimate": bundle.lambda_estimate,
        "chain": {
            "accept_rate": ch.accept_rate,
            "divergence_count": ch.divergence_count,
            "burn_in_divergences": ch.burn_in_divergences,
            "burn_in_accept_rate": None if math.isnan(ch.burn_in_accept_rate) else ch.burn_in_accept_rate,
            "step_size": ch.step_size,
            "n_samples": len(ch),
            "state_size": int(ch.samples.shape[1]),
        },
        "dataset_counts": bundle.dataset.counts(),
        "posterior_mode": bundle.posterior.mode,
    }
    return out


def snapshot_filename(t: float) -> str:
    return f"snapshot_t{t:g}.csv"


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _snapshot_csv(s: Snapshot, n_space: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((["x"] if n_space == 1 else ["x", "y"]) + ["mean", "std", "reference"])
    for p, m, sd, r in zip(s.points, s.mean, s.std, s.reference):
        w.writerow([repr(float(v)) for v in p[:n_space]] + [repr(float(m)), repr(float(sd)), repr(float(r))])
    return buf.getvalue()


def _plot_script(bundle: ResultBundle) -> str:
    cfg = bundle.config
    lines = ['set datafile separator ","', "set terminal pngcairo size 900,600", "set key outside"]
    for s in bundle.snapshots:
        f = snapshot_filename(s.t)
        lines += [f'set output "{f[:-4]}.png"', f'set title "{cfg.pde} {cfg.scenario} t={s.t:g}"']
        if bundle.posterior.pde.n_space == 1:
            lines += [
                'set xlabel "x"', 'set ylabel "u"',
                f'plot "{f}" skip 1 using 1:($2-2*$3):($2+2*$3) with filledcurves '
                'fc rgb "#bcd2ee" title "mean +/- 2 std", \\',
                f'     "{f}" skip 1 using 1:2 with lines lw 2 lc rgb "#1f4e9a" title "mean", \\',
                f'     "{f}" skip 1 using 1:4 with lines dt 2 lw 2 lc rgb "black" title "reference"',
            ]
        else:
            lines += [
                'set xlabel "x"', 'set ylabel "y"', 'set zlabel "u"',
                f'splot "{f}" skip 1 using 1:2:3 with points pt 7 ps 0.4 title "mean", \\',
                f'      "{f}" skip 1 using 1:2:($3-2*$4) with points pt 1 ps 0.3 title "mean - 2 std", \\',
                f'      "{f}" skip 1 using 1:2:($3+2*$4) with points pt 1 ps 0.3 title "mean + 2 std", \\',
                f'      "{f}" skip 1 using 1:2:5 with points pt 6 ps 0.4 title "reference"',
            ]
    return "\n".join(lines) + "\n"


def _lambda_names(bundle: ResultBundle) -> list[str]:
    n = bundle.lambda_samples.shape[1]
    return ["D"] if n == 1 else [f"D_{q + 1}" for q in range(n)]


def emit_outputs(bundle: ResultBundle, out_dir=None) -> dict[str, Path]:
    """Write summary.json, snapshots, chain checkpoint, gnuplot script and extras."""
    out_dir = out_dir or bundle.config.output_dir
    if out_dir is None:
        raise ValueError("no output directory given")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise OSError(f"output directory {out} is not writable: {e}") from e
    cfg = bundle.config
    n_space = bundle.posterior.pde.n_space
    paths = {"summary": out / "summary.json"}
    _write_text(paths["summary"], json.dumps(summary_dict(bundle), indent=2, sort_keys=True) + "\n")
    for s in bundle.snapshots:
        p = out / snapshot_filename(s.t)
        _write_text(p, _snapshot_csv(s, n_space))
        paths[f"snapshot_{s.t:g}"] = p
    paths["chain"] = out / "chain.csv"
    save_chain(bundle.chain, paths["chain"], header={
        "config": cfg.to_dict(), "config_digest": cfg.digest(), "seed": cfg.seed,
        "hmc": asdict(cfg.hmc_config()),
    })
    paths["plot"] = out / "plot.gp"
    _write_text(paths["plot"], _plot_script(bundle))
    paths["dataset"] = out / "dataset.csv"
    export_dataset(bundle.dataset, paths["dataset"])
    if bundle.lambda_samples is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample"] + _lambda_names(bundle))
        for i, row in enumerate(bundle.lambda_samples):
            w.writerow([i] + [repr(float(v)) for v in row])
        paths["lambda"] = out / "lambda.csv"
        _write_text(paths["lambda"], buf.getvalue())
    paths["timing"] = out / "timing.json"
    t = {k: round(v, 3) for k, v in bundle.timings.items()}
    _write_text(paths["timing"], json.dumps({"stages_s": t, "total_s": round(sum(t.values()), 3)}, indent=2) + "\n")
    return paths


# -- matrices --------------------------------------------------------------------

# Config keys that may hold a list in a matrix entry; lists expand to a product.
SWEEP_KEYS = ("pde", "scenario", "noise", "constraint", "n_subdomains", "seed", "variant")

SUMMARY_COLUMNS = [
    "name", "status", "pde", "problem", "dims", "variant", "scenario", "noise", "n_subdomains",
    "constraint", "seed", "rel_l2_error", "interface_jump", "lambda_mean", "lambda_std",
    "lambda_abs_error_pct", "accept_rate", "divergence_count", "error",
]


@dataclass
class MatrixRow:
    name: str
    config: ExperimentConfig | None
    bundle: ResultBundle | None = None
    status: str = "ok"
    error: str = ""


def _auto_name(cfg: ExperimentConfig) -> str:
    parts = [cfg.pde, cfg.problem, cfg.dims]
    if cfg.variant != "base":
        parts.append(cfg.variant)
    parts += [cfg.scenario, f"n{round(cfg.noise * 100)}", f"{cfg.n_subdomains}sd"]
    if cfg.problem == "IP" and cfg.n_subdomains > 1:
        parts.append(cfg.constraint or "hard")
    parts.append(f"s{cfg.seed}")
    return "_".join(parts)


def expand_matrix(doc: dict) -> list[tuple[str, dict]]:
    """Entries of a matrix document as (name, config dict), sweeps expanded."""
    if doc.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"matrix schema {doc.get('schema')!r} is not supported (expected {CONFIG_SCHEMA})")
    unknown = set(doc) - {"schema", "defaults", "experiments"}
    if unknown:
        raise ConfigError(f"unknown matrix keys: {', '.join(sorted(unknown))}")
    defaults = dict(doc.get("defaults", {}))
    out = []
    for entry in doc.get("experiments", []):
        base = {**defaults, **entry}
        sweep = [k for k in SWEEP_KEYS if isinstance(base.get(k), list)]
        for combo in itertools.product(*(base[k] for k in sweep)):
            d = {**base, **dict(zip(sweep, combo)), "schema": CONFIG_SCHEMA}
            out.append((d.pop("name", None), d))
    return out


def run_matrix(matrix, out_dir=None, preset: str | None = None, seed: int | None = None,
               cache: dict | None = None) -> list[MatrixRow]:
    """Run every experiment of a matrix file (or already-parsed document) in order.

    A failing or rejected experiment is recorded in its row and the run goes
    on.  With ``out_dir`` each experiment writes into its own subdirectory
    and a consolidated ``summary.csv`` lands in ``out_dir``.
    """
    if not isinstance(matrix, dict):
        with open(matrix, encoding="utf-8") as fh:
            matrix = json.load(fh)
    cache = {} if cache is None else cache
    rows: list[MatrixRow] = []
    seen: dict[str, int] = {}
    for name, d in expand_matrix(matrix):
        try:
            cfg = ExperimentConfig.from_dict(d).with_overrides(preset=preset, seed=seed)
            name = name or _auto_name(cfg)
        except (ConfigError, TypeError, ValueError) as e:
            rows.append(MatrixRow(name or f"entry{len(rows)}", None, status="rejected", error=str(e)))
            continue
        if name in seen:
            seen[name] += 1
            name = f"{name}_{seen[name]}"
        else:
            seen[name] = 0
        cfg = replace(cfg, name=name)
        row = MatrixRow(name, cfg)
        try:
            cfg.validate()
        except ConfigError as e:
            row.status, row.error = "rejected", str(e)
            rows.append(row)
            continue
        try:
            row.bundle = run_experiment(cfg, cache=cache)
            if out_dir is not None:
                emit_outputs(row.bundle, Path(out_dir) / name)
        except (ExperimentError, OSError) as e:
            row.status, row.error = "failed", str(e)
            log.warning("%s failed: %s", name, e)
        rows.append(row)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _write_text(Path(out_dir) / "summary.csv", matrix_summary_csv(rows))
    return rows


def matrix_summary_csv(rows: list[MatrixRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        rec = {"name": r.name, "status": r.status, "error": r.error}
        c = r.config
        if c is not None:
            rec.update(pde=c.pde, problem=c.problem, dims=c.dims, variant=c.variant, scenario=c.scenario,
                       noise=c.noise, n_subdomains=c.n_subdomains, seed=c.seed,
                       constraint=(c.constraint or "hard") if c.problem == "IP" and c.n_subdomains > 1 else "")
        b = r.bundle
        if b is not None:
            rec.update(rel_l2_error=repr(b.rel_l2_error), interface_jump=repr(b.interface_jump),
                       accept_rate=repr(b.accept_rate), divergence_count=b.divergence_count)
            if b.lambda_estimate:
                le = b.lambda_estimate
                rec.update(lambda_mean=";".join(repr(v) for v in le["mean"]),
                           lambda_std=";".join(repr(v) for v in le["std"]),
                           lambda_abs_error_pct=";".join(repr(v) for v in le["abs_error_pct"]))
        w.writerow(rec)
    return buf.getvalue()
