"""Training-set construction: decompositions, point budgets, noisy sampling, CSV I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from dpinn.oracle import GridSolution
from dpinn.pde import PdeSpec, boundary_condition, initial_condition

SCENARIOS = ("BI", "BIC", "RD")
CATEGORIES = ("u", "phi", "ic", "bc", "cdc")
DATASET_SCHEMA = 1


class DatasetError(ValueError):
    """Malformed or inconsistent training-set file."""


@dataclass(frozen=True)
class DecompositionSpec:
    cut_positions: tuple[float, ...] = (0.0,)
    bounds: tuple[float, float] = (-1.0, 1.0)
    axis: str = "x"

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cut_positions)
        object.__setattr__(self, "cut_positions", cuts)
        lo, hi = self.bounds
        if any(not (lo < c < hi) for c in cuts):
            raise ValueError(f"cuts {cuts} must lie strictly inside ({lo}, {hi})")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cuts {cuts} must be strictly increasing")
        if self.axis != "x":
            raise ValueError("only decompositions along x are supported")

    @classmethod
    def equal(cls, n_subdomains: int, bounds=(-1.0, 1.0)) -> "DecompositionSpec":
        lo, hi = bounds
        cuts = tuple(lo + (hi - lo) * k / n_subdomains for k in range(1, n_subdomains))
        return cls(cuts, tuple(bounds))

    @property
    def n_subdomains(self) -> int:
        return len(self.cut_positions) + 1

    @property
    def edges(self) -> list[float]:
        return [self.bounds[0], *self.cut_positions, self.bounds[1]]

    def interval(self, q: int) -> tuple[float, float]:
        e = self.edges
        return e[q], e[q + 1]

    def subdomain_of(self, x) -> np.ndarray:
        """Subdomain index per x; points on a cut belong to the lower subdomain."""
        return np.searchsorted(np.asarray(self.cut_positions), np.asarray(x, dtype=float), side="left")


@dataclass(frozen=True)
class NoiseSpec:
    level: float = 0.0
    per_subdomain_levels: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.level < 1.0:
            raise ValueError("noise level must lie in [0, 1)")
        if self.per_subdomain_levels is not None:
            levels = tuple(float(v) for v in self.per_subdomain_levels)
            if any(not 0.0 <= v < 1.0 for v in levels):
                raise ValueError("per-subdomain noise levels must lie in [0, 1)")
            object.__setattr__(self, "per_subdomain_levels", levels)

    def levels(self, n_subdomains: int) -> tuple[float, ...]:
        if self.per_subdomain_levels is None:
            return (self.level,) * n_subdomains
        if len(self.per_subdomain_levels) != n_subdomains:
            raise ValueError(
                f"{len(self.per_subdomain_levels)} noise levels for {n_subdomains} subdomains"
            )
        return self.per_subdomain_levels


@dataclass(frozen=True)
class Budget:
    """Point counts; per subdomain for bc/ic/phi/u, per interface for cdc/u_interface."""

    bc: tuple[int, ...] = ()
    ic: tuple[int, ...] = ()
    phi: tuple[int, ...] = ()
    u: tuple[int, ...] = ()
    cdc: tuple[int, ...] = ()
    u_interface: tuple[int, ...] = ()

    def for_scenario(self, scenario: str) -> "Budget":
        """Zero the categories a scenario does not use."""
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {scenario!r}")
        zero = lambda v: tuple(0 for _ in v)  # noqa: E731
        if scenario == "BI":
            return replace(self, u=zero(self.u), u_interface=zero(self.u_interface))
        if scenario == "BIC":
            return replace(self, u=zero(self.u))
        return replace(self, bc=zero(self.bc), ic=zero(self.ic), u_interface=zero(self.u_interface))

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("bc", "ic", "phi", "u", "cdc", "u_interface")}

    @classmethod
    def from_dict(cls, d: dict) -> "Budget":
        return cls(**{k: tuple(int(v) for v in d.get(k, ())) for k in
                      ("bc", "ic", "phi", "u", "cdc", "u_interface")})


# Point budgets per equation and method (training/collocation point table).
# Keys: (pde, method, variant) with method in {bpinn, dpinn} and variant in
# {base, DS, IP}.  DNS shares the DS row.
_POINT_BUDGETS = {
    ("allen_cahn", "bpinn", "base"): Budget((40,), (80,), (60,), (60,)),
    ("allen_cahn", "dpinn", "base"): Budget((20, 20), (40, 40), (30, 30), (30, 30), (20,), (20,)),
    ("allen_cahn", "bpinn", "IP"): Budget((0,), (0,), (300,), (300,)),
    ("allen_cahn", "dpinn", "IP"): Budget((0, 0), (0, 0), (150, 150), (150, 150), (40,), (0,)),
    ("burgers", "bpinn", "base"): Budget((40,), (150,), (300,), (250,)),
    ("burgers", "dpinn", "base"): Budget((20, 20), (40, 40), (100, 100), (30, 30), (20,), (20,)),
    ("fokker_planck_1d", "bpinn", "base"): Budget((40,), (80,), (60,), (60,)),
    ("fokker_planck_1d", "dpinn", "base"): Budget((20, 20), (40, 40), (30, 30), (30, 30), (20,), (20,)),
    ("fokker_planck_1d", "dpinn", "DS"): Budget((20, 20), (60, 20), (40, 20), (40, 20), (20,), (20,)),
    ("fokker_planck_1d", "bpinn", "IP"): Budget((0,), (0,), (300,), (300,)),
    ("fokker_planck_1d", "dpinn", "IP"): Budget((0, 0), (0, 0), (150, 150), (150, 150), (40,), (0,)),
    ("fisher_kpp", "bpinn", "base"): Budget((40,), (80,), (60,), (60,)),
    ("fisher_kpp", "dpinn", "base"): Budget((20, 20), (40, 40), (30, 30), (30, 30), (20,), (20,)),
}


def default_budget(pde_id: str, n_subdomains: int, variant: str = "base") -> Budget:
    """Point budget for an experiment, falling back to the nearest table row.

    Rows missing from the table (inverse problems for Burgers and Fisher-KPP,
    2D Fokker-Planck, 3-4 subdomains) reuse the closest row: same method
    with per-subdomain counts replicated.
    """
    method = "bpinn" if n_subdomains == 1 else "dpinn"
    if variant == "DNS":
        variant = "DS"
    if pde_id == "fokker_planck_2d":
        # 300 residual and 60 initial points in total, split over subdomains
        per = lambda total: tuple(total // n_subdomains for _ in range(n_subdomains))  # noqa: E731
        return Budget(per(80), per(60), per(300), per(0), (20,) * (n_subdomains - 1),
                      (20,) * (n_subdomains - 1))
    key = (pde_id, method, variant)
    if key not in _POINT_BUDGETS:
        key = ("fokker_planck_1d", method, variant) if variant != "base" else (pde_id, method, "base")
    if key not in _POINT_BUDGETS:
        raise KeyError(f"no point budget for {pde_id} / {method} / {variant}")
    b = _POINT_BUDGETS[key]
    if n_subdomains <= 2:
        return b
    # 3+ subdomains: per-subdomain counts of the two-subdomain row; only the
    # outer subdomains touch a wall.
    first = lambda v: v[0] if v else 0  # noqa: E731
    bc = tuple(first(b.bc) if q in (0, n_subdomains - 1) else 0 for q in range(n_subdomains))
    return Budget(
        bc=bc,
        ic=(first(b.ic),) * n_subdomains,
        phi=(first(b.phi),) * n_subdomains,
        u=(first(b.u),) * n_subdomains,
        cdc=(first(b.cdc),) * (n_subdomains - 1),
        u_interface=(first(b.u_interface),) * (n_subdomains - 1),
    )


@dataclass
class PointBlock:
    points: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    subdomain: np.ndarray

    @classmethod
    def empty(cls, input_dim: int) -> "PointBlock":
        return cls(np.zeros((0, input_dim)), np.zeros(0), np.zeros(0), np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return len(self.values)

    def select(self, q: int) -> "PointBlock":
        m = self.subdomain == q
        return PointBlock(self.points[m], self.values[m], self.sigma[m], self.subdomain[m])

    def without(self, q: int) -> "PointBlock":
        m = self.subdomain != q
        return PointBlock(self.points[m], self.values[m], self.sigma[m], self.subdomain[m])


@dataclass
class InterfaceBlock:
    """Interface collocation points; ``subdomain`` is the lower-index side q."""

    points: np.ndarray
    sigma_avg: np.ndarray
    sigma_flux: np.ndarray
    subdomain: np.ndarray

    @classmethod
    def empty(cls, input_dim: int) -> "InterfaceBlock":
        return cls(np.zeros((0, input_dim)), np.zeros(0), np.zeros(0), np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return len(self.subdomain)


@dataclass
class TrainingSet:
    input_dim: int
    decomp: DecompositionSpec
    u: PointBlock
    phi: PointBlock
    ic: PointBlock
    bc: PointBlock
    cdc: InterfaceBlock
    meta: dict = field(default_factory=dict)

    @property
    def n_subdomains(self) -> int:
        return self.decomp.n_subdomains

    def blocks(self) -> dict[str, PointBlock]:
        return {"u": self.u, "phi": self.phi, "ic": self.ic, "bc": self.bc}

    def counts(self) -> dict[str, list[int]]:
        n = self.n_subdomains
        out = {k: [int(np.sum(b.subdomain == q)) for q in range(n)] for k, b in self.blocks().items()}
        out["cdc"] = [int(np.sum(self.cdc.subdomain == q)) for q in range(n - 1)]
        return out

    def validate(self) -> None:
        for name, b in self.blocks().items():
            if len(b) and np.any(~(b.sigma > 0)):
                raise DatasetError(f"category {name}: all sigma must be > 0")
            if b.points.shape != (len(b), self.input_dim):
                raise DatasetError(f"category {name}: bad point array shape {b.points.shape}")
            if len(b) and (b.subdomain.min() < 0 or b.subdomain.max() >= self.n_subdomains):
                raise DatasetError(f"category {name}: subdomain index out of range")
            for q in range(self.n_subdomains):
                lo, hi = self.decomp.interval(q)
                x = b.points[b.subdomain == q, 0]
                if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
                    raise DatasetError(f"category {name}: point outside subdomain {q}")
        if len(self.cdc):
            if np.any(~(self.cdc.sigma_avg > 0)) or np.any(~(self.cdc.sigma_flux > 0)):
                raise DatasetError("category cdc: all sigma must be > 0")
            if self.cdc.subdomain.max() >= self.n_subdomains - 1:
                raise DatasetError("category cdc: interface index out of range")
            cuts = np.asarray(self.decomp.cut_positions)[self.cdc.subdomain]
            if np.any(self.cdc.points[:, 0] != cuts):
                raise DatasetError("category cdc: point not on its cut")


def _uniform(rng, n, lo, hi):
    return rng.uniform(lo, hi, size=n) if n else np.zeros(0)


def _wall_segments(spec: PdeSpec, decomp: DecompositionSpec, q: int):
    """Boundary pieces owned by subdomain q as (fixed_axis, value, free_lo, free_hi)."""
    lo, hi = decomp.interval(q)
    segs = []
    if q == 0:
        segs.append((0, spec.spatial_bounds[0][0], None, None))
    if q == decomp.n_subdomains - 1:
        segs.append((0, spec.spatial_bounds[0][1], None, None))
    if spec.n_space == 2:
        for y in spec.spatial_bounds[1]:
            segs.append((1, y, lo, hi))
    return segs


def _sample_space(rng, spec, n, x_lo, x_hi):
    cols = [_uniform(rng, n, x_lo, x_hi)]
    for lo, hi in spec.spatial_bounds[1:]:
        cols.append(_uniform(rng, n, lo, hi))
    return np.column_stack(cols) if n else np.zeros((0, spec.n_space))


def _sample_bc(rng, spec, decomp, q, n):
    segs = _wall_segments(spec, decomp, q)
    if n and not segs:
        raise ValueError(f"subdomain {q} has no wall but {n} boundary points were requested")
    if not n:
        return np.zeros((0, spec.input_dim))
    if spec.n_space == 1:
        # alternate walls so a BPINN gets an even split
        walls = np.array([s[1] for s in segs])
        x = walls[np.arange(n) % len(walls)]
        t = _uniform(rng, n, *spec.time_bounds)
        return np.column_stack([x, t])
    ylo, yhi = spec.spatial_bounds[1]
    lengths = np.array([(yhi - ylo) if s[2] is None else (s[3] - s[2]) for s in segs])
    pick = rng.choice(len(segs), size=n, p=lengths / lengths.sum())
    pts = np.zeros((n, 3))
    for i, k in enumerate(pick):
        axis, value, flo, fhi = segs[k]
        if axis == 0:
            pts[i, :2] = (value, rng.uniform(ylo, yhi))
        else:
            pts[i, :2] = (rng.uniform(flo, fhi), value)
    pts[:, 2] = _uniform(rng, n, *spec.time_bounds)
    return pts


def sample_training_set(
    solution: GridSolution,
    spec: PdeSpec,
    decomp: DecompositionSpec,
    scenario: str,
    budget: Budget,
    noise: NoiseSpec,
    sigma_min: float = 0.01,
    sigma_phi: float = 0.01,
    sigma_avg: float | None = None,
    sigma_flux: float | None = None,
) -> TrainingSet:
    """Draw a seeded training set for one scenario.

    Observed values are perturbed with Gaussian noise of std
    ``level_q * max|u|`` over subdomain q of the reference grid; the recorded
    likelihood std is that value floored at ``sigma_min``.  IC and BC values
    come from the closed-form conditions, interior and interface data from
    bilinear interpolation of ``solution``.  Interface data (BIC) is drawn
    once per point, with the larger of the two neighbouring noise levels, and
    then replicated into both adjacent subdomains.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    nsub = decomp.n_subdomains
    if scenario != "BIC" and any(budget.u_interface):
        raise ValueError(f"interface data requested in scenario {scenario}; only BIC uses it")
    if scenario in ("BI", "BIC") and any(budget.u):
        raise ValueError(f"interior data requested in scenario {scenario}; only RD uses it")
    if scenario == "RD" and (any(budget.ic) or any(budget.bc)):
        raise ValueError("scenario RD takes no initial or boundary points")
    for name in ("bc", "ic", "phi", "u"):
        v = getattr(budget, name)
        if v and len(v) != nsub:
            raise ValueError(f"budget.{name} has {len(v)} entries for {nsub} subdomains")
    for name in ("cdc", "u_interface"):
        v = getattr(budget, name)
        if v and len(v) != nsub - 1:
            raise ValueError(f"budget.{name} has {len(v)} entries for {nsub - 1} interfaces")
    sigma_avg = sigma_phi if sigma_avg is None else sigma_avg
    sigma_flux = sigma_phi if sigma_flux is None else sigma_flux
    if min(sigma_min, sigma_phi, sigma_avg, sigma_flux) <= 0:
        raise ValueError("likelihood standard deviations must be positive")

    rng = np.random.default_rng(noise.seed)
    levels = noise.levels(nsub)
    t_lo, t_hi = spec.time_bounds
    d = spec.input_dim
    noise_std = [levels[q] * solution.max_abs(*decomp.interval(q)) for q in range(nsub)]
    like_std = [max(s, sigma_min) for s in noise_std]

    def perturb(clean, q_std):
        return clean + rng.normal(0.0, q_std, size=len(clean)) if q_std > 0 else clean.copy()

    acc = {k: [] for k in ("u", "phi", "ic", "bc")}

    def add(cat, pts, vals, sig, q):
        n = len(pts)
        acc[cat].append((pts, vals, np.full(n, sig, dtype=float), np.full(n, q, dtype=int)))

    for q in range(nsub):
        lo, hi = decomp.interval(q)
        n_nodes = int(np.sum((solution.x_nodes >= lo) & (solution.x_nodes <= hi))) * len(solution.t_nodes)
        n_phi = budget.phi[q] if budget.phi else 0
        pts = np.column_stack([_sample_space(rng, spec, n_phi, lo, hi), _uniform(rng, n_phi, t_lo, t_hi)])
        add("phi", pts, np.zeros(n_phi), sigma_phi, q)

        n_ic = budget.ic[q] if budget.ic else 0
        space = _sample_space(rng, spec, n_ic, lo, hi)
        pts = np.column_stack([space, np.full(n_ic, t_lo)])
        clean = np.asarray(initial_condition(spec, space), dtype=float).reshape(n_ic)
        add("ic", pts, perturb(clean, noise_std[q]), like_std[q], q)

        n_bc = budget.bc[q] if budget.bc else 0
        pts = _sample_bc(rng, spec, decomp, q, n_bc)
        clean = np.asarray(boundary_condition(spec, pts[:, :-1], pts[:, -1]), dtype=float).reshape(n_bc)
        add("bc", pts, perturb(clean, noise_std[q]), like_std[q], q)

        n_u = budget.u[q] if budget.u else 0
        if n_u > n_nodes:
            raise ValueError(f"subdomain {q}: {n_u} data points exceed the {n_nodes} grid nodes")
        pts = np.column_stack([_sample_space(rng, spec, n_u, lo, hi), _uniform(rng, n_u, t_lo, t_hi)])
        clean = solution.interpolate(pts) if n_u else np.zeros(0)
        add("u", pts, perturb(clean, noise_std[q]), like_std[q], q)

    cdc_pts, cdc_sub = [], []
    for k, cut in enumerate(decomp.cut_positions):
        n_c = budget.cdc[k] if budget.cdc else 0
        space = _sample_space(rng, spec, n_c, cut, cut)
        pts = np.column_stack([space, _uniform(rng, n_c, t_lo, t_hi)])
        pts[:, 0] = cut
        cdc_pts.append(pts)
        cdc_sub.append(np.full(n_c, k, dtype=int))

        n_ui = budget.u_interface[k] if budget.u_interface else 0
        if n_ui:
            space = _sample_space(rng, spec, n_ui, cut, cut)
            pts = np.column_stack([space, _uniform(rng, n_ui, t_lo, t_hi)])
            pts[:, 0] = cut
            q_std = max(noise_std[k], noise_std[k + 1])
            vals = perturb(solution.interpolate(pts), q_std)
            for q in (k, k + 1):
                add("u", pts.copy(), vals.copy(), max(q_std, sigma_min), q)

    def stack(cat):
        parts = acc[cat]
        if not parts:
            return PointBlock.empty(d)
        return PointBlock(
            np.concatenate([p[0] for p in parts]).reshape(-1, d),
            np.concatenate([p[1] for p in parts]),
            np.concatenate([p[2] for p in parts]),
            np.concatenate([p[3] for p in parts]),
        )

    if cdc_pts:
        cp = np.concatenate(cdc_pts).reshape(-1, d)
        cdc = InterfaceBlock(cp, np.full(len(cp), sigma_avg), np.full(len(cp), sigma_flux),
                             np.concatenate(cdc_sub))
    else:
        cdc = InterfaceBlock.empty(d)
    ts = TrainingSet(
        input_dim=d, decomp=decomp,
        u=stack("u"), phi=stack("phi"), ic=stack("ic"), bc=stack("bc"), cdc=cdc,
        meta={"scenario": scenario, "noise_std": noise_std, "pde_id": spec.id},
    )
    ts.validate()
    return ts


def _header_line(ts: TrainingSet) -> str:
    cuts = ";".join(repr(c) for c in ts.decomp.cut_positions)
    lo, hi = ts.decomp.bounds
    return f"# dpinn-dataset schema={DATASET_SCHEMA} input_dim={ts.input_dim} bounds={lo!r};{hi!r} cuts={cuts}"


def export_dataset(ts: TrainingSet, path) -> None:
    """CSV with header ``category,subdomain,x[,y],t,value,sigma``.

    ``phi`` rows carry their residual target (0) as value.  ``cdc`` rows carry
    the lower subdomain index, the flux std in ``value`` and the average std
    in ``sigma``.
    """
    space_cols = ["x"] if ts.input_dim == 2 else ["x", "y"]
    buf = io.StringIO(newline="")
    buf.write(_header_line(ts) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "subdomain", *space_cols, "t", "value", "sigma"])
    for name, b in ts.blocks().items():
        for p, v, s, q in zip(b.points, b.values, b.sigma, b.subdomain):
            w.writerow([name, int(q), *(repr(float(c)) for c in p), repr(float(v)), repr(float(s))])
    c = ts.cdc
    for p, sf, sa, q in zip(c.points, c.sigma_flux, c.sigma_avg, c.subdomain):
        w.writerow(["cdc", int(q), *(repr(float(v)) for v in p), repr(float(sf)), repr(float(sa))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def import_dataset(path) -> TrainingSet:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or not lines[0].startswith("# dpinn-dataset"):
        raise DatasetError("missing dpinn-dataset header line")
    fields = dict(tok.split("=", 1) for tok in lines[0][len("# dpinn-dataset"):].split())
    try:
        schema = int(fields["schema"])
        input_dim = int(fields["input_dim"])
        lo, hi = (float(v) for v in fields["bounds"].split(";"))
        cuts = tuple(float(v) for v in fields["cuts"].split(";") if v)
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"malformed header line: {lines[0]!r}") from exc
    if schema != DATASET_SCHEMA:
        raise DatasetError(f"dataset schema {schema} does not match supported {DATASET_SCHEMA}")
    decomp = DecompositionSpec(cuts, (lo, hi))
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    header = next(reader, None)
    expected = ["category", "subdomain"] + (["x"] if input_dim == 2 else ["x", "y"]) + ["t", "value", "sigma"]
    if header != expected:
        raise DatasetError(f"unexpected column header {header}")
    rows = {k: [] for k in CATEGORIES}
    for lineno, row in enumerate(reader, start=3):
        if not row:
            continue
        if len(row) != len(expected) or row[0] not in rows:
            raise DatasetError(f"line {lineno}: malformed row {row}")
        try:
            rows[row[0]].append((int(row[1]), [float(v) for v in row[2:]]))
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from exc

    def block(name):
        r = rows[name]
        if not r:
            return PointBlock.empty(input_dim)
        sub = np.array([q for q, _ in r], dtype=int)
        arr = np.array([v for _, v in r])
        return PointBlock(arr[:, :input_dim].copy(), arr[:, input_dim].copy(), arr[:, input_dim + 1].copy(), sub)

    r = rows["cdc"]
    if r:
        arr = np.array([v for _, v in r])
        cdc = InterfaceBlock(arr[:, :input_dim].copy(), arr[:, input_dim + 1].copy(),
                             arr[:, input_dim].copy(), np.array([q for q, _ in r], dtype=int))
    else:
        cdc = InterfaceBlock.empty(input_dim)
    ts = TrainingSet(input_dim, decomp, block("u"), block("phi"), block("ic"), block("bc"), cdc)
    ts.validate()
    return ts
