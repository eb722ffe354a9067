import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpinn.data import (
    Budget,
    DatasetError,
    DecompositionSpec,
    NoiseSpec,
    default_budget,
    export_dataset,
    import_dataset,
    sample_training_set,
)
from dpinn.oracle import solve_reference
from dpinn.pde import PdeSpec, boundary_condition, initial_condition


@pytest.fixture(scope="module")
def fp():
    spec = PdeSpec("fokker_planck_1d")
    return spec, solve_reference(spec, nx=101, nt=101)


@pytest.fixture(scope="module")
def ac():
    spec = PdeSpec("allen_cahn")
    return spec, solve_reference(spec, nx=101, nt=101)


def test_decomposition_basics():
    d = DecompositionSpec.equal(4)
    assert d.cut_positions == (-0.5, 0.0, 0.5) and d.n_subdomains == 4
    assert d.interval(1) == (-0.5, 0.0)
    np.testing.assert_array_equal(d.subdomain_of([-1.0, -0.5, -0.49, 0.0, 0.9]), [0, 0, 1, 1, 3])
    with pytest.raises(ValueError):
        DecompositionSpec((1.0,))
    with pytest.raises(ValueError):
        DecompositionSpec((0.2, 0.1))
    with pytest.raises(ValueError):
        DecompositionSpec((0.0,), axis="y")


def test_noise_spec_levels():
    assert NoiseSpec(0.1).levels(3) == (0.1, 0.1, 0.1)
    assert NoiseSpec(0.1, (0.0, 0.15)).levels(2) == (0.0, 0.15)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, (0.0, 0.15)).levels(3)
    with pytest.raises(ValueError):
        NoiseSpec(1.0)


def test_allen_cahn_budget():
    b = default_budget("allen_cahn", 2).for_scenario("BI")
    assert b.bc == (20, 20) and b.ic == (40, 40) and b.cdc == (20,) and b.phi == (30, 30)
    assert b.u == (0, 0) and b.u_interface == (0,)


def test_budget_rows():
    assert default_budget("burgers", 1) == Budget((40,), (150,), (300,), (250,))
    assert default_budget("burgers", 2).phi == (100, 100)
    ds = default_budget("fokker_planck_1d", 2, "DS")
    assert ds.ic == (60, 20) and ds.phi == (40, 20) and ds.u == (40, 20)
    assert default_budget("fokker_planck_1d", 2, "DNS") == ds
    ip = default_budget("fokker_planck_1d", 2, "IP")
    assert ip.cdc == (40,) and ip.u == (150, 150) and ip.bc == (0, 0)
    four = default_budget("allen_cahn", 4)
    assert four.bc == (20, 0, 0, 20) and four.cdc == (20, 20, 20)
    assert default_budget("fisher_kpp", 2, "IP").phi == (150, 150)


def test_bi_counts(ac):
    spec, sol = ac
    b = default_budget("allen_cahn", 2).for_scenario("BI")
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "BI", b, NoiseSpec(0.0))
    c = ts.counts()
    assert c["bc"] == [20, 20] and c["ic"] == [40, 40] and c["phi"] == [30, 30] and c["cdc"] == [20]
    assert c["u"] == [0, 0]


def test_bic_interface_data_replicated(ac):
    spec, sol = ac
    b = default_budget("allen_cahn", 2).for_scenario("BIC")
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "BIC", b, NoiseSpec(0.05, seed=3))
    u0, u1 = ts.u.select(0), ts.u.select(1)
    assert len(u0) == len(u1) == 20
    np.testing.assert_array_equal(u0.points, u1.points)
    np.testing.assert_array_equal(u0.values, u1.values)
    assert np.all(u0.points[:, 0] == 0.0)


def test_rd_has_no_ic_bc(fp):
    spec, sol = fp
    b = default_budget(spec.id, 2).for_scenario("RD")
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "RD", b, NoiseSpec(0.1))
    assert len(ts.ic) == 0 and len(ts.bc) == 0 and ts.counts()["u"] == [30, 30]


@pytest.mark.parametrize("scenario,kw", [
    ("BI", dict(u_interface=(5,))), ("RD", dict(u_interface=(5,))),
    ("BI", dict(u=(5, 5))), ("RD", dict(ic=(3, 3))),
])
def test_inconsistent_budget_rejected(fp, scenario, kw):
    spec, sol = fp
    with pytest.raises(ValueError):
        sample_training_set(sol, spec, DecompositionSpec.equal(2), scenario, Budget(**kw), NoiseSpec(0.0))


def test_budget_exceeding_grid(fp):
    spec, sol = fp
    coarse = solve_reference(spec, nx=5, nt=3)
    with pytest.raises(ValueError, match="exceed"):
        sample_training_set(coarse, spec, DecompositionSpec.equal(2), "RD", Budget(u=(100, 1)), NoiseSpec(0.0))


def test_zero_noise_is_clean(fp):
    spec, sol = fp
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "RD", Budget(u=(30, 30), phi=(5, 5)),
                             NoiseSpec(0.0), sigma_min=0.01)
    np.testing.assert_array_equal(ts.u.values, sol.interpolate(ts.u.points))
    assert np.all(ts.u.sigma == 0.01)


def test_ic_bc_values_closed_form(ac):
    spec, sol = ac
    b = default_budget("allen_cahn", 2).for_scenario("BI")
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "BI", b, NoiseSpec(0.0))
    np.testing.assert_array_equal(ts.ic.values, initial_condition(spec, ts.ic.points[:, 0]))
    np.testing.assert_array_equal(ts.bc.values, boundary_condition(spec, ts.bc.points[:, 0], ts.bc.points[:, 1]))
    assert np.all(ts.ic.points[:, 1] == 0.0)


def test_per_subdomain_noise(fp):
    spec, sol = fp
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "RD", Budget(u=(50, 50)),
                             NoiseSpec(0.15, (0.0, 0.15), seed=1))
    u0, u1 = ts.u.select(0), ts.u.select(1)
    np.testing.assert_array_equal(u0.values, sol.interpolate(u0.points))
    assert not np.allclose(u1.values, sol.interpolate(u1.points))
    assert np.all(u1.sigma == pytest.approx(0.15 * sol.max_abs(0.0, 1.0)))


def test_noise_statistics(fp):
    spec, _ = fp
    sol = solve_reference(spec, nx=201, nt=101)
    n = 10_000
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "RD", Budget(u=(n, 0)),
                             NoiseSpec(0.10, seed=2))
    resid = ts.u.values - sol.interpolate(ts.u.points)
    target = 0.10 * sol.max_abs(-1.0, 0.0)
    assert abs(np.std(resid) / target - 1) < 0.03


def test_sampling_deterministic(ac):
    spec, sol = ac
    b = default_budget("allen_cahn", 2).for_scenario("BIC")
    a = sample_training_set(sol, spec, DecompositionSpec.equal(2), "BIC", b, NoiseSpec(0.1, seed=9))
    c = sample_training_set(sol, spec, DecompositionSpec.equal(2), "BIC", b, NoiseSpec(0.1, seed=9))
    for name in ("u", "phi", "ic", "bc"):
        np.testing.assert_array_equal(getattr(a, name).points, getattr(c, name).points)
        np.testing.assert_array_equal(getattr(a, name).values, getattr(c, name).values)


@given(n=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_points_inside_subdomains(ac, n, seed):
    spec, sol = ac
    d = DecompositionSpec.equal(n)
    ts = sample_training_set(sol, spec, d, "BI", default_budget("allen_cahn", n).for_scenario("BI"),
                             NoiseSpec(0.05, seed=seed))
    for b in ts.blocks().values():
        for q in range(n):
            lo, hi = d.interval(q)
            x = b.points[b.subdomain == q, 0]
            assert np.all((x >= lo) & (x <= hi))
        assert np.all(b.sigma > 0)
    cuts = np.asarray(d.cut_positions)
    if n > 1:
        np.testing.assert_array_equal(ts.cdc.points[:, 0], cuts[ts.cdc.subdomain])


def test_two_d_sampling():
    spec = PdeSpec("fokker_planck_2d")
    sol = solve_reference(spec, nx=21, nt=11)
    b = default_budget(spec.id, 2).for_scenario("BI")
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "BI", b, NoiseSpec(0.0))
    assert ts.input_dim == 3
    bc = ts.bc.points
    on_wall = np.isclose(np.abs(bc[:, 0]), 1.0) | np.isclose(np.abs(bc[:, 1]), 1.0)
    assert np.all(on_wall)
    assert np.all(ts.cdc.points[:, 0] == 0.0)


@pytest.mark.parametrize("scenario", ["BI", "BIC", "RD"])
def test_dataset_round_trip(tmp_path, ac, scenario):
    spec, sol = ac
    b = default_budget("allen_cahn", 2).for_scenario(scenario)
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), scenario, b, NoiseSpec(0.1, seed=4))
    path = tmp_path / "d.csv"
    export_dataset(ts, path)
    back = import_dataset(path)
    for name in ("u", "phi", "ic", "bc"):
        for attr in ("points", "values", "sigma", "subdomain"):
            np.testing.assert_array_equal(getattr(getattr(back, name), attr), getattr(getattr(ts, name), attr))
    np.testing.assert_array_equal(back.cdc.points, ts.cdc.points)
    np.testing.assert_array_equal(back.cdc.sigma_avg, ts.cdc.sigma_avg)
    np.testing.assert_array_equal(back.cdc.sigma_flux, ts.cdc.sigma_flux)
    text = path.read_text()
    assert "\r" not in text
    assert text.splitlines()[1] == "category,subdomain,x,t,value,sigma"


def test_import_rejects_bad_sigma(tmp_path, ac):
    spec, sol = ac
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "RD", Budget(u=(2, 2)), NoiseSpec(0.0))
    path = tmp_path / "d.csv"
    export_dataset(ts, path)
    lines = path.read_text().splitlines()
    parts = lines[2].split(",")
    parts[-1] = "0.0"
    lines[2] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match="sigma"):
        import_dataset(path)


def test_import_rejects_schema(tmp_path, ac):
    spec, sol = ac
    ts = sample_training_set(sol, spec, DecompositionSpec.equal(2), "RD", Budget(u=(2, 2)), NoiseSpec(0.0))
    path = tmp_path / "d.csv"
    export_dataset(ts, path)
    path.write_text(path.read_text().replace("schema=1", "schema=7"))
    with pytest.raises(DatasetError, match="schema"):
        import_dataset(path)
    path.write_text("category,subdomain\n")
    with pytest.raises(DatasetError):
        import_dataset(path)
