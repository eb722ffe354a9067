import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpinn import NetworkArch, forward_batch, init_params
from dpinn.data import Budget, DecompositionSpec, NoiseSpec, sample_training_set
from dpinn.hmc import (
    Chain,
    HmcConfig,
    SamplerError,
    leapfrog,
    load_chain,
    network_samples,
    predictive_samples,
    predictive_summary,
    run_chain,
    save_chain,
)
from dpinn.oracle import solve_reference
from dpinn.pde import PdeSpec
from dpinn.posterior import build_posterior


class Gaussian:
    """Zero-mean Gaussian with the given covariance."""

    def __init__(self, cov):
        self.prec = np.linalg.inv(np.atleast_2d(cov))

    def logp_and_grad(self, q):
        g = -self.prec @ q
        return 0.5 * float(q @ g), g


class Broken:
    def logp_and_grad(self, q):
        if np.abs(q).max() > 0.5:
            return float("nan"), np.full_like(q, np.nan)
        return 0.0, np.zeros_like(q)


def standard_cfg(**kw):
    # default step size, L, burn-in, adaptation and jitter; 2000 sampling iterations
    return HmcConfig(n_samples=2000, **kw)


@pytest.mark.parametrize("dim", [1, 2])
def test_standard_gaussian(dim):
    t0 = time.perf_counter()
    chain = run_chain(Gaussian(np.eye(dim)), standard_cfg(seed=dim), np.zeros(dim))
    s = chain.samples
    assert np.all(np.abs(s.mean(0)) < 0.1)
    assert np.all(np.abs(s.var(0) - 1) < 0.15)
    if dim == 2:
        assert abs(np.corrcoef(s.T)[0, 1]) < 0.1
    assert chain.divergence_count == 0
    assert time.perf_counter() - t0 < 30


def test_harmonic_acceptance():
    chain = run_chain(Gaussian(np.eye(1)), HmcConfig(step_size=0.01, n_leapfrog=50, burn_in=0,
                                                      n_samples=1000, adapt=False), np.zeros(1))
    assert chain.accept_rate > 0.9


def test_stationarity_from_target_draw():
    rng = np.random.default_rng(0)
    # 2000 samples per half puts the 0.1 tolerance near three standard errors
    chain = run_chain(Gaussian(np.eye(2)), HmcConfig(n_samples=4000, seed=3), rng.standard_normal(2))
    half = len(chain) // 2
    assert np.all(np.abs(chain.samples[:half].mean(0) - chain.samples[half:].mean(0)) < 0.1)


def test_correlated_gaussian():
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    chain = run_chain(Gaussian(cov), standard_cfg(seed=4), np.zeros(2))
    assert abs(np.corrcoef(chain.samples.T)[0, 1] - 0.8) < 0.1


def test_leapfrog_energy_and_reversibility():
    target = Gaussian(np.eye(3))
    grad = lambda q: target.logp_and_grad(q)[1]  # noqa: E731
    q0, p0 = np.array([0.3, -1.2, 0.7]), np.array([0.5, 0.1, -0.9])
    q1, p1 = leapfrog(q0, p0, 0.01, 50, grad)
    H = lambda q, p: 0.5 * q @ q + 0.5 * p @ p  # noqa: E731
    assert abs(H(q1, p1) - H(q0, p0)) < 1e-4
    q2, p2 = leapfrog(q1, -p1, 0.01, 50, grad)
    np.testing.assert_allclose(q2, q0, atol=1e-12)
    np.testing.assert_allclose(-p2, p0, atol=1e-12)


def test_leapfrog_exact_for_free_particle():
    q, p = leapfrog(np.zeros(2), np.array([1.0, -2.0]), 0.1, 10, lambda q: np.zeros(2))
    np.testing.assert_allclose(q, [1.0, -2.0])
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_leapfrog_non_finite():
    with pytest.raises(FloatingPointError):
        leapfrog(np.ones(1), np.ones(1), 1.0, 5, lambda q: np.exp(np.exp(np.abs(q) * 50)))


def test_config_validation():
    with pytest.raises(ValueError):
        HmcConfig(step_size=0)
    with pytest.raises(ValueError):
        HmcConfig(n_leapfrog=0)
    with pytest.raises(ValueError):
        HmcConfig(target_accept=1.0)
    with pytest.raises(ValueError):
        HmcConfig(jitter=1.0)


def test_deterministic():
    cfg = HmcConfig(burn_in=50, n_samples=100, seed=7)
    a = run_chain(Gaussian(np.eye(2)), cfg, np.zeros(2))
    b = run_chain(Gaussian(np.eye(2)), cfg, np.zeros(2))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.step_size == b.step_size


def test_non_finite_initial_state():
    with pytest.raises(ValueError):
        run_chain(Gaussian(np.eye(1)), HmcConfig(), np.array([np.nan]))
    with pytest.raises(SamplerError):
        run_chain(Broken(), HmcConfig(), np.ones(1))


def test_divergence_abort():
    cfg = HmcConfig(step_size=1.0, n_leapfrog=5, burn_in=0, n_samples=200, adapt=False, jitter=0.0)
    with pytest.raises(SamplerError, match="consecutive"):
        run_chain(Broken(), cfg, np.zeros(2))


def test_divergences_counted_and_rejected():
    # steps far past the stability limit diverge but the chain never moves to a bad state
    cfg = HmcConfig(step_size=2.5, n_leapfrog=50, burn_in=0, n_samples=50, adapt=False, jitter=0.0)
    try:
        chain = run_chain(Gaussian(np.eye(1) * 1e-0), cfg, np.zeros(1))
    except SamplerError:
        return
    assert chain.divergence_count > 0
    assert np.all(np.isfinite(chain.samples))


def test_resume_continues_stream(tmp_path):
    target = Gaussian(np.eye(2))
    full = run_chain(target, HmcConfig(burn_in=20, n_samples=60, seed=5), np.zeros(2))
    first = run_chain(target, HmcConfig(burn_in=20, n_samples=30, seed=5), np.zeros(2))
    save_chain(first, tmp_path / "c.csv", header={"seed": 5})
    loaded, meta = load_chain(tmp_path / "c.csv")
    assert meta["seed"] == 5
    rest = run_chain(target, HmcConfig(burn_in=20, n_samples=30, seed=5), np.zeros(2), resume=loaded)
    np.testing.assert_array_equal(np.vstack([first.samples, rest.samples]), full.samples)


def test_save_load_round_trip(tmp_path):
    chain = run_chain(Gaussian(np.eye(3)), HmcConfig(burn_in=10, n_samples=20, seed=1), np.zeros(3))
    save_chain(chain, tmp_path / "c.csv")
    back, meta = load_chain(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.samples, chain.samples)
    np.testing.assert_array_equal(back.log_probs, chain.log_probs)
    assert back.step_size == chain.step_size and back.accept_rate == chain.accept_rate
    assert meta["dim"] == 3 and meta["n_samples"] == 20
    (tmp_path / "bad.csv").write_text("log_prob,s0\n0.0,1.0\n")
    with pytest.raises(ValueError):
        load_chain(tmp_path / "bad.csv")


# -- predictive summaries ----------------------------------------------------------

ARCH = NetworkArch(2, 1, 4)


@pytest.fixture(scope="module")
def spec_pair():
    pde = PdeSpec("fokker_planck_1d")
    sol = solve_reference(pde, nx=41, nt=21)
    out = {}
    for mode in ("forward", "inverse_none", "inverse_hard"):
        ts = sample_training_set(sol, pde, DecompositionSpec.equal(2), "BI",
                                 Budget(bc=(3, 3), ic=(3, 3), phi=(3, 3), cdc=(3,)), NoiseSpec(0.0))
        out[mode] = build_posterior(pde, ts, ARCH, [init_params(ARCH, 1), init_params(ARCH, 2)], mode=mode)
    return out


def make_chain(samples):
    samples = np.asarray(samples, float)
    return Chain(samples, 1.0, 0, 0.01, np.zeros(len(samples)))


def test_identical_samples_zero_std(spec_pair):
    post = spec_pair["forward"]
    s = post.initial_state()
    summ = predictive_summary(make_chain([s, s, s]), post, [[-0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(summ.std, 0.0)
    assert summ.lambda_samples is None


def test_two_sample_statistics(spec_pair):
    post = spec_pair["forward"]
    a = post.initial_state()
    b = a.copy()
    b[ARCH.n_params - 1] += 0.4  # output bias of subdomain 0 network
    summ = predictive_summary(make_chain([a, b]), post, [[-0.5, 0.3], [0.5, 0.3]])
    ua = float(forward_batch(ARCH, a[: ARCH.n_params], np.array([[-0.5, 0.3]]))[0])
    assert summ.mean[0] == pytest.approx(ua + 0.2, abs=1e-14)
    assert summ.std[0] == pytest.approx(0.2, abs=1e-14)
    assert summ.std[1] == 0.0


def test_points_use_their_subdomain_network(spec_pair):
    post = spec_pair["forward"]
    s = post.initial_state()
    chain = make_chain([s])
    pts = np.array([[-0.7, 0.1], [0.2, 0.9]])
    out = predictive_samples(chain, post, pts)
    assert out[0, 0] == network_samples(chain, post, 0, pts[:1])[0, 0]
    assert out[0, 1] == network_samples(chain, post, 1, pts[1:])[0, 0]


def test_outside_domain_rejected(spec_pair):
    post = spec_pair["forward"]
    with pytest.raises(ValueError):
        predictive_summary(make_chain([post.initial_state()]), post, [[1.5, 0.1]])
    with pytest.raises(ValueError):
        predictive_summary(make_chain(np.zeros((0, post.state_size))), post, [[0.1, 0.1]])


@given(seed=st.integers(0, 500))
def test_summary_matches_brute_force(spec_pair, seed):
    post = spec_pair["inverse_none"]
    rng = np.random.default_rng(seed)
    samples = rng.normal(0, 0.5, (4, post.state_size))
    pts = np.column_stack([rng.uniform(-1, 1, 5), rng.uniform(0, 1, 5)])
    chain = make_chain(samples)
    summ = predictive_summary(chain, post, pts)
    outs = predictive_samples(chain, post, pts)
    p = ARCH.n_params
    for i, s in enumerate(samples):
        for j, pt in enumerate(pts):
            q = int(pt[0] >= 0.0)
            single = float(forward_batch(ARCH, s[q * p : (q + 1) * p], pt[None])[0])
            assert outs[i, j] == pytest.approx(single, rel=1e-13, abs=1e-15)
    for j in range(len(pts)):
        col = [float(v) for v in outs[:, j]]
        m = 0.0
        for v in col:
            m += v
        m /= len(col)
        ss = 0.0
        for v in col:
            ss += (v - m) ** 2
        assert summ.mean[j] == m
        assert summ.std[j] == math.sqrt(ss / len(col))
    np.testing.assert_allclose(summ.lambda_samples, np.exp(samples[:, -2:]), rtol=1e-15)


def test_hard_lambda_summary_is_scalar(spec_pair):
    post = spec_pair["inverse_hard"]
    samples = np.tile(post.initial_state(), (3, 1))
    samples[:, -1] = [math.log(0.1), math.log(0.2), math.log(0.3)]
    summ = predictive_summary(make_chain(samples), post, [[0.0, 0.5]])
    assert summ.lambda_mean.shape == (1,)
    assert summ.lambda_mean[0] == pytest.approx(0.2)
    assert summ.lambda_std[0] == pytest.approx(math.sqrt(2 / 300))
