import math

import numpy as np
import pytest
from scipy import integrate

from failcast.bayesnet import F_AND_S, F_I_S, F_ONLY, NetworkTarget, PriorConfig
from failcast.mcmc import (
    InitializationError, InsufficientChainsError, McmcConfig, Trace, UnknownParameterError,
    bulk_ess, diagnostics, posterior_mean, run_mh, split_rhat,
)

from conftest import make_dataset


def trace_of(**samples):
    return Trace(samples={k: np.asarray(v, float) for k, v in samples.items()},
                 acceptance_rate={})


def test_config_invariants():
    with pytest.raises(ValueError):
        McmcConfig(n_iterations=100, burn_in=100)
    with pytest.raises(ValueError):
        McmcConfig(n_chains=0)
    with pytest.raises(ValueError):
        McmcConfig(target_acceptance=1.0)


def test_flat_target_accepts_everything():
    cfg = McmcConfig(n_chains=2, n_iterations=400, burn_in=200)
    tr = run_mh(lambda v: 0.0, {"x": 0.0, "y": 1.0}, cfg)
    assert tr.acceptance_rate == {"x": 1.0, "y": 1.0}


def test_standard_normal_mean():
    cfg = McmcConfig(n_chains=2, n_iterations=50000, burn_in=5000, seed=4)
    tr = run_mh(lambda v: -0.5 * v["x"] ** 2, {"x": 0.5}, cfg)
    x = tr.pooled("x")
    se = x.std() / math.sqrt(tr.ess["x"])
    assert abs(x.mean()) < 3 * se
    assert abs(x.var() - 1) < 0.1


@pytest.mark.parametrize("thin", [1, 3, 7])
def test_retained_length(thin):
    cfg = McmcConfig(n_chains=3, n_iterations=500, burn_in=203, thin=thin)
    tr = run_mh(lambda v: -0.5 * v["x"] ** 2, {"x": 0.0}, cfg)
    assert tr.samples["x"].shape == (3, math.ceil((500 - 203) / thin))
    assert 0 <= tr.acceptance_rate["x"] <= 1


def test_deterministic():
    ds = make_dataset(seed=1)
    tg = NetworkTarget.from_dataset(ds, F_AND_S)
    cfg = McmcConfig(n_chains=2, n_iterations=600, burn_in=300, seed=8)
    a = run_mh(tg, tg.initial_states(8, 2), cfg)
    b = run_mh(tg, tg.initial_states(8, 2), cfg)
    for k in a.samples:
        assert np.array_equal(a.samples[k], b.samples[k])
    assert np.array_equal(a.latent_means["latent_i"], b.latent_means["latent_i"])


@pytest.mark.parametrize("mask", [F_ONLY, F_AND_S, F_I_S])
def test_compiled_sweeps_follow_the_reference_path(mask):
    ds = make_dataset(n=25, seed=2)
    tg = NetworkTarget.from_dataset(ds, mask)
    cfg = McmcConfig(n_chains=2, n_iterations=300, burn_in=150, seed=3)
    init = tg.initial_states(3, 2)
    fast = run_mh(tg, init, cfg)
    slow = run_mh(tg, init, cfg, compiled=False)
    for k in fast.samples:
        np.testing.assert_allclose(fast.samples[k], slow.samples[k], rtol=1e-10)


def test_samples_stay_inside_prior_support():
    priors = PriorConfig()
    ds = make_dataset(seed=3)
    tg = NetworkTarget.from_dataset(ds, F_I_S, priors)
    tr = run_mh(tg, tg.initial_states(0, 2), McmcConfig(n_chains=2, n_iterations=2000,
                                                         burn_in=1000))
    for name, (lo, hi) in priors.bounds().items():
        x = tr.samples[name]
        assert np.all((x > lo) & (x < hi)), name


def test_adapted_acceptance_near_target():
    ds = make_dataset(n=200, seed=4)
    tg = NetworkTarget.from_dataset(ds, F_I_S)
    tr = run_mh(tg, tg.initial_states(1, 2), McmcConfig(n_chains=2, n_iterations=6000,
                                                         burn_in=3000))
    for name, rate in tr.acceptance_rate.items():
        assert abs(rate - 0.3) < 0.15, (name, rate)


def test_detailed_balance_histogram():
    # Gumbel density: skewed, so a symmetric bias would show up
    logp = lambda v: -v["x"] - math.exp(-v["x"])
    cfg = McmcConfig(n_chains=1, n_iterations=110000, burn_in=10000, seed=12,
                     initial_scale=1.0)
    x = run_mh(logp, {"x": 0.0}, cfg).pooled("x")
    edges = np.linspace(-3, 8, 45)
    hist = np.histogram(x, edges)[0] / x.size
    exact = np.array([integrate.quad(lambda t: math.exp(-t - math.exp(-t)), a, b)[0]
                      for a, b in zip(edges[:-1], edges[1:])])
    assert 0.5 * np.abs(hist - exact).sum() < 0.05


def test_initialization_error_after_prior_retries():
    ds = make_dataset(n=5, seed=0)
    tg = NetworkTarget(-np.abs(ds.fail), None, None, F_ONLY)
    with pytest.raises(InitializationError):
        run_mh(tg, tg.initial_states(0, 2), McmcConfig(n_chains=2, n_iterations=10, burn_in=5))


def test_callable_target_without_prior_fails_to_initialize():
    with pytest.raises(InitializationError):
        run_mh(lambda v: -math.inf, {"x": 0.0}, McmcConfig(n_iterations=10, burn_in=5))


def test_posterior_mean_examples():
    assert posterior_mean(trace_of(a=np.full((2, 5), 7.0)), "a") == 7.0
    assert posterior_mean(trace_of(a=[[1, 3], [5, 7]]), "a") == 4.0
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 101))
    assert posterior_mean(trace_of(a=x), "a") == pytest.approx(x.sum() / x.size, rel=1e-12)
    with pytest.raises(UnknownParameterError):
        posterior_mean(trace_of(a=x), "b")


def test_rhat_conventions_and_extremes():
    assert split_rhat(np.full((2, 100), 3.0)) == 1.0
    rng = np.random.default_rng(1)
    assert split_rhat(rng.normal(size=(4, 2000))) < 1.05
    far = np.stack([rng.normal(0, 1, 500), rng.normal(100, 1, 500)])
    assert split_rhat(far) > 1.2


def test_diagnostics_need_two_chains():
    with pytest.raises(InsufficientChainsError):
        diagnostics(trace_of(a=np.zeros((1, 50))))
    with pytest.raises(InsufficientChainsError):
        split_rhat(np.zeros((1, 50)))


def test_ess_of_independent_and_correlated_draws():
    rng = np.random.default_rng(2)
    iid = rng.normal(size=(4, 1000))
    assert 3000 < bulk_ess(iid) < 5000
    ar = np.zeros((4, 1000))
    for t in range(1, 1000):
        ar[:, t] = 0.9 * ar[:, t - 1] + rng.normal(size=4)
    # AR(1) with phi = 0.9 has tau = (1 + phi) / (1 - phi) = 19
    assert 4000 / 19 / 2 < bulk_ess(ar) < 4000 / 19 * 2


def test_trace_csv(tmp_path):
    tr = run_mh(lambda v: -0.5 * v["x"] ** 2, {"x": 0.0},
                McmcConfig(n_chains=2, n_iterations=20, burn_in=10))
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "chain,draw,x" and len(lines) == 1 + 2 * 10
