import math

import numpy as np
import pytest
from scipy import stats

from failcast.domain import assemble_sets, validate_ordering
from failcast.forecast import weibull_cdf
from failcast.bayesnet import WeibullParams
from failcast.simulator import FleetConfig, sample_weibull_inverse, simulate_fleet


def test_inverse_at_zero():
    assert sample_weibull_inverse(1.0, 1.0, 0.0) == 0.0


def test_inverse_at_scale_for_exponential():
    assert sample_weibull_inverse(1.0, 1.0, 1 - math.exp(-1)) == pytest.approx(1.0, rel=1e-15)


def test_inverse_median_recovers_u():
    x = sample_weibull_inverse(2.0, 100000.0, 0.5)
    assert x == pytest.approx(100000 * math.sqrt(math.log(2)), rel=1e-14)
    assert abs(x - 83255.5) < 0.05
    assert abs(weibull_cdf(WeibullParams(2.0, 100000.0), x) - 0.5) < 1e-12


@pytest.mark.parametrize("u", [-0.1, 1.0, 1.5])
def test_inverse_rejects_u_outside_unit_interval(u):
    with pytest.raises(ValueError):
        sample_weibull_inverse(2.0, 1.0, u)


def test_zero_units_rejected():
    with pytest.raises(ValueError):
        FleetConfig(n_units=0)


def test_ground_truth_shape(fleet42):
    cfg, events, truth = fleet42
    assert len(truth.failures) == 1000 * 9
    assert len(truth.dtcs) == 1000 * 9 * 4
    assert cfg.names[1] == "E2P"


def test_reproducible():
    a, ta = simulate_fleet(FleetConfig(n_units=150, seed=9))
    b, tb = simulate_fleet(FleetConfig(n_units=150, seed=9))
    for x, y in [(a.failures, b.failures), (a.occurrences, b.occurrences),
                 (a.observations, b.observations), (ta.dtcs, tb.dtcs)]:
        assert x.equals(y)


def test_noiseless_occurrence_is_exact():
    cfg = FleetConfig(n_units=100, occurrence_noise=0.0, dtc_gap_fractions=0.25, seed=1)
    _, truth = simulate_fleet(cfg)
    f = truth.failures.set_index(["unit", "part"])["true_fail_cycles"]
    d = truth.dtcs.set_index(["unit", "part"])["occurrence_cycles"]
    assert np.allclose(d.to_numpy(), 0.75 * f.loc[d.index].to_numpy(), rtol=1e-15, atol=0)


def test_network_observation_model_without_noise():
    cfg = FleetConfig(n_units=100, observation_model="network", observation_delay_fractions=0.4,
                      seed=2)
    _, truth = simulate_fleet(cfg)
    g = truth.dtcs.dropna(subset=["observation_cycles"])
    f = truth.failures.set_index(["unit", "part"]).loc[
        list(zip(g.unit, g.part)), "true_fail_cycles"].to_numpy()
    d = g.occurrence_cycles.to_numpy()
    assert np.allclose(g.observation_cycles.to_numpy(), d + 0.4 * (f - d), rtol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_event_log_orders_every_triple(seed):
    cfg = FleetConfig(n_units=300, seed=seed)
    events, truth = simulate_fleet(cfg)
    for j in range(1, 10):
        for k in range(1, 5):
            ds = assemble_sets(events, cfg.observation_window, j, k)
            assert validate_ordering(ds).valid


def test_observations_never_precede_occurrences(fleet42):
    _, _, truth = fleet42
    g = truth.dtcs.dropna(subset=["observation_cycles"])
    assert np.all(g.observation_cycles >= g.occurrence_cycles)
    assert np.all(g.observation_time >= g.occurrence_time)


def test_six_abundant_and_three_sparse_parts(fleet42):
    cfg, events, _ = fleet42
    counts = events.failures.groupby("part").size()
    sparse = [cfg.names[j - 1] for j in counts.index if counts[j] < 30]
    assert sorted(sparse) == ["E2P", "T1P", "T2P"]
    assert (counts >= 200).sum() == 6


def test_failure_cycles_follow_the_weibull():
    crit = 1.63 / math.sqrt(1000)  # asymptotic 1% critical value
    passed = np.zeros(9, dtype=int)
    for seed in range(100):
        cfg = FleetConfig(seed=seed)
        _, truth = simulate_fleet(cfg)
        for j, (a, b) in enumerate(cfg.true_params):
            f = truth.failures.loc[truth.failures.part == j + 1, "true_fail_cycles"]
            d = stats.kstest(f, stats.weibull_min(a, scale=b).cdf).statistic
            passed[j] += d < crit
    assert np.all(passed >= 95), passed
