import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from failcast.bayesnet import WeibullParams
from failcast.domain import Window, WindowKind
from failcast.forecast import (
    FleetState, expected_failures, failure_probabilities, realized_failures, simulate_forward,
    weibull_cdf,
)
from failcast.simulator import FleetConfig, simulate_fleet

NEXT_YEAR = Window.from_dates("2013-01-01", "2013-12-31", WindowKind.FORECAST)


def fleet_of(n, rate=50.0, alive=None, seed=0):
    rng = np.random.default_rng(seed)
    start = NEXT_YEAR.start
    mfg = start - rng.uniform(0, 1000, n)
    alive = np.ones(n, bool) if alive is None else alive
    return FleetState(np.arange(1, n + 1), mfg, np.full(n, rate), {1: alive})


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.5, 8), beta=st.floats(1e3, 1e6), t=st.floats(0, 2e6))
def test_cdf_matches_scipy(alpha, beta, t):
    ref = stats.weibull_min.cdf(t, alpha, scale=beta)
    assert weibull_cdf(WeibullParams(alpha, beta), t) == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_cdf_rejects_negative_cycles():
    with pytest.raises(ValueError):
        weibull_cdf(WeibullParams(2, 1), -1.0)


@settings(max_examples=80, deadline=None)
@given(alpha=st.floats(0.5, 8), beta=st.floats(1e4, 2e5),
       c3=st.floats(0, 4e5), width=st.floats(0, 1e5))
def test_probabilities_are_ordered_and_bounded(alpha, beta, c3, width):
    p = WeibullParams(alpha, beta)
    u = failure_probabilities(p, [c3], [c3 + width], "unconditional")
    c = failure_probabilities(p, [c3], [c3 + width], "conditional")
    assert np.all((0 <= u) & (u <= 1)) and np.all((0 <= c) & (c <= 1))
    assert np.all(c >= u - 1e-15)


def test_conditional_equals_unconditional_for_new_units():
    p = WeibullParams(3, 5e4)
    c4 = np.array([1e4, 5e4, 2e5])
    a = failure_probabilities(p, np.zeros(3), c4, "conditional")
    b = failure_probabilities(p, np.zeros(3), c4, "unconditional")
    np.testing.assert_allclose(a, b, rtol=1e-15)
    np.testing.assert_allclose(a, stats.weibull_min.cdf(c4, 3, scale=5e4), rtol=1e-12)


def test_worn_out_units_fail_for_sure():
    p = WeibullParams(8, 1e4)
    assert failure_probabilities(p, [1e6], [1.1e6], "conditional")[0] == 1.0
    assert failure_probabilities(p, [1e6], [1.1e6], "unconditional")[0] == 0.0


def test_unknown_mode():
    with pytest.raises(ValueError):
        failure_probabilities(WeibullParams(2, 1), [0], [1], "marginal")


def test_forecast_sums_over_survivors():
    alive = np.arange(10) % 2 == 0
    fleet = fleet_of(10, alive=alive)
    params = {1: WeibullParams(2.0, 4e4)}
    fc = expected_failures(params, fleet, NEXT_YEAR)
    c3 = fleet.accrued(NEXT_YEAR.start)
    c4 = fleet.accrued(NEXT_YEAR.end + 1)
    # oracle: survival ratio written independently with scipy
    S = lambda t: stats.weibull_min.sf(t, 2.0, scale=4e4)
    expect = sum(1 - S(c4[k]) / S(c3[k]) for k in range(10) if alive[k])
    assert fc.per_part[1] == pytest.approx(expect, rel=1e-10)
    assert fc.total == fc.per_part[1]
    assert 0 < fc.variance[1] <= fc.per_part[1]


def test_forecast_requires_forecast_window_and_params():
    fleet = fleet_of(3)
    with pytest.raises(ValueError):
        expected_failures({1: WeibullParams(2, 1e4)}, fleet, Window(0, 10))
    with pytest.raises(KeyError):
        expected_failures({2: WeibullParams(2, 1e4)}, fleet, NEXT_YEAR)


def test_fleet_validation():
    with pytest.raises(ValueError):
        FleetState(np.arange(3), np.zeros(3), np.full(3, -1.0), {})
    with pytest.raises(ValueError):
        FleetState(np.arange(3), np.zeros(3), np.ones(3), {1: np.ones(2, bool)})


def test_forward_simulation_agrees_with_expectation():
    fleet = fleet_of(2000, seed=3)
    params = {1: WeibullParams(3.0, 6e4)}
    fc = expected_failures(params, fleet, NEXT_YEAR)
    sims = simulate_forward(params, fleet, NEXT_YEAR, 400, np.random.default_rng(1))[1]
    se = np.sqrt(fc.variance[1] / sims.size)
    assert abs(sims.mean() - fc.per_part[1]) < 3 * se
    assert sims.var() == pytest.approx(fc.variance[1], rel=0.2)


def test_fleet_from_simulated_events_and_realized_counts():
    cfg = FleetConfig(n_units=150, n_parts=2, true_params=((3, 40000), (4, 90000)), seed=5)
    ev, truth = simulate_fleet(cfg)
    fleet = FleetState.from_events(ev, [1, 2], NEXT_YEAR.start)
    for j in (1, 2):
        failed = set(ev.failures.loc[ev.failures["part"] == j, "unit"])
        assert set(fleet.units[~fleet.survivors[j]]) == failed
    got = realized_failures(truth.failures, fleet, NEXT_YEAR)
    tf = truth.failures
    for j in (1, 2):
        inside = tf[(tf["part"] == j) & (tf["true_fail_time"] >= NEXT_YEAR.start)
                    & (tf["true_fail_time"] <= NEXT_YEAR.end)]
        assert got[j] == len(inside)  # the in-window failures all belong to survivors
