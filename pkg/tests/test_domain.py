import numpy as np
import pandas as pd
import pytest

from failcast.domain import (
    DisjointnessError, DtcOccurrenceRecord, EventLog, FailureRecord, InconsistentEventsError,
    InsufficientDataError, MissingAlignmentError, OrderingViolationError, PartDataset,
    ServiceObservationRecord, Window, WindowKind, assemble_sets, iso, to_day, validate_ordering,
)

WIN = Window.from_dates("2010-01-01", "2012-12-31")


def log(fails=(), occ=(), obs=()):
    return EventLog.from_records(
        [FailureRecord(*r) for r in fails],
        [DtcOccurrenceRecord(*r) for r in occ],
        [ServiceObservationRecord(*r) for r in obs],
    )


DAY = to_day("2011-06-01")


def test_day_roundtrip():
    assert iso(to_day("2012-02-29")) == "2012-02-29"
    assert to_day("1970-01-02") == 1.0


def test_window_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        Window(10.0, 5.0)


def test_window_end_is_inclusive():
    assert WIN.contains(WIN.end) and not WIN.contains(WIN.end + 1)


def test_records_validate_cycles():
    with pytest.raises(ValueError):
        FailureRecord(1, 1, 0.0, DAY)
    with pytest.raises(ValueError):
        DtcOccurrenceRecord(1, 1, 1, -1.0, DAY)


def test_single_consistent_triple():
    ds = assemble_sets(log([(1, 1, 70000, DAY)], [(1, 1, 1, 56000, DAY - 30)],
                           [(1, 1, 1, 63000, DAY - 10)]), WIN, 1, 1)
    assert ds.n == 1 and ds.n_prime == 0
    assert list(ds.fail) == [70000] and list(ds.ind) == [56000] and list(ds.serv) == [63000]


def test_primed_unit_needs_occurrence_and_observation():
    events = log(
        [(1, 1, 70000, DAY)],
        [(1, 1, 1, 56000, DAY - 30), (2, 1, 1, 56000, DAY), (3, 1, 1, 40000, DAY)],
        [(1, 1, 1, 63000, DAY - 10), (2, 1, 1, 63000, DAY + 5)],
    )
    ds = assemble_sets(events, WIN, 1, 1)
    assert ds.n == 1 and ds.n_prime == 1
    assert list(ds.future_units) == [2]
    assert list(ds.ind_prime) == [56000] and list(ds.serv_prime) == [63000]


def test_failures_outside_window_are_ignored():
    events = log([(1, 1, 70000, DAY), (2, 1, 90000, WIN.end + 3)],
                 [(1, 1, 1, 5e4, DAY), (2, 1, 1, 6e4, DAY)],
                 [(1, 1, 1, 6e4, DAY), (2, 1, 1, 7e4, DAY)])
    ds = assemble_sets(events, WIN, 1, 1)
    assert list(ds.failed_units) == [1] and list(ds.future_units) == [2]


def test_first_record_wins_with_ties_broken_by_time_then_order():
    events = log([(1, 1, 70000, DAY)],
                 [(1, 1, 1, 50000, DAY), (1, 1, 1, 50000, DAY - 5), (1, 1, 1, 52000, DAY - 50)],
                 [(1, 1, 1, 60000, DAY)])
    ds = assemble_sets(events, WIN, 1, 1)
    assert ds.ind[0] == 50000


def test_missing_alignment_is_an_error():
    with pytest.raises(MissingAlignmentError):
        assemble_sets(log([(1, 1, 70000, DAY)], [(1, 1, 1, 5e4, DAY)], []), WIN, 1, 1)


def test_ordering_violation_is_an_error():
    with pytest.raises(OrderingViolationError):
        assemble_sets(log([(1, 1, 70000, DAY)], [(1, 1, 1, 65000, DAY)],
                          [(1, 1, 1, 60000, DAY)]), WIN, 1, 1)


def test_no_failures_is_insufficient():
    with pytest.raises(InsufficientDataError):
        assemble_sets(log([], [(1, 1, 1, 5e4, DAY)], [(1, 1, 1, 6e4, DAY)]), WIN, 1, 1)


def test_duplicate_failures_are_inconsistent():
    with pytest.raises(InconsistentEventsError):
        assemble_sets(log([(1, 1, 70000, DAY), (1, 1, 71000, DAY + 2)],
                          [(1, 1, 1, 5e4, DAY)], [(1, 1, 1, 6e4, DAY)]), WIN, 1, 1)


def test_forecast_window_is_rejected():
    fw = Window.from_dates("2013-01-01", "2013-12-31", WindowKind.FORECAST)
    with pytest.raises(ValueError):
        assemble_sets(log([(1, 1, 70000, DAY)]), fw, 1, 1)


@pytest.mark.parametrize("triple,valid", [((10, 10, 10), True), ((20, 15, 30), False)])
def test_validate_ordering(triple, valid):
    d, s, p = triple
    ds = PartDataset(1, 1, [1], [p], [d], [s])
    report = validate_ordering(ds)
    assert report.valid is valid
    if not valid:
        assert report.violations == (0,)


def test_dataset_length_and_disjointness_checks():
    with pytest.raises(ValueError):
        PartDataset(1, 1, [1, 2], [1.0], [1.0], [1.0])
    with pytest.raises(DisjointnessError):
        PartDataset(1, 1, [1], [3.0], [1.0], [2.0], future_units=[1], ind_prime=[1.0],
                    serv_prime=[2.0])


def test_simulated_sets_match_ground_truth(fleet42):
    cfg, events, truth = fleet42
    for part, dtc in [(1, 1), (2, 3), (7, 4)]:
        ds = assemble_sets(events, cfg.observation_window, part, dtc)
        assert validate_ordering(ds).valid
        # every future unit really fails after the window
        tf = truth.failure_cycles(part, ds.future_units)
        times = truth.failures.set_index(["unit", "part"]).loc[
            [(u, part) for u in ds.future_units], "true_fail_time"]
        assert np.all(times.to_numpy() > cfg.observation_window.end)
        assert np.all(tf >= ds.serv_prime)
        # |fail| + |future| equals the units whose DTC was seen inside the window
        g = truth.dtcs
        seen = g[(g.part == part) & (g.dtc == dtc)
                 & cfg.observation_window.contains(g.occurrence_time)
                 & cfg.observation_window.contains(g.observation_time.fillna(-np.inf))]
        assert ds.n + ds.n_prime == len(seen)


def test_assembly_is_deterministic(fleet42):
    cfg, events, _ = fleet42
    a = assemble_sets(events, cfg.observation_window, 3, 2)
    b = assemble_sets(events, cfg.observation_window, 3, 2)
    for k in ("fail", "ind", "serv", "ind_prime", "serv_prime", "future_units"):
        assert np.array_equal(getattr(a, k), getattr(b, k))


def test_accrued_cycles_at_window_end(fleet42):
    cfg, events, _ = fleet42
    ds = assemble_sets(events, cfg.observation_window, 2, 1)
    assert ds.future_accrued is not None
    assert np.all(ds.future_accrued >= ds.serv_prime)
