"""Event records and per-(part, DTC) dataset assembly.

Cycle counts (miles for vehicles) are the model quantities; calendar time is
only used to decide whether a record falls inside a window.  Times are
expressed as days since 1970-01-01.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

EPOCH = _dt.date(1970, 1, 1)


class DataError(ValueError):
    """Raised when event data breaks an assumption of the failure model."""


class MissingAlignmentError(DataError):
    pass


class OrderingViolationError(DataError):
    pass


class InconsistentEventsError(DataError):
    pass


class DisjointnessError(DataError):
    """A unit appears both as an observed failure and as a predicted one."""


class InsufficientDataError(DataError):
    pass


def to_day(date: str | _dt.date) -> float:
    """Days since the epoch for an ISO date string or a ``date``."""
    if isinstance(date, str):
        date = _dt.date.fromisoformat(date)
    return float((date - EPOCH).days)


def from_day(day: float) -> _dt.date:
    return EPOCH + _dt.timedelta(days=int(np.floor(day)))


def iso(day: float) -> str:
    return from_day(day).isoformat()


class WindowKind(str, Enum):
    OBSERVATION = "observation"
    FORECAST = "forecast"


@dataclass(frozen=True)
class Window:
    """Closed interval of calendar days ``[start, end]``."""

    start: float
    end: float
    kind: WindowKind = WindowKind.OBSERVATION

    def __post_init__(self):
        if not (np.isfinite(self.start) and np.isfinite(self.end)):
            raise ValueError("window bounds must be finite")
        if not self.start < self.end:
            raise ValueError(f"window start {self.start} must precede end {self.end}")
        object.__setattr__(self, "kind", WindowKind(self.kind))

    @classmethod
    def from_dates(cls, start, end, kind=WindowKind.OBSERVATION) -> "Window":
        return cls(to_day(start), to_day(end), kind)

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.start) & (t <= self.end)


@dataclass(frozen=True)
class FailureRecord:
    unit: int
    part: int
    cycles: float
    time: float

    def __post_init__(self):
        if not (np.isfinite(self.cycles) and self.cycles > 0):
            raise ValueError(f"failure cycles must be positive, got {self.cycles}")


@dataclass(frozen=True)
class DtcOccurrenceRecord:
    unit: int
    part: int
    dtc: int
    cycles: float
    time: float

    def __post_init__(self):
        if not (np.isfinite(self.cycles) and self.cycles >= 0):
            raise ValueError(f"occurrence cycles must be non-negative, got {self.cycles}")


@dataclass(frozen=True)
class ServiceObservationRecord:
    unit: int
    part: int
    dtc: int
    cycles: float
    time: float

    def __post_init__(self):
        if not (np.isfinite(self.cycles) and self.cycles >= 0):
            raise ValueError(f"observation cycles must be non-negative, got {self.cycles}")


FAILURE_COLUMNS = ["unit", "part", "cycles", "time"]
DTC_COLUMNS = ["unit", "part", "dtc", "cycles", "time"]
UNIT_COLUMNS = ["unit", "manufacture_time", "accrual_rate"]


def _frame(rows, columns) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=columns)
    for col in columns:
        if col in ("unit", "part", "dtc"):
            df[col] = df[col].astype(np.int64)
        else:
            df[col] = df[col].astype(float)
    return df.reset_index(drop=True)


@dataclass
class EventLog:
    """Raw failure, DTC occurrence and service observation tables.

    ``units`` is optional; when present it carries each unit's manufacture
    time and cycle accrual rate (cycles per day), which lets assembly report
    how many cycles the unit had accrued at the end of the window.
    """

    failures: pd.DataFrame
    occurrences: pd.DataFrame
    observations: pd.DataFrame
    units: Optional[pd.DataFrame] = None

    def __post_init__(self):
        self.failures = _frame(self.failures, FAILURE_COLUMNS)
        self.occurrences = _frame(self.occurrences, DTC_COLUMNS)
        self.observations = _frame(self.observations, DTC_COLUMNS)
        if self.units is not None:
            self.units = _frame(self.units, UNIT_COLUMNS)

    @classmethod
    def from_records(
        cls,
        failures: Iterable[FailureRecord] = (),
        occurrences: Iterable[DtcOccurrenceRecord] = (),
        observations: Iterable[ServiceObservationRecord] = (),
        units: Optional[pd.DataFrame] = None,
    ) -> "EventLog":
        def rows(records, cols):
            return [[getattr(r, c) for c in cols] for r in records]

        return cls(
            rows(failures, FAILURE_COLUMNS),
            rows(occurrences, DTC_COLUMNS),
            rows(observations, DTC_COLUMNS),
            units,
        )

    def quantized(self, digits: int = 3) -> "EventLog":
        """Copy with cycle columns rounded the way the CSV writer rounds them."""
        tabs = []
        for df in (self.failures, self.occurrences, self.observations):
            df = df.copy()
            df["cycles"] = df["cycles"].round(digits)
            tabs.append(df)
        return EventLog(*tabs, units=None if self.units is None else self.units.copy())

    @property
    def parts(self) -> list[int]:
        return sorted(set(self.failures["part"]) | set(self.occurrences["part"]))

    def dtcs(self, part: int) -> list[int]:
        occ = self.occurrences
        obs = self.observations
        return sorted(
            set(occ.loc[occ["part"] == part, "dtc"]) | set(obs.loc[obs["part"] == part, "dtc"])
        )

    def accrued_cycles(self, units: Sequence[int], t: float) -> Optional[np.ndarray]:
        if self.units is None:
            return None
        table = self.units.set_index("unit")
        missing = set(units) - set(table.index)
        if missing:
            return None
        sub = table.loc[list(units)]
        age = np.maximum(t - sub["manufacture_time"].to_numpy(), 0.0)
        return age * sub["accrual_rate"].to_numpy()


@dataclass(frozen=True)
class PartDataset:
    """Aligned failure / occurrence / observation cycles for one (part, DTC).

    ``fail``, ``ind`` and ``serv`` are aligned with ``failed_units``;
    ``ind_prime`` and ``serv_prime`` with ``future_units`` (units whose DTC
    was seen inside the window but whose part had not failed by its end).
    """

    part: int
    dtc: int
    failed_units: np.ndarray
    fail: np.ndarray
    ind: np.ndarray
    serv: np.ndarray
    future_units: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    ind_prime: np.ndarray = field(default_factory=lambda: np.zeros(0))
    serv_prime: np.ndarray = field(default_factory=lambda: np.zeros(0))
    future_accrued: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("fail", "ind", "serv", "ind_prime", "serv_prime"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("failed_units", "future_units"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.future_accrued is not None:
            object.__setattr__(self, "future_accrued", np.asarray(self.future_accrued, float))
        n = len(self.failed_units)
        if not (len(self.fail) == len(self.ind) == len(self.serv) == n):
            raise ValueError("fail, ind, serv and failed_units must have equal length")
        n_prime = len(self.future_units)
        if not (len(self.ind_prime) == len(self.serv_prime) == n_prime):
            raise ValueError("ind_prime, serv_prime and future_units must have equal length")
        if self.future_accrued is not None and len(self.future_accrued) != n_prime:
            raise ValueError("future_accrued must align with future_units")
        if np.intersect1d(self.failed_units, self.future_units).size:
            raise DisjointnessError("a unit cannot be both failed and future for the same part")

    @property
    def n(self) -> int:
        return len(self.fail)

    @property
    def n_prime(self) -> int:
        return len(self.serv_prime)


@dataclass(frozen=True)
class ValidationReport:
    """Indices whose triples (or primed pairs) break ``d <= s <= p``."""

    violations: tuple[int, ...] = ()
    prime_violations: tuple[int, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations and not self.prime_violations

    def __bool__(self):
        return self.valid


def validate_ordering(ds: PartDataset) -> ValidationReport:
    bad = ~((ds.ind <= ds.serv) & (ds.serv <= ds.fail))
    bad_prime = ~(ds.ind_prime <= ds.serv_prime)
    return ValidationReport(
        tuple(int(i) for i in np.flatnonzero(bad)),
        tuple(int(i) for i in np.flatnonzero(bad_prime)),
    )


def _first_per_unit(df: pd.DataFrame) -> pd.DataFrame:
    # earliest cycles, then earliest time, then lowest record index
    df = df.assign(_row=np.arange(len(df)))
    df = df.sort_values(["unit", "cycles", "time", "_row"], kind="mergesort")
    return df.drop_duplicates("unit", keep="first").set_index("unit")


def assemble_sets(events: EventLog, window: Window, part: int, dtc: int) -> PartDataset:
    """Build the aligned datasets for ``(part, dtc)`` over an observation window."""
    if window.kind is not WindowKind.OBSERVATION:
        raise ValueError("assemble_sets needs an observation window")

    fails = events.failures
    fails = fails[(fails["part"] == part) & window.contains(fails["time"])]
    if fails["unit"].duplicated().any():
        dup = sorted(set(fails.loc[fails["unit"].duplicated(), "unit"]))
        raise InconsistentEventsError(f"part {part}: several failure records for units {dup[:5]}")
    fails = fails.sort_values("unit", kind="mergesort").set_index("unit")

    def first(df):
        df = df[(df["part"] == part) & (df["dtc"] == dtc) & window.contains(df["time"])]
        return _first_per_unit(df)

    occ = first(events.occurrences)
    obs = first(events.observations)

    failed_units = fails.index.to_numpy(dtype=np.int64)
    if failed_units.size == 0:
        raise InsufficientDataError(f"part {part}: no failures inside the window")
    lacking = [u for u in failed_units if u not in occ.index or u not in obs.index]
    if lacking:
        raise MissingAlignmentError(
            f"part {part}, dtc {dtc}: failed units without occurrence/observation: {lacking[:5]}"
        )

    future = np.array(
        sorted(set(occ.index) & set(obs.index) - set(failed_units.tolist())), dtype=np.int64
    )
    ds = PartDataset(
        part=part,
        dtc=dtc,
        failed_units=failed_units,
        fail=fails["cycles"].to_numpy(),
        ind=occ.loc[failed_units, "cycles"].to_numpy(),
        serv=obs.loc[failed_units, "cycles"].to_numpy(),
        future_units=future,
        ind_prime=occ.loc[future, "cycles"].to_numpy() if future.size else np.zeros(0),
        serv_prime=obs.loc[future, "cycles"].to_numpy() if future.size else np.zeros(0),
        future_accrued=events.accrued_cycles(future.tolist(), window.end + 1.0),
    )
    report = validate_ordering(ds)
    if not report.valid:
        raise OrderingViolationError(
            f"part {part}, dtc {dtc}: d <= s <= p broken at {report.violations[:5]}, "
            f"primed d <= s broken at {report.prime_violations[:5]}"
        )
    return ds
