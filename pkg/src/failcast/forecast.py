"""Expected part failures over a forecast window.

Weibull distributions live on the cycle axis while the window is in calendar
days, so every unit's accrual rate maps the window ends to its own cycle
interval ``[c3, c4)``.  A window's last day is inclusive: a failure dated on
``window.end`` happened before ``window.end + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .bayesnet import WeibullParams
from .domain import EventLog, Window, WindowKind

GUARD = 1e-12


def weibull_cdf(params: WeibullParams, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("cycles must be non-negative")
    out = -np.expm1(-((t / params.beta) ** params.alpha))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FleetState:
    """Units in service with their usage clocks and per-part survival.

    ``survivors[part]`` is a boolean mask over ``units``: True while that part
    of that unit has not failed yet.
    """

    units: np.ndarray
    manufacture_time: np.ndarray
    accrual_rate: np.ndarray
    survivors: Mapping[int, np.ndarray]

    def __post_init__(self):
        n = len(self.units)
        if not (len(self.manufacture_time) == len(self.accrual_rate) == n):
            raise ValueError("units, manufacture_time and accrual_rate must align")
        if np.any(np.asarray(self.accrual_rate) < 0):
            raise ValueError("accrual rates must be non-negative")
        for part, mask in self.survivors.items():
            if len(mask) != n:
                raise ValueError(f"survival mask of part {part} must cover every unit")

    @classmethod
    def from_events(cls, events: EventLog, parts, before: float) -> "FleetState":
        """Survival at day ``before`` judged from the failures in the log."""
        if events.units is None:
            raise ValueError("the event log carries no unit table")
        table = events.units.sort_values("unit")
        units = table["unit"].to_numpy(np.int64)
        fails = events.failures[events.failures["time"] < before]
        survivors = {}
        for j in parts:
            failed = fails.loc[fails["part"] == j, "unit"].to_numpy()
            survivors[int(j)] = ~np.isin(units, failed)
        return cls(units, table["manufacture_time"].to_numpy(float),
                   table["accrual_rate"].to_numpy(float), survivors)

    def accrued(self, t: float) -> np.ndarray:
        return np.maximum(t - self.manufacture_time, 0.0) * self.accrual_rate


@dataclass(frozen=True)
class Forecast:
    per_part: dict[int, float]
    variance: dict[int, float]
    mode: str

    @property
    def total(self) -> float:
        return float(sum(self.per_part.values()))


def _cycle_bounds(fleet: FleetState, window: Window):
    return fleet.accrued(window.start), fleet.accrued(window.end + 1.0)


def failure_probabilities(params: WeibullParams, c3, c4, mode: str = "conditional") -> np.ndarray:
    """Per-unit probability that the part fails between ``c3`` and ``c4`` cycles."""
    if mode not in ("conditional", "unconditional"):
        raise ValueError("mode must be 'conditional' or 'unconditional'")
    F3 = np.atleast_1d(weibull_cdf(params, c3))
    F4 = np.atleast_1d(weibull_cdf(params, c4))
    p = np.clip(F4 - F3, 0.0, 1.0)
    if mode == "unconditional":
        return p
    worn = F3 >= 1.0 - GUARD
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(worn, 1.0, p / np.where(worn, 1.0, 1.0 - F3))
    return np.clip(cond, 0.0, 1.0)


def expected_failures(params: Mapping[int, WeibullParams], fleet: FleetState, window: Window,
                      mode: str = "conditional") -> Forecast:
    """Sum of per-unit failure probabilities over surviving units, per part."""
    if window.kind is not WindowKind.FORECAST:
        raise ValueError("expected_failures needs a forecast window")
    missing = set(fleet.survivors) - set(params)
    if missing:
        raise KeyError(f"no parameters for parts {sorted(missing)}")
    c3, c4 = _cycle_bounds(fleet, window)
    per_part, variance = {}, {}
    for part, alive in sorted(fleet.survivors.items()):
        p = failure_probabilities(params[part], c3[alive], c4[alive], mode)
        per_part[part] = float(p.sum())
        variance[part] = float(np.sum(p * (1.0 - p)))
    return Forecast(per_part, variance, mode)


def simulate_forward(params: Mapping[int, WeibullParams], fleet: FleetState, window: Window,
                     n_sims: int, rng: Optional[np.random.Generator] = None) -> dict[int, np.ndarray]:
    """Monte Carlo failure counts in the window, given survival to its start.

    Draws each survivor's failure cycles from the Weibull left-truncated at
    its cycles at the window start and counts those landing inside.
    """
    rng = np.random.default_rng() if rng is None else rng
    c3, c4 = _cycle_bounds(fleet, window)
    out = {}
    for part, alive in sorted(fleet.survivors.items()):
        a, b = params[part].alpha, params[part].beta
        h3 = (c3[alive] / b) ** a
        # inverse transform of the survival function conditioned on f > c3
        e = rng.standard_exponential((n_sims, int(alive.sum())))
        f = b * (h3 + e) ** (1.0 / a)
        out[part] = np.sum(f < c4[alive], axis=1)
    return out


def realized_failures(truth_failures, fleet: FleetState, window: Window) -> dict[int, int]:
    """Count true failures dated inside the window among the fleet's survivors."""
    df = truth_failures
    inside = (df["true_fail_time"] >= window.start) & (df["true_fail_time"] <= window.end)
    out = {}
    for part, alive in sorted(fleet.survivors.items()):
        units = fleet.units[alive]
        sel = df[inside & (df["part"] == part)]
        out[part] = int(np.isin(sel["unit"].to_numpy(), units).sum())
    return out
