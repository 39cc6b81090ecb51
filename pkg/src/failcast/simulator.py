"""Synthetic fleet generator: Weibull part failures, DTC occurrences, service visits.

Each unit accrues cycles at a constant rate from its manufacture date.  A part
fails once (no renewal).  Every DTC of a part occurs before the part fails,
at ``f * (1 - r)`` plus Gaussian noise, and is observed at the unit's next
service visit.  Units visit the shop when any part fails and whenever six
months have passed since their previous visit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .domain import EventLog, Window, to_day

DEFAULT_ACCRUAL_RATE = 100000.0 / (3 * 365.25)
SIX_MONTHS = 365.25 / 2

# Six parts fail abundantly before the end of 2012; E2P, T1P and T2P are
# long-lived wear-out parts with few in-window failures.
DEFAULT_TRUE_PARAMS = (
    (3.0, 45000.0),
    (6.0, 140000.0),
    (5.0, 70000.0),
    (5.5, 150000.0),
    (6.0, 150000.0),
    (5.0, 75000.0),
    (4.0, 55000.0),
    (3.5, 60000.0),
    (4.5, 65000.0),
)
DEFAULT_PART_NAMES = ("E1P", "E2P", "E3P", "T1P", "T2P", "T3P", "B1P", "B2P", "B3P")


def sample_weibull_inverse(alpha, beta, u):
    """Inverse-CDF draw from Weibull(shape ``alpha``, scale ``beta``).

    Works elementwise on arrays.  ``u`` must lie in ``[0, 1)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise ValueError("alpha and beta must be positive")
    if np.any(~((u >= 0) & (u < 1))):
        raise ValueError("u must lie in [0, 1)")
    out = beta * (-np.log1p(-u)) ** (1.0 / alpha)
    return float(out) if out.ndim == 0 else out


@dataclass
class FleetConfig:
    n_units: int = 1000
    n_parts: int = 9
    dtcs_per_part: int = 4
    true_params: Sequence[Sequence[float]] = DEFAULT_TRUE_PARAMS
    dtc_gap_fraction_range: tuple[float, float] = (0.1, 0.5)
    # explicit r per (part, dtc); drawn from the range when None
    dtc_gap_fractions: Optional[np.ndarray] = None
    occurrence_noise: float | np.ndarray = 2000.0
    model_years: Sequence[int] = (2010, 2011, 2012)
    manufacture_dates: Optional[np.ndarray] = None
    accrual_rate: float | np.ndarray = DEFAULT_ACCRUAL_RATE
    accrual_jitter: float = 0.2
    service_interval_days: float = SIX_MONTHS
    observation_window: Window = field(
        default_factory=lambda: Window.from_dates("2010-01-01", "2012-12-31")
    )
    # "service": observed at the next shop visit; "network": drawn from the
    # observation node's Gaussian, with delay fraction m and noise sigma2
    observation_model: str = "service"
    observation_delay_range: tuple[float, float] = (0.2, 0.8)
    observation_delay_fractions: Optional[np.ndarray] = None
    observation_noise: float | np.ndarray = 0.0
    part_names: Optional[Sequence[str]] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 1:
            raise ValueError("n_units must be at least 1")
        if self.n_parts < 1 or self.dtcs_per_part < 1:
            raise ValueError("n_parts and dtcs_per_part must be at least 1")
        params = np.asarray(self.true_params, dtype=float)
        if params.shape != (self.n_parts, 2):
            raise ValueError(f"true_params must have shape ({self.n_parts}, 2)")
        if np.any(params <= 0):
            raise ValueError("true Weibull parameters must be positive")
        lo, hi = self.dtc_gap_fraction_range
        if not 0 < lo < hi < 1:
            raise ValueError("dtc_gap_fraction_range must satisfy 0 < low < high < 1")
        shape = (self.n_parts, self.dtcs_per_part)
        if self.dtc_gap_fractions is not None:
            r = np.broadcast_to(np.asarray(self.dtc_gap_fractions, float), shape)
            if np.any((r < 0) | (r >= 1)):
                raise ValueError("dtc_gap_fractions must lie in [0, 1)")
        if np.any(np.asarray(self.occurrence_noise) < 0):
            raise ValueError("occurrence_noise must be non-negative")
        if np.any(np.asarray(self.accrual_rate) <= 0):
            raise ValueError("accrual_rate must be positive")
        if not 0 <= self.accrual_jitter < 1:
            raise ValueError("accrual_jitter must lie in [0, 1)")
        if self.service_interval_days <= 0:
            raise ValueError("service_interval_days must be positive")
        if self.observation_model not in ("service", "network"):
            raise ValueError("observation_model must be 'service' or 'network'")
        if self.part_names is not None and len(self.part_names) != self.n_parts:
            raise ValueError("part_names must name every part")

    @property
    def names(self) -> list[str]:
        if self.part_names is not None:
            return list(self.part_names)
        if self.n_parts == len(DEFAULT_PART_NAMES):
            return list(DEFAULT_PART_NAMES)
        return [f"P{j}" for j in range(1, self.n_parts + 1)]


@dataclass
class GroundTruth:
    """Full simulated history, including what the event log withholds.

    ``failures`` has one row per (unit, part); ``dtcs`` one row per
    (unit, part, dtc) with the true occurrence and first observation (NaN
    when the DTC was not seen before the end of the observation window).
    """

    failures: pd.DataFrame
    dtcs: pd.DataFrame
    gap_fractions: np.ndarray
    delay_fractions: Optional[np.ndarray] = None

    def failure_cycles(self, part: int, units) -> np.ndarray:
        tab = self.failures[self.failures["part"] == part].set_index("unit")
        units = list(units)
        missing = set(units) - set(tab.index)
        if missing:
            raise KeyError(f"no ground truth for part {part}, units {sorted(missing)[:5]}")
        return tab.loc[units, "true_fail_cycles"].to_numpy()


def _truncated_normal(rng, mean, sd, lo, hi, fallback, tries=100):
    x = rng.normal(mean, sd)
    bad = (x < lo) | (x > hi)
    for _ in range(tries):
        if not bad.any():
            break
        x[bad] = rng.normal(mean[bad], sd[bad])
        bad = (x < lo) | (x > hi)
    x[bad] = fallback[bad]
    return x


def _manufacture_days(cfg: FleetConfig, rng) -> np.ndarray:
    if cfg.manufacture_dates is not None:
        days = np.asarray(cfg.manufacture_dates, dtype=float)
        if days.shape != (cfg.n_units,):
            raise ValueError("manufacture_dates must give one day per unit")
        return days
    years = np.asarray(cfg.model_years)
    # even split across model years, uniform day within each year
    cohort = np.arange(cfg.n_units) * len(years) // cfg.n_units
    starts = np.array([to_day(f"{y}-01-01") for y in years])
    lengths = np.array([to_day(f"{y + 1}-01-01") for y in years]) - starts
    offset = np.floor(rng.random(cfg.n_units) * lengths[cohort])
    return starts[cohort] + offset


def _service_visits(m0, rate, fail_cycles, interval, horizon):
    """Visit times and the cycles accrued at each visit for one unit."""
    order = np.argsort(fail_cycles, kind="mergesort")
    fc = fail_cycles[order]
    ft = m0 + fc / rate
    times, cycles = [], []
    last, fi = m0, 0
    while True:
        nxt = last + interval
        if fi < len(ft) and ft[fi] <= nxt:
            v, c = ft[fi], fc[fi]
            fi += 1
        else:
            v, c = nxt, rate * (nxt - m0)
        if v > horizon:
            break
        times.append(v)
        cycles.append(c)
        last = v
    return np.asarray(times), np.asarray(cycles)


def simulate_fleet(config: FleetConfig) -> tuple[EventLog, GroundTruth]:
    cfg = config
    n, m, r_count = cfg.n_units, cfg.n_parts, cfg.dtcs_per_part
    seeds = np.random.SeedSequence(cfg.seed).spawn(6)
    rng_mfg, rng_rate, rng_fail, rng_gap, rng_occ, rng_obs = (
        np.random.default_rng(s) for s in seeds
    )
    window = cfg.observation_window
    horizon = window.end + 1.0

    m0 = _manufacture_days(cfg, rng_mfg)
    rate = np.broadcast_to(np.asarray(cfg.accrual_rate, float), (n,)).copy()
    if cfg.accrual_jitter > 0:
        rate *= rng_rate.uniform(1 - cfg.accrual_jitter, 1 + cfg.accrual_jitter, n)

    params = np.asarray(cfg.true_params, dtype=float)
    u = rng_fail.random((n, m))
    f = sample_weibull_inverse(params[:, 0][None, :], params[:, 1][None, :], u)

    shape = (m, r_count)
    lo, hi = cfg.dtc_gap_fraction_range
    if cfg.dtc_gap_fractions is None:
        gaps = rng_gap.uniform(lo, hi, shape)
    else:
        gaps = np.broadcast_to(np.asarray(cfg.dtc_gap_fractions, float), shape).copy()
    sigma1 = np.broadcast_to(np.asarray(cfg.occurrence_noise, float), shape)

    # occurrence cycles, shape (n, m, r)
    fb = np.broadcast_to(f[:, :, None], (n, m, r_count))
    mean = fb * (1 - gaps[None])
    sd = np.broadcast_to(sigma1[None], mean.shape)
    d = _truncated_normal(
        rng_occ, mean.copy(), sd.copy(), 0.0, fb, fb * (1 - lo) / 2
    )

    delays = None
    if cfg.observation_model == "network":
        mlo, mhi = cfg.observation_delay_range
        if cfg.observation_delay_fractions is None:
            delays = rng_obs.uniform(mlo, mhi, shape)
        else:
            delays = np.broadcast_to(
                np.asarray(cfg.observation_delay_fractions, float), shape
            ).copy()
        sigma2 = np.broadcast_to(np.asarray(cfg.observation_noise, float), shape)
        s_mean = d + delays[None] * (fb - d)
        s = _truncated_normal(
            rng_obs, s_mean, np.broadcast_to(sigma2[None], d.shape).copy(), d, fb, s_mean
        )
        s_time = m0[:, None, None] + s / rate[:, None, None]
        s = np.where(s_time <= horizon, s, np.nan)
    else:
        s = np.full(d.shape, np.nan)
        occ_time = m0[:, None, None] + d / rate[:, None, None]
        for i in range(n):
            vt, vc = _service_visits(m0[i], rate[i], f[i], cfg.service_interval_days, horizon)
            if vt.size == 0:
                continue
            idx = np.searchsorted(vt, occ_time[i], side="left")
            seen = idx < vt.size
            s[i][seen] = vc[idx[seen]]
        # visit cycles can differ from f or d by rounding; keep d <= s <= f exactly
        s = np.where(np.isnan(s), np.nan, np.clip(s, d, fb))

    f_time = m0[:, None] + f / rate[:, None]
    d_time = m0[:, None, None] + d / rate[:, None, None]
    s_time = m0[:, None, None] + s / rate[:, None, None]

    unit_ids = np.arange(1, n + 1)
    part_ids = np.arange(1, m + 1)
    dtc_ids = np.arange(1, r_count + 1)
    U2, P2 = np.meshgrid(unit_ids, part_ids, indexing="ij")
    U3, P3, K3 = np.meshgrid(unit_ids, part_ids, dtc_ids, indexing="ij")

    f_day = np.floor(f_time)
    d_day = np.floor(d_time)
    s_day = np.floor(s_time)

    truth_fail = pd.DataFrame(
        {
            "unit": U2.ravel(),
            "part": P2.ravel(),
            "true_fail_cycles": f.ravel(),
            "true_fail_time": f_day.ravel(),
        }
    )
    truth_dtc = pd.DataFrame(
        {
            "unit": U3.ravel(),
            "part": P3.ravel(),
            "dtc": K3.ravel(),
            "occurrence_cycles": d.ravel(),
            "occurrence_time": d_day.ravel(),
            "observation_cycles": s.ravel(),
            "observation_time": s_day.ravel(),
        }
    )

    in_f = window.contains(f_day).ravel()
    failures = pd.DataFrame(
        {"unit": U2.ravel()[in_f], "part": P2.ravel()[in_f],
         "cycles": f.ravel()[in_f], "time": f_day.ravel()[in_f]}
    )
    in_d = window.contains(d_day).ravel()
    occurrences = pd.DataFrame(
        {"unit": U3.ravel()[in_d], "part": P3.ravel()[in_d], "dtc": K3.ravel()[in_d],
         "cycles": d.ravel()[in_d], "time": d_day.ravel()[in_d]}
    )
    in_s = (~np.isnan(s) & window.contains(np.nan_to_num(s_day, nan=-np.inf))).ravel()
    observations = pd.DataFrame(
        {"unit": U3.ravel()[in_s], "part": P3.ravel()[in_s], "dtc": K3.ravel()[in_s],
         "cycles": s.ravel()[in_s], "time": s_day.ravel()[in_s]}
    )
    units = pd.DataFrame({"unit": unit_ids, "manufacture_time": m0, "accrual_rate": rate})

    events = EventLog(failures, occurrences, observations, units)
    truth = GroundTruth(truth_fail, truth_dtc, gaps, delays)
    return events, truth
