"""Run configuration, event-log CSV files and report tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd

from .bayesnet import PriorConfig
from .domain import DataError, EventLog, Window, WindowKind, iso, to_day
from .fusion import CaseId
from .mcmc import McmcConfig
from .simulator import GroundTruth, FleetConfig
from .warranty import WarrantyCostModel

CYCLE_DIGITS = 3

FAILURES_CSV = "failures.csv"
OCCURRENCES_CSV = "dtc_occurrences.csv"
OBSERVATIONS_CSV = "service_observations.csv"
UNITS_CSV = "units.csv"
TRUTH_CSV = "ground_truth.csv"
EFFECTIVE_CONFIG = "effective-config.json"


class ConfigError(ValueError):
    pass


class MissingInputError(DataError):
    pass


# -- numbers ---------------------------------------------------------------


def format_cycles(x: float) -> str:
    return f"{x:.{CYCLE_DIGITS}f}"


def quantize_cycles(values) -> np.ndarray:
    """Round cycles exactly as writing and re-reading a CSV would."""
    return np.array([float(format_cycles(v)) for v in np.asarray(values, float)])


def format_value(x) -> str:
    """Shortest round-trip text for report cells; blank for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return None if math.isnan(x) else float(x)
    return x


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# -- event log -------------------------------------------------------------


def quantize_events(events: EventLog) -> EventLog:
    q = events.quantized(CYCLE_DIGITS)
    for df in (q.failures, q.occurrences, q.observations):
        df["cycles"] = quantize_cycles(df["cycles"])
    return q


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _event_rows(df: pd.DataFrame, keys: Sequence[str]):
    df = df.sort_values([*keys, "time", "cycles"], kind="mergesort")
    cols = [df[k].to_numpy() for k in keys]
    for vals in zip(*cols, df["cycles"].to_numpy(), df["time"].to_numpy()):
        *ids, cycles, time = vals
        yield [*(int(v) for v in ids), format_cycles(cycles), iso(time)]


def write_event_log(events: EventLog, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_rows(d / FAILURES_CSV, ["unit", "part", "cycles", "date"],
                _event_rows(events.failures, ["unit", "part"]))
    _write_rows(d / OCCURRENCES_CSV, ["unit", "part", "dtc", "cycles", "date"],
                _event_rows(events.occurrences, ["unit", "part", "dtc"]))
    _write_rows(d / OBSERVATIONS_CSV, ["unit", "part", "dtc", "cycles", "date"],
                _event_rows(events.observations, ["unit", "part", "dtc"]))
    if events.units is not None:
        u = events.units.sort_values("unit")
        _write_rows(d / UNITS_CSV, ["unit", "manufacture_date", "accrual_rate"], (
            [int(a), iso(b), repr(float(c))]
            for a, b, c in zip(u["unit"], u["manufacture_time"], u["accrual_rate"])
        ))


def _read_csv(path, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"missing input file {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: empty file") from None
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"{path}: schema mismatch, missing columns {missing}")
    return df


def _dates(values, path) -> np.ndarray:
    try:
        return np.array([to_day(v) for v in values], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: bad date ({exc})") from None


def _numbers(values, path, kind=float) -> np.ndarray:
    try:
        return np.array([kind(v) for v in values])
    except ValueError as exc:
        raise DataError(f"{path}: bad number ({exc})") from None


def read_event_log(directory) -> EventLog:
    d = Path(directory)

    def table(name, ids):
        df = _read_csv(d / name, [*ids, "cycles", "date"])
        out = {k: _numbers(df[k], d / name, int).astype(np.int64) for k in ids}
        out["cycles"] = _numbers(df["cycles"], d / name)
        out["time"] = _dates(df["date"], d / name)
        return pd.DataFrame(out)

    units = None
    if (d / UNITS_CSV).exists():
        df = _read_csv(d / UNITS_CSV, ["unit", "manufacture_date", "accrual_rate"])
        units = pd.DataFrame({
            "unit": _numbers(df["unit"], d / UNITS_CSV, int).astype(np.int64),
            "manufacture_time": _dates(df["manufacture_date"], d / UNITS_CSV),
            "accrual_rate": _numbers(df["accrual_rate"], d / UNITS_CSV),
        })
    return EventLog(
        table(FAILURES_CSV, ["unit", "part"]),
        table(OCCURRENCES_CSV, ["unit", "part", "dtc"]),
        table(OBSERVATIONS_CSV, ["unit", "part", "dtc"]),
        units,
    )


def write_ground_truth(truth: GroundTruth, path) -> None:
    """One row per (unit, part) with the true failure and each DTC's occurrence."""
    fails = truth.failures.sort_values(["unit", "part"], kind="mergesort")
    occ = truth.dtcs.pivot(index=["unit", "part"], columns="dtc",
                           values=["occurrence_cycles", "occurrence_time"])
    dtcs = sorted(truth.dtcs["dtc"].unique())
    header = ["unit", "part", "true_fail_cycles", "true_fail_date"]
    for k in dtcs:
        header += [f"dtc{k}_occurrence_cycles", f"dtc{k}_occurrence_date"]
    occ = occ.reindex(pd.MultiIndex.from_arrays([fails["unit"], fails["part"]]))
    occ_c = occ["occurrence_cycles"].to_numpy()
    occ_t = occ["occurrence_time"].to_numpy()

    def rows():
        for n, (u, p, f, t) in enumerate(zip(fails["unit"], fails["part"],
                                             fails["true_fail_cycles"], fails["true_fail_time"])):
            row = [int(u), int(p), format_cycles(f), iso(t)]
            for c, tt in zip(occ_c[n], occ_t[n]):
                row += ["", ""] if np.isnan(c) else [format_cycles(c), iso(tt)]
            yield row

    _write_rows(path, header, rows())


def read_ground_truth(path) -> GroundTruth:
    df = _read_csv(path, ["unit", "part", "true_fail_cycles", "true_fail_date"])
    failures = pd.DataFrame({
        "unit": _numbers(df["unit"], path, int).astype(np.int64),
        "part": _numbers(df["part"], path, int).astype(np.int64),
        "true_fail_cycles": _numbers(df["true_fail_cycles"], path),
        "true_fail_time": _dates(df["true_fail_date"], path),
    })
    rows = []
    for col in df.columns:
        if col.startswith("dtc") and col.endswith("_occurrence_cycles"):
            k = int(col[3:].split("_")[0])
            has = df[col] != ""
            sub = df[has]
            rows.append(pd.DataFrame({
                "unit": _numbers(sub["unit"], path, int).astype(np.int64),
                "part": _numbers(sub["part"], path, int).astype(np.int64),
                "dtc": k,
                "occurrence_cycles": _numbers(sub[col], path),
                "occurrence_time": _dates(sub[f"dtc{k}_occurrence_date"], path),
            }))
    dtcs = pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(
        columns=["unit", "part", "dtc", "occurrence_cycles", "occurrence_time"])
    return GroundTruth(failures, dtcs, gap_fractions=None)


# -- report tables ---------------------------------------------------------


def write_table(rows: list[dict], columns: Sequence[str], base) -> None:
    """Write ``base.csv`` and a ``base.json`` mirror holding the same rows."""
    base = Path(base)
    _write_rows(base.with_suffix(".csv"), list(columns),
                ([format_value(r.get(c)) for c in columns] for r in rows))
    write_json({"columns": list(columns), "rows": [{c: r.get(c) for c in columns} for r in rows]},
               base.with_suffix(".json"))


def read_table(base) -> list[dict]:
    path = Path(base).with_suffix(".json")
    if not path.exists():
        raise MissingInputError(f"missing input file {path}")
    try:
        return json.loads(path.read_text())["rows"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: unreadable report ({exc})") from None


# -- configuration -----------------------------------------------------------


@dataclass
class RunConfig:
    fleet: FleetConfig = field(default_factory=FleetConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    cost: WarrantyCostModel = field(default_factory=WarrantyCostModel)
    part_costs: dict[int, WarrantyCostModel] = field(default_factory=dict)
    observation_window: Window = field(
        default_factory=lambda: Window.from_dates("2010-01-01", "2012-12-31"))
    forecast_window: Window = field(
        default_factory=lambda: Window.from_dates("2013-01-01", "2013-12-31", "forecast"))
    cases: list[CaseId] = field(default_factory=lambda: list(CaseId))
    output_dir: str = "failcast-out"
    data_dir: Optional[str] = None
    forecast_mode: str = "conditional"
    predictive: str = "analytic"
    seed: int = 0

    def __post_init__(self):
        if self.observation_window.end >= self.forecast_window.start:
            raise ConfigError("windows: the forecast must start after the observation window")
        if self.forecast_mode not in ("conditional", "unconditional"):
            raise ConfigError("forecast_mode: must be 'conditional' or 'unconditional'")
        if self.predictive not in ("analytic", "sampled"):
            raise ConfigError("predictive: must be 'analytic' or 'sampled'")
        if not self.cases:
            raise ConfigError("cases: at least one case is required")

    def cost_for(self, part: int) -> WarrantyCostModel:
        return self.part_costs.get(int(part), self.cost)

    @property
    def input_dir(self) -> Path:
        return Path(self.data_dir or self.output_dir)


_FLEET_TUPLES = ("true_params", "dtc_gap_fraction_range", "model_years", "observation_delay_range")
_FLEET_ARRAYS = ("dtc_gap_fractions", "observation_delay_fractions")


def _section(raw: dict, name: str, cls, skip=()) -> Any:
    data = raw.get(name, {})
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)} - set(skip)
    for key in data:
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown field")
    return data


def _build(cls, name, kwargs):
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _window(raw, key, kind) -> Optional[Window]:
    if key not in raw:
        return None
    val = raw[key]
    if not (isinstance(val, (list, tuple)) and len(val) == 2):
        raise ConfigError(f"windows.{key}: expected [start_date, end_date]")
    try:
        return Window.from_dates(val[0], val[1], kind)
    except ValueError as exc:
        raise ConfigError(f"windows.{key}: {exc}") from None


def config_from_dict(raw: dict, *, seed: Optional[int] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    top = {"seed", "fleet", "priors", "mcmc", "cost", "windows", "cases", "output_dir",
           "data_dir", "forecast_mode", "predictive"}
    for key in raw:
        if key not in top:
            raise ConfigError(f"{key}: unknown field")
    root_seed = raw.get("seed", 0) if seed is None else seed
    if not isinstance(root_seed, int) or isinstance(root_seed, bool):
        raise ConfigError("seed: expected an integer")

    windows = raw.get("windows", {})
    if not isinstance(windows, dict):
        raise ConfigError("windows: expected an object")
    for key in windows:
        if key not in ("observation", "forecast"):
            raise ConfigError(f"windows.{key}: unknown field")
    obs = _window(windows, "observation", WindowKind.OBSERVATION) or RunConfig().observation_window
    fc = _window(windows, "forecast", WindowKind.FORECAST) or RunConfig().forecast_window

    fleet_raw = dict(_section(raw, "fleet", FleetConfig, skip=("seed", "observation_window")))
    for key in _FLEET_TUPLES:
        if key in fleet_raw and isinstance(fleet_raw[key], list):
            fleet_raw[key] = tuple(tuple(v) if isinstance(v, list) else v for v in fleet_raw[key])
    for key in _FLEET_ARRAYS:
        if fleet_raw.get(key) is not None:
            fleet_raw[key] = np.asarray(fleet_raw[key], dtype=float)
    if fleet_raw.get("manufacture_dates") is not None:
        try:
            fleet_raw["manufacture_dates"] = np.array(
                [to_day(v) for v in fleet_raw["manufacture_dates"]])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"fleet.manufacture_dates: {exc}") from None
    fleet = _build(FleetConfig, "fleet",
                   {**fleet_raw, "seed": root_seed, "observation_window": obs})

    priors = _build(PriorConfig, "priors", _section(raw, "priors", PriorConfig))
    mcmc_raw = dict(_section(raw, "mcmc", McmcConfig, skip=("seed",)))
    mcmc = _build(McmcConfig, "mcmc", {**mcmc_raw, "seed": root_seed})

    cost_raw = raw.get("cost", {})
    if not isinstance(cost_raw, dict):
        raise ConfigError("cost: expected an object")
    per_part_raw = cost_raw.get("parts", {})
    base = {k: v for k, v in cost_raw.items() if k != "parts"}
    for key in base:
        if key not in {f.name for f in fields(WarrantyCostModel)}:
            raise ConfigError(f"cost.{key}: unknown field")
    cost = _build(WarrantyCostModel, "cost", base)
    part_costs = {}
    for part, overrides in per_part_raw.items():
        try:
            j = int(part)
        except ValueError:
            raise ConfigError(f"cost.parts.{part}: part ids are integers") from None
        part_costs[j] = _build(WarrantyCostModel, f"cost.parts.{part}", {**base, **overrides})

    try:
        cases = [CaseId(c) for c in raw.get("cases", [c.value for c in CaseId])]
    except ValueError as exc:
        raise ConfigError(f"cases: {exc}") from None

    kwargs = {k: raw[k] for k in ("output_dir", "data_dir", "forecast_mode", "predictive")
              if k in raw}
    return RunConfig(fleet=fleet, priors=priors, mcmc=mcmc, cost=cost, part_costs=part_costs,
                     observation_window=obs, forecast_window=fc, cases=cases, seed=root_seed,
                     **kwargs)


def load_config(path, *, seed: Optional[int] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw, seed=seed)


def config_to_dict(cfg: RunConfig) -> dict:
    """Every setting, defaults included, in the shape ``load_config`` reads."""
    fleet = {}
    for f in fields(FleetConfig):
        if f.name in ("seed", "observation_window"):
            continue
        v = getattr(cfg.fleet, f.name)
        if f.name == "manufacture_dates" and v is not None:
            v = [iso(d) for d in v]
        fleet[f.name] = _jsonable(v)
    mcmc = {k: v for k, v in asdict(cfg.mcmc).items() if k != "seed"}
    return _jsonable({
        "seed": cfg.seed,
        "fleet": fleet,
        "priors": asdict(cfg.priors),
        "mcmc": mcmc,
        "cost": {**asdict(cfg.cost),
                 "parts": {str(j): asdict(m) for j, m in sorted(cfg.part_costs.items())}},
        "windows": {
            "observation": [iso(cfg.observation_window.start), iso(cfg.observation_window.end)],
            "forecast": [iso(cfg.forecast_window.start), iso(cfg.forecast_window.end)],
        },
        "cases": [c.value for c in cfg.cases],
        "output_dir": cfg.output_dir,
        "data_dir": cfg.data_dir,
        "forecast_mode": cfg.forecast_mode,
        "predictive": cfg.predictive,
    })
