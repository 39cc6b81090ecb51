"""Command-line front end.

    failcast simulate|fit|forecast|warranty|report --config PATH
             [--case case1|case2|case3|best] [--out DIR] [--seed N]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  ``FAILCAST_THREADS`` caps how many parts are fitted in parallel.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .bayesnet import WeibullParams
from .domain import DataError
from .forecast import FleetState, expected_failures, realized_failures
from .fusion import CaseId, DegenerateParameterError, fit_part
from .io import ConfigError, RunConfig
from .mcmc import InitializationError
from .simulator import simulate_fleet
from .warranty import grid_search_warranty, optimize_warranty, warranty_cost

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
RHAT_LIMIT = 1.05
CURVE_POINTS = 501

FIT_REPORT = "fit_report"
FORECAST_REPORT = "forecast_report"
WARRANTY_REPORT = "warranty_report"
SUMMARY = "summary.md"

FIT_COLUMNS = [
    "level", "part", "part_name", "dtc", "case", "alpha", "beta", "r", "m", "sigma1", "sigma2",
    "lead", "n", "n_prime", "n_clamped", "rhat_max", "rhat_flag", "error",
]
TRUTH_COLUMNS = ["true_alpha", "true_beta", "abs_error_alpha", "abs_error_beta"]


class NumericalError(RuntimeError):
    pass


def _threads() -> int:
    raw = os.environ.get("FAILCAST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"FAILCAST_THREADS: expected an integer, got {raw!r}") from None


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _name(cfg: RunConfig, part: int) -> str:
    names = cfg.fleet.names
    return names[part - 1] if 1 <= part <= len(names) else f"P{part}"


def _truth_path(cfg: RunConfig) -> Path:
    return cfg.input_dir / io.TRUTH_CSV


# -- simulate ------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out(cfg)
    events, truth = simulate_fleet(cfg.fleet)
    io.write_event_log(io.quantize_events(events), out)
    io.write_ground_truth(truth, out / io.TRUTH_CSV)
    io.write_json(io.config_to_dict(cfg), out / io.EFFECTIVE_CONFIG)
    return EXIT_OK


# -- fit -----------------------------------------------------------------------


def _fit_one(args):
    events, cfg, part, dtcs, cases, truth = args
    try:
        return part, fit_part(events, cfg.observation_window, part, dtcs, cases, cfg.priors,
                              cfg.mcmc, truth=truth, predictive=cfg.predictive), None
    except (InitializationError, DegenerateParameterError, FloatingPointError) as exc:
        return part, None, f"numerical: {exc}"
    except DataError as exc:
        return part, None, f"data: {exc}"


def _row(cfg, level, case, res, truth_params):
    dep = res.dep
    row = {
        "level": level, "part": res.part, "part_name": _name(cfg, res.part),
        "dtc": res.dtc, "case": case.value,
        "alpha": res.weibull.alpha, "beta": res.weibull.beta,
        "r": dep.r if dep else None, "m": dep.m if dep else None,
        "sigma1": dep.sigma1 if dep else None, "sigma2": dep.sigma2 if dep else None,
        "lead": dep.observation_lead if dep else None,
        "n": res.n, "n_prime": res.n_prime, "n_clamped": res.n_clamped,
        "rhat_max": res.rhat_max, "rhat_flag": bool(res.rhat_max > RHAT_LIMIT),
        "error": None,
    }
    if truth_params is not None:
        a, b = truth_params
        row.update(true_alpha=a, true_beta=b, abs_error_alpha=abs(res.weibull.alpha - a),
                   abs_error_beta=abs(res.weibull.beta - b))
    return row


def cmd_fit(cfg: RunConfig) -> int:
    out = _out(cfg)
    events = io.read_event_log(cfg.input_dir)
    truth = io.read_ground_truth(_truth_path(cfg)) if _truth_path(cfg).exists() else None
    if CaseId.BEST in cfg.cases and truth is None:
        raise DataError(f"case best needs {io.TRUTH_CSV} in {cfg.input_dir}")

    parts = events.parts
    jobs = [(events, cfg, j, events.dtcs(j), cfg.cases, truth) for j in parts]
    threads = min(_threads(), len(jobs))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_fit_one, jobs))
    else:
        results = [_fit_one(job) for job in jobs]

    columns = FIT_COLUMNS + (TRUTH_COLUMNS if truth is not None else [])
    true_params = np.asarray(cfg.fleet.true_params, float) if truth is not None else None
    rows, failed = [], []
    for part, fits, error in results:
        tp = tuple(true_params[part - 1]) if true_params is not None and part <= len(true_params) else None
        if fits is None:
            failed.append(error)
            rows.append({"level": "part", "part": part, "part_name": _name(cfg, part),
                         "error": error})
            continue
        for case in cfg.cases:
            rows.append(_row(cfg, "part", case, fits.aggregate[case], tp))
            rows.extend(_row(cfg, "dtc", case, r, tp) for r in fits.per_dtc[case])
    io.write_table(rows, columns, out / FIT_REPORT)
    if any(e.startswith("numerical") for e in failed):
        return EXIT_NUMERIC
    if failed:
        return EXIT_DATA
    return EXIT_OK


def _fitted_params(cfg: RunConfig) -> dict[CaseId, dict[int, WeibullParams]]:
    rows = io.read_table(Path(cfg.output_dir) / FIT_REPORT)
    params: dict[CaseId, dict[int, WeibullParams]] = {}
    for r in rows:
        if r.get("level") != "part" or r.get("error") or r.get("alpha") is None:
            continue
        case = CaseId(r["case"])
        if case in cfg.cases:
            params.setdefault(case, {})[int(r["part"])] = WeibullParams(r["alpha"], r["beta"])
    if not params:
        raise DataError("the fit report holds no usable part estimates")
    return params


# -- forecast ------------------------------------------------------------------


def cmd_forecast(cfg: RunConfig) -> int:
    out = _out(cfg)
    params = _fitted_params(cfg)
    events = io.read_event_log(cfg.input_dir)
    if events.units is None:
        raise DataError(f"forecasting needs {io.UNITS_CSV} in {cfg.input_dir}")
    truth = io.read_ground_truth(_truth_path(cfg)) if _truth_path(cfg).exists() else None
    window = cfg.forecast_window
    rows = []
    for case, by_part in params.items():
        fleet = FleetState.from_events(events, sorted(by_part), window.start)
        fc = expected_failures(by_part, fleet, window, cfg.forecast_mode)
        realized = realized_failures(truth.failures, fleet, window) if truth is not None else {}
        for part in sorted(by_part):
            row = {"part": part, "part_name": _name(cfg, part), "case": case.value,
                   "mode": cfg.forecast_mode, "expected": fc.per_part[part],
                   "std": float(np.sqrt(fc.variance[part])),
                   "survivors": int(fleet.survivors[part].sum())}
            if part in realized:
                row["realized"] = realized[part]
                row["error"] = fc.per_part[part] - realized[part]
                row["relative_error"] = (abs(row["error"]) / realized[part]
                                         if realized[part] else None)
            rows.append(row)
    columns = ["part", "part_name", "case", "mode", "expected", "std", "survivors"]
    if truth is not None:
        columns += ["realized", "error", "relative_error"]
    io.write_table(rows, columns, out / FORECAST_REPORT)
    return EXIT_OK


# -- warranty ------------------------------------------------------------------


def cmd_warranty(cfg: RunConfig) -> int:
    out = _out(cfg)
    params = _fitted_params(cfg)
    rows = []
    for case, by_part in params.items():
        for part in sorted(by_part):
            p, model = by_part[part], cfg.cost_for(part)
            res = optimize_warranty(p, model)
            rows.append({
                "part": part, "part_name": _name(cfg, part), "case": case.value,
                "alpha": p.alpha, "beta": p.beta, "w_star": res.w, "cost": res.cost,
                "method": res.method, "converged": res.converged,
                "replacement_cost": model.replacement_cost, "penalty_base": model.penalty_base,
                "penalty_decay": model.penalty_decay,
            })
    columns = ["part", "part_name", "case", "alpha", "beta", "w_star", "cost", "method",
               "converged", "replacement_cost", "penalty_base", "penalty_decay"]
    io.write_table(rows, columns, out / WARRANTY_REPORT)
    return EXIT_OK


# -- report --------------------------------------------------------------------


def _markdown(rows, columns) -> list[str]:
    def cell(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        return "" if v is None else str(v)

    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    lines += ["| " + " | ".join(cell(r.get(c)) for c in columns) + " |" for r in rows]
    return lines


def cmd_report(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    if not out.is_dir() or not any(out.iterdir()):
        raise DataError(f"nothing to report in {out}")
    fit = [r for r in io.read_table(out / FIT_REPORT) if r.get("level") == "part"]
    sections = ["# Failure-rate analysis summary", ""]
    sections += ["## Learned Weibull parameters", ""]
    cols = ["part_name", "case", "alpha", "beta", "n", "n_prime", "rhat_flag"]
    if any("true_beta" in r for r in fit):
        cols += ["true_alpha", "true_beta"]
    sections += _markdown(fit, cols) + [""]

    if (out / f"{FORECAST_REPORT}.json").exists():
        fc = io.read_table(out / FORECAST_REPORT)
        cols = ["part_name", "case", "expected"] + (["realized"] if fc and "realized" in fc[0] else [])
        sections += ["## Expected failures in the forecast window", ""] + _markdown(fc, cols) + [""]

    if (out / f"{WARRANTY_REPORT}.json").exists():
        wr = io.read_table(out / WARRANTY_REPORT)
        sections += ["## Optimal warranty periods (cycles)", ""]
        sections += _markdown(wr, ["part_name", "case", "alpha", "beta", "w_star", "cost",
                                   "method"]) + [""]
        by_part: dict[int, list[dict]] = {}
        for r in wr:
            by_part.setdefault(int(r["part"]), []).append(r)
        for part, rs in sorted(by_part.items()):
            w_max = 5.0 * max(r["beta"] for r in rs)
            grid = np.linspace(0.0, w_max, CURVE_POINTS)
            curve = [{"w": float(w)} for w in grid]
            model = cfg.cost_for(part)
            for r in rs:
                costs = warranty_cost(grid, WeibullParams(r["alpha"], r["beta"]), model)
                for row, c in zip(curve, costs):
                    row[r["case"]] = float(c)
            io.write_table(curve, ["w"] + [r["case"] for r in rs], out / f"cost_curve_part{part}")
    (out / SUMMARY).write_text("\n".join(sections))
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "warranty": cmd_warranty,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="failcast", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--case", choices=[c.value for c in CaseId],
                   help="restrict to one case instead of the configured list")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = io.load_config(args.config, seed=args.seed)
        if args.out:
            cfg = replace(cfg, output_dir=args.out)
        if args.case:
            cfg = replace(cfg, cases=[CaseId(args.case)])
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"failcast: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"failcast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InitializationError, DegenerateParameterError, NumericalError, FloatingPointError) as exc:
        print(f"failcast: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
