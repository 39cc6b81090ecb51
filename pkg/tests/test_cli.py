import json
import subprocess
import sys

import numpy as np
import pytest

from failcast import cli, io
from failcast.mcmc import InitializationError

CONFIG = {
    "seed": 3,
    "fleet": {"n_units": 200, "n_parts": 3, "dtcs_per_part": 2,
              "true_params": [[3, 40000], [4, 60000], [5, 150000]]},
    "mcmc": {"n_chains": 2, "n_iterations": 600, "burn_in": 300},
}

STEPS = ("simulate", "fit", "forecast", "warranty", "report")


def write_config(tmp_path, **extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**CONFIG, **extra}))
    return path


def pipeline(cfg, out, *extra):
    return [cli.run([step, "--config", str(cfg), "--out", str(out), *extra]) for step in STEPS]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = write_config(base)
    codes = [pipeline(cfg, base / name) for name in ("a", "b")]
    return base, codes


def test_pipeline_succeeds(runs):
    base, codes = runs
    assert codes == [[0] * 5, [0] * 5]
    out = base / "a"
    for name in ("fit_report.csv", "fit_report.json", "forecast_report.csv", "warranty_report.csv",
                 "summary.md", "effective-config.json", "cost_curve_part1.csv", io.TRUTH_CSV):
        assert (out / name).exists(), name


def test_reports_are_byte_identical(runs):
    base, _ = runs
    files = sorted(p.name for p in (base / "a").iterdir())
    assert files == sorted(p.name for p in (base / "b").iterdir())
    for name in files:
        a, b = (base / "a" / name).read_bytes(), (base / "b" / name).read_bytes()
        if name == io.EFFECTIVE_CONFIG:
            # the only difference allowed is the output directory itself
            a, b = (json.loads(x) for x in (a, b))
            a.pop("output_dir"), b.pop("output_dir")
        assert a == b, name


def test_effective_config_reloads(runs):
    base, _ = runs
    eff = base / "a" / io.EFFECTIVE_CONFIG
    cfg = io.load_config(eff)
    assert io.config_to_dict(cfg) == json.loads(eff.read_text())


def test_fit_report_contents(runs):
    base, _ = runs
    rows = io.read_table(base / "a" / "fit_report")
    parts = [r for r in rows if r["level"] == "part"]
    assert {(r["part"], r["case"]) for r in parts} == {
        (j, c) for j in (1, 2, 3) for c in ("case1", "case2", "case3", "best")}
    for r in rows:
        if r["case"] == "case1":
            assert r["r"] is None and r["m"] is None and r["lead"] is None
        assert r["true_beta"] is not None
        assert r["abs_error_beta"] == pytest.approx(abs(r["beta"] - r["true_beta"]))
    dtc_rows = [r for r in rows if r["level"] == "dtc"]
    assert len(dtc_rows) == 3 * 4 * 2


def test_cost_curves_match_warranty_optimum(runs):
    base, _ = runs
    wr = io.read_table(base / "a" / "warranty_report")
    for part in (1, 2, 3):
        curve = io.read_table(base / "a" / f"cost_curve_part{part}")
        w = np.array([r["w"] for r in curve])
        assert np.all(np.diff(w) > 0) and w[0] == 0.0
        for r in (r for r in wr if r["part"] == part):
            c = np.array([row[r["case"]] for row in curve])
            assert c[0] == pytest.approx(r["penalty_base"] * r["replacement_cost"], rel=1e-12)
            assert r["cost"] <= c.min() + 1e-12
            step = w[1] - w[0]
            assert abs(w[np.argmin(c)] - r["w_star"]) <= step


def test_forecast_report_has_truth_columns(runs):
    base, _ = runs
    rows = io.read_table(base / "a" / "forecast_report")
    assert rows and all(r["realized"] is not None for r in rows)
    assert all(r["mode"] == "conditional" for r in rows)


def test_best_case_needs_truth(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    (tmp_path / "o" / io.TRUTH_CSV).unlink()
    assert cli.run(["fit", "--config", str(cfg), "--out", str(tmp_path / "o"),
                    "--case", "best"]) == 3


def test_single_case_and_seed_override(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "11"]) == 0
    assert json.loads((out / io.EFFECTIVE_CONFIG).read_text())["seed"] == 11
    assert cli.run(["fit", "--config", str(cfg), "--out", str(out), "--case", "case1"]) == 0
    assert {r["case"] for r in io.read_table(out / "fit_report")} == {"case1"}


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"fleet": {"n_units": 0}}')
    assert cli.run(["simulate", "--config", str(bad)]) == 2
    assert "fleet" in capsys.readouterr().err
    bad.write_text("{")
    assert cli.run(["simulate", "--config", str(bad)]) == 2
    assert cli.run(["simulate", "--config", str(tmp_path / "none.json")]) == 2


def test_bad_thread_count_is_a_config_error(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    cli.run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    monkeypatch.setenv("FAILCAST_THREADS", "many")
    assert cli.run(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_inputs_exit_3(tmp_path):
    cfg = write_config(tmp_path)
    for step in ("fit", "forecast", "warranty", "report"):
        assert cli.run([step, "--config", str(cfg), "--out", str(tmp_path / step)]) == 3, step


def test_numerical_failure_exit_4(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "o")
    assert cli.run(["simulate", "--config", str(cfg), "--out", out]) == 0

    def broken(*args, **kwargs):
        raise InitializationError("no finite starting point")

    monkeypatch.setattr(cli, "fit_part", broken)
    assert cli.run(["fit", "--config", str(cfg), "--out", out]) == 4
    rows = io.read_table(tmp_path / "o" / "fit_report")
    assert all(r["error"].startswith("numerical") for r in rows)


def test_threads_do_not_change_results(tmp_path):
    cfg = write_config(tmp_path, cases=["case1", "case3"])
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(b)]) == 0
    env_run = lambda out, n: subprocess.run(
        [sys.executable, "-m", "failcast", "fit", "--config", str(cfg), "--out", str(out)],
        env={**__import__("os").environ, "FAILCAST_THREADS": n}, capture_output=True)
    assert env_run(a, "1").returncode == 0
    assert env_run(b, "2").returncode == 0
    assert (a / "fit_report.csv").read_bytes() == (b / "fit_report.csv").read_bytes()


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.run(["explode", "--config", "x"])
    assert exc.value.code == 2
