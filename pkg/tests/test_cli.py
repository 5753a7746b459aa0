"""Command-line interface: configuration, artifacts, determinism, exit codes."""
from __future__ import annotations

import json

import numpy as np
import pytest

from zoibmed import cli
from zoibmed.checks import CheckResult
from zoibmed.inference import TABLE_COLUMNS


def _data_args(csv):
    return ["--input", str(csv), "--outcome", "depress2", "--mediator", "job_seek", "--treatment", "treat",
            "--covariates", "econ_hard,depress1,age,sex,income", "--categorical", "income",
            "--outcome-bounds", "1,5", "--mediator-bounds", "1,5", "--treated-value", "exp",
            "--control-value", "control"]


def _run(command, csv, out, *extra):
    return cli.main([command, *_data_args(csv), "--output", str(out), "--K", "2", "--B", "6",
                     "--seed", "3", *extra])


# ── configuration ────────────────────────────────────────────────────────────


class TestConfig:
    def test_grammar(self):
        vals = cli.parse_config_text("# comment\nK = 7\n\nlambdas = -1, 0, 1  # grid\nprior-sd = 2\n")
        assert vals == {"K": "7", "lambdas": "-1, 0, 1", "prior_sd": "2"}

    def test_unknown_key_names_line(self):
        with pytest.raises(ValueError, match="cfg:2: unknown key"):
            cli.parse_config_text("K = 3\nbogus = 1\n", "cfg")

    def test_missing_equals(self):
        with pytest.raises(ValueError, match=":1:"):
            cli.parse_config_text("K 3")

    def test_flags_override_file_and_defaults(self):
        cfg = cli.resolve_config({"K": "7", "B": "9"}, {"K": "11"}, env={})
        assert cfg["K"] == 11 and cfg["B"] == 9 and cfg["rho"] == 0.95 and cfg["seed"] == 0

    def test_seed_from_environment(self):
        assert cli.resolve_config({}, {}, env={cli.SEED_ENV: "42"})["seed"] == 42
        assert cli.resolve_config({}, {"seed": "5"}, env={cli.SEED_ENV: "42"})["seed"] == 5

    @pytest.mark.parametrize("key,value", [("K", "many"), ("display", "percent"), ("scale", "probit"),
                                           ("heterogeneous", "maybe")])
    def test_bad_values(self, key, value):
        with pytest.raises(ValueError):
            cli.resolve_config({key: value}, {}, env={})

    def test_config_file_used(self, study_csv, tmp_path):
        conf = tmp_path / "run.cfg"
        conf.write_text("\n".join(f"{a[2:].replace('-', '_')} = {b}" for a, b in
                                  zip(_data_args(study_csv)[::2], _data_args(study_csv)[1::2])))
        assert cli.main(["fit", "--config", str(conf), "--output", str(tmp_path / "o"),
                         "--predictive-reps", "3"]) == 0
        assert (tmp_path / "o" / "fit.json").exists()


# ── table I/O ────────────────────────────────────────────────────────────────


class TestTables:
    def test_csv_round_trip_fixpoint(self, tmp_path):
        rows = [{"a": 0.1, "b": "x", "c": 3, "d": float("nan")}, {"a": -1e-300, "b": "y,z", "c": -2, "d": 1 / 3}]
        p1, p2 = tmp_path / "1.csv", tmp_path / "2.csv"
        cli.write_csv(p1, ("a", "b", "c", "d"), rows)
        cols, back = cli.read_csv(p1)
        cli.write_csv(p2, cols, back)
        assert p1.read_bytes() == p2.read_bytes()
        assert back[1]["a"] == -1e-300 and back[1]["d"] == 1 / 3

    def test_emitted_tables_round_trip(self, study_csv, tmp_path):
        assert _run("effects", study_csv, tmp_path) == 0
        cols, rows = cli.read_csv(tmp_path / "effects.csv")
        cli.write_csv(tmp_path / "again.csv", cols, rows)
        assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "effects.csv").read_bytes()


# ── commands ─────────────────────────────────────────────────────────────────


class TestCommands:
    def test_effects_table(self, study_csv, tmp_path):
        assert _run("effects", study_csv, tmp_path) == 0
        cols, rows = cli.read_csv(tmp_path / "effects.csv")
        assert tuple(cols) == TABLE_COLUMNS
        assert [r["Effect"] for r in rows] == ["delta0", "delta1", "zeta0", "zeta1", "tau"]
        for r in rows:
            assert abs(r["Z-Score"] - r["Est."] / r["SD"]) <= 1e-12
            assert r["Lower"] <= r["Upper"] and 0 <= r["P-value"] <= 1
        meta = json.loads((tmp_path / "effects.json").read_text())
        for orig, unit in zip(rows, meta["unit_scale"]):
            assert orig["Est."] == pytest.approx(4 * unit["Est."], rel=1e-14)

    def test_interval_labelled_equal_tailed(self, study_csv, tmp_path, capsys):
        _run("effects", study_csv, tmp_path / "a")
        assert "equal-tailed 95% bootstrap percentile interval" in capsys.readouterr().out
        _run("effects", study_csv, tmp_path / "b", "--level", "0.5")
        meta = json.loads((tmp_path / "b" / "effects.json").read_text())
        assert "equal-tailed 50%" in meta["interval"]
        wide = cli.read_csv(tmp_path / "a" / "effects.csv")[1]
        narrow = cli.read_csv(tmp_path / "b" / "effects.csv")[1]
        for w, n in zip(wide, narrow):
            assert w["Lower"] <= n["Lower"] <= n["Upper"] <= w["Upper"]

    def test_unit_display(self, study_csv, tmp_path):
        _run("effects", study_csv, tmp_path / "o")
        _run("effects", study_csv, tmp_path / "u", "--display", "unit")
        orig = cli.read_csv(tmp_path / "o" / "effects.csv")[1]
        unit = cli.read_csv(tmp_path / "u" / "effects.csv")[1]
        assert all(o["Est."] == pytest.approx(4 * u["Est."], rel=1e-14) for o, u in zip(orig, unit))

    def test_sensitivity_linear_zero_matches_effects(self, study_csv, tmp_path):
        _run("effects", study_csv, tmp_path / "e")
        assert _run("sensitivity", study_csv, tmp_path / "s", "--scale", "linear", "--lambdas=-0.5,0,0.5") == 0
        _, eff = cli.read_csv(tmp_path / "e" / "effects.csv")
        cols, sens = cli.read_csv(tmp_path / "s" / "sensitivity.csv")
        assert tuple(cols) == cli.SENSITIVITY_COLUMNS
        zero = [r for r in sens if r["lambda"] == 0.0]
        assert [r["effect"] for r in zero] == [r["Effect"] for r in eff]
        for s, e in zip(zero, eff):
            assert (s["estimate"], s["lower"], s["upper"]) == (e["Est."], e["Lower"], e["Upper"])

    def test_sensitivity_auto_grid_both_scales(self, study_csv, tmp_path):
        assert _run("sensitivity", study_csv, tmp_path, "--grid-points", "3", "--B", "3") == 0
        _, rows = cli.read_csv(tmp_path / "sensitivity.csv")
        assert len(rows) == 2 * 3 * 5
        logit = [r for r in rows if r["scale"] == "logit"]
        lams = sorted({r["lambda"] for r in logit})
        assert lams[0] == -lams[2] and lams[1] == 0.0
        assert all(r["rho"] == 0.95 for r in logit)
        assert all(np.isnan(r["rho"]) for r in rows if r["scale"] == "linear")

    def test_quantile(self, study_csv, tmp_path):
        assert _run("quantile", study_csv, tmp_path, "--q", "0.25,0.5") == 0
        cols, rows = cli.read_csv(tmp_path / "quantile_effects.csv")
        assert tuple(cols) == ("q",) + TABLE_COLUMNS
        assert [r["q"] for r in rows] == [0.25] * 5 + [0.5] * 5

    def test_quantile_range_checked(self, study_csv, tmp_path, capsys):
        assert _run("quantile", study_csv, tmp_path, "--q", "1.5") == 1
        assert "(0, 1)" in capsys.readouterr().err

    def test_fit_artifacts(self, study_csv, tmp_path):
        assert cli.main(["fit", *_data_args(study_csv), "--output", str(tmp_path), "--predictive-reps", "5"]) == 0
        fit = json.loads((tmp_path / "fit.json").read_text())
        assert "income[lowinc]" in fit["covariates"]
        report = json.loads((tmp_path / "ingestion_report.json").read_text())
        assert report["n"] == 300
        assert (tmp_path / "predictive_check.csv").exists()

    def test_simulate_scenario_label(self, tmp_path, monkeypatch):
        from zoibmed import simharness

        seen = {}

        def fake(spec, est, seed):
            seen["spec"] = spec
            return simharness.summarize(spec.label, np.zeros(5), [simharness.ReplicateResult(*[np.zeros(5)] * 5)])

        monkeypatch.setattr(simharness, "run_scenario", fake)
        assert cli.main(["simulate", "--xi-m", "0", "--xi-y", "1", "--output", str(tmp_path)]) == 0
        _, rows = cli.read_csv(tmp_path / "simulation.csv")
        assert {r["Scenario"] for r in rows} == {"Scenario 1"}
        assert seen["spec"].N == 899 and seen["spec"].reps == 50

    def test_check_passes(self, tmp_path, capsys):
        assert cli.main(["check", "--output", str(tmp_path)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines and all(line.startswith("PASS") for line in lines)

    def test_check_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "run_checks", lambda *a: [CheckResult("x", True), CheckResult("y", False)])
        assert cli.main(["check", "--output", str(tmp_path)]) == 1
        assert json.loads((tmp_path / "check.json").read_text())[1]["passed"] is False


# ── errors and determinism ───────────────────────────────────────────────────


class TestExitAndDeterminism:
    def test_missing_settings(self, tmp_path, capsys):
        assert cli.main(["effects", "--output", str(tmp_path)]) == 1
        assert "missing required" in capsys.readouterr().err

    def test_rejection_report_lists_rows(self, study_frame, tmp_path, capsys):
        frame = study_frame.copy()
        frame.loc[4, "job_seek"] = 5.1
        frame.to_csv(tmp_path / "bad.csv", index=False)
        assert _run("effects", tmp_path / "bad.csv", tmp_path) == 1
        err = capsys.readouterr().err
        assert "row 4: mediator value 5.1 outside [1.0, 5.0]" in err

    def test_missing_file(self, tmp_path):
        assert _run("fit", tmp_path / "nope.csv", tmp_path) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["unknown"])
        assert info.value.code == 2

    @pytest.mark.parametrize("command,extra", [("effects", ()), ("quantile", ("--q", "0.5")),
                                               ("sensitivity", ("--lambdas=-1,0,1",))])
    def test_byte_identical_across_runs_and_threads(self, study_csv, tmp_path, command, extra):
        outs = []
        for i, threads in enumerate((1, 3, 1)):
            out = tmp_path / f"run{i}"
            assert _run(command, study_csv, out, "--threads", str(threads), *extra) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outs[0] == outs[1] == outs[2]
