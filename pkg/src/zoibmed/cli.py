"""Command-line interface: ``zoibmed <command> [--config FILE] [--key value ...]``.

Configuration file grammar
--------------------------
One ``key = value`` pair per line; ``#`` starts a comment; blank lines are
ignored; lists are comma separated.  Every key can also be given as a flag
(``--key value``, underscores or dashes) and flags override the file.  The
default seed is read from the ``ZOIBMED_SEED`` environment variable (else 0).

Data keys: ``input``, ``outcome``, ``mediator``, ``treatment``,
``covariates``, ``categorical``, ``outcome_bounds`` (``lo,hi``),
``mediator_bounds``, ``treated_value``, ``control_value``.

Model/estimation keys: ``heterogeneous``, ``prior_sd``, ``K``, ``B``, ``q``,
``lambdas`` (list or ``auto``), ``grid_points``, ``rho``, ``scale``
(``logit``, ``linear`` or ``both``), ``dirichlet``, ``stratified``, ``level``,
``seed``, ``threads``, ``display`` (``original`` or ``unit``),
``predictive_reps``.

Simulation keys: ``xi_m``, ``xi_y``, ``N``, ``reps``, ``truth_mc_size``,
``percent``.

Output keys: ``output`` (directory), ``formats`` (``csv``, ``json``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_checks
from .dataio import ColumnRoles, ingest, ingestion_report, outcome_record
from .errors import ZoibError
from .fit import fit_all, pilot_lambda_range, predictive_check
from .gformula import EFFECTS, MonteCarloConfig, estimate_average_effects, estimate_quantile_effects
from .inference import TABLE_COLUMNS, effect_table, percentile_interval, run_bootstrap
from .model import ModelSpec
from .sensitivity import DEFAULT_RHO, sensitivity_grid

log = logging.getLogger("zoibmed")

SEED_ENV = "ZOIBMED_SEED"
COMMANDS = ("fit", "effects", "quantile", "sensitivity", "simulate", "check")
SENSITIVITY_COLUMNS = ("scale", "lambda", "rho", "effect", "estimate", "lower", "upper")


def _flag(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _list(v):
    return [s.strip() for s in str(v).split(",") if s.strip()]


def _floats(v):
    return [float(s) for s in _list(v)]


def _bounds(v):
    lo, hi = _floats(v)
    return (lo, hi)


def _opt_float(v):
    return None if str(v).strip().lower() in ("", "none") else float(v)


# key -> (parser, default, help)
OPTIONS = {
    "input": (str, None, "input CSV path"),
    "outcome": (str, None, "outcome column"),
    "mediator": (str, None, "mediator column"),
    "treatment": (str, None, "treatment column"),
    "covariates": (_list, [], "covariate columns (comma separated)"),
    "categorical": (_list, [], "categorical covariates (comma separated)"),
    "outcome_bounds": (_bounds, None, "original outcome range lo,hi"),
    "mediator_bounds": (_bounds, None, "original mediator range lo,hi"),
    "treated_value": (str, "1", "raw treatment code of the treated arm"),
    "control_value": (str, "0", "raw treatment code of the control arm"),
    "heterogeneous": (_flag, False, "arm-specific coefficients"),
    "prior_sd": (_opt_float, None, "ridge penalty scale (none = no penalty)"),
    "K": (int, 10, "Monte Carlo draws per row"),
    "B": (int, 200, "bootstrap replicates"),
    "q": (_floats, [0.5], "quantile levels"),
    "lambdas": (str, "auto", "sensitivity grid (comma list) or 'auto'"),
    "grid_points": (int, 11, "grid size when lambdas = auto"),
    "rho": (float, DEFAULT_RHO, "copula correlation for the logit scale"),
    "scale": (str, "both", "sensitivity scale: logit, linear or both"),
    "dirichlet": (_flag, False, "Dirichlet row weights in bootstrap g-formula runs"),
    "stratified": (_flag, False, "resample within treatment arms"),
    "level": (float, 0.95, "interval level"),
    "seed": (int, None, f"master seed (default ${SEED_ENV} or 0)"),
    "threads": (int, 1, "worker threads"),
    "display": (str, "original", "effect scale in tables: original or unit"),
    "predictive_reps": (int, 100, "replicated datasets for the predictive check"),
    "xi_m": (float, 1.0, "mediator treatment-coefficient multiplier"),
    "xi_y": (float, 1.0, "outcome treatment-coefficient multiplier"),
    "N": (int, 899, "simulated sample size"),
    "reps": (int, 50, "simulated datasets"),
    "truth_mc_size": (int, 90_799, "Monte Carlo size of the ground truth"),
    "percent": (_flag, True, "multiply simulation metrics by 100"),
    "output": (str, "zoibmed-out", "output directory"),
    "formats": (_list, ["csv", "json"], "output formats"),
}


def parse_config_text(text, source="<config>"):
    """Parse the ``key = value`` grammar into raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(file_values, flag_values, env=None):
    """Typed configuration: defaults < config file < flags."""
    env = os.environ if env is None else env
    cfg = {}
    for key, (conv, default, _) in OPTIONS.items():
        if flag_values.get(key) is not None:
            raw = flag_values[key]
        elif key in file_values:
            raw = file_values[key]
        else:
            cfg[key] = default
            continue
        try:
            cfg[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad value for {key}: {raw!r} ({exc})") from exc
    if cfg["seed"] is None:
        cfg["seed"] = int(env.get(SEED_ENV, "0"))
    if cfg["display"] not in ("original", "unit"):
        raise ValueError("display must be 'original' or 'unit'")
    if cfg["scale"] not in ("logit", "linear", "both"):
        raise ValueError("scale must be logit, linear or both")
    return cfg


# ---------------------------------------------------------------------------
# output


def format_value(v):
    """Round-trippable text for one table cell."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path):
    """Read a table written by :func:`write_csv`; numeric cells become floats/ints."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [dict(zip(columns, (_parse_cell(c) for c in line))) for line in reader]
    return columns, rows


def _parse_cell(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit_table(cfg, stem, columns, rows, extra=None):
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in cfg["formats"]:
        write_csv(out / f"{stem}.csv", columns, rows)
        written.append(out / f"{stem}.csv")
    if "json" in cfg["formats"]:
        write_json(out / f"{stem}.json", {"columns": list(columns), "rows": rows, **(extra or {})})
        written.append(out / f"{stem}.json")
    return written


# ---------------------------------------------------------------------------
# commands


def _roles(cfg):
    missing = [k for k in ("input", "outcome", "mediator", "treatment") if not cfg[k]]
    if missing:
        raise ValueError(f"missing required setting(s): {', '.join(missing)}")
    bounds = {}
    if cfg["outcome_bounds"]:
        bounds[cfg["outcome"]] = cfg["outcome_bounds"]
    if cfg["mediator_bounds"]:
        bounds[cfg["mediator"]] = cfg["mediator_bounds"]
    return ColumnRoles(cfg["outcome"], cfg["mediator"], cfg["treatment"], tuple(cfg["covariates"]),
                       frozenset(cfg["categorical"]), bounds, cfg["treated_value"], cfg["control_value"])


def _load(cfg):
    return ingest(cfg["input"], _roles(cfg))


def _spec(cfg):
    return ModelSpec(heterogeneous=cfg["heterogeneous"], prior_sd=cfg["prior_sd"])


def _mc(cfg):
    return MonteCarloConfig(K=cfg["K"], use_dirichlet_weights=cfg["dirichlet"], master_seed=cfg["seed"])


def _display_scale(cfg, dataset):
    return outcome_record(dataset).width if cfg["display"] == "original" else 1.0


def cmd_fit(cfg):
    """Fit both regressions; write coefficients, ingestion report and predictive check."""
    dataset = _load(cfg)
    models = fit_all(dataset, _spec(cfg))
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "ingestion_report.json", ingestion_report(dataset))
    write_json(out / "fit.json", {"covariates": list(dataset.column_names), **models.to_dict()})
    rows = predictive_check(models, dataset, cfg["predictive_reps"], np.random.default_rng(cfg["seed"]))
    cols = ("variable", "arm", "statistic", "observed", "replicated_mean", "replicated_q05", "replicated_q95")
    emit_table(cfg, "predictive_check", cols, rows)
    return 0


def _interval_label(cfg):
    return f"Lower/Upper: equal-tailed {100 * cfg['level']:g}% bootstrap percentile interval"


def _bootstrap(cfg, dataset, estimator):
    return run_bootstrap(dataset, _spec(cfg), _mc(cfg), cfg["B"], cfg["seed"], estimator,
                         threads=cfg["threads"], stratified=cfg["stratified"])


def _average_estimator(mc):
    def estimator(models, data, seq):
        return estimate_average_effects(models, data, mc, np.random.default_rng(seq)).values()
    return estimator


def cmd_effects(cfg):
    """Average effects with bootstrap SD, percentile bounds, Z-scores and p-values."""
    dataset = _load(cfg)
    run = _bootstrap(cfg, dataset, _average_estimator(_mc(cfg)))
    reps = np.array(run.replicates)
    scale = _display_scale(cfg, dataset)
    rows = effect_table(run.point, reps, level=cfg["level"], scale=scale)
    unit_rows = effect_table(run.point, reps, level=cfg["level"])
    emit_table(cfg, "effects", TABLE_COLUMNS, rows,
               {"display": cfg["display"], "unit_scale": unit_rows, "replicates_used": len(reps),
                "replicates_failed": len(run.ensemble.failures), "seed": cfg["seed"],
                "interval": _interval_label(cfg)})
    _print_table(TABLE_COLUMNS, rows)
    print(_interval_label(cfg))
    return 0


def cmd_quantile(cfg):
    """Quantile effects at each requested level."""
    dataset = _load(cfg)
    mc = _mc(cfg)
    qs = cfg["q"]
    if not qs or any(not 0 < q < 1 for q in qs):
        raise ValueError("every q must lie in (0, 1)")

    def estimator(models, data, seq):
        rng = np.random.default_rng(seq)
        return np.array([estimate_quantile_effects(models, data, q, mc, rng).values() for q in qs])

    run = _bootstrap(cfg, dataset, estimator)
    reps = np.array(run.replicates)
    scale = _display_scale(cfg, dataset)
    rows = []
    for j, q in enumerate(qs):
        for r in effect_table(run.point[j], reps[:, j, :], level=cfg["level"], scale=scale):
            rows.append({"q": q, **r})
    emit_table(cfg, "quantile_effects", ("q",) + TABLE_COLUMNS, rows,
               {"display": cfg["display"], "interval": _interval_label(cfg)})
    _print_table(("q",) + TABLE_COLUMNS, rows)
    print(_interval_label(cfg))
    return 0


def sensitivity_lambdas(cfg, dataset, scale):
    if str(cfg["lambdas"]).strip().lower() != "auto":
        return _floats(cfg["lambdas"])
    rng = pilot_lambda_range(dataset, scale)
    return np.linspace(rng.lo, rng.hi, cfg["grid_points"]).tolist()


def cmd_sensitivity(cfg):
    """Long-format sensitivity curves over a grid of lambda values."""
    dataset = _load(cfg)
    mc = _mc(cfg)
    scales = ("logit", "linear") if cfg["scale"] == "both" else (cfg["scale"],)
    width = _display_scale(cfg, dataset)
    models = fit_all(dataset, _spec(cfg))
    rows = []
    for scale in scales:
        lambdas = sensitivity_lambdas(cfg, dataset, scale)

        def estimator(m, data, seq, scale=scale, lambdas=lambdas):
            grid = sensitivity_grid(m, data, lambdas, cfg["rho"], scale, mc, seq)
            return np.array([e.values() for e in grid])

        run = run_bootstrap(dataset, _spec(cfg), mc, cfg["B"], cfg["seed"], estimator,
                            threads=cfg["threads"], stratified=cfg["stratified"], models=models)
        reps = np.array(run.replicates)
        lo, hi = percentile_interval(reps, cfg["level"])
        rho = cfg["rho"] if scale == "logit" else float("nan")
        for i, lam in enumerate(lambdas):
            for j, eff in enumerate(EFFECTS):
                rows.append({"scale": scale, "lambda": float(lam), "rho": rho, "effect": eff,
                             "estimate": float(run.point[i, j] * width),
                             "lower": float(lo[i, j] * width), "upper": float(hi[i, j] * width)})
    emit_table(cfg, "sensitivity", SENSITIVITY_COLUMNS, rows,
               {"display": cfg["display"], "interval": _interval_label(cfg)})
    return 0


def cmd_simulate(cfg):
    """Operating characteristics of the estimator in one simulation scenario."""
    from .simharness import EstimatorConfig, METRIC_COLUMNS, ScenarioSpec, load_reference_models, run_scenario

    spec = ScenarioSpec(load_reference_models(), cfg["xi_m"], cfg["xi_y"], N=cfg["N"], reps=cfg["reps"],
                        truth_mc_size=cfg["truth_mc_size"])
    est = EstimatorConfig(model_spec=ModelSpec(heterogeneous=cfg["heterogeneous"],
                                               prior_sd=cfg["prior_sd"] if cfg["prior_sd"] else 5.0),
                          mc=MonteCarloConfig(K=cfg["K"], use_dirichlet_weights=cfg["dirichlet"]),
                          B=cfg["B"], level=cfg["level"], threads=cfg["threads"])
    rows = run_scenario(spec, est, cfg["seed"])
    records = [r.as_record(cfg["percent"]) for r in rows]
    emit_table(cfg, "simulation", METRIC_COLUMNS, records, {"percent": cfg["percent"]})
    _print_table(METRIC_COLUMNS, records)
    return 0


def cmd_check(cfg):
    """Run the invariant suite (on the input data when configured); nonzero exit on failure."""
    dataset = _load(cfg) if cfg["input"] else None
    results = run_checks(dataset, _spec(cfg) if dataset is not None else None, cfg["seed"])
    for r in results:
        print(r.line())
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "check.json", [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results])
    return 0 if all(r.passed for r in results) else 1


def _print_table(columns, rows):
    print("\t".join(columns))
    for r in rows:
        print("\t".join(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in columns))


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zoibmed",
        description="Causal mediation analysis with zero-one inflated beta models.",
        epilog=f"Settings come from --config FILE (key = value lines) and flags; flags win. "
               f"Default seed: ${SEED_ENV}.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        doc = globals()[f"cmd_{name}"].__doc__.strip().splitlines()[0]
        p = sub.add_parser(name, help=doc, description=doc)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("-v", "--verbose", action="store_true")
        for key, (_, default, help_text) in OPTIONS.items():
            flag = "--" + key.replace("_", "-")
            alias = ["--" + key] if "_" in key else []
            p.add_argument(flag, *alias, dest=key, default=None,
                           help=f"{help_text} (default: {default})")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = {}
        if args.config:
            file_values = parse_config_text(Path(args.config).read_text(encoding="utf-8"), args.config)
        cfg = resolve_config(file_values, {k: getattr(args, k) for k in OPTIONS})
        return globals()[f"cmd_{args.command}"](cfg)
    except (ZoibError, ValueError, OSError) as exc:
        problems = getattr(exc, "problems", None) or []
        print(f"error: {exc}", file=sys.stderr)
        for row, msg in problems[:50]:
            print(f"  row {row}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
