"""Simulation studies of the estimators' frequentist operating characteristics.

A scenario takes reference ("true") coefficients, multiplies the treatment
coefficients of the mediator and outcome regressions by ``xi_m_multiplier``
and ``xi_y_multiplier``, simulates datasets from the result on covariate
rows drawn from a fixed pool, and scores point estimates and bootstrap
intervals against ground truth computed by a long Monte Carlo run.

A synthetic covariate pool (899 rows) and frozen reference coefficients ship
with the package; :func:`build_covariate_pool` and
:func:`build_reference_coefficients` regenerate them.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import pandas as pd

from . import zoib
from .dataio import encode_covariates
from .errors import FitError, ZoibError
from .fit import FittedModels, as_seed_sequence, child_seed, fit_all
from .gformula import EFFECTS, EffectEstimates, MonteCarloConfig, estimate_average_effects, simulate_mediators
from .inference import normal_interval, percentile_interval, run_bootstrap
from .model import COMPONENTS, CoefficientSet, Dataset, ModelSpec, standardize_covariates

log = logging.getLogger(__name__)

POOL_SIZE = 899
POOL_SEED = 20_240_117
REFERENCE_SEED = 20_240_118
TRUTH_MC_SIZE = 101 * POOL_SIZE
POOL_CONTINUOUS = ("econ_hard", "depress1", "age")
POOL_CATEGORICAL = ("sex", "nonwhite", "income", "educ", "marital", "occp")
POOL_COLUMNS = POOL_CONTINUOUS + POOL_CATEGORICAL
SCENARIO_LABELS = {(0.0, 1.0): "Scenario 1", (1.0, 0.0): "Scenario 2", (0.0, 10.0): "Scenario 3",
                   (10.0, 0.0): "Scenario 4", (1.0, 1.0): "Scenario 5"}
METRIC_COLUMNS = ("Scenario", "Effect", "Truth", "Bias", "RMSE", "Coverage", "Length",
                  "NormalCoverage", "NormalLength", "Reps", "Failed")
PERCENT_COLUMNS = ("Truth", "Bias", "RMSE", "Coverage", "Length", "NormalCoverage", "NormalLength")


def scenario_label(xi_m, xi_y):
    """Conventional scenario name for the multiplier pair ``(xi_m, xi_y)``."""
    return SCENARIO_LABELS.get((float(xi_m), float(xi_y)), f"xi_m={xi_m:g}, xi_y={xi_y:g}")


# ---------------------------------------------------------------------------
# covariate pool and reference coefficients


def build_covariate_pool(seed=POOL_SEED, n=POOL_SIZE):
    """Synthetic covariates with a job-training-study schema.

    Hardship and baseline depression are on 1-5 scales, age in years; the
    rest are categorical codes.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 3))
    depress1 = np.clip(1.9 + 0.6 * z[:, 0], 1.0, 5.0)
    econ_hard = np.clip(3.0 + 0.9 * (0.35 * z[:, 0] + 0.94 * z[:, 1]), 1.0, 5.0)
    age = np.clip(37 + 10.5 * z[:, 2], 18, 75)
    frame = pd.DataFrame({
        "econ_hard": np.round(econ_hard, 2),
        "depress1": np.round(depress1, 2),
        "age": np.round(age, 1),
        "sex": rng.integers(0, 2, n),
        "nonwhite": (rng.random(n) < 0.2).astype(int),
        "income": rng.choice(["lowinc", "midinc", "highinc"], n, p=[0.35, 0.4, 0.25]),
        "educ": rng.choice(["lths", "hs", "college"], n, p=[0.2, 0.45, 0.35]),
        "marital": rng.choice(["married", "never", "other"], n, p=[0.45, 0.3, 0.25]),
        "occp": rng.choice(["manual", "service", "professional"], n, p=[0.35, 0.3, 0.35]),
    })
    return frame


def _data_path(name):
    return resources.files("zoibmed") / "data" / name


def load_covariate_pool():
    """The bundled pool as a DataFrame."""
    with _data_path("covariate_pool.csv").open() as fh:
        return pd.read_csv(fh)


def pool_design(frame):
    """Standardized covariate block and column names of a pool frame."""
    X, names, _ = encode_covariates(frame, POOL_COLUMNS, POOL_CATEGORICAL)
    Xs, _ = standardize_covariates(X, names)
    return Xs, tuple(names)


def _generating_coefficients(p, names):
    """Hand-set coefficients used once to simulate the reference dataset."""
    spec = ModelSpec()
    idx = {n: 1 + j for j, n in enumerate(names)}

    def vec(intercept, treat, slopes, mediator=None):
        v = np.zeros(p + 2 + (mediator is not None))
        v[0] = intercept
        for n, b in slopes.items():
            v[idx[n]] = b
        v[p + 1] = treat
        if mediator is not None:
            v[-1] = mediator
        return v

    med = CoefficientSet(
        alpha=vec(-3.0, -0.25, {"econ_hard": 0.2, "depress1": 0.2}),
        gamma=vec(-2.0, 0.2, {"depress1": -0.25, "age": -0.1}),
        mu=vec(0.75, 0.12, {"econ_hard": -0.1, "depress1": -0.2, "educ[lths]": -0.1}),
        phi=vec(1.6, 0.05, {"age": 0.1}),
        spec=spec, with_mediator=False)
    out = CoefficientSet(
        alpha=vec(-2.6, 0.1, {"depress1": -0.5, "econ_hard": -0.15}, mediator=1.0),
        gamma=vec(-2.4, -0.1, {"depress1": 0.4}, mediator=-1.0),
        mu=vec(-0.6, -0.05, {"depress1": 0.35, "econ_hard": 0.1, "age": -0.05}, mediator=-0.5),
        phi=vec(1.5, 0.0, {"depress1": -0.1}, mediator=0.2),
        spec=spec, with_mediator=True)
    return FittedModels.from_coefficients(med, out)


def build_reference_coefficients(pool=None, seed=REFERENCE_SEED):
    """Fit the model to one dataset simulated on the pool; the fit is the reference truth."""
    pool = load_covariate_pool() if pool is None else pool
    X, names = pool_design(pool)
    gen = _generating_coefficients(X.shape[1], names)
    rng = np.random.default_rng(seed)
    A = (rng.random(X.shape[0]) < 0.5).astype(float)
    M = zoib.zoib_sample(rng, gen.mediator.predict(X, A))
    Y = zoib.zoib_sample(rng, gen.outcome.predict(X, A, M))
    fitted = fit_all(Dataset(X, A, M, Y, names), ModelSpec())
    return {"covariates": list(names), "mediator": fitted.mediator.to_dict(),
            "outcome": fitted.outcome.to_dict()}


def load_reference_models():
    """Bundled reference coefficients as :class:`FittedModels`."""
    with _data_path("reference_coefficients.json").open() as fh:
        d = json.load(fh)
    spec = ModelSpec()
    return FittedModels.from_coefficients(CoefficientSet.from_dict(d["mediator"], spec),
                                          CoefficientSet.from_dict(d["outcome"], spec))


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation setting.

    ``scaled_components`` lists which ZOIB components have their treatment
    coefficient multiplied (all four by default, so a zero multiplier removes
    every effect of treatment on that variable).
    """

    true_models: FittedModels
    xi_m_multiplier: float = 1.0
    xi_y_multiplier: float = 1.0
    N: int = POOL_SIZE
    reps: int = 50
    truth_mc_size: int = TRUTH_MC_SIZE
    scaled_components: tuple = COMPONENTS

    @property
    def label(self):
        return scenario_label(self.xi_m_multiplier, self.xi_y_multiplier)

    def models(self):
        """True models with the multipliers applied."""
        def scaled(coefs, mult):
            t = coefs.treatment_index()
            new = {}
            for c in self.scaled_components:
                b = np.array(coefs.component(c), dtype=float)
                b[t] = b[t] * mult
                new[c] = b
            return coefs.replace(**new)

        tm = self.true_models
        if tm.mediator.spec.heterogeneous:
            raise ValueError("scenario multipliers need homogeneous true coefficients")
        return FittedModels.from_coefficients(scaled(tm.mediator, self.xi_m_multiplier),
                                              scaled(tm.outcome, self.xi_y_multiplier))


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator applied to every simulated dataset."""

    model_spec: ModelSpec = ModelSpec(prior_sd=5.0)
    mc: MonteCarloConfig = MonteCarloConfig()
    B: int = 200
    level: float = 0.95
    threads: int = 1


def generate_dataset(spec: ScenarioSpec, covariate_pool, rng):
    """Simulate ``N`` rows: pooled covariates, fair-coin treatment, ZOIB mediator and outcome."""
    X = np.asarray(covariate_pool, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("covariate pool is empty")
    models = spec.models()
    rows = rng.integers(0, X.shape[0], size=spec.N)
    Xs = X[rows]
    A = (rng.random(spec.N) < 0.5).astype(float)
    M = zoib.zoib_sample(rng, models.mediator.predict(Xs, A))
    Y = zoib.zoib_sample(rng, models.outcome.predict(Xs, A, M))
    return Dataset(Xs, A, M, Y)


def compute_truth(spec: ScenarioSpec, covariate_pool, rng, backend=None):
    """Ground-truth effects by the conditional-mean g-formula at the true coefficients.

    Uses equal weights over the pool and ``truth_mc_size / len(pool)`` draws
    per row.  The Monte Carlo standard error of each effect (from the spread
    of per-draw-index estimates) is returned in ``diagnostics["mc_se"]``.
    """
    if spec.truth_mc_size < 10_000:
        raise ValueError("truth_mc_size must be at least 10^4")
    X = np.asarray(covariate_pool, dtype=float)
    N = X.shape[0]
    K = max(2, int(round(spec.truth_mc_size / N)))
    models = spec.models()
    U = zoib.open_uniform(rng, (K, N))
    mstar = simulate_mediators(models.mediator.predictor(X), U, backend)
    ypred = models.outcome.predictor(X)
    per_k = np.empty((K, 2, 2))
    for a in (0, 1):
        for ap in (0, 1):
            per_k[:, a, ap] = zoib.zoib_mean(ypred.params(a, mstar[ap])).mean(axis=1)
    effects_k = np.stack([EffectEstimates.from_potential(P).values() for P in per_k])
    se = effects_k.std(axis=0, ddof=1) / np.sqrt(K)
    truth = EffectEstimates.from_potential(per_k.mean(axis=0), K=K)
    if np.any(se >= 1e-4):
        log.info("truth Monte Carlo SE above 1e-4: %s", dict(zip(EFFECTS, se)))
    return replace(truth, diagnostics={"mc_se": dict(zip(EFFECTS, se.tolist()))})


@dataclass(frozen=True)
class ReplicateResult:
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    normal_lower: np.ndarray
    normal_upper: np.ndarray


def bootstrap_estimator(dataset, est_cfg: EstimatorConfig, seed):
    """Point estimate plus percentile and normal bootstrap intervals."""
    mc = est_cfg.mc

    def estimator(models, data, seq):
        return estimate_average_effects(models, data, mc, np.random.default_rng(seq)).values()

    run = run_bootstrap(dataset, est_cfg.model_spec, mc, est_cfg.B, seed, estimator,
                        threads=est_cfg.threads)
    reps = np.array(run.replicates)
    lo, hi = percentile_interval(reps, est_cfg.level)
    sd = reps.std(axis=0, ddof=1)
    nlo, nhi = normal_interval(run.point, sd, est_cfg.level)
    return ReplicateResult(run.point, lo, hi, nlo, nhi)


@dataclass(frozen=True)
class MetricsRow:
    """Operating characteristics of one effect in one scenario."""

    scenario: str
    effect: str
    truth: float
    bias: float
    rmse: float
    coverage: float
    length: float
    normal_coverage: float = float("nan")
    normal_length: float = float("nan")
    reps: int = 0
    failed: int = 0

    def as_record(self, percent=False):
        rec = dict(zip(METRIC_COLUMNS, (self.scenario, self.effect, self.truth, self.bias, self.rmse,
                                        self.coverage, self.length, self.normal_coverage,
                                        self.normal_length, self.reps, self.failed)))
        if percent:
            for c in PERCENT_COLUMNS:
                rec[c] = rec[c] * 100
        return rec


def _mean(values):
    # exactly rounded, hence independent of replicate order
    values = list(values)
    return math.fsum(values) / len(values)


def summarize(label, truth, results, failed=0):
    """Aggregate replicate results into one :class:`MetricsRow` per effect."""
    truth = np.asarray(truth, dtype=float)
    rows = []
    for j, name in enumerate(EFFECTS):
        err = [r.estimate[j] - truth[j] for r in results]
        rows.append(MetricsRow(
            scenario=label, effect=name, truth=float(truth[j]),
            bias=_mean(err),
            rmse=math.sqrt(_mean(e * e for e in err)),
            coverage=_mean(float(r.lower[j] <= truth[j] <= r.upper[j]) for r in results),
            length=_mean(r.upper[j] - r.lower[j] for r in results),
            normal_coverage=_mean(float(r.normal_lower[j] <= truth[j] <= r.normal_upper[j]) for r in results),
            normal_length=_mean(r.normal_upper[j] - r.normal_lower[j] for r in results),
            reps=len(results), failed=failed))
    return rows


def run_scenario(spec: ScenarioSpec, est_cfg: EstimatorConfig, rng, covariate_pool=None,
                 estimator=None, truth=None):
    """Simulate, estimate and score ``spec.reps`` datasets.

    Parameters
    ----------
    rng : int, SeedSequence or Generator
        Master seed; replicate ``r`` uses its ``r``-th child (data from one
        sub-stream, estimation from another), and the truth run uses a
        separate child.
    estimator : callable, optional
        ``estimator(dataset, est_cfg, seed_sequence) -> ReplicateResult``;
        defaults to :func:`bootstrap_estimator`.
    truth : EffectEstimates, optional
        Precomputed ground truth.

    Returns
    -------
    list of MetricsRow
    """
    if spec.reps < 2:
        raise ValueError("reps must be at least 2")
    master = as_seed_sequence(rng)
    pool = pool_design(load_covariate_pool())[0] if covariate_pool is None else np.asarray(covariate_pool)
    if truth is None:
        truth = compute_truth(spec, pool, np.random.default_rng(child_seed(master, 0)))
    estimator = estimator or bootstrap_estimator
    results, failed = [], 0
    for r in range(spec.reps):
        seq = child_seed(child_seed(master, 1), r)
        data = generate_dataset(spec, pool, np.random.default_rng(child_seed(seq, 0)))
        try:
            results.append(estimator(data, est_cfg, child_seed(seq, 1)))
        except ZoibError as exc:
            failed += 1
            log.warning("%s replicate %d failed: %s", spec.label, r, exc)
    if failed > 0.05 * spec.reps:
        raise FitError(f"{failed} of {spec.reps} simulation replicates failed")
    return summarize(spec.label, truth.values(), results, failed)


def metrics_frame(rows, percent=False):
    """Metrics rows as a DataFrame with the documented column order."""
    return pd.DataFrame([r.as_record(percent) for r in rows], columns=list(METRIC_COLUMNS))
