"""Bootstrap inference for g-formula estimates.

:func:`run_bootstrap` fits the point model, refits on ``B`` resamples and
applies one estimator to every fit, deriving every random stream from one
master seed:

* child 0 of the master seed drives the point estimate,
* child 1 seeds the bootstrap; replicate ``b`` owns its child ``b``, whose
  sub-streams drive the row resample and the replicate's g-formula run.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .fit import GFORMULA_STREAM, as_seed_sequence, bootstrap_fit, child_seed, fit_all
from .gformula import EFFECTS

log = logging.getLogger(__name__)

POINT_STREAM = 0
BOOTSTRAP_STREAM = 1
TABLE_COLUMNS = ("Effect", "Est.", "SD", "Lower", "Upper", "Z-Score", "P-value")


def percentile_interval(samples, level=0.95, axis=0):
    """Equal-tailed percentile interval of bootstrap replicates."""
    tail = (1 - level) / 2
    lo, hi = np.quantile(np.asarray(samples, dtype=float), [tail, 1 - tail], axis=axis)
    return lo, hi


def normal_interval(estimate, sd, level=0.95):
    """``estimate -/+ z * sd``."""
    z = stats.norm.ppf(0.5 + level / 2)
    return estimate - z * sd, estimate + z * sd


def z_and_p(estimate, sd):
    """Z-score ``estimate / sd`` and its two-sided normal p-value.

    A zero SD gives ``Z = 0, p = 1`` for a zero estimate and an infinite
    ``Z`` with ``p = 0`` otherwise.
    """
    if sd > 0:
        z = estimate / sd
    else:
        z = 0.0 if estimate == 0 else float(np.copysign(np.inf, estimate))
    return z, float(2 * stats.norm.sf(abs(z)))


def effect_table(point, replicates, names=EFFECTS, level=0.95, scale=1.0):
    """Rows with the columns of :data:`TABLE_COLUMNS`.

    Parameters
    ----------
    point : array (n_effects,)
        Point estimates.
    replicates : array (n_replicates, n_effects)
        Bootstrap estimates.
    scale : float
        Multiplier applied to estimates, SDs and bounds (e.g. the width of
        the original outcome range).
    """
    point = np.asarray(point, dtype=float) * scale
    reps = np.asarray(replicates, dtype=float).reshape(-1, point.size) * scale
    sd = reps.std(axis=0, ddof=1) if reps.shape[0] > 1 else np.full(point.size, np.nan)
    lo, hi = percentile_interval(reps, level)
    rows = []
    for j, name in enumerate(names):
        z, p = z_and_p(point[j], sd[j])
        rows.append({"Effect": name, "Est.": float(point[j]), "SD": float(sd[j]),
                     "Lower": float(lo[j]), "Upper": float(hi[j]), "Z-Score": float(z), "P-value": p})
    return rows


@dataclass(frozen=True)
class BootstrapRun:
    """Point fit and estimate, the bootstrap ensemble and replicate estimates."""

    models: object
    point: object
    ensemble: object
    replicates: list

    def replicate_values(self, getter=lambda e: e.values()):
        return np.array([getter(r) for r in self.replicates])


def replicate_data(dataset, replicate, cfg):
    """Covariate source for a replicate's g-formula run.

    With Dirichlet weights the original rows are integrated with fresh
    weights; otherwise the replicate's resampled rows with equal weights.
    """
    return dataset if cfg.use_dirichlet_weights else dataset.take(replicate.rows)


def replicate_seed(replicate):
    entropy, key = replicate.seed
    return child_seed(np.random.SeedSequence(entropy, spawn_key=key), GFORMULA_STREAM)


def run_bootstrap(dataset, spec, cfg, B, seed, estimator, threads=1, stratified=False,
                  penalty=None, models=None):
    """Point estimate plus ``B`` bootstrap replicate estimates.

    Parameters
    ----------
    estimator : callable
        ``estimator(models, dataset, seed_sequence)`` returning any estimate
        object; it is called once for the point fit and once per replicate.
    models : FittedModels, optional
        Reuse an existing full-data fit.
    """
    master = as_seed_sequence(seed)
    if models is None:
        models = fit_all(dataset, spec, penalty)
    point = estimator(models, dataset, child_seed(master, POINT_STREAM))
    ensemble = bootstrap_fit(dataset, spec, B, child_seed(master, BOOTSTRAP_STREAM), penalty=penalty,
                             stratified=stratified, threads=threads, start=models)

    def one(rep):
        return estimator(rep.models, replicate_data(dataset, rep, cfg), replicate_seed(rep))

    fitted = ensemble.fitted
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(one, fitted))
    else:
        reps = [one(r) for r in fitted]
    return BootstrapRun(models, point, ensemble, reps)
