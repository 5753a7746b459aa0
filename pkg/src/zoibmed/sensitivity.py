"""Sensitivity of mediation effects to unmeasured mediator-outcome confounding.

Two departures from sequential ignorability are supported, each indexed by a
parameter ``lambda`` that leaves the observed-data fit untouched:

* **logit scale**: the mean of ``Y{a', M(a)}`` given the mediators is
  ``expit{logit E + lambda (M(a') - M(a))}``, where ``E`` is the outcome
  conditional mean at ``M(a)``.  The joint law of ``(M(0), M(1))`` is a
  Gaussian copula with correlation ``rho``.
* **linear scale**: the mean is ``E + lambda (M(a') - M(a))``; only the
  mediator marginals matter, so a single shared uniform drives both arms.

Fitted models enter only as read-only inputs; nothing here calls the fitting
code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import zoib
from .fit import as_seed_sequence
from .gformula import (
    EffectEstimates,
    MonteCarloConfig,
    _rng,
    _weights,
    conditional_outcome_means,
    simulate_mediators,
    weighted_potential_means,
)

MEAN_CLAMP = 1e-12
DEFAULT_RHO = 0.95
SCALES = ("logit", "linear")


@dataclass(frozen=True)
class SensitivityParams:
    """Confounding shift ``lam`` and copula correlation ``rho`` in [0, 1]."""

    lam: float = 0.0
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if not np.isfinite(self.lam):
            raise ValueError("lambda must be finite")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")


def copula_uniforms(rho, rng, size):
    """Uniform pair ``(Phi(Z0), Phi(Z1))`` with ``corr(Z0, Z1) = rho``.

    ``Z1 = rho Z0 + sqrt(1 - rho^2) W``; at ``rho = 1`` the two uniforms are
    identical.  Values are kept inside the open unit interval.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    z0 = z[0]
    z1 = rho * z0 + np.sqrt(1.0 - rho * rho) * z[1]
    tiny = np.finfo(float).tiny
    top = 1.0 - np.finfo(float).epsneg
    return tuple(np.clip(special.ndtr(v), tiny, top) for v in (z0, z1))


def sample_copula_mediators(mediator_params, rho, rng, backend=None):
    """Draw ``(M*(0), M*(1))`` from a Gaussian copula with ZOIB marginals.

    Parameters
    ----------
    mediator_params : tuple of ZoibParams
        Mediator distributions at arms 0 and 1 (same shape).
    rho : float
        Copula correlation in [0, 1].
    """
    p0, p1 = mediator_params
    shape = np.broadcast(*p0.arrays()).shape
    U0, U1 = copula_uniforms(rho, rng, shape)
    return (zoib.zoib_quantile(U0, p0, backend=backend),
            zoib.zoib_quantile(U1, p1, backend=backend))


def _finish(P, mstar, omega, cfg, **diag):
    return EffectEstimates.from_potential(
        P, flavor="average", K=cfg.K, seed=cfg.master_seed,
        diagnostics={"mediator_means": [float(np.mean(m @ omega)) for m in mstar], **diag},
    )


def logit_shift(E, shift):
    """``expit(logit E + shift)`` with ``E`` returned untouched where ``shift == 0``.

    Returns the shifted means and the number of ``E`` values clamped into
    ``[1e-12, 1 - 1e-12]`` before the logit.
    """
    clamped = (E < MEAN_CLAMP) | (E > 1 - MEAN_CLAMP)
    Ec = np.clip(E, MEAN_CLAMP, 1 - MEAN_CLAMP)
    moved = shift != 0
    out = np.where(moved, special.expit(special.logit(Ec) + shift), E)
    return out, int(np.count_nonzero(clamped & moved))


def estimate_effects_logit(models, dataset, sens: SensitivityParams, cfg=MonteCarloConfig(),
                           rng=None, weights=None):
    """Average effects under logit-scale confounding with copula mediators.

    ``Y*{a', M*(a)} = expit{logit E + lambda (M*(a') - M*(a))}`` with ``E`` the
    outcome conditional mean at ``(x, a', M*(a))``.  At ``lambda = 0`` every
    value equals ``E`` exactly.
    """
    rng = _rng(cfg, rng)
    X = dataset.covariates
    omega = _weights(cfg, X.shape[0], rng, weights)
    pm = models.mediator.predictor(X)
    U = copula_uniforms(sens.rho, rng, (cfg.K, X.shape[0]))
    mstar = simulate_mediators(pm, U, cfg.backend)
    means = conditional_outcome_means(models.outcome.predictor(X), mstar)
    clamps = 0
    values = [[None, None], [None, None]]
    for a in (0, 1):
        for ap in (0, 1):
            # outcome treatment a, mediator arm ap; the shift compares the
            # mediator the outcome arm would see against the one plugged in
            shift = sens.lam * (mstar[a] - mstar[ap])
            values[a][ap], c = logit_shift(means[a][ap], shift)
            clamps += c
    P = weighted_potential_means(values, omega)
    return _finish(P, mstar, omega, cfg, clamp_count=clamps, scale="logit",
                   lam=float(sens.lam), rho=float(sens.rho))


def estimate_effects_copula(models, dataset, rho, cfg=MonteCarloConfig(), rng=None, weights=None):
    """No-confounding g-formula with Gaussian-copula mediator draws.

    Consumes the generator exactly like :func:`estimate_effects_logit`, whose
    ``lambda = 0`` result it reproduces bit for bit.
    """
    rng = _rng(cfg, rng)
    X = dataset.covariates
    omega = _weights(cfg, X.shape[0], rng, weights)
    U = copula_uniforms(rho, rng, (cfg.K, X.shape[0]))
    mstar = simulate_mediators(models.mediator.predictor(X), U, cfg.backend)
    means = conditional_outcome_means(models.outcome.predictor(X), mstar)
    return _finish(weighted_potential_means(means, omega), mstar, omega, cfg, scale="none", rho=float(rho))


def estimate_effects_linear(models, dataset, lam, cfg=MonteCarloConfig(), rng=None, weights=None):
    """Average effects under linear-scale confounding.

    ``Y*{a', M*(a)} = E + lambda (M*(a') - M*(a))`` with one shared uniform per
    draw.  Values may leave [0, 1]; they are counted, not clipped.  At
    ``lambda = 0`` the result is bit-identical to
    :func:`~zoibmed.gformula.estimate_average_effects` with the same generator.
    """
    lam = float(lam)
    rng = _rng(cfg, rng)
    X = dataset.covariates
    omega = _weights(cfg, X.shape[0], rng, weights)
    U = zoib.open_uniform(rng, (cfg.K, X.shape[0]))
    mstar = simulate_mediators(models.mediator.predictor(X), U, cfg.backend)
    means = conditional_outcome_means(models.outcome.predictor(X), mstar)
    violations = 0
    values = [[None, None], [None, None]]
    for a in (0, 1):
        for ap in (0, 1):
            v = means[a][ap] + lam * (mstar[a] - mstar[ap])
            violations += int(np.count_nonzero((v < 0) | (v > 1)))
            values[a][ap] = v
    P = weighted_potential_means(values, omega)
    return _finish(P, mstar, omega, cfg, range_violations=violations, scale="linear", lam=lam)


def estimate_effects(models, dataset, scale, lam, rho=DEFAULT_RHO, cfg=MonteCarloConfig(),
                     rng=None, weights=None):
    """Dispatch to the logit- or linear-scale estimator."""
    if scale == "logit":
        return estimate_effects_logit(models, dataset, SensitivityParams(lam, rho), cfg, rng, weights)
    if scale == "linear":
        return estimate_effects_linear(models, dataset, lam, cfg, rng, weights)
    raise ValueError(f"unknown scale {scale!r}")


def sensitivity_grid(models, dataset, lambdas, rho=DEFAULT_RHO, scale="logit",
                     cfg=MonteCarloConfig(), rng=None, weights=None):
    """Effect estimates over a grid of ``lambda`` values.

    Every grid point restarts from the same seed (common random numbers), so
    differences along the grid reflect ``lambda`` alone.

    Parameters
    ----------
    rng : int, SeedSequence or Generator, optional
        Seed for the grid; defaults to ``cfg.master_seed``.

    Returns
    -------
    list of EffectEstimates
        One entry per grid value, in grid order.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if lambdas.size == 0:
        raise ValueError("lambda grid is empty")
    seq = as_seed_sequence(cfg.master_seed if rng is None else rng)
    return [estimate_effects(models, dataset, scale, lam, rho, cfg, np.random.default_rng(seq), weights)
            for lam in lambdas]
