"""Monte Carlo g-formula estimators of natural direct and indirect effects.

For potential outcomes ``Y{a, M(a')}`` write ``E[a, a']`` for their (weighted)
mean: the first index is the treatment seen by the outcome model, the second
the arm whose mediator distribution is used.  Then

* ``delta(a) = E[a, 1] - E[a, 0]`` (indirect effect),
* ``zeta(a)  = E[1, a] - E[0, a]`` (direct effect),
* ``tau      = E[1, 1] - E[0, 0]`` (total effect),

and ``delta(1) + zeta(0) = delta(0) + zeta(1) = tau`` telescopes over the same
four numbers.  Quantile effects replace the means by quantiles of the pooled
simulated potential outcomes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import zoib

EFFECTS = ("delta0", "delta1", "zeta0", "zeta1", "tau")


@dataclass(frozen=True)
class EffectEstimates:
    """Five mediation effects on the unit outcome scale.

    ``potential[a, a']`` holds the mean (or quantile) of ``Y{a, M(a')}`` from
    which all effects are differenced.
    """

    delta0: float
    delta1: float
    zeta0: float
    zeta1: float
    tau: float
    flavor: str = "average"
    q: float | None = None
    K: int = 0
    seed: object = None
    potential: np.ndarray = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_potential(cls, P, **kw):
        P = np.asarray(P, dtype=float)
        return cls(
            delta0=float(P[0, 1] - P[0, 0]),
            delta1=float(P[1, 1] - P[1, 0]),
            zeta0=float(P[1, 0] - P[0, 0]),
            zeta1=float(P[1, 1] - P[0, 1]),
            tau=float(P[1, 1] - P[0, 0]),
            potential=P,
            **kw,
        )

    def values(self):
        """Effects as an array ordered like :data:`EFFECTS`."""
        return np.array([getattr(self, e) for e in EFFECTS])

    def as_dict(self):
        return {e: getattr(self, e) for e in EFFECTS}


@dataclass(frozen=True)
class MonteCarloConfig:
    """Simulation settings shared by the g-formula estimators.

    Parameters
    ----------
    K : int
        Simulated draws per covariate row.
    use_dirichlet_weights : bool
        Draw flat-Dirichlet weights over rows (Bayesian-bootstrap style);
        otherwise every row has weight ``1/N``.
    master_seed : int, optional
        Used when an estimator is called without a generator.
    backend : str, optional
        Quantile kernel backend (``"compiled"`` or ``"python"``).
    """

    K: int = 10
    use_dirichlet_weights: bool = False
    master_seed: int | None = None
    backend: str | None = None

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")


def sample_dirichlet_weights(N, rng):
    """Flat Dirichlet(1, ..., 1) draw as normalized unit exponentials."""
    if N < 1:
        raise ValueError("N must be at least 1")
    e = rng.standard_exponential(N)
    return e / e.sum()


def _rng(cfg, rng):
    return np.random.default_rng(cfg.master_seed) if rng is None else rng


def _weights(cfg, N, rng, weights):
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (N,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be N nonnegative values summing to one")
        return w
    if cfg.use_dirichlet_weights:
        return sample_dirichlet_weights(N, rng)
    return np.full(N, 1.0 / N)


def simulate_mediators(mediator_pred, U, backend=None):
    """``M*(a) = F_M^-(U_a | a, x)`` for both arms.

    ``U`` is either one array shared by both arms or a pair ``(U0, U1)``.
    """
    U0, U1 = (U, U) if not isinstance(U, tuple) else U
    return tuple(zoib.zoib_quantile(u, mediator_pred.params(a), backend=backend)
                 for a, u in ((0, U0), (1, U1)))


def conditional_outcome_means(outcome_pred, mstar):
    """``mean[a][a']``: outcome conditional mean at ``(x, a, M*(a'))``."""
    return [[zoib.zoib_mean(outcome_pred.params(a, mstar[ap])) for ap in (0, 1)] for a in (0, 1)]


def weighted_potential_means(values, omega):
    """``E[a, a'] = K^-1 sum_{i,k} omega_i values[a][a'][k, i]``."""
    return np.array([[float(np.mean(values[a][ap] @ omega)) for ap in (0, 1)] for a in (0, 1)])


def estimate_average_effects(models, dataset, cfg=MonteCarloConfig(), rng=None, weights=None):
    """Average mediation effects by the conditional-mean Monte Carlo g-formula.

    For every row ``i`` and draw ``k`` one uniform ``U_ik`` is shared by both
    arms, ``M*_ik(a)`` is the mediator quantile at ``U_ik``, and the potential
    outcome is replaced by its conditional mean given ``(x_i, a', M*_ik(a))``.

    Parameters
    ----------
    models : FittedModels
    dataset : Dataset
        Supplies the covariate rows integrated over.
    cfg : MonteCarloConfig
    rng : numpy.random.Generator, optional
        Defaults to a generator seeded with ``cfg.master_seed``.
    weights : array, optional
        Fixed row weights; overrides ``cfg.use_dirichlet_weights``.
    """
    rng = _rng(cfg, rng)
    X = dataset.covariates
    omega = _weights(cfg, X.shape[0], rng, weights)
    U = zoib.open_uniform(rng, (cfg.K, X.shape[0]))
    mstar = simulate_mediators(models.mediator.predictor(X), U, cfg.backend)
    means = conditional_outcome_means(models.outcome.predictor(X), mstar)
    P = weighted_potential_means(means, omega)
    return EffectEstimates.from_potential(
        P, flavor="average", K=cfg.K, seed=cfg.master_seed,
        diagnostics={"mediator_means": [float(np.mean(m @ omega)) for m in mstar]},
    )


def empirical_quantile(values, q):
    """Inverse-CDF (type 1) quantile ``inf{z : F_n(z) >= q}``."""
    return float(np.quantile(np.ravel(values), q, method="inverted_cdf"))


def estimate_quantile_effects(models, dataset, q, cfg=MonteCarloConfig(), rng=None, weights=None,
                              coupling="comonotone"):
    """Quantile mediation effects from simulated potential outcomes.

    Covariate rows are drawn with probability ``omega``.  With equal
    weights every row is used exactly ``K`` times instead, which removes the
    multinomial resampling noise without changing the target.  ``coupling``
    selects a shared ``(U, V)`` pair per draw (``"comonotone"``) or fresh
    uniforms for every arm and cell (``"independent"``); the marginal
    distributions, hence the estimand, are the same either way.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if coupling not in ("comonotone", "independent"):
        raise ValueError(f"unknown coupling {coupling!r}")
    rng = _rng(cfg, rng)
    X = dataset.covariates
    N = X.shape[0]
    omega = _weights(cfg, N, rng, weights)
    if np.all(omega == omega[0]):
        rows = np.tile(np.arange(N), cfg.K)
    else:
        rows = rng.choice(N, size=cfg.K * N, p=omega)
    Xs = X[rows]
    size = rows.shape[0]
    if coupling == "comonotone":
        Us = zoib.open_uniform(rng, size)
        V = zoib.open_uniform(rng, size)
        Vs = {(a, ap): V for a in (0, 1) for ap in (0, 1)}
    else:
        Us = (zoib.open_uniform(rng, size), zoib.open_uniform(rng, size))
        Vs = {(a, ap): zoib.open_uniform(rng, size) for a in (0, 1) for ap in (0, 1)}
    mstar = simulate_mediators(models.mediator.predictor(Xs), Us, cfg.backend)
    ypred = models.outcome.predictor(Xs)
    P = np.empty((2, 2))
    for a in (0, 1):
        for ap in (0, 1):
            ystar = zoib.zoib_quantile(Vs[(a, ap)], ypred.params(a, mstar[ap]), backend=cfg.backend)
            P[a, ap] = empirical_quantile(ystar, q)
    return EffectEstimates.from_potential(P, flavor="quantile", q=float(q), K=cfg.K, seed=cfg.master_seed)


def mc_error_estimate(models, dataset, cfg=MonteCarloConfig(), R=10, rng=None, q=None):
    """Between-rerun Monte Carlo standard deviation of each effect.

    The row weights are drawn once and held fixed; each of the ``R`` reruns
    uses fresh simulation uniforms.  ``q`` selects quantile effects.
    """
    if R < 2:
        raise ValueError("R must be at least 2")
    rng = _rng(cfg, rng)
    omega = _weights(cfg, dataset.n, rng, None)
    runs = []
    for _ in range(R):
        if q is None:
            est = estimate_average_effects(models, dataset, cfg, rng, weights=omega)
        else:
            est = estimate_quantile_effects(models, dataset, q, cfg, rng, weights=omega)
        runs.append(est.values())
    sd = np.std(np.array(runs), axis=0, ddof=1)
    return dict(zip(EFFECTS, sd.tolist()))
