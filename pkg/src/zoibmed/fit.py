"""Maximum-likelihood fitting of the mediator and outcome ZOIB regressions.

The ZOIB likelihood factorizes into three independent pieces per regression:

* ``alpha``: logistic regression of ``1{Z = 0}`` on every row,
* ``gamma``: logistic regression of ``1{Z = 1}`` on rows with ``Z != 0``,
* ``(mu, phi)``: beta regression on the interior rows,

so each regression is fitted as three separate problems.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import zoib
from .errors import FitError, SeparationError, ZoibError
from .model import COMPONENTS, ETA_CLAMP, CoefficientSet, Dataset, ModelSpec, build_design, logit

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
MAX_ITER = 500
# fitted logits beyond this under zero penalty are treated as separation
SEPARATION_ETA = 18.0
SEPARATION_COEF = 30.0
MAX_FAILURE_RATE = 0.05


class DegenerateClassWarning(UserWarning):
    """A boundary indicator had no events (or only events)."""


# ---------------------------------------------------------------------------
# objectives: each returns (loglik, gradient, hessian) of the penalized problem


def _ridge(beta, penalty, free):
    """Penalty value, gradient and Hessian diagonal; ``free`` marks intercepts."""
    w = np.where(free, 0.0, penalty)
    return 0.5 * np.sum(w * beta**2), w * beta, w


def logistic_objective(beta, D, y, penalty=0.0, free=None):
    """Bernoulli log-likelihood ``sum y*eta - log(1 + e^eta)``.

    ``y`` may be fractional, which gives the quasi-likelihood used by the
    pilot regressions.
    """
    free = _intercept_mask(D.shape[1]) if free is None else free
    eta = D @ beta
    ll = np.sum(y * eta - np.logaddexp(0.0, eta))
    p = special.expit(eta)
    grad = D.T @ (y - p)
    hess = -(D.T * (p * (1 - p))) @ D
    pen, pgrad, pdiag = _ridge(beta, penalty, free)
    hess[np.diag_indices_from(hess)] -= pdiag
    return ll - pen, grad - pgrad, hess


def beta_objective(params, D, y, penalty=0.0, free=None):
    """Beta regression log-likelihood in ``(beta_mu, beta_phi)``.

    ``logit(mu) = D @ beta_mu`` and ``log(phi) = D @ beta_phi``; ``params``
    stacks the two vectors.
    """
    k = D.shape[1]
    free = np.concatenate([_intercept_mask(k)] * 2) if free is None else free
    eta_mu = D @ params[:k]
    eta_phi = D @ params[k:]
    mu = special.expit(eta_mu)
    phi = np.exp(eta_phi)
    a = mu * phi
    b = (1 - mu) * phi
    ly, l1y = np.log(y), np.log1p(-y)

    ll = np.sum(special.gammaln(phi) - special.gammaln(a) - special.gammaln(b)
                + (a - 1) * ly + (b - 1) * l1y)

    dg_ab = special.digamma(phi)
    lp = dg_ab - special.digamma(a) + ly     # d ll / d a
    lq = dg_ab - special.digamma(b) + l1y    # d ll / d b
    tg_ab = special.polygamma(1, phi)
    lpp = tg_ab - special.polygamma(1, a)
    lqq = tg_ab - special.polygamma(1, b)
    lpq = tg_ab

    g1 = mu * (1 - mu)
    s1 = phi * g1                              # d a / d eta_mu = -d b / d eta_mu
    d_mu = s1 * (lp - lq)
    d_phi = a * lp + b * lq
    h_mumu = phi * g1 * (1 - 2 * mu) * (lp - lq) + s1**2 * (lpp - 2 * lpq + lqq)
    h_phiphi = d_phi + a**2 * lpp + 2 * a * b * lpq + b**2 * lqq
    h_muphi = d_mu + s1 * (a * lpp + b * lpq - a * lpq - b * lqq)

    grad = np.concatenate([D.T @ d_mu, D.T @ d_phi])
    hess = np.block([
        [(D.T * h_mumu) @ D, (D.T * h_muphi) @ D],
        [(D.T * h_muphi) @ D, (D.T * h_phiphi) @ D],
    ])
    pen, pgrad, pdiag = _ridge(params, penalty, free)
    hess[np.diag_indices_from(hess)] -= pdiag
    return ll - pen, grad - pgrad, hess


def _intercept_mask(k):
    m = np.zeros(k, dtype=bool)
    m[0] = True
    return m


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimResult:
    x: np.ndarray
    loglik: float
    grad: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def resolution_of(loglik, magnitude=0.0):
    """Floating-point resolution of a log-likelihood.

    ``magnitude`` is the sum of the absolute values of the summed terms; the
    rounding noise of the total scales with it, not with the total itself.
    """
    return 64 * np.finfo(float).eps * max(1.0, abs(loglik), float(magnitude))


def logistic_magnitude(beta, D, y):
    """Sum of absolute log-likelihood terms of :func:`logistic_objective`."""
    eta = D @ beta
    return float(np.sum(np.abs(y * eta) + np.logaddexp(0.0, eta)))


def beta_magnitude(params, D, y):
    """Sum of absolute log-likelihood terms of :func:`beta_objective`."""
    k = D.shape[1]
    mu = special.expit(D @ params[:k])
    phi = np.exp(D @ params[k:])
    a, b = mu * phi, (1 - mu) * phi
    return float(np.sum(np.abs(special.gammaln(phi)) + np.abs(special.gammaln(a)) + np.abs(special.gammaln(b))
                        + np.abs((a - 1) * np.log(y)) + np.abs((b - 1) * np.log1p(-y))))


def maximize(objective, x0, tol=GRAD_TOL, max_iter=MAX_ITER, component=None, magnitude=None,
             diverged=None):
    """Newton ascent with a backtracking (Armijo) line search.

    The Hessian is shifted toward negative definiteness when needed, so every
    step is an ascent direction.  Steps whose predicted gain is below the
    floating-point resolution of the objective (see :func:`resolution_of`;
    ``magnitude(x)`` supplies the summed absolute terms) are taken in full,
    since the line search cannot resolve them; all other accepted steps
    increase the objective.  ``diverged(x)`` may return a message to abort
    when the iterates run off to infinity.
    """
    x = np.array(x0, dtype=float)
    ll, g, H = objective(x)
    trace = [ll]
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            return OptimResult(x, ll, g, it - 1, True, trace)
        d = _ascent_direction(g, H)
        gain = g @ d
        if not np.isfinite(gain):
            raise FitError("non-finite Newton direction", component, trace)
        resolution = None
        t = 1.0
        while True:
            x_new = x + t * d
            # overshooting trial points may overflow; they are rejected below
            with np.errstate(over="ignore", invalid="ignore"):
                ll_new, g_new, H_new = objective(x_new)
            if np.isfinite(ll_new) and ll_new >= ll + 1e-4 * t * gain:
                break
            if resolution is None:
                resolution = resolution_of(ll, magnitude(x) if magnitude is not None else 0.0)
            if gain < resolution and np.isfinite(ll_new) and ll_new >= ll - resolution:
                break
            t *= 0.5
            if t < 1e-12:
                return OptimResult(x, ll, g, it, bool(np.max(np.abs(g)) < tol), trace)
        x, ll, g, H = x_new, ll_new, g_new, H_new
        trace.append(ll)
        if diverged is not None:
            msg = diverged(x)
            if msg:
                raise FitError(msg, component, trace)
    return OptimResult(x, ll, g, max_iter, bool(np.max(np.abs(g)) < tol), trace)


def _ascent_direction(g, H):
    A = -H
    shift = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(A)))))
    for _ in range(60):
        try:
            L = np.linalg.cholesky(A + shift * np.eye(len(g)))
        except np.linalg.LinAlgError:
            shift = max(2 * shift, 1e-8 * scale)
            continue
        return np.linalg.solve(L.T, np.linalg.solve(L, g))
    return g / scale


# ---------------------------------------------------------------------------
# component fits


@dataclass
class ComponentFit:
    coef: np.ndarray
    loglik: float
    iterations: int
    grad_norm: float
    converged: bool
    degenerate: bool = False
    trace: list = field(default_factory=list)


def _degenerate_intercept(n, all_events):
    r = 0.5 / (n + 1)
    return logit(1 - r) if all_events else logit(r)


def fit_component_binary(indicator, design, penalty=0.0, component=None, start=None):
    """Penalized logistic regression of a boundary indicator.

    If the indicator has no events (or only events) the intercept is fixed at
    ``logit(0.5 / (n + 1))`` (or its complement), slopes at zero, and a
    :class:`DegenerateClassWarning` is issued.

    ``start`` replaces the default starting point (zero slopes, intercept
    at the logit of the event rate).

    Raises
    ------
    SeparationError
        Under zero penalty when the fitted logits diverge.
    FitError
        When the optimizer does not reach a gradient sup-norm of 1e-8.
    """
    y = np.asarray(indicator, dtype=float)
    D = np.asarray(design, dtype=float)
    n, k = D.shape
    events = y.sum()
    if events == 0 or events == n:
        warnings.warn(f"{component or 'binary component'}: {int(events)} events in {n} rows; "
                      "using the degenerate-class intercept", DegenerateClassWarning, stacklevel=2)
        coef = np.zeros(k)
        coef[0] = _degenerate_intercept(n, events == n and n > 0)
        ll = float(np.sum(y * coef[0] - np.logaddexp(0.0, coef[0]))) if n else 0.0
        return ComponentFit(coef, ll, 0, 0.0, True, degenerate=True)

    if start is None:
        x0 = np.zeros(k)
        x0[0] = logit(events / n)
    else:
        x0 = np.asarray(start, dtype=float)
    res = maximize(lambda b: logistic_objective(b, D, y, penalty), x0, component=component,
                   magnitude=lambda b: logistic_magnitude(b, D, y))
    eta = D @ res.x
    if penalty == 0 and (np.max(np.abs(eta)) > SEPARATION_ETA or np.max(np.abs(res.x)) > SEPARATION_COEF):
        raise SeparationError("fitted logits diverge (separation); set a small ridge "
                              "penalty (prior_sd) to regularize", component)
    if not res.converged:
        raise FitError(f"no convergence after {res.iterations} iterations "
                       f"(gradient sup-norm {np.max(np.abs(res.grad)):.3g})", component, res.trace)
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    return ComponentFit(res.x, ll, res.iterations, float(np.max(np.abs(res.grad))), True, trace=res.trace)


def fit_component_beta(interior_values, design, penalty=0.0, component=None, start=None):
    """Beta regression of interior values; returns ``(beta_mu, beta_phi)`` and fit info.

    Needs at least ``k + 2`` observations for a ``k``-column design.  The
    default start is the moment estimate (logit of the mean, log of the
    method-of-moments precision); ``start = (beta_mu, beta_phi)`` overrides it.
    """
    y = np.asarray(interior_values, dtype=float)
    D = np.asarray(design, dtype=float)
    n, k = D.shape
    if n < k + 2:
        raise FitError(f"{n} interior observations for {k} columns; need at least {k + 2}", component)
    if not np.all((y > 0) & (y < 1)):
        raise FitError("beta regression needs values strictly inside (0, 1)", component)

    if start is None:
        m, v = y.mean(), y.var()
        phi0 = m * (1 - m) / v - 1 if v > 0 else 1.0
        x0 = np.zeros(2 * k)
        x0[0] = logit(m)
        x0[k] = np.log(max(phi0, 0.5))
    else:
        x0 = np.concatenate([np.asarray(v, dtype=float) for v in start])
    def diverged(th):
        if np.max(np.abs(D @ th[k:])) > ETA_CLAMP or np.max(np.abs(D @ th[:k])) > ETA_CLAMP:
            return ("beta regression diverges (linear predictor beyond the link clamp); "
                    "the interior values are too few or too regular to fit")
        return None

    res = maximize(lambda th: beta_objective(th, D, y, penalty), x0, component=component,
                   magnitude=lambda th: beta_magnitude(th, D, y),
                   diverged=diverged)
    if not res.converged:
        raise FitError(f"no convergence after {res.iterations} iterations "
                       f"(gradient sup-norm {np.max(np.abs(res.grad)):.3g})", component, res.trace)
    ll, _, _ = beta_objective(res.x, D, y, 0.0)
    fit = ComponentFit(res.x, float(ll), res.iterations, float(np.max(np.abs(res.grad))), True,
                       trace=res.trace)
    return res.x[:k], res.x[k:], fit


# ---------------------------------------------------------------------------
# full model


@dataclass(frozen=True)
class FittedModels:
    """Fitted mediator and outcome ZOIB regressions."""

    mediator: CoefficientSet
    outcome: CoefficientSet
    spec: ModelSpec
    loglik: float
    converged: bool
    iterations: dict
    component_loglik: dict
    grad_norms: dict
    penalty: float = 0.0

    def to_dict(self):
        return {
            "spec": {"heterogeneous": self.spec.heterogeneous, "prior_sd": self.spec.prior_sd},
            "penalty": self.penalty,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": dict(self.iterations),
            "component_loglik": dict(self.component_loglik),
            "mediator": self.mediator.to_dict(),
            "outcome": self.outcome.to_dict(),
        }

    @classmethod
    def from_coefficients(cls, mediator, outcome):
        """Wrap known coefficients (no fit) for simulation and testing."""
        return cls(mediator, outcome, mediator.spec, float("nan"), True, {}, {}, {})

    @classmethod
    def from_dict(cls, d):
        spec = ModelSpec(heterogeneous=bool(d["spec"]["heterogeneous"]), prior_sd=d["spec"]["prior_sd"])
        return cls(CoefficientSet.from_dict(d["mediator"], spec), CoefficientSet.from_dict(d["outcome"], spec),
                   spec, d.get("loglik", float("nan")), d.get("converged", True),
                   d.get("iterations", {}), d.get("component_loglik", {}), {}, d.get("penalty", 0.0))


def _fit_regression(Z, D, penalty, prefix, fits, start=None):
    """Fit the three factors of one ZOIB regression on design ``D``."""
    start = start or {}
    zero = Z == 0
    one = Z == 1
    nonzero = ~zero
    inner = ~zero & ~one
    fa = fit_component_binary(zero, D, penalty, f"{prefix}.alpha", start.get("alpha"))
    fg = fit_component_binary(one[nonzero], D[nonzero], penalty, f"{prefix}.gamma", start.get("gamma"))
    mu_phi = (start["mu"], start["phi"]) if "mu" in start else None
    bm, bp, fb = fit_component_beta(Z[inner], D[inner], penalty, f"{prefix}.mu_phi", mu_phi)
    fits[f"{prefix}.alpha"] = fa
    fits[f"{prefix}.gamma"] = fg
    fits[f"{prefix}.mu_phi"] = fb
    return {"alpha": fa.coef, "gamma": fg.coef, "mu": bm, "phi": bp}


def _start_of(coefs, bank=None):
    if coefs is None:
        return None
    return {c: np.asarray(coefs.component(c))[bank] if bank is not None else coefs.component(c)
            for c in COMPONENTS}


def fit_all(dataset: Dataset, spec: ModelSpec, penalty=None, start=None) -> FittedModels:
    """Fit both ZOIB regressions (eight GLM components) by maximum likelihood.

    ``penalty`` defaults to ``spec.penalty`` (zero unless ``prior_sd`` is set).
    ``start`` (a compatible :class:`FittedModels`) warm-starts every
    component.  The reported log-likelihood is the unpenalized sum of the
    component log-likelihoods.
    """
    penalty = spec.penalty if penalty is None else float(penalty)
    X, A, M, Y = dataset.covariates, dataset.treatment, dataset.mediator, dataset.outcome
    fits = {}
    if spec.heterogeneous:
        med_banks = {c: [] for c in COMPONENTS}
        out_banks = {c: [] for c in COMPONENTS}
        for arm in (0, 1):
            rows = A == arm
            Dm = build_design(spec, X[rows], arm)
            Dy = build_design(spec, X[rows], arm, M[rows])
            cm = _fit_regression(M[rows], Dm, penalty, f"mediator[{arm}]", fits,
                                 _start_of(start and start.mediator, arm))
            cy = _fit_regression(Y[rows], Dy, penalty, f"outcome[{arm}]", fits,
                                 _start_of(start and start.outcome, arm))
            for c in COMPONENTS:
                med_banks[c].append(cm[c])
                out_banks[c].append(cy[c])
        med = {c: np.vstack(v) for c, v in med_banks.items()}
        out = {c: np.vstack(v) for c, v in out_banks.items()}
    else:
        med = _fit_regression(M, build_design(spec, X, A), penalty, "mediator", fits,
                              _start_of(start and start.mediator))
        out = _fit_regression(Y, build_design(spec, X, A, M), penalty, "outcome", fits,
                              _start_of(start and start.outcome))

    mediator = CoefficientSet(**med, spec=spec, with_mediator=False)
    outcome = CoefficientSet(**out, spec=spec, with_mediator=True)
    component_ll = {k: f.loglik for k, f in fits.items()}
    return FittedModels(
        mediator=mediator,
        outcome=outcome,
        spec=spec,
        loglik=float(sum(component_ll.values())),
        converged=all(f.converged for f in fits.values()),
        iterations={k: f.iterations for k, f in fits.items()},
        component_loglik=component_ll,
        grad_norms={k: f.grad_norm for k, f in fits.items()},
        penalty=penalty,
    )


def observed_loglik(models: FittedModels, dataset: Dataset):
    """Direct ZOIB log-likelihood of the data, summed over both regressions."""
    X, A, M, Y = dataset.covariates, dataset.treatment, dataset.mediator, dataset.outcome
    pm = models.mediator.predict(X, A)
    py = models.outcome.predict(X, A, M)
    return float(np.sum(zoib.zoib_loglik(M, pm)) + np.sum(zoib.zoib_loglik(Y, py)))


# ---------------------------------------------------------------------------
# bootstrap


def as_seed_sequence(seed):
    """Normalize an int, SeedSequence or Generator into a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(seed.integers(0, 2**63 - 1, size=4).tolist())
    return np.random.SeedSequence(seed)


def child_seed(seq, j):
    """The ``j``-th child of ``seq`` without touching its spawn counter."""
    return np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (int(j),))


# sub-streams of each bootstrap replicate's seed
RESAMPLE_STREAM = 0
GFORMULA_STREAM = 1


@dataclass(frozen=True)
class BootstrapReplicate:
    index: int
    seed: tuple
    rows: np.ndarray
    models: FittedModels | None
    error: str | None = None

    @property
    def ok(self):
        return self.models is not None


@dataclass(frozen=True)
class BootstrapEnsemble:
    replicates: tuple
    B: int

    @property
    def fitted(self):
        return [r for r in self.replicates if r.ok]

    @property
    def failures(self):
        return [r for r in self.replicates if not r.ok]

    @property
    def seeds(self):
        return [r.seed for r in self.replicates]


def resample_rows(rng, treatment, stratified=False):
    """Row indices of a with-replacement resample of size N."""
    n = len(treatment)
    if not stratified:
        return rng.integers(0, n, size=n)
    rows = []
    for arm in (0, 1):
        idx = np.flatnonzero(treatment == arm)
        rows.append(idx[rng.integers(0, idx.size, size=idx.size)])
    return np.sort(np.concatenate(rows))


def _fit_replicate(dataset, spec, penalty, index, seq, stratified, identity, start):
    rng = np.random.default_rng(child_seed(seq, RESAMPLE_STREAM))
    rows = np.arange(dataset.n) if identity else resample_rows(rng, dataset.treatment, stratified)
    seed = (seq.entropy, tuple(seq.spawn_key))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateClassWarning)
            models = fit_all(dataset.take(rows), spec, penalty, start)
    except ZoibError as exc:
        log.warning("bootstrap replicate %d excluded: %s", index, exc)
        return BootstrapReplicate(index, seed, rows, None, str(exc))
    return BootstrapReplicate(index, seed, rows, models)


def bootstrap_fit(dataset: Dataset, spec: ModelSpec, B: int, rng, penalty=None,
                  stratified=False, identity=False, threads=1, start=None) -> BootstrapEnsemble:
    """Refit on ``B`` with-replacement row resamples.

    Replicate ``b`` draws its resample from a sub-stream of the ``b``-th child
    of the master seed sequence, so the ensemble does not depend on
    ``threads``.  Failed
    replicates are logged and excluded; more than 5% failures is an error.
    ``identity=True`` fits every replicate on the original rows (a test hook).
    ``start`` warm-starts every refit (typically the full-data fit).
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    master = as_seed_sequence(rng)
    children = [child_seed(master, b) for b in range(B)]
    args = [(dataset, spec, penalty, b, children[b], stratified, identity, start) for b in range(B)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(lambda a: _fit_replicate(*a), args))
    else:
        reps = [_fit_replicate(*a) for a in args]
    ens = BootstrapEnsemble(tuple(reps), B)
    if len(ens.failures) > MAX_FAILURE_RATE * B:
        raise FitError(f"{len(ens.failures)} of {B} bootstrap replicates failed; "
                       f"first error: {ens.failures[0].error}")
    return ens


# ---------------------------------------------------------------------------
# pilot regressions for the sensitivity range


@dataclass(frozen=True)
class LambdaRange:
    lo: float
    hi: float
    mediator_coef: float
    scale: str


def pilot_lambda_range(dataset: Dataset, scale="logit") -> LambdaRange:
    """Plausible range of the sensitivity parameter from a pilot mean regression.

    ``logit``: quasi-likelihood logistic-mean regression of Y on
    ``(1, M, A, X)``, range ``[-2|b_M|, 2|b_M|]``.  ``linear``: least squares,
    range ``[-|b_M|, |b_M|]``.
    """
    D = np.column_stack([np.ones(dataset.n), dataset.mediator, dataset.treatment, dataset.covariates])
    y = dataset.outcome
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise FitError("pilot design is rank deficient", f"pilot.{scale}")
    if scale == "logit":
        x0 = np.zeros(D.shape[1])
        x0[0] = logit(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        res = maximize(lambda b: logistic_objective(b, D, y), x0, component="pilot.logit",
                       magnitude=lambda b: logistic_magnitude(b, D, y))
        if not res.converged:
            raise FitError("quasi-likelihood pilot did not converge", "pilot.logit", res.trace)
        b = float(res.x[1])
        width = 2 * abs(b)
    elif scale == "linear":
        coef, *_ = np.linalg.lstsq(D, y, rcond=None)
        b = float(coef[1])
        width = abs(b)
    else:
        raise ValueError(f"unknown scale {scale!r}")
    if not np.isfinite(b):
        raise FitError("non-finite pilot coefficient", f"pilot.{scale}")
    return LambdaRange(-width, width, b, scale)


# ---------------------------------------------------------------------------
# predictive check


def predictive_check(models: FittedModels, dataset: Dataset, n_rep: int, rng):
    """Boundary proportions and interior moments, observed vs replicated.

    For each arm and each of mediator/outcome returns the observed statistic
    and the mean, 5% and 95% quantiles over ``n_rep`` datasets simulated from
    the fitted model at the observed covariates and treatments.
    """
    X, A = dataset.covariates, dataset.treatment
    pm = models.mediator.predict(X, A)
    pred_y = models.outcome.predictor(X)

    def stats(M, Y):
        out = {}
        for arm in (0, 1):
            rows = A == arm
            for name, v in (("mediator", M[rows]), ("outcome", Y[rows])):
                inner = v[(v > 0) & (v < 1)]
                out[(name, arm, "p0")] = np.mean(v == 0)
                out[(name, arm, "p1")] = np.mean(v == 1)
                out[(name, arm, "interior_mean")] = inner.mean() if inner.size else np.nan
                out[(name, arm, "interior_sd")] = inner.std(ddof=1) if inner.size > 1 else np.nan
        return out

    observed = stats(dataset.mediator, dataset.outcome)
    reps = []
    for _ in range(n_rep):
        M = zoib.zoib_sample(rng, pm)
        Y = zoib.zoib_sample(rng, pred_y.params(A, M))
        reps.append(stats(M, Y))
    rows = []
    for key, obs in observed.items():
        vals = np.array([r[key] for r in reps])
        rows.append({
            "variable": key[0], "arm": key[1], "statistic": key[2], "observed": obs,
            "replicated_mean": float(np.nanmean(vals)),
            "replicated_q05": float(np.nanquantile(vals, 0.05)),
            "replicated_q95": float(np.nanquantile(vals, 0.95)),
        })
    return rows
