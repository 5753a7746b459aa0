"""Self-check suite of numerical invariants, run by ``zoibmed check``.

Every check returns a :class:`CheckResult`; :func:`run_checks` runs them all
on a small synthetic problem (or on a user dataset when one is given).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import _backend, zoib
from .fit import beta_objective, fit_all, logistic_objective, observed_loglik
from .gformula import MonteCarloConfig, estimate_average_effects, estimate_quantile_effects
from .model import CoefficientSet, Dataset, ModelSpec
from .sensitivity import (
    SensitivityParams,
    estimate_effects_copula,
    estimate_effects_linear,
    estimate_effects_logit,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


def ulp_gap(x, y):
    """Distance between two doubles in units of the larger one's ulp."""
    if x == y:
        return 0.0
    return abs(x - y) / np.spacing(max(abs(x), abs(y)))


def decomposition_gap(est):
    """Largest ulp gap in ``delta1 + zeta0 = delta0 + zeta1 = tau``."""
    return max(ulp_gap(est.delta1 + est.zeta0, est.tau), ulp_gap(est.delta0 + est.zeta1, est.tau))


def synthetic_problem(seed=7, N=400, p=2):
    """Small dataset simulated from fixed coefficients, plus those coefficients."""
    from .fit import FittedModels

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, p))
    A = (rng.random(N) < 0.5).astype(float)
    spec = ModelSpec()

    def co(alpha, gamma, mu, phi, with_mediator):
        return CoefficientSet(np.array(alpha), np.array(gamma), np.array(mu), np.array(phi),
                              spec, with_mediator)

    med = co([-1.8, 0.3, 0.0, 0.4], [-1.2, 0.0, 0.2, 0.3], [0.2, 0.3, -0.2, 0.4],
             [1.5, 0.1, 0.0, 0.2], False)
    out = co([-1.5, 0.2, 0.1, 0.3, 0.8], [-1.6, 0.1, 0.0, -0.2, -0.6], [-0.3, 0.2, 0.1, -0.2, -0.5],
             [1.4, 0.0, 0.1, 0.1, 0.2], True)
    M = zoib.zoib_sample(rng, med.predict(X, A))
    Y = zoib.zoib_sample(rng, out.predict(X, A, M))
    return Dataset(X, A, M, Y), FittedModels.from_coefficients(med, out)


def check_distribution(rng):
    p = zoib.ZoibParams(0.15, 0.25, 0.4, 6.0)
    a, b = p.shape_a, p.shape_b
    interior, _ = integrate.quad(lambda z: zoib.zoib_density(z, p), 0, 1)
    total = p.alpha + (1 - p.alpha) * p.gamma + interior
    first, _ = integrate.quad(lambda z: z * zoib.zoib_density(z, p), 0, 1)
    mean_q = (1 - p.alpha) * p.gamma + first
    u = rng.random(2000) * 0.999 + 0.0005
    z = zoib.zoib_quantile(u, p)
    inner = (z > 0) & (z < 1)
    resid = np.max(np.abs(special.betainc(a, b, z[inner])
                          - (u[inner] - p.alpha) / ((1 - p.alpha) * (1 - p.gamma))))
    ok = abs(total - 1) < 1e-8 and abs(mean_q - zoib.zoib_mean(p)) < 1e-8 and resid < 1e-10
    return CheckResult("zoib distribution (normalization, mean, quantile inverse)", bool(ok),
                       f"mass={total:.12f} mean_gap={abs(mean_q - zoib.zoib_mean(p)):.2e} resid={resid:.2e}")


def check_backends(rng):
    names = sorted(_backend.BACKENDS)
    u = rng.random(5000)
    a = np.exp(rng.uniform(-1, 3, 5000))
    b = np.exp(rng.uniform(-1, 3, 5000))
    outs = [zoib.beta_quantile(u, a, b, backend=n) for n in names]
    gap = max(np.max(np.abs(o - outs[0])) for o in outs)
    return CheckResult(f"kernel backends agree ({', '.join(names)})", bool(gap < 1e-12), f"max gap {gap:.2e}")


def _fd_gradient(fun, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def check_gradients(rng):
    n = 60
    D = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    y_bin = (rng.random(n) < 0.4).astype(float)
    y_beta = rng.beta(2, 3, n)
    worst = 0.0
    for _ in range(10):
        b = rng.normal(0, 0.5, 3)
        th = rng.normal(0, 0.5, 6)
        for obj, x, y in ((logistic_objective, b, y_bin), (beta_objective, th, y_beta)):
            g = obj(x, D, y, 0.1)[1]
            fd = _fd_gradient(lambda v: obj(v, D, y, 0.1)[0], x)
            worst = max(worst, np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-3)))
    return CheckResult("analytic gradients match central differences", bool(worst < 1e-6), f"max rel err {worst:.2e}")


def check_factorization(dataset, spec):
    fm = fit_all(dataset, spec)
    direct = observed_loglik(fm, dataset)
    gap = abs(direct - fm.loglik)
    grad_ok = all(g < 1e-8 for g in fm.grad_norms.values())
    return CheckResult("likelihood factorization and converged gradients", bool(gap < 1e-9 and grad_ok),
                       f"|sum - direct| = {gap:.2e}"), fm


def check_identities(models, dataset, seed):
    cfg = MonteCarloConfig(K=5)
    avg = estimate_average_effects(models, dataset, cfg, np.random.default_rng(seed))
    qe = estimate_quantile_effects(models, dataset, 0.5, cfg, np.random.default_rng(seed))
    results = [
        CheckResult("decomposition identity (average)", decomposition_gap(avg) <= 4,
                    f"{decomposition_gap(avg):g} ulps"),
        CheckResult("decomposition identity (quantile)", decomposition_gap(qe) <= 4,
                    f"{decomposition_gap(qe):g} ulps"),
    ]
    lin0 = estimate_effects_linear(models, dataset, 0.0, cfg, np.random.default_rng(seed))
    results.append(CheckResult("linear sensitivity at lambda=0 equals the g-formula bitwise",
                               lin0.values().tobytes() == avg.values().tobytes()))
    taus = [estimate_effects_linear(models, dataset, lam, cfg, np.random.default_rng(seed)).tau
            for lam in (-1.0, 0.5, 2.0)]
    results.append(CheckResult("linear sensitivity total effect constant in lambda",
                               all(ulp_gap(t, avg.tau) <= 4 for t in taus)))
    lg = estimate_effects_logit(models, dataset, SensitivityParams(0.0, 0.5), cfg, np.random.default_rng(seed))
    cop = estimate_effects_copula(models, dataset, 0.5, cfg, np.random.default_rng(seed))
    results.append(CheckResult("logit sensitivity at lambda=0 equals the copula g-formula",
                               lg.values().tobytes() == cop.values().tobytes()))
    return results


def run_checks(dataset=None, spec=None, seed=0):
    """Run every check; returns a list of :class:`CheckResult`."""
    rng = np.random.default_rng(seed)
    if dataset is None:
        dataset, _ = synthetic_problem(seed)
    spec = spec or ModelSpec()
    results = [check_distribution(rng), check_backends(rng), check_gradients(rng)]
    fac, fm = check_factorization(dataset, spec)
    results.append(fac)
    results.extend(check_identities(fm, dataset, seed))
    return results
