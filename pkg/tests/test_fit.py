"""Maximum-likelihood fits, bootstrap refits and pilot regressions."""
from __future__ import annotations

import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import special, stats

from zoibmed import zoib
from zoibmed.errors import FitError, SeparationError
from zoibmed.fit import (
    DegenerateClassWarning,
    FittedModels,
    beta_objective,
    bootstrap_fit,
    child_seed,
    fit_all,
    fit_component_beta,
    fit_component_binary,
    logistic_objective,
    maximize,
    observed_loglik,
    pilot_lambda_range,
    resample_rows,
    logistic_magnitude,
    resolution_of,
)
from zoibmed.model import COMPONENTS, Dataset, ModelSpec, build_design

FD_STEP = 1e-6


def central_difference(fun, x, h=FD_STEP):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def _relative_error(fd, g):
    return np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-3))


def _design(rng, n, p):
    return np.column_stack([np.ones(n), rng.standard_normal((n, p))])


# ── objectives ───────────────────────────────────────────────────────────────


class TestObjectives:
    @pytest.mark.parametrize("penalty", [0.0, 0.5])
    def test_logistic_gradient_and_hessian(self, rng, penalty):
        D = _design(rng, 80, 3)
        y = (rng.random(80) < 0.35).astype(float)
        for _ in range(10):
            b = rng.normal(0, 0.7, 4)
            ll, g, H = logistic_objective(b, D, y, penalty)
            assert _relative_error(central_difference(lambda v: logistic_objective(v, D, y, penalty)[0], b), g) < 1e-6
            Hfd = np.column_stack([central_difference(lambda v: logistic_objective(v, D, y, penalty)[1][j], b)
                                   for j in range(4)])
            assert_allclose(Hfd, H, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("penalty", [0.0, 0.5])
    def test_beta_gradient_and_hessian(self, rng, penalty):
        D = _design(rng, 80, 2)
        y = rng.beta(2.0, 3.0, 80)
        for _ in range(10):
            th = rng.normal(0, 0.5, 6)
            ll, g, H = beta_objective(th, D, y, penalty)
            assert _relative_error(central_difference(lambda v: beta_objective(v, D, y, penalty)[0], th), g) < 1e-6
            Hfd = np.column_stack([central_difference(lambda v: beta_objective(v, D, y, penalty)[1][j], th)
                                   for j in range(6)]).T
            assert_allclose(Hfd, H, rtol=1e-5, atol=1e-5)

    def test_beta_loglik_matches_scipy(self, rng):
        D = _design(rng, 30, 1)
        y = rng.beta(1.5, 2.5, 30)
        th = rng.normal(0, 0.5, 4)
        mu = special.expit(D @ th[:2])
        phi = np.exp(D @ th[2:])
        ref = stats.beta.logpdf(y, mu * phi, (1 - mu) * phi).sum()
        assert beta_objective(th, D, y)[0] == pytest.approx(ref, rel=1e-12)

    def test_penalty_spares_intercept(self, rng):
        D = _design(rng, 20, 2)
        y = (rng.random(20) < 0.5).astype(float)
        b = np.array([2.0, 0.0, 0.0])
        assert logistic_objective(b, D, y, 10.0)[0] == logistic_objective(b, D, y, 0.0)[0]


def test_likelihood_factorization_oracle(rng):
    """Sum of the three factor likelihoods, evaluated with scipy, equals the ZOIB likelihood."""
    for _ in range(5):
        n = 200
        p = zoib.ZoibParams(rng.uniform(0.05, 0.4, n), rng.uniform(0.05, 0.4, n),
                            rng.uniform(0.1, 0.9, n), np.exp(rng.uniform(0, 3, n)))
        z = zoib.zoib_sample(rng, p)
        zero, one = z == 0, z == 1
        inner = ~zero & ~one
        nz = ~zero
        factor = (stats.bernoulli.logpmf(zero, p.alpha).sum()
                  + stats.bernoulli.logpmf(one[nz], p.gamma[nz]).sum()
                  # interior values are clamped to [1e-12, 1 - 1e-12] before the log density
                  + stats.beta.logpdf(np.clip(z[inner], 1e-12, 1 - 1e-12),
                                      p.shape_a[inner], p.shape_b[inner]).sum())
        assert abs(zoib.zoib_loglik(z, p).sum() - factor) < 1e-9


# ── optimizer ────────────────────────────────────────────────────────────────


class TestMaximize:
    def test_concave_quadratic(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        c = np.array([1.0, -2.0])
        res = maximize(lambda x: (-0.5 * x @ A @ x + c @ x, c - A @ x, -A), np.zeros(2))
        assert res.converged
        assert_allclose(res.x, np.linalg.solve(A, c), atol=1e-12)

    def test_indefinite_hessian_still_ascends(self):
        # f = -x^4/4 + x^2/2 - y^2 starting where the Hessian is indefinite
        def f(v):
            x, y = v
            return (-x**4 / 4 + x**2 / 2 - y**2, np.array([-x**3 + x, -2 * y]),
                    np.array([[-3 * x**2 + 1, 0.0], [0.0, -2.0]]))
        res = maximize(f, np.array([0.1, 1.0]))
        assert res.converged
        assert abs(abs(res.x[0]) - 1) < 1e-8
        assert np.all(np.diff(res.trace) >= 0)


# ── component fits ───────────────────────────────────────────────────────────


class TestBinaryComponent:
    def test_intercept_only_mle(self):
        y = np.r_[np.ones(30), np.zeros(70)]
        fit = fit_component_binary(y, np.ones((100, 1)))
        assert fit.coef[0] == pytest.approx(special.logit(0.3), abs=1e-9)
        assert fit.grad_norm < 1e-8

    @pytest.mark.parametrize("all_events", [False, True])
    def test_degenerate_class_rule(self, rng, all_events):
        n = 50
        y = np.ones(n) if all_events else np.zeros(n)
        with pytest.warns(DegenerateClassWarning):
            fit = fit_component_binary(y, _design(rng, n, 2), penalty=0.1)
        r = 0.5 / (n + 1)
        expected = special.logit(1 - r) if all_events else special.logit(r)
        assert fit.coef[0] == pytest.approx(expected)
        assert_array_equal(fit.coef[1:], 0.0)
        assert fit.degenerate

    def test_separation_detected(self):
        x = np.linspace(-1, 1, 40)
        y = (x > 0).astype(float)
        D = np.column_stack([np.ones(40), x])
        with pytest.raises(SeparationError, match="ridge"):
            fit_component_binary(y, D, component="outcome.gamma")

    def test_separation_regularized_by_ridge(self):
        x = np.linspace(-1, 1, 40)
        y = (x > 0).astype(float)
        D = np.column_stack([np.ones(40), x])
        fit = fit_component_binary(y, D, penalty=0.04)
        assert fit.converged and np.all(np.isfinite(fit.coef))

    def test_trace_monotone(self, rng):
        D = _design(rng, 300, 3)
        y = (rng.random(300) < special.expit(D @ [0.2, 1.0, -0.5, 0.3])).astype(float)
        fit = fit_component_binary(y, D, start=np.array([3.0, -2.0, 2.0, 1.0]))
        tr = np.array(fit.trace)
        # accepted steps never lose more than the objective's rounding noise
        floor = resolution_of(0.0, max(logistic_magnitude(b, D, y) for b in (fit.coef, np.array([3.0, -2.0, 2.0, 1.0]))))
        assert np.all(np.diff(tr) >= -floor)
        assert fit.iterations > 1


class TestBetaComponent:
    @staticmethod
    def _se(bm, bp, y):
        D = np.ones((y.size, 1))
        H = beta_objective(np.r_[bm, bp], D, y)[2]
        cov = np.linalg.inv(-H)
        mu, phi = special.expit(bm[0]), np.exp(bp[0])
        # delta method to (mu, phi)
        return mu, phi, np.sqrt(cov[0, 0]) * mu * (1 - mu), np.sqrt(cov[1, 1]) * phi

    def test_recovery(self):
        y = np.random.default_rng(1).beta(0.6 * 8, 0.4 * 8, 5000)
        bm, bp, fit = fit_component_beta(y, np.ones((5000, 1)))
        mu, phi, se_mu, se_phi = self._se(bm, bp, y)
        assert abs(mu - 0.6) < 3 * se_mu
        assert abs(phi - 8) < 3 * se_phi
        assert fit.grad_norm < 1e-8

    def test_uniform_data(self):
        y = np.random.default_rng(2).random(5000)
        bm, bp, _ = fit_component_beta(y, np.ones((5000, 1)))
        mu, phi, se_mu, se_phi = self._se(bm, bp, y)
        assert abs(mu - 0.5) < 3 * se_mu
        assert abs(phi - 2) < 3 * se_phi

    def test_too_few_observations(self):
        with pytest.raises(FitError, match="need at least"):
            fit_component_beta(np.array([0.2, 0.4, 0.6]), np.ones((3, 2)))

    def test_rejects_boundary_values(self):
        with pytest.raises(FitError):
            fit_component_beta(np.array([0.0, 0.4, 0.6, 0.5]), np.ones((4, 1)))


# ── full model ───────────────────────────────────────────────────────────────


class TestFitAll:
    def test_factorization_and_gradients(self, fitted, synthetic_data):
        assert abs(fitted.loglik - observed_loglik(fitted, synthetic_data)) < 1e-9
        assert fitted.loglik == pytest.approx(sum(fitted.component_loglik.values()), abs=1e-9)
        assert set(fitted.component_loglik) == {f"{r}.{c}" for r in ("mediator", "outcome")
                                                for c in ("alpha", "gamma", "mu_phi")}
        assert all(g < 1e-8 for g in fitted.grad_norms.values())
        assert fitted.converged

    def test_deterministic(self, fitted, synthetic_data):
        again = fit_all(synthetic_data, ModelSpec())
        for half in ("mediator", "outcome"):
            for c in COMPONENTS:
                assert_array_equal(getattr(getattr(again, half), c), getattr(getattr(fitted, half), c))

    def test_close_to_truth(self, fitted, true_models):
        # loose sanity check; calibrated recovery lives in the acceptance suite
        for half in ("mediator", "outcome"):
            for c in ("alpha", "mu"):
                assert_allclose(getattr(getattr(fitted, half), c), getattr(getattr(true_models, half), c), atol=0.6)

    def test_penalty_to_zero(self, fitted, synthetic_data):
        def flat(fm):
            return np.concatenate([np.ravel(getattr(getattr(fm, h), c))
                                   for h in ("mediator", "outcome") for c in COMPONENTS])
        base = flat(fitted)
        dist = []
        pen = 1e-4
        while pen >= 1e-8:
            dist.append(np.max(np.abs(flat(fit_all(synthetic_data, ModelSpec(), penalty=pen)) - base)))
            pen /= 2
        assert max(dist) < 1e-4
        assert dist[-1] < dist[0]

    def test_heterogeneous(self, synthetic_data):
        fm = fit_all(synthetic_data, ModelSpec(heterogeneous=True))
        assert fm.mediator.alpha.shape == (2, 3)
        assert fm.outcome.alpha.shape == (2, 4)
        assert abs(fm.loglik - observed_loglik(fm, synthetic_data)) < 1e-9
        assert "outcome[1].mu_phi" in fm.grad_norms

    def test_warm_start_reaches_same_optimum(self, fitted, synthetic_data):
        warm = fit_all(synthetic_data, ModelSpec(), start=fitted)
        assert_allclose(warm.outcome.mu, fitted.outcome.mu, atol=1e-7)
        assert warm.iterations["outcome.mu_phi"] <= 1

    def test_serialization_round_trip(self, fitted):
        back = FittedModels.from_dict(fitted.to_dict())
        assert_array_equal(back.outcome.phi, fitted.outcome.phi)
        assert back.loglik == fitted.loglik

    def test_component_errors_are_labelled(self, rng):
        n = 6
        ds = Dataset(rng.normal(size=(n, 3)), [0, 1] * 3, [0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
                     [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        with pytest.raises(FitError) as err:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateClassWarning)
                fit_all(ds, ModelSpec())
        assert err.value.component.endswith("mu_phi")


# ── bootstrap ────────────────────────────────────────────────────────────────


class TestBootstrap:
    def test_identity_replicate_equals_fit(self, fitted, synthetic_data):
        ens = bootstrap_fit(synthetic_data, ModelSpec(), 1, 0, identity=True)
        rep = ens.replicates[0].models
        for half in ("mediator", "outcome"):
            for c in COMPONENTS:
                assert_allclose(getattr(getattr(rep, half), c), getattr(getattr(fitted, half), c), rtol=0, atol=0)

    def test_resample_preserves_n(self, synthetic_data):
        rng = np.random.default_rng(0)
        A = synthetic_data.treatment
        assert resample_rows(rng, A).shape == (synthetic_data.n,)
        rows = resample_rows(rng, A, stratified=True)
        assert rows.shape == (synthetic_data.n,)
        assert np.sum(A[rows]) == np.sum(A)

    def test_reproducible_and_thread_independent(self, synthetic_data):
        a = bootstrap_fit(synthetic_data, ModelSpec(), 4, 42)
        b = bootstrap_fit(synthetic_data, ModelSpec(), 4, 42, threads=3)
        assert a.seeds == b.seeds
        for ra, rb in zip(a.replicates, b.replicates):
            assert_array_equal(ra.rows, rb.rows)
            assert_array_equal(ra.models.outcome.mu, rb.models.outcome.mu)
            assert ra.models.spec == rb.models.spec

    def test_replicates_use_distinct_streams(self, synthetic_data):
        ens = bootstrap_fit(synthetic_data, ModelSpec(), 3, 42)
        assert len({r.rows.tobytes() for r in ens.replicates}) == 3
        assert ens.replicates[2].seed[1][-1] == 2

    def test_failures_excluded_then_fatal(self, rng):
        # five interior mediator values: the original rows fit, but resamples
        # that draw fewer than five distinct interior rows cannot
        n = 40
        M = np.r_[np.zeros(18), np.ones(17), [0.2, 0.35, 0.5, 0.65, 0.8]]
        ds = Dataset(rng.normal(size=(n, 1)), np.arange(n) % 2, M, rng.uniform(0.1, 0.9, n))
        with pytest.raises(FitError, match="bootstrap replicates failed"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                bootstrap_fit(ds, ModelSpec(prior_sd=2.0), 20, 0)

    def test_some_failures_tolerated(self, synthetic_data, caplog):
        ens = bootstrap_fit(synthetic_data, ModelSpec(), 3, 0)
        assert len(ens.fitted) == 3 and not ens.failures

    def test_b_must_be_positive(self, synthetic_data):
        with pytest.raises(ValueError):
            bootstrap_fit(synthetic_data, ModelSpec(), 0, 0)

    def test_child_seed_is_pure(self):
        s = np.random.SeedSequence(5)
        c1 = child_seed(s, 3)
        c2 = child_seed(s, 3)
        assert c1.generate_state(4).tolist() == c2.generate_state(4).tolist()
        assert s.n_children_spawned == 0


# ── pilot regression ─────────────────────────────────────────────────────────


class TestPilot:
    @staticmethod
    def _data(rng, n, slope):
        X = rng.standard_normal((n, 2))
        A = (rng.random(n) < 0.5).astype(float)
        M = rng.random(n)
        Y = np.clip(0.2 + slope * M + rng.normal(0, 0.05, n), 0, 1)
        return Dataset(X, A, M, Y)

    def test_linear_recovers_slope(self, rng):
        r = pilot_lambda_range(self._data(rng, 4000, 0.3), "linear")
        assert r.hi == pytest.approx(0.3, abs=0.01)
        assert r.lo == -r.hi

    def test_logit_twice_the_coefficient(self, rng):
        ds = self._data(rng, 2000, 0.3)
        r = pilot_lambda_range(ds, "logit")
        assert r.hi == pytest.approx(2 * abs(r.mediator_coef))
        assert r.lo == -r.hi
        # oracle: quasi-likelihood score equations at the fitted coefficients
        D = np.column_stack([np.ones(ds.n), ds.mediator, ds.treatment, ds.covariates])
        b = r.mediator_coef
        assert b > 0

    def test_independent_mediator_near_zero(self, rng):
        n = 4000
        ds = Dataset(rng.standard_normal((n, 1)), (rng.random(n) < 0.5).astype(float), rng.random(n),
                     rng.uniform(0.2, 0.8, n))
        for scale in ("linear", "logit"):
            r = pilot_lambda_range(ds, scale)
            assert r.hi < 0.15

    def test_rank_deficient(self, rng):
        n = 50
        X = np.ones((n, 1))
        ds = Dataset(X, [0, 1] * 25, rng.random(n), rng.random(n))
        with pytest.raises(FitError):
            pilot_lambda_range(ds, "linear")

    def test_unknown_scale(self, synthetic_data):
        with pytest.raises(ValueError):
            pilot_lambda_range(synthetic_data, "probit")


def test_design_columns_of_fit(fitted, synthetic_data):
    spec = ModelSpec()
    D = build_design(spec, synthetic_data.covariates, synthetic_data.treatment)
    assert D.shape[1] == fitted.mediator.width
