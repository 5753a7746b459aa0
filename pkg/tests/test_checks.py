"""Self-check suite."""
from __future__ import annotations

import numpy as np
import pytest

from zoibmed.checks import CheckResult, decomposition_gap, run_checks, synthetic_problem, ulp_gap
from zoibmed.gformula import EffectEstimates


class TestHelpers:
    def test_ulp_gap(self):
        assert ulp_gap(1.0, 1.0) == 0.0
        assert ulp_gap(1.0, np.nextafter(1.0, 2.0)) == 1.0
        assert ulp_gap(-0.0, 0.0) == 0.0

    def test_decomposition_gap_zero_for_exact_potentials(self):
        est = EffectEstimates.from_potential(np.array([[0.125, 0.25], [0.5, 0.75]]))
        assert decomposition_gap(est) == 0.0

    def test_line_format(self):
        assert CheckResult("a", True).line() == "PASS a"
        assert CheckResult("b", False, "why").line() == "FAIL b: why"

    def test_synthetic_problem_shapes(self):
        ds, models = synthetic_problem(seed=1, N=50, p=2)
        assert ds.n == 50 and ds.p == 2
        assert models.mediator.width == 4 and models.outcome.width == 5


@pytest.fixture(scope="module")
def results():
    return run_checks(seed=0)


class TestRunChecks:
    def test_all_pass(self, results):
        failed = [r.line() for r in results if not r.passed]
        assert not failed

    def test_covers_every_invariant(self, results):
        names = " ".join(r.name for r in results)
        for word in ("normalization", "backends", "gradients", "factorization", "decomposition",
                     "linear sensitivity", "logit sensitivity"):
            assert word in names

    def test_on_user_dataset(self, synthetic_data):
        assert all(r.passed for r in run_checks(synthetic_data, seed=1))
