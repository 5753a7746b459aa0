"""Data containers, design matrices and the coefficient-to-ZOIB link maps.

Column order of every design row is fixed:

* homogeneous mediator row: ``(1, x_1..x_p, a)``
* homogeneous outcome row:  ``(1, x_1..x_p, a, m)``
* heterogeneous rows drop the treatment column; the arm instead selects one
  of two coefficient banks (``coef[a]``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DataError, DomainError
from .zoib import ZoibParams

COMPONENTS = ("alpha", "gamma", "mu", "phi")
ETA_CLAMP = 30.0


def expit(t):
    return special.expit(np.clip(t, -ETA_CLAMP, ETA_CLAMP))


def logit(p):
    return special.logit(p)


# ---------------------------------------------------------------------------
# rescaling and standardization


@dataclass(frozen=True)
class RescaleRecord:
    """Original bounds of a variable mapped onto [0, 1]."""

    lo: float
    hi: float

    @property
    def width(self):
        return self.hi - self.lo

    def forward(self, values):
        return (np.asarray(values, dtype=float) - self.lo) / (self.hi - self.lo)

    def inverse(self, unit_values):
        return self.lo + np.asarray(unit_values, dtype=float) * (self.hi - self.lo)

    def scale_effect(self, effect):
        """Map a difference of unit-scale values back to the original scale."""
        return np.asarray(effect, dtype=float) * (self.hi - self.lo)


def rescale_to_unit(values, lo, hi):
    """Map ``values`` on ``[lo, hi]`` to ``(v - lo) / (hi - lo)``.

    Returns the rescaled array and a :class:`RescaleRecord`; out-of-range
    values raise :class:`DataError` naming the offending rows.
    """
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    v = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~((v >= lo) & (v <= hi)))
    if bad.size:
        problems = [(int(i), f"value {float(v[i])!r} outside [{lo}, {hi}]") for i in bad]
        raise DataError(f"{bad.size} value(s) outside [{lo}, {hi}]; first at row {bad[0]}", problems)
    record = RescaleRecord(float(lo), float(hi))
    return record.forward(v), record


@dataclass(frozen=True)
class StandardizeRecord:
    names: tuple
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.sd


def standardize_covariates(X, names=None):
    """Center each column and scale it to unit sample sd (``n - 1`` divisor).

    Indicator columns from categorical expansion are treated like numeric
    columns.  Constant columns are rejected.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError("X must be a 2-d array")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    zero = np.flatnonzero(~(sd > 0))
    if zero.size:
        cols = ", ".join(names[j] for j in zero)
        raise DataError(f"zero-variance covariate column(s): {cols}")
    record = StandardizeRecord(names, mean, sd)
    return record.apply(X), record


# ---------------------------------------------------------------------------
# dataset and model specification


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Rows ``(X_i, A_i, M_i, Y_i)`` with mediator and outcome on [0, 1]."""

    covariates: np.ndarray
    treatment: np.ndarray
    mediator: np.ndarray
    outcome: np.ndarray
    column_names: tuple = ()
    rescale_record: dict = field(default_factory=dict)
    standardize_record: StandardizeRecord | None = None

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = X.shape[0]
        A = np.asarray(self.treatment, dtype=float)
        M = np.asarray(self.mediator, dtype=float)
        Y = np.asarray(self.outcome, dtype=float)
        for name, v in (("treatment", A), ("mediator", M), ("outcome", Y)):
            if v.shape != (n,):
                raise DataError(f"{name} has shape {v.shape}, expected ({n},)")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates contain missing or non-finite values")
        problems = []
        for name, v in (("mediator", M), ("outcome", Y)):
            for i in np.flatnonzero(~((v >= 0) & (v <= 1))):
                problems.append((int(i), f"{name} value {float(v[i])!r} outside [0, 1]"))
        for i in np.flatnonzero(~np.isin(A, (0.0, 1.0))):
            problems.append((int(i), f"treatment value {float(A[i])!r} not in {{0, 1}}"))
        if problems:
            raise DataError(f"{len(problems)} invalid value(s); first at row {problems[0][0]}", problems)
        if not (np.any(A == 0) and np.any(A == 1)):
            raise DataError("both treatment arms must be nonempty (overlap)")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("column_names length does not match covariates")
        object.__setattr__(self, "covariates", _frozen(X))
        object.__setattr__(self, "treatment", _frozen(A))
        object.__setattr__(self, "mediator", _frozen(M))
        object.__setattr__(self, "outcome", _frozen(Y))
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "rescale_record", dict(self.rescale_record))

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    def take(self, rows):
        """Dataset made of the given rows (used for bootstrap resamples)."""
        rows = np.asarray(rows)
        return Dataset(self.covariates[rows], self.treatment[rows], self.mediator[rows],
                       self.outcome[rows], self.column_names, self.rescale_record,
                       self.standardize_record)


@dataclass(frozen=True)
class ModelSpec:
    """Shape of the four GLMs of each ZOIB regression.

    ``heterogeneous`` gives every coefficient its own value per treatment arm;
    otherwise slopes are shared and the treatment enters as one extra column.
    ``prior_sd`` turns on a ridge penalty ``||beta||^2 / (2 prior_sd^2)`` on
    non-intercept coefficients.
    """

    heterogeneous: bool = False
    prior_sd: float | None = None

    def __post_init__(self):
        if self.prior_sd is not None and not self.prior_sd > 0:
            raise DomainError("prior_sd must be positive")

    @property
    def penalty(self):
        return 0.0 if self.prior_sd is None else 1.0 / self.prior_sd**2

    def design_names(self, covariate_names, with_mediator):
        names = ["(intercept)", *covariate_names]
        if not self.heterogeneous:
            names.append("treatment")
        if with_mediator:
            names.append("mediator")
        return names

    def width(self, p, with_mediator):
        return 1 + p + (0 if self.heterogeneous else 1) + (1 if with_mediator else 0)


def build_design(spec, x, a, m=None):
    """Design row(s) in the documented column order.

    ``x`` is one covariate row or an ``(n, p)`` block; ``a`` and ``m`` are
    scalars or length-``n`` vectors.  Pass ``m`` only for outcome rows.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    n = X.shape[0]
    cols = [np.ones((n, 1)), X]
    if not spec.heterogeneous:
        cols.append(np.broadcast_to(np.asarray(a, dtype=float), (n,))[:, None])
    if m is not None:
        cols.append(np.broadcast_to(np.asarray(m, dtype=float), (n,))[:, None])
    D = np.hstack(cols)
    return D[0] if single else D


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of the four ZOIB components of one regression.

    Each component vector has length ``spec.width(p, with_mediator)``;
    heterogeneous specs store a ``(2, width)`` array whose row ``a`` is the
    bank for treatment arm ``a``.
    """

    alpha: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    spec: ModelSpec
    with_mediator: bool

    def __post_init__(self):
        shapes = {np.shape(getattr(self, c)) for c in COMPONENTS}
        if len(shapes) != 1:
            raise DomainError(f"component coefficient shapes differ: {shapes}")
        shape = shapes.pop()
        if self.spec.heterogeneous and (len(shape) != 2 or shape[0] != 2):
            raise DomainError("heterogeneous coefficients must have shape (2, width)")
        if not self.spec.heterogeneous and len(shape) != 1:
            raise DomainError("homogeneous coefficients must be 1-d")
        for c in COMPONENTS:
            object.__setattr__(self, c, _frozen(getattr(self, c)))

    @property
    def width(self):
        return np.shape(self.alpha)[-1]

    @property
    def p(self):
        return self.width - 1 - (0 if self.spec.heterogeneous else 1) - (1 if self.with_mediator else 0)

    def component(self, name):
        return getattr(self, name)

    def replace(self, **components):
        kw = {c: getattr(self, c) for c in COMPONENTS}
        kw.update(components)
        return CoefficientSet(**kw, spec=self.spec, with_mediator=self.with_mediator)

    def treatment_index(self):
        if self.spec.heterogeneous:
            raise DomainError("heterogeneous coefficients have no treatment column")
        return 1 + self.p

    def mediator_index(self):
        if not self.with_mediator:
            raise DomainError("this regression has no mediator column")
        return self.width - 1

    def predictor(self, X):
        """Cache the covariate part of each linear predictor for rows ``X``."""
        return _Predictor(self, np.asarray(X, dtype=float))

    def predict(self, X, a, m=None):
        """ZOIB parameters for covariate rows ``X`` at arm ``a`` and mediator ``m``."""
        return self.predictor(X).params(a, m)

    def to_dict(self):
        return {
            "heterogeneous": self.spec.heterogeneous,
            "with_mediator": self.with_mediator,
            **{c: np.asarray(getattr(self, c)).tolist() for c in COMPONENTS},
        }

    @classmethod
    def from_dict(cls, d, spec=None):
        spec = spec or ModelSpec(heterogeneous=bool(d["heterogeneous"]))
        return cls(**{c: np.asarray(d[c], dtype=float) for c in COMPONENTS},
                   spec=spec, with_mediator=bool(d["with_mediator"]))


class _Predictor:
    """Linear predictors ``base + a * theta + m * eta`` with the base cached."""

    def __init__(self, coefs, X):
        self.coefs = coefs
        X = np.atleast_2d(X)
        p = X.shape[1]
        if p != coefs.p:
            raise DomainError(f"covariate width {p} does not match coefficients ({coefs.p})")
        self.base = {}
        for c in COMPONENTS:
            beta = np.asarray(coefs.component(c))
            self.base[c] = beta[..., 0][..., None] + beta[..., 1:p + 1] @ X.T

    def eta(self, name, a, m=None):
        coefs = self.coefs
        beta = np.asarray(coefs.component(name))
        if coefs.spec.heterogeneous:
            a = np.asarray(a)
            if a.ndim == 0:
                bank = int(a)
                eta = self.base[name][bank]
                if m is not None:
                    eta = eta + m * beta[bank, -1]
            else:
                ai = a.astype(int)
                eta = np.where(ai == 1, self.base[name][1], self.base[name][0])
                if m is not None:
                    eta = eta + m * beta[ai, -1]
            return eta
        eta = self.base[name] + a * beta[coefs.p + 1]
        if m is not None:
            eta = eta + m * beta[-1]
        return eta

    def params(self, a, m=None):
        if self.coefs.with_mediator and m is None:
            raise DomainError("outcome regression needs mediator values")
        etas = {c: self.eta(c, a, m) for c in COMPONENTS}
        return _params_from_eta(etas)


def _params_from_eta(etas):
    for c, v in etas.items():
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite linear predictor in component {c!r}")
    return ZoibParams.unchecked(
        expit(etas["alpha"]),
        expit(etas["gamma"]),
        expit(etas["mu"]),
        np.exp(np.clip(etas["phi"], -ETA_CLAMP, ETA_CLAMP)),
    )


def predict_zoib_params(coefs, design, arm=None):
    """Map design row(s) to ZOIB parameters through the logit/log links.

    ``alpha, gamma, mu = expit(design @ beta)`` and ``phi = exp(design @ beta)``
    with linear predictors clamped to [-30, 30].  Heterogeneous coefficients
    need ``arm`` to pick the bank.
    """
    design = np.asarray(design, dtype=float)
    etas = {}
    for c in COMPONENTS:
        beta = np.asarray(coefs.component(c))
        if beta.ndim == 2:
            if arm is None:
                raise DomainError("heterogeneous coefficients need an arm")
            beta = beta[int(arm)]
        if design.shape[-1] != beta.shape[0]:
            raise DomainError(f"design width {design.shape[-1]} != coefficient length {beta.shape[0]}")
        etas[c] = design @ beta
    return _params_from_eta(etas)


def homogeneous_to_banks(coefs):
    """Express homogeneous coefficients as equal-slope heterogeneous banks."""
    if coefs.spec.heterogeneous:
        return coefs
    spec = ModelSpec(heterogeneous=True, prior_sd=coefs.spec.prior_sd)
    t = coefs.treatment_index()
    banks = {}
    for c in COMPONENTS:
        beta = np.asarray(coefs.component(c))
        b0 = np.delete(beta, t)
        b1 = b0.copy()
        b1[0] = b1[0] + beta[t]
        banks[c] = np.vstack([b0, b1])
    return CoefficientSet(**banks, spec=spec, with_mediator=coefs.with_mediator)
