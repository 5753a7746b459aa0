"""CSV ingestion: column roles, categorical coding, rescaling and validation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError
from .model import Dataset, RescaleRecord, rescale_to_unit, standardize_covariates


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV columns play which part.

    ``bounds`` maps outcome/mediator column names to their original
    ``(lo, hi)`` range; columns without bounds must already lie in [0, 1].
    ``treated_value`` is the raw treatment value coded as ``A = 1``; every
    other value must equal ``control_value``.
    """

    outcome: str
    mediator: str
    treatment: str
    covariates: tuple
    categorical: frozenset = frozenset()
    bounds: dict = field(default_factory=dict)
    treated_value: object = 1
    control_value: object = 0

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "categorical", frozenset(self.categorical))
        named = [self.outcome, self.mediator, self.treatment, *self.covariates]
        if len(set(named)) != len(named):
            raise DataError("column roles overlap; each column may play one role")
        stray = self.categorical - set(self.covariates)
        if stray:
            raise DataError(f"categorical columns not listed as covariates: {sorted(stray)}")

    @property
    def columns(self):
        return (self.outcome, self.mediator, self.treatment, *self.covariates)


def read_table(source):
    """Read a CSV path (or pass a DataFrame through)."""
    if isinstance(source, pd.DataFrame):
        return source.copy()
    try:
        return pd.read_csv(source, encoding="utf-8")
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {source}: {exc}") from exc


def category_levels(series):
    """Sorted distinct category labels (as strings); the first is the reference."""
    return sorted(series.astype(str).unique(), key=_natural_key)


def _natural_key(label):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def encode_covariates(frame, covariates, categorical=(), levels=None):
    """Numeric covariate block with reference-cell indicators for categoricals.

    Parameters
    ----------
    levels : dict, optional
        Known levels per categorical column; values outside them are
        rejected.  Levels are read from the data when omitted.

    Returns
    -------
    X : ndarray (n, p)
    names : list of str
    levels : dict
    """
    levels = dict(levels or {})
    cols, names, problems = [], [], []
    for c in covariates:
        if c in categorical:
            labels = frame[c].astype(str)
            lv = levels.setdefault(c, category_levels(frame[c]))
            for i in np.flatnonzero(~labels.isin(lv).to_numpy()):
                problems.append((int(i), f"unknown category {labels.iloc[i]!r} in column {c!r}"))
            for level in lv[1:]:
                cols.append((labels == level).to_numpy(dtype=float))
                names.append(f"{c}[{level}]")
        else:
            v = pd.to_numeric(frame[c], errors="coerce").to_numpy(dtype=float)
            for i in np.flatnonzero(~np.isfinite(v) & frame[c].notna().to_numpy()):
                problems.append((int(i), f"non-numeric value {frame[c].iloc[i]!r} in column {c!r}"))
            cols.append(v)
            names.append(c)
    if problems:
        raise DataError(f"{len(problems)} invalid covariate value(s); first at row {problems[0][0]}", problems)
    X = np.column_stack(cols) if cols else np.empty((len(frame), 0))
    return X, names, levels


def ingest(source, roles: ColumnRoles):
    """Validated, rescaled and standardized :class:`Dataset` from a CSV.

    Rejections (missing values, out-of-range values, unknown categories,
    unrecognized treatment codes, an empty arm) raise :class:`DataError`
    carrying every offending row.
    """
    frame = read_table(source)
    missing_cols = [c for c in roles.columns if c not in frame.columns]
    if missing_cols:
        raise DataError(f"missing column(s): {', '.join(missing_cols)}")
    frame = frame.reset_index(drop=True)

    problems = []
    na = frame[list(roles.columns)].isna()
    for i, c in zip(*np.nonzero(na.to_numpy())):
        problems.append((int(i), f"missing value in column {roles.columns[c]!r}"))
    if problems:
        raise DataError(f"{len(problems)} missing value(s); first at row {problems[0][0]}", problems)

    records = {}
    unit = {}
    for role, col in (("outcome", roles.outcome), ("mediator", roles.mediator)):
        v = pd.to_numeric(frame[col], errors="coerce").to_numpy(dtype=float)
        for i in np.flatnonzero(~np.isfinite(v)):
            problems.append((int(i), f"non-numeric {role} value {frame[col].iloc[i]!r}"))
            v[i] = np.nan
        lo, hi = roles.bounds.get(col, (0.0, 1.0))
        bad = np.flatnonzero(np.isfinite(v) & ~((v >= lo) & (v <= hi)))
        for i in bad:
            problems.append((int(i), f"{role} value {float(v[i])!r} outside [{lo}, {hi}]"))
        if not problems:
            unit[role], records[role] = rescale_to_unit(v, lo, hi)

    treat = frame[roles.treatment]
    is_t = treat.astype(str) == str(roles.treated_value)
    is_c = treat.astype(str) == str(roles.control_value)
    for i in np.flatnonzero(~(is_t | is_c).to_numpy()):
        problems.append((int(i), f"treatment value {treat.iloc[i]!r} is neither "
                                 f"{roles.treated_value!r} nor {roles.control_value!r}"))
    if problems:
        problems.sort()
        raise DataError(f"{len(problems)} invalid value(s); first at row {problems[0][0]}", problems)
    A = is_t.to_numpy(dtype=float)
    if A.min() == A.max():
        raise DataError("one treatment arm is empty; the overlap (positivity) requirement fails")

    X, names, _ = encode_covariates(frame, roles.covariates, roles.categorical)
    Xs, std = standardize_covariates(X, names)
    return Dataset(Xs, A, unit["mediator"], unit["outcome"], tuple(names), records, std)


def ingestion_report(dataset):
    """Row counts, boundary proportions per arm and interior moments."""
    rows = []
    for arm in (0, 1):
        sel = dataset.treatment == arm
        for role, v in (("mediator", dataset.mediator[sel]), ("outcome", dataset.outcome[sel])):
            inner = v[(v > 0) & (v < 1)]
            rows.append({
                "arm": arm, "variable": role, "n": int(sel.sum()),
                "prop_zero": float(np.mean(v == 0)), "prop_one": float(np.mean(v == 1)),
                "interior_n": int(inner.size),
                "interior_mean": float(inner.mean()) if inner.size else float("nan"),
                "interior_sd": float(inner.std(ddof=1)) if inner.size > 1 else float("nan"),
            })
    return {"n": dataset.n, "p": dataset.p, "covariates": list(dataset.column_names), "arms": rows}


def outcome_record(dataset):
    """Rescale record of the outcome (identity when none was applied)."""
    return dataset.rescale_record.get("outcome", RescaleRecord(0.0, 1.0))
