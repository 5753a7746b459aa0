"""Zero-one inflated beta (ZOIB) distribution.

``Z ~ ZOIB(alpha, gamma, mu, phi)`` puts mass ``alpha`` at 0, mass
``(1 - alpha) * gamma`` at 1 and spreads the rest as
``Beta(mu * phi, (1 - mu) * phi)`` over the open unit interval.

All functions broadcast over numpy arrays; :class:`ZoibParams` fields may be
scalars or arrays of a common shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _backend
from .errors import DomainError, QuantileConvergenceError

__all__ = [
    "ZoibParams",
    "zoib_mean",
    "zoib_density",
    "zoib_cdf",
    "zoib_quantile",
    "zoib_sample",
    "zoib_loglik",
    "beta_quantile",
    "open_uniform",
]

# interior clamp applied before taking logs
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class ZoibParams:
    """Parameters of one (or a batch of) ZOIB distributions.

    The constructor rejects degenerate values (``alpha`` or ``gamma`` equal to
    1, ``mu`` on the boundary, non-positive ``phi``), which the logit/log links
    can never produce.  Use :meth:`unchecked` to build degenerate cases in
    tests.
    """

    alpha: np.ndarray | float
    gamma: np.ndarray | float
    mu: np.ndarray | float
    phi: np.ndarray | float

    def __post_init__(self):
        a, g, m, p = (np.asarray(v, dtype=float) for v in (self.alpha, self.gamma, self.mu, self.phi))
        if not (np.all((a >= 0) & (a < 1)) and np.all((g >= 0) & (g < 1))):
            raise DomainError("alpha and gamma must lie in [0, 1)")
        if not np.all((m > 0) & (m < 1)):
            raise DomainError("mu must lie in (0, 1)")
        if not np.all((p > 0) & np.isfinite(p)):
            raise DomainError("phi must be positive and finite")
        if not np.all(a + (1 - a) * g <= 1):
            raise DomainError("boundary masses exceed one")

    @classmethod
    def unchecked(cls, alpha, gamma, mu, phi):
        """Build without validation (degenerate test cases only)."""
        obj = object.__new__(cls)
        for name, value in zip(("alpha", "gamma", "mu", "phi"), (alpha, gamma, mu, phi)):
            object.__setattr__(obj, name, value)
        return obj

    def arrays(self):
        """Return the four fields broadcast to float arrays of one shape."""
        return np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                     for v in (self.alpha, self.gamma, self.mu, self.phi)))

    @property
    def shape_a(self):
        return np.asarray(self.mu) * self.phi

    @property
    def shape_b(self):
        return (1 - np.asarray(self.mu)) * self.phi

    def __getitem__(self, idx):
        a, g, m, p = self.arrays()
        return ZoibParams.unchecked(a[idx], g[idx], m[idx], p[idx])


def _unit_interval(z, what="z"):
    z = np.asarray(z, dtype=float)
    if not np.all((z >= 0) & (z <= 1)):
        raise DomainError(f"{what} must lie in [0, 1]")
    return z


def zoib_mean(p):
    """Mean ``(1 - alpha) * gamma + (1 - alpha) * (1 - gamma) * mu``."""
    a = np.asarray(p.alpha, dtype=float)
    g = np.asarray(p.gamma, dtype=float)
    return (1 - a) * g + (1 - a) * (1 - g) * np.asarray(p.mu, dtype=float)


def zoib_density(z, p):
    """Point mass at ``z`` in {0, 1}, beta density times interior mass elsewhere.

    Discrete masses and the continuous density share one return value; callers
    tell them apart by ``z``.
    """
    z = _unit_interval(z)
    a, g, m, ph = p.arrays()
    z, a, g, m, ph = np.broadcast_arrays(z, a, g, m, ph)
    out = np.empty(z.shape)
    at0, at1 = z == 0, z == 1
    inner = ~at0 & ~at1
    out[at0] = a[at0]
    out[at1] = (1 - a[at1]) * g[at1]
    mi, pi = m[inner], ph[inner]
    out[inner] = ((1 - a[inner]) * (1 - g[inner])
                  * np.exp(_log_beta_pdf(z[inner], mi * pi, (1 - mi) * pi)))
    return out[()] if out.ndim == 0 else out


def zoib_cdf(z, p):
    """Right-continuous CDF; ``F(z) = alpha + (1-alpha)(1-gamma) I_z`` below 1."""
    z = _unit_interval(z)
    a, g, m, ph = p.arrays()
    z, a, g, m, ph = np.broadcast_arrays(z, a, g, m, ph)
    out = a + (1 - a) * (1 - g) * special.betainc(m * ph, (1 - m) * ph, z)
    out = np.where(z == 1, 1.0, out)
    return out[()] if out.ndim == 0 else out


def _check_kernel(result, u, a, b):
    out, failed, lo, hi = result
    if failed >= 0:
        raise QuantileConvergenceError(float(u[failed]), float(a[failed]), float(b[failed]), lo, hi)
    return out


def beta_quantile(u, a, b, backend=None):
    """Inverse of the regularized incomplete beta function ``I_x(a, b)``.

    Bracketed Newton iteration (Halley-corrected) with a bisection fallback;
    the result satisfies ``|I_x(a, b) - u| < 1e-10`` or is the double
    closest to the exact quantile when no double gets that close.

    Raises
    ------
    DomainError
        If ``u`` is outside (0, 1) or a shape is not positive.
    QuantileConvergenceError
        If 200 iterations do not suffice; carries the last bracket.
    """
    u, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (u, a, b)))
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("u must lie in (0, 1)")
    if not np.all((a > 0) & (b > 0)):
        raise DomainError("beta shapes must be positive")
    shape = u.shape
    uf, af, bf = (np.ascontiguousarray(v).ravel() for v in (u, a, b))
    out = _check_kernel(_backend.get(backend).beta_quantile(uf, af, bf), uf, af, bf)
    out = out.reshape(shape)
    return out[()] if out.ndim == 0 else out


def zoib_quantile(u, p, backend=None):
    """Generalized inverse ``inf{z : F(z) >= u}`` of the ZOIB CDF.

    Returns 0 when ``u < alpha``, 1 when ``u > 1 - (1 - alpha) * gamma`` and
    otherwise the beta quantile at ``(u - alpha) / ((1 - alpha)(1 - gamma))``.
    """
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("u must lie in (0, 1)")
    arrays = np.broadcast_arrays(u, *p.arrays())
    shape = arrays[0].shape
    uf, af, gf, mf, pf = (np.ascontiguousarray(v, dtype=float).ravel() for v in arrays)
    out, failed, lo, hi = _backend.get(backend).zoib_quantile(uf, af, gf, mf, pf)
    if failed >= 0:
        up = (uf[failed] - af[failed]) / ((1 - af[failed]) * (1 - gf[failed]))
        raise QuantileConvergenceError(float(up), float(mf[failed] * pf[failed]),
                                       float((1 - mf[failed]) * pf[failed]), lo, hi)
    out = out.reshape(shape)
    return out[()] if out.ndim == 0 else out


def open_uniform(rng, size=None):
    """Uniform draws on the open interval (0, 1) at 2**-53 resolution."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-53


def zoib_sample(rng, p, size=None, backend=None):
    """Sample by the probability integral transform of one uniform per draw.

    Drawing through :func:`zoib_quantile` (rather than a mixture sampler)
    keeps comonotone couplings exact.
    """
    if size is None:
        size = np.broadcast(*p.arrays()).shape
    return zoib_quantile(open_uniform(rng, size), p, backend=backend)


def _log_beta_pdf(z, a, b):
    z = np.clip(z, LOG_CLAMP, 1 - LOG_CLAMP)
    return (a - 1) * np.log(z) + (b - 1) * np.log1p(-z) - special.betaln(a, b)


def zoib_loglik(z, p):
    """Per-observation log-likelihood.

    Decomposes as ``log Bernoulli(1{z=0}; alpha)`` plus, for nonzero ``z``,
    ``log Bernoulli(1{z=1}; gamma)`` plus, for interior ``z``, the beta log
    density.  Hitting a point mass of probability zero gives ``-inf``.
    """
    z = _unit_interval(z)
    a, g, m, ph = p.arrays()
    z, a, g, m, ph = np.broadcast_arrays(z, a, g, m, ph)
    out = np.empty(z.shape)
    at0, at1 = z == 0, z == 1
    inner = ~at0 & ~at1
    with np.errstate(divide="ignore"):
        out[at0] = np.log(a[at0])
        out[at1] = np.log1p(-a[at1]) + np.log(g[at1])
        mi, pi = m[inner], ph[inner]
        out[inner] = (np.log1p(-a[inner]) + np.log1p(-g[inner])
                      + _log_beta_pdf(z[inner], mi * pi, (1 - mi) * pi))
    return out[()] if out.ndim == 0 else out
