"""Pure numpy versions of the compiled quantile kernels.

Each routine iterates all elements in lockstep, masking out the ones that
have already converged, so it follows the same Newton/bisection path as the
compiled loop.
"""
import numpy as np
from scipy.special import betainc, betaln

CDF_TOL = 1e-10
FINE_TOL = 1e-14
MAX_ITER = 200
EPS = np.finfo(float).eps


def _bit_midpoint(lo, hi):
    ilo = np.ascontiguousarray(lo, dtype=float).view(np.int64)
    ihi = np.ascontiguousarray(hi, dtype=float).view(np.int64)
    return (ilo + (ihi - ilo) // 2).view(np.float64)


def _midpoint(lo, hi):
    """Bracket midpoint for ``0 <= lo < hi <= 1``, as in the compiled kernel.

    Brackets spanning more than a factor of two toward 0 (or toward 1 in the
    complement) are halved in bit-pattern space.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    arith = 0.5 * (lo + hi)
    low = lo < 0.5 * hi
    high = ~low & (1.0 - hi < 0.5 * (1.0 - lo))
    mid = np.where(low, _bit_midpoint(lo, hi),
                   np.where(high, 1.0 - _bit_midpoint(1.0 - hi, 1.0 - lo), arith))
    return np.where((mid > lo) & (mid < hi), mid, arith)


def _initial_guess(u, a, b):
    x = np.empty_like(u)
    big = (a >= 1.0) & (b >= 1.0)

    if big.any():
        ub, ab, bb = u[big], a[big], b[big]
        pp = np.where(ub < 0.5, ub, 1.0 - ub)
        t = np.sqrt(-2.0 * np.log(pp))
        z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t
        z = np.where(ub < 0.5, -z, z)
        al = (z * z - 3.0) / 6.0
        h = 2.0 / (1.0 / (2.0 * ab - 1.0) + 1.0 / (2.0 * bb - 1.0))
        w = (z * np.sqrt(al + h) / h
             - (1.0 / (2.0 * bb - 1.0) - 1.0 / (2.0 * ab - 1.0))
             * (al + 5.0 / 6.0 - 2.0 / (3.0 * h)))
        with np.errstate(over="ignore"):
            x[big] = ab / (ab + bb * np.exp(2.0 * w))

    small = ~big
    if small.any():
        us, as_, bs = u[small], a[small], b[small]
        s = np.exp(as_ * np.log(as_ / (as_ + bs))) / as_
        v = np.exp(bs * np.log(bs / (as_ + bs))) / bs
        w = s + v
        left = us < s / w
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            xl = np.power(as_ * w * us, 1.0 / as_)
            xr = 1.0 - np.power(bs * w * (1.0 - us), 1.0 / bs)
        x[small] = np.where(left, xl, xr)

    bad = ~((x > 0.0) & (x < 1.0) & np.isfinite(x))
    x[bad] = 0.5
    return x


def beta_quantile(u, a, b):
    """Vectorised beta quantile; returns ``(x, failed_index, lo, hi)``."""
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = u.shape[0]
    x = _initial_guess(u, a, b)
    lo = np.zeros(n)
    hi = np.ones(n)
    f = np.ones(n)
    its = np.zeros(n, dtype=np.int64)
    lbeta = betaln(a, b)
    active = np.ones(n, dtype=bool)
    polish = np.zeros(n, dtype=bool)
    dx = np.ones(n)
    dxold = np.ones(n)

    while True:
        idx = np.flatnonzero(active & (its < MAX_ITER))
        if idx.size == 0:
            break
        its[idx] += 1
        xi, ai, bi = x[idx], a[idx], b[idx]
        fi = betainc(ai, bi, xi) - u[idx]
        f[idx] = fi
        done = np.abs(fi) < FINE_TOL

        lo_i = np.where(~done & (fi < 0.0), xi, lo[idx])
        hi_i = np.where(~done & (fi >= 0.0), xi, hi[idx])
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            pdf = np.exp((ai - 1.0) * np.log(xi) + (bi - 1.0) * np.log1p(-xi) - lbeta[idx])
            step = fi / pdf
            curv = np.minimum(step * ((ai - 1.0) / xi - (bi - 1.0) / (1.0 - xi)), 1.0)
            step = step / (1.0 - 0.5 * curv)
            xn = xi - step
        # bisect when Newton leaves the bracket or stops halving the step
        outside = ~((xn > lo_i) & (xn < hi_i) & np.isfinite(xn)) | (np.abs(2.0 * step) > dxold[idx])
        xn = np.where(outside, _midpoint(lo_i, hi_i), xn)
        dxold[idx] = dx[idx]
        dx[idx] = np.abs(xn - xi)
        stalled = (np.abs(xn - xi) <= 4.0 * EPS * xi) | (hi_i - lo_i <= 4.0 * EPS * hi_i)
        stalled &= ~done

        lo[idx] = lo_i
        hi[idx] = hi_i
        moving = ~done & ~stalled
        x[idx[moving]] = xn[moving]
        polish[idx[stalled]] = True
        active[idx[done | stalled]] = False

    # float-space bisection down to adjacent doubles
    bis = polish.copy()
    while True:
        idx = np.flatnonzero(bis & (its < MAX_ITER))
        if idx.size == 0:
            break
        mid = _midpoint(lo[idx], hi[idx])
        adjacent = (mid <= lo[idx]) | (mid >= hi[idx])
        bis[idx[adjacent]] = False
        idx, mid = idx[~adjacent], mid[~adjacent]
        its[idx] += 1
        below = betainc(a[idx], b[idx], mid) - u[idx] < 0.0
        lo[idx] = np.where(below, mid, lo[idx])
        hi[idx] = np.where(below, hi[idx], mid)

    pi = np.flatnonzero(polish)
    if pi.size:
        # I(lo) < u <= I(hi): hi is the smallest double reaching u (the
        # generalized inverse); 1 is outside the open interval, so fall back
        # to lo there
        flo = betainc(a[pi], b[pi], lo[pi]) - u[pi]
        fhi = betainc(a[pi], b[pi], hi[pi]) - u[pi]
        take_lo = (hi[pi] >= 1.0) | ((lo[pi] > 0.0) & (np.abs(flo) < CDF_TOL) & (fhi >= CDF_TOL))
        x[pi] = np.where(take_lo, lo[pi], hi[pi])
        f[pi] = np.where(take_lo, flo, fhi)

    ok = np.abs(f) < CDF_TOL
    ok |= polish & (np.nextafter(lo, 1.0) >= hi)
    failed = np.flatnonzero(~ok)
    if failed.size:
        i = failed[0]
        return x, int(i), float(lo[i]), float(hi[i])
    return x, -1, 0.0, 1.0


def zoib_quantile(u, alpha, gamma, mu, phi):
    """Vectorised ZOIB generalized inverse; returns ``(z, failed_index, lo, hi)``."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    upper = 1.0 - (1.0 - alpha) * gamma
    zero = u < alpha
    one = ~zero & (u > upper)
    mid = ~zero & ~one
    out[zero] = 0.0
    out[one] = 1.0

    idx = np.flatnonzero(mid)
    up = (u[idx] - alpha[idx]) / ((1.0 - alpha[idx]) * (1.0 - gamma[idx]))
    lo_edge = up <= 0.0
    hi_edge = up >= 1.0
    out[idx[lo_edge]] = 0.0
    out[idx[hi_edge]] = 1.0
    inner = idx[~lo_edge & ~hi_edge]
    up = up[~lo_edge & ~hi_edge]
    if inner.size == 0:
        return out, -1, 0.0, 1.0
    a = mu[inner] * phi[inner]
    b = (1.0 - mu[inner]) * phi[inner]
    x, failed, lo, hi = beta_quantile(up, a, b)
    # an interior quantile that rounds to 1 has generalized inverse 1 itself
    top = (np.nextafter(x, 2.0) >= 1.0) & (betainc(a, b, x) < up - CDF_TOL)
    x = np.where(top, 1.0, x)
    out[inner] = x
    if failed >= 0:
        return out, int(inner[failed]), lo, hi
    return out, -1, 0.0, 1.0
