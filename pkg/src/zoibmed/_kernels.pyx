# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled quantile kernels.

The element-wise routines mirror ``zoibmed._fallback`` step for step; the
Python wrappers in ``zoibmed._backend`` do argument checking and broadcasting.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p, nextafter, pow, sqrt, isfinite
from scipy.special.cython_special cimport betainc, betaln

cnp.import_array()

cdef double CDF_TOL = 1e-10
cdef double FINE_TOL = 1e-14
cdef int MAX_ITER = 200
cdef double EPS = 2.220446049250313e-16


cdef inline double _initial_guess(double u, double a, double b) noexcept nogil:
    cdef double pp, t, x, al, h, w, lna, lnb, s, v
    if a >= 1.0 and b >= 1.0:
        pp = u if u < 0.5 else 1.0 - u
        t = sqrt(-2.0 * log(pp))
        x = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t
        if u < 0.5:
            x = -x
        al = (x * x - 3.0) / 6.0
        h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0))
        w = (x * sqrt(al + h) / h
             - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0))
             * (al + 5.0 / 6.0 - 2.0 / (3.0 * h)))
        x = a / (a + b * exp(2.0 * w))
    else:
        lna = log(a / (a + b))
        lnb = log(b / (a + b))
        s = exp(a * lna) / a
        v = exp(b * lnb) / b
        w = s + v
        if u < s / w:
            x = pow(a * w * u, 1.0 / a)
        else:
            x = 1.0 - pow(b * w * (1.0 - u), 1.0 / b)
    return x


cdef inline double _bit_midpoint(double lo, double hi) noexcept nogil:
    cdef long long ilo = (<long long*>&lo)[0]
    cdef long long ihi = (<long long*>&hi)[0]
    cdef long long imid = ilo + (ihi - ilo) // 2
    return (<double*>&imid)[0]


cdef inline double _midpoint(double lo, double hi) noexcept nogil:
    """Bracket midpoint for 0 <= lo < hi <= 1.

    When the bracket spans more than a factor of two toward 0 (or toward 1
    in the complement) the midpoint of the bit patterns is used, so tiny
    quantiles and quantiles next to 1 are reached in at most 64 halvings.
    """
    cdef double mid
    if lo < 0.5 * hi:
        mid = _bit_midpoint(lo, hi)
    elif 1.0 - hi < 0.5 * (1.0 - lo):
        mid = 1.0 - _bit_midpoint(1.0 - hi, 1.0 - lo)
    else:
        mid = 0.5 * (lo + hi)
    if not (mid > lo and mid < hi):
        mid = 0.5 * (lo + hi)
    return mid


cdef int _beta_quantile(double u, double a, double b, double* out,
                        double* lo_out, double* hi_out) noexcept nogil:
    """Bracketed Halley-corrected Newton on I_x(a, b) - u. Returns 0 on success."""
    cdef double lo = 0.0, hi = 1.0
    cdef double x, f, flo, fhi, pdf, step, curv, xn, lbeta, mid
    cdef double dx = 1.0, dxold = 1.0
    cdef int it = 0
    cdef bint polish = False
    lbeta = betaln(a, b)
    x = _initial_guess(u, a, b)
    if not (x > 0.0 and x < 1.0) or not isfinite(x):
        x = 0.5
    f = 1.0
    while it < MAX_ITER:
        it += 1
        f = betainc(a, b, x) - u
        if fabs(f) < FINE_TOL:
            break
        if f < 0.0:
            lo = x
        else:
            hi = x
        pdf = exp((a - 1.0) * log(x) + (b - 1.0) * log1p(-x) - lbeta)
        step = f / pdf
        curv = step * ((a - 1.0) / x - (b - 1.0) / (1.0 - x))
        if curv > 1.0:
            curv = 1.0
        step = step / (1.0 - 0.5 * curv)
        xn = x - step
        # bisect when Newton leaves the bracket or stops halving the step
        if not (xn > lo and xn < hi) or not isfinite(xn) or fabs(2.0 * step) > dxold:
            xn = _midpoint(lo, hi)
        dxold = dx
        dx = fabs(xn - x)
        if fabs(xn - x) <= 4.0 * EPS * x or hi - lo <= 4.0 * EPS * hi:
            polish = True
            break
        x = xn

    if polish:
        # float-space bisection down to adjacent doubles
        while it < MAX_ITER:
            mid = _midpoint(lo, hi)
            if mid <= lo or mid >= hi:
                break
            it += 1
            if betainc(a, b, mid) - u < 0.0:
                lo = mid
            else:
                hi = mid
        # I(lo) < u <= I(hi): hi is the smallest double reaching u (the
        # generalized inverse); 1 is outside the open interval, so fall back
        # to lo there
        flo = betainc(a, b, lo) - u
        fhi = betainc(a, b, hi) - u
        if hi >= 1.0 or (lo > 0.0 and fabs(flo) < CDF_TOL and fhi >= CDF_TOL):
            x = lo
            f = flo
        else:
            x = hi
            f = fhi

    out[0] = x
    lo_out[0] = lo
    hi_out[0] = hi
    if fabs(f) < CDF_TOL:
        return 0
    if polish and nextafter(lo, 1.0) >= hi:
        return 0
    return 1


def beta_quantile(double[::1] u, double[::1] a, double[::1] b):
    """Vectorised beta quantile; returns ``(x, failed_index, lo, hi)``.

    ``failed_index`` is -1 when every element converged.
    """
    cdef Py_ssize_t n = u.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty(n)
    cdef double[::1] out = res
    cdef double lo = 0.0, hi = 1.0, flo = 0.0, fhi = 1.0
    cdef Py_ssize_t failed = -1
    with nogil:
        for i in range(n):
            if _beta_quantile(u[i], a[i], b[i], &out[i], &lo, &hi) != 0:
                if failed < 0:
                    failed = i
                    flo = lo
                    fhi = hi
    return res, failed, flo, fhi


def zoib_quantile(double[::1] u, double[::1] alpha, double[::1] gamma,
                  double[::1] mu, double[::1] phi):
    """Vectorised ZOIB generalized inverse; returns ``(z, failed_index, lo, hi)``."""
    cdef Py_ssize_t n = u.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty(n)
    cdef double[::1] out = res
    cdef double lo = 0.0, hi = 1.0, flo = 0.0, fhi = 1.0
    cdef double up, upper
    cdef Py_ssize_t failed = -1
    with nogil:
        for i in range(n):
            upper = 1.0 - (1.0 - alpha[i]) * gamma[i]
            if u[i] < alpha[i]:
                out[i] = 0.0
            elif u[i] > upper:
                out[i] = 1.0
            else:
                up = (u[i] - alpha[i]) / ((1.0 - alpha[i]) * (1.0 - gamma[i]))
                if up <= 0.0:
                    out[i] = 0.0
                elif up >= 1.0:
                    out[i] = 1.0
                elif _beta_quantile(up, mu[i] * phi[i], (1.0 - mu[i]) * phi[i],
                                    &out[i], &lo, &hi) != 0:
                    if failed < 0:
                        failed = i
                        flo = lo
                        fhi = hi
                elif (nextafter(out[i], 2.0) >= 1.0
                      and betainc(mu[i] * phi[i], (1.0 - mu[i]) * phi[i], out[i]) < up - CDF_TOL):
                    # the interior quantile rounds to 1: the generalized
                    # inverse in double precision is 1 itself
                    out[i] = 1.0
    return res, failed, flo, fhi
