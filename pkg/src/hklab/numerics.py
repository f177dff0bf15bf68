"""Small shared numerical helpers: smooth cutoffs, log-log fits, bisection."""

import numpy as np


def smoothstep(s):
    """Quintic smoothstep: 0 for s<=0, 1 for s>=1, C^2 in between."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def smoothstep_deriv(s):
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)


def loglog_fit(x, y):
    """Least-squares fit log y = a log x + b.

    Returns (slope, intercept, r_squared).  Points with y <= 0 are an error:
    callers are fitting magnitudes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("loglog_fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    a, b = np.polyfit(lx, ly, 1)
    resid = ly - (a * lx + b)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return float(a), float(b), float(r2)


def bisect(f, lo, hi, tol=1e-12, maxiter=200):
    """Plain bisection; f(lo) and f(hi) must bracket a root."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise ValueError("bisect: interval does not bracket a root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
        maxiter -= 1
        if maxiter <= 0:
            break
    return 0.5 * (lo + hi)
