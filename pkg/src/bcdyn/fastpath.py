"""Compiled inner loop for frozen and sliding segments."""

from __future__ import annotations

import numba
import numpy as np

from .integrator import _kernel_value


@numba.njit(cache=True)
def _field(x, A, kind, p0, p1, p2, out):
    N, n = x.shape
    for i in range(N):
        for c in range(n):
            out[i, c] = 0.0
        for j in range(N):
            aij = A[i, j]
            if aij == 0.0:
                continue
            r2 = 0.0
            for c in range(n):
                dlt = x[j, c] - x[i, c]
                r2 += dlt * dlt
            w = aij * _kernel_value(kind, p0, p1, p2, np.sqrt(r2))
            for c in range(n):
                out[i, c] += w * (x[j, c] - x[i, c])


@numba.njit(cache=True)
def _rate(x, f, mtype, i, j, k):
    n = x.shape[1]
    g = 0.0
    if mtype == 2:
        for c in range(n):
            g += 2.0 * (x[i, c] - x[j, c]) * (f[i, c] - f[j, c])
    else:
        for c in range(n):
            g += 2.0 * (x[j, c] - x[i, c]) * (f[j, c] - f[i, c])
            g -= 2.0 * (x[k, c] - x[i, c]) * (f[k, c] - f[i, c])
    return g


@numba.njit(cache=True)
def _rhs(x, Am, Ap, sliding, mtype, mi, mj, mk, kind, p0, p1, p2, fm, fp, out):
    _field(x, Am, kind, p0, p1, p2, fm)
    if not sliding:
        for i in range(x.shape[0]):
            for c in range(x.shape[1]):
                out[i, c] = fm[i, c]
        return 0.0
    _field(x, Ap, kind, p0, p1, p2, fp)
    gm = _rate(x, fm, mtype, mi, mj, mk)
    gp = _rate(x, fp, mtype, mi, mj, mk)
    if abs(gp - gm) <= 1e-12 * (1.0 + abs(gm) + abs(gp)):
        a = 0.5
    else:
        a = gp / (gp - gm)
    for i in range(x.shape[0]):
        for c in range(x.shape[1]):
            out[i, c] = a * fm[i, c] + (1.0 - a) * fp[i, c]
    return a


@numba.njit(cache=True)
def _project(x, mtype, i, j, k, radius):
    n = x.shape[1]
    if mtype == 2:
        nu = 0.0
        for c in range(n):
            nu += (x[i, c] - x[j, c]) ** 2
        nu = np.sqrt(nu)
        if nu == 0.0:
            return
        for c in range(n):
            u = x[i, c] - x[j, c]
            m = 0.5 * (x[i, c] + x[j, c])
            x[i, c] = m + 0.5 * radius * u / nu
            x[j, c] = m - 0.5 * radius * u / nu
    else:
        ww = 0.0
        dot = 0.0
        for c in range(n):
            w = x[k, c] - x[j, c]
            ww += w * w
            dot += (x[i, c] - 0.5 * (x[j, c] + x[k, c])) * w
        if ww == 0.0:
            return
        for c in range(n):
            x[i, c] -= dot / ww * (x[k, c] - x[j, c])


@numba.njit(cache=True)
def segment_loop(
    x0, Am, Ap, sliding, mtype, mi, mj, mk, radius, kind, p0, p1, p2,
    h, nsteps, a1, b1, s1, a2, b2, s2, cc, band, stop_tol, out,
):
    """Take up to nsteps RK4 steps, writing accepted states into out.

    Returns (steps_taken, status): status 0 ran out of steps, 1 a switch
    would be violated by the next step (not taken), 2 field below stop_tol.
    """
    N, n = x0.shape
    x = x0.copy()
    k1 = np.empty_like(x)
    k2 = np.empty_like(x)
    k3 = np.empty_like(x)
    k4 = np.empty_like(x)
    y = np.empty_like(x)
    fm = np.empty_like(x)
    fp = np.empty_like(x)
    for s in range(nsteps):
        _rhs(x, Am, Ap, sliding, mtype, mi, mj, mk, kind, p0, p1, p2, fm, fp, k1)
        for i in range(N):
            for c in range(n):
                y[i, c] = x[i, c] + 0.5 * h * k1[i, c]
        _rhs(y, Am, Ap, sliding, mtype, mi, mj, mk, kind, p0, p1, p2, fm, fp, k2)
        for i in range(N):
            for c in range(n):
                y[i, c] = x[i, c] + 0.5 * h * k2[i, c]
        _rhs(y, Am, Ap, sliding, mtype, mi, mj, mk, kind, p0, p1, p2, fm, fp, k3)
        for i in range(N):
            for c in range(n):
                y[i, c] = x[i, c] + h * k3[i, c]
        _rhs(y, Am, Ap, sliding, mtype, mi, mj, mk, kind, p0, p1, p2, fm, fp, k4)
        for i in range(N):
            for c in range(n):
                y[i, c] = x[i, c] + (h / 6.0) * (k1[i, c] + 2.0 * k2[i, c] + 2.0 * k3[i, c] + k4[i, c])
                if not np.isfinite(y[i, c]):
                    return s, 3
        if sliding:
            _project(y, mtype, mi, mj, mk, radius)
        for r in range(a1.shape[0]):
            d1 = 0.0
            d2 = 0.0
            for c in range(n):
                d1 += (y[a1[r], c] - y[b1[r], c]) ** 2
                d2 += (y[a2[r], c] - y[b2[r], c]) ** 2
            if s1[r] * d1 + s2[r] * d2 + cc[r] < -band:
                return s, 1
        if sliding:
            a = _rhs(y, Am, Ap, sliding, mtype, mi, mj, mk, kind, p0, p1, p2, fm, fp, k1)
            if a < -band or 1.0 - a < -band:
                return s, 1
        for i in range(N):
            for c in range(n):
                x[i, c] = y[i, c]
                out[s, i, c] = y[i, c]
        if stop_tol >= 0.0:
            _rhs(x, Am, Ap, sliding, mtype, mi, mj, mk, kind, p0, p1, p2, fm, fp, k1)
            mx = 0.0
            for i in range(N):
                for c in range(n):
                    if abs(k1[i, c]) > mx:
                        mx = abs(k1[i, c])
            if mx <= stop_tol:
                return s + 1, 2
    return nsteps, 0
