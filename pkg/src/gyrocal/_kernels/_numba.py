"""numba-compiled kernels. Same contracts as :mod:`gyrocal._kernels._numpy`."""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_UNPHYSICAL = 2
STATUS_SINGULAR = 3

_RANK_RTOL = 1e-12


@njit(cache=True)
def segment_moments(m, starts, stops):
    n_seg = starts.shape[0]
    out = np.zeros((n_seg, 6))
    for s in range(n_seg):
        a = starts[s]
        b = stops[s]
        cnt = b - a
        for j in range(3):
            s1 = 0.0
            s2 = 0.0
            for i in range(a, b):
                v = m[i, j]
                s1 += v
                s2 += v * v
            out[s, j] = s2 / cnt
            out[s, 3 + j] = s1 / cnt
    return out


@njit(cache=True)
def _qr_solve_pair(A, y, u):
    """Householder QR of ``A`` (n x p, n >= p); returns R^-1 Q^T y, R^-1 Q^T u.

    ``A``, ``y`` and ``u`` are overwritten. The boolean flag reports a
    numerically rank-deficient ``R``.
    """
    n, p = A.shape
    for j in range(p):
        norm = 0.0
        for i in range(j, n):
            norm += A[i, j] * A[i, j]
        norm = np.sqrt(norm)
        if norm == 0.0:
            continue
        alpha = -norm if A[j, j] >= 0.0 else norm
        v0 = A[j, j] - alpha
        # v = [v0, A[j+1:, j]]; tau = 2 / v.v
        vv = v0 * v0
        for i in range(j + 1, n):
            vv += A[i, j] * A[i, j]
        if vv == 0.0:
            continue
        for col in range(j + 1, p):
            dot = v0 * A[j, col]
            for i in range(j + 1, n):
                dot += A[i, j] * A[i, col]
            f = 2.0 * dot / vv
            A[j, col] -= f * v0
            for i in range(j + 1, n):
                A[i, col] -= f * A[i, j]
        dot_y = v0 * y[j]
        dot_u = v0 * u[j]
        for i in range(j + 1, n):
            dot_y += A[i, j] * y[i]
            dot_u += A[i, j] * u[i]
        fy = 2.0 * dot_y / vv
        fu = 2.0 * dot_u / vv
        y[j] -= fy * v0
        u[j] -= fu * v0
        for i in range(j + 1, n):
            y[i] -= fy * A[i, j]
            u[i] -= fu * A[i, j]
        A[j, j] = alpha

    dmax = 0.0
    dmin = np.inf
    for j in range(p):
        d = abs(A[j, j])
        dmax = max(dmax, d)
        dmin = min(dmin, d)
    singular = dmin <= _RANK_RTOL * dmax

    xa = np.zeros(p)
    xc = np.zeros(p)
    if singular:
        return xa, xc, True
    for i in range(p - 1, -1, -1):
        sa = y[i]
        sc = u[i]
        for col in range(i + 1, p):
            sa -= A[i, col] * xa[col]
            sc -= A[i, col] * xc[col]
        xa[i] = sa / A[i, i]
        xc[i] = sc / A[i, i]
    return xa, xc, False


@njit(cache=True)
def ils_batch(X, Y, tol, max_iter):
    T, n, p = X.shape
    beta = np.full((T, 7), np.nan)
    passes = np.zeros(T, dtype=np.int64)
    status = np.full(T, STATUS_MAX_ITER, dtype=np.int64)
    for t in range(T):
        A = X[t].copy()
        y = Y[t].copy()
        u = np.ones(n)
        a, c, singular = _qr_solve_pair(A, y, u)
        if singular:
            status[t] = STATUS_SINGULAR
            continue

        coef = a.copy()
        st = STATUS_MAX_ITER
        npass = 0
        for _ in range(max_iter):
            bad = False
            for j in range(3):
                if not coef[j] > 0.0:
                    bad = True
            for j in range(6):
                if not np.isfinite(coef[j]):
                    bad = True
            if bad:
                st = STATUS_UNPHYSICAL
                break
            gamma = 0.0
            for j in range(3):
                gamma += coef[3 + j] * coef[3 + j] / (4.0 * coef[j])
            step = 0.0
            for j in range(6):
                new = a[j] - gamma * c[j]
                step += abs(new - coef[j])
                coef[j] = new
            npass += 1
            if step <= tol:
                st = STATUS_CONVERGED
                break

        ok = True
        for j in range(3):
            if not coef[j] > 0.0:
                ok = False
        for j in range(6):
            if not np.isfinite(coef[j]):
                ok = False
        if not ok and st == STATUS_CONVERGED:
            st = STATUS_UNPHYSICAL
        if ok:
            b0 = 0.0
            for j in range(3):
                b0 += coef[3 + j] * coef[3 + j] / (4.0 * coef[j])
            beta[t, 0] = b0
        for j in range(6):
            beta[t, 1 + j] = coef[j]
        passes[t] = npass
        status[t] = st
    return beta, passes, status


@njit(cache=True)
def protocol_moments(z, starts, stops, t0, signs, omegas, axes, scale, bias,
                     jitter_frac, sigma, vib_frac, vib_freq, rate):
    n_seg = starts.shape[0]
    out = np.zeros((n_seg, 6))
    for s in range(n_seg):
        a = starts[s]
        b = stops[s]
        cnt = b - a
        s1 = np.zeros(3)
        s2 = np.zeros(3)
        for i in range(a, b):
            speed = signs[s] * omegas[s] + z[i, 0] * (jitter_frac * omegas[s])
            if vib_frac > 0.0:
                t = t0[s] + (i - a) / rate
                speed = speed + vib_frac * omegas[s] * np.sin(2.0 * np.pi * vib_freq * t)
            for j in range(3):
                v = (speed * axes[s, j]) / scale[j] - bias[j] + z[i, 1 + j] * sigma
                s1[j] += v
                s2[j] += v * v
        for j in range(3):
            out[s, j] = s2[j] / cnt
            out[s, 3 + j] = s1[j] / cnt
    return out
