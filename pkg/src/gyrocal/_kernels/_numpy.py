"""Vectorised numpy implementations of the hot kernels.

Reference path and fallback when numba is unavailable or disabled. Signatures
and status codes match :mod:`gyrocal._kernels._numba` exactly.
"""

from __future__ import annotations

import numpy as np

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_UNPHYSICAL = 2
STATUS_SINGULAR = 3

_RANK_RTOL = 1e-12


def segment_moments(m, starts, stops):
    """Per-segment means of squared and plain components.

    Returns an ``(n_segments, 6)`` array ordered
    ``[mean mx^2, mean my^2, mean mz^2, mean mx, mean my, mean mz]``.
    """
    m = np.ascontiguousarray(m, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    stops = np.asarray(stops, dtype=np.int64)
    out = np.empty((starts.size, 6))
    for s, (a, b) in enumerate(zip(starts, stops)):
        seg = m[a:b]
        out[s, :3] = np.mean(seg * seg, axis=0)
        out[s, 3:] = np.mean(seg, axis=0)
    return out


def ils_batch(X, Y, tol, max_iter):
    """Iterative least squares for a stack of independent designs.

    ``X`` has shape ``(T, n, 6)`` and ``Y`` shape ``(T, n)``. Returns
    ``(beta, passes, status)`` with ``beta`` of shape ``(T, 7)``.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    T = X.shape[0]
    beta = np.full((T, 7), np.nan)
    passes = np.zeros(T, dtype=np.int64)
    status = np.full(T, STATUS_MAX_ITER, dtype=np.int64)

    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    singular = diag.min(axis=1) <= _RANK_RTOL * diag.max(axis=1)
    status[singular] = STATUS_SINGULAR
    live = ~singular
    if not live.any():
        return beta, passes, status

    Q, R = Q[live], R[live]
    ones = np.ones(Y.shape[1])
    qy = np.einsum("tni,tn->ti", Q, Y[live])
    q1 = np.einsum("tni,n->ti", Q, ones)
    # the least-squares solution is affine in the constant term
    a = np.linalg.solve(R, qy[..., None])[..., 0]
    c = np.linalg.solve(R, q1[..., None])[..., 0]

    coef = a.copy()
    idx = np.flatnonzero(live)
    n_live = idx.size
    st = np.full(n_live, STATUS_MAX_ITER, dtype=np.int64)
    npass = np.zeros(n_live, dtype=np.int64)
    active = np.ones(n_live, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        cur = coef[active]
        gains = cur[:, :3]
        bad = np.any(gains <= 0.0, axis=1) | ~np.all(np.isfinite(cur), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.sum(cur[:, 3:] ** 2 / (4.0 * gains), axis=1)
        new = a[active] - gamma[:, None] * c[active]
        step = np.sum(np.abs(new - cur), axis=1)

        act_idx = np.flatnonzero(active)
        npass[act_idx[~bad]] += 1
        st[act_idx[bad]] = STATUS_UNPHYSICAL
        good = act_idx[~bad]
        coef[good] = new[~bad]
        done = good[step[~bad] <= tol]
        st[done] = STATUS_CONVERGED
        active[act_idx[bad]] = False
        active[done] = False

    gains = coef[:, :3]
    ok = np.all(gains > 0.0, axis=1) & np.all(np.isfinite(coef), axis=1)
    st[(~ok) & (st == STATUS_CONVERGED)] = STATUS_UNPHYSICAL
    with np.errstate(divide="ignore", invalid="ignore"):
        b0 = np.sum(coef[:, 3:] ** 2 / (4.0 * gains), axis=1)
    b0[~ok] = np.nan

    beta[idx, 0] = b0
    beta[idx, 1:] = coef
    passes[idx] = npass
    status[idx] = st
    return beta, passes, status


def protocol_moments(z, starts, stops, t0, signs, omegas, axes, scale, bias,
                     jitter_frac, sigma, vib_frac, vib_freq, rate):
    """Fused synthesis and reduction of simulated rotation steps.

    ``z`` holds standard normal draws, one ``(n_s, 4)`` block per step stacked
    along axis 0: column 0 drives the speed jitter, columns 1..3 the
    measurement noise. Returns the ``(n_steps, 6)`` moment rows.
    """
    out = np.empty((starts.size, 6))
    for s in range(starts.size):
        a, b = starts[s], stops[s]
        zz = z[a:b]
        speed = signs[s] * omegas[s] + zz[:, 0] * (jitter_frac * omegas[s])
        if vib_frac > 0.0:
            t = t0[s] + np.arange(b - a) / rate
            speed = speed + vib_frac * omegas[s] * np.sin(2.0 * np.pi * vib_freq * t)
        actual = speed[:, None] * axes[s][None, :]
        m = actual / scale - bias + zz[:, 1:] * sigma
        out[s, :3] = np.mean(m * m, axis=0)
        out[s, 3:] = np.mean(m, axis=0)
    return out
