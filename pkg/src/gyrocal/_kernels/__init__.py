"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``GYROCAL_DISABLE_NUMBA`` is set to a truthy value (``1``, ``true``,
``yes``). Both paths expose the same functions with identical contracts.
"""

from __future__ import annotations

import os

import numpy as np

from gyrocal._kernels import _numpy

STATUS_CONVERGED = _numpy.STATUS_CONVERGED
STATUS_MAX_ITER = _numpy.STATUS_MAX_ITER
STATUS_UNPHYSICAL = _numpy.STATUS_UNPHYSICAL
STATUS_SINGULAR = _numpy.STATUS_SINGULAR

ENV_FLAG = "GYROCAL_DISABLE_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


if _numba_disabled():
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from gyrocal._kernels import _numba as _impl
    except ImportError:
        _impl = _numpy
        BACKEND = "numpy"
    else:
        BACKEND = "numba"


def segment_moments(m, starts, stops):
    """Per-segment ``[mean m^2 (3), mean m (3)]`` rows for ``m[start:stop]``."""
    return _impl.segment_moments(
        np.ascontiguousarray(m, dtype=np.float64),
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(stops, dtype=np.int64),
    )


def ils_batch(X, Y, tol, max_iter):
    """Batched iterative least squares; see :func:`gyrocal._kernels._numpy.ils_batch`."""
    return _impl.ils_batch(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(Y, dtype=np.float64),
        float(tol),
        int(max_iter),
    )


def protocol_moments(z, starts, stops, t0, signs, omegas, axes, scale, bias,
                     jitter_frac, sigma, vib_frac=0.0, vib_freq=0.0, rate=200.0):
    """Moments of simulated rotation steps straight from standard normal draws."""
    f64 = np.float64
    return _impl.protocol_moments(
        np.ascontiguousarray(z, dtype=f64),
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(stops, dtype=np.int64),
        np.ascontiguousarray(t0, dtype=f64),
        np.ascontiguousarray(signs, dtype=f64),
        np.ascontiguousarray(omegas, dtype=f64),
        np.ascontiguousarray(axes, dtype=f64),
        np.ascontiguousarray(scale, dtype=f64),
        np.ascontiguousarray(bias, dtype=f64),
        float(jitter_frac),
        float(sigma),
        float(vib_frac),
        float(vib_freq),
        float(rate),
    )


__all__ = [
    "BACKEND",
    "ENV_FLAG",
    "STATUS_CONVERGED",
    "STATUS_MAX_ITER",
    "STATUS_SINGULAR",
    "STATUS_UNPHYSICAL",
    "ils_batch",
    "protocol_moments",
    "segment_moments",
]
