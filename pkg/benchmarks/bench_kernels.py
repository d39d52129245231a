"""Compare the numba and pure-numpy kernel backends.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is timed on both
backends with identical inputs (numba timings exclude the first, compiling
call), then a small Monte-Carlo campaign is timed end to end in a subprocess
per backend, selected through ``GYROCAL_DISABLE_NUMBA``.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gyrocal._kernels import ENV_FLAG
from gyrocal._kernels import _numpy as np_backend

try:
    from gyrocal._kernels import _numba as nb_backend
except ImportError:  # numba not installed
    nb_backend = None

CAMPAIGN = (
    "import time; from gyrocal.evaluation import run_campaign; from gyrocal.simulator import SimConfig;"
    "run_campaign(SimConfig(), 1, 2);"
    "t = time.perf_counter(); run_campaign(SimConfig(), {n_truths}, {n_trials});"
    "print(time.perf_counter() - t)"
)


def _inputs(rng, n_designs):
    X = rng.uniform(0.2, 2.0, (n_designs, 6, 6))
    X[:, :, 3:] = rng.uniform(-1.0, 1.0, (n_designs, 6, 3))
    Y = np.ones((n_designs, 6))

    n_rot = [1257] * 6
    stops = np.cumsum(n_rot)
    starts = stops - n_rot
    z = rng.standard_normal((sum(n_rot), 4))
    pm_args = (
        z, starts, stops, starts / 200.0, np.array([1.0, -1.0] * 3), np.ones(6),
        np.repeat(np.eye(3), 2, axis=0), np.array([1.1, 0.9, 1.0]), np.array([0.05, -0.02, 0.01]),
        0.05, 0.035, 0.0, 0.0, 200.0,
    )
    m = rng.standard_normal((200_000, 3))
    seg = (np.arange(0, 200_000, 20_000), np.arange(20_000, 200_001, 20_000))
    return {
        "ils_batch": lambda b: b.ils_batch(X, Y, 1e-6, 100),
        "protocol_moments": lambda b: b.protocol_moments(*pm_args),
        "segment_moments": lambda b: b.segment_moments(m, *seg),
    }


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--designs", type=int, default=2000, help="designs per ils_batch call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n-truths", type=int, default=5)
    ap.add_argument("--n-trials", type=int, default=200)
    args = ap.parse_args(argv)

    cases = _inputs(np.random.default_rng(0), args.designs)
    print(f"{'kernel':<18} {'numpy [ms]':>12} {'numba [ms]':>12} {'speed-up':>9}")
    for name, call in cases.items():
        t_np = _best(lambda: call(np_backend), args.repeat)
        if nb_backend is None:
            print(f"{name:<18} {t_np * 1e3:>12.2f} {'n/a':>12} {'':>9}")
            continue
        call(nb_backend)  # compile / load cache
        t_nb = _best(lambda: call(nb_backend), args.repeat)
        print(f"{name:<18} {t_np * 1e3:>12.2f} {t_nb * 1e3:>12.2f} {t_np / t_nb:>8.1f}x")

    code = CAMPAIGN.format(n_truths=args.n_truths, n_trials=args.n_trials)
    times = {}
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, **{ENV_FLAG: flag})
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        times[label] = float(out.stdout.strip())
    n = args.n_truths * args.n_trials
    print(
        f"campaign ({n} trials): numpy {times['numpy']:.2f} s, numba {times['numba']:.2f} s, "
        f"speed-up {times['numpy'] / times['numba']:.1f}x"
    )


if __name__ == "__main__":
    main()
