from __future__ import annotations

import numpy as np
import pytest

from gyrocal.estimator import ObservationSet
from gyrocal.model import CalibrationParams
from gyrocal.protocol import g_optimal_protocol
from gyrocal.simulator import SimConfig, noiseless, simulate_observations, trial_rng

NOMINAL = CalibrationParams(0.9070, 1.0501, 0.8734, 0.0528, 0.0813, -0.0992)
LSM_LIKE = CalibrationParams(1.18, 1.16, 1.14, 0.008, -0.010, -0.004)


def observe(truth, cfg=None, omega=1.0, seed=0, key=(0,)):
    """Moments of one simulated protocol run as an ObservationSet."""
    cfg = cfg or noiseless(SimConfig())
    protocol = g_optimal_protocol(omega, cfg.sample_rate)
    moments = simulate_observations(truth, protocol, cfg, trial_rng(seed, *key))
    return ObservationSet.from_arrays(moments, omega * omega)


@pytest.fixture
def noiseless_cfg():
    return noiseless(SimConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
