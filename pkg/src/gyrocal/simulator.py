"""Synthetic gyroscopes and synthetic executions of the rotation protocol.

Noise model, per sample:

* the servo speed is the commanded speed plus white jitter with standard
  deviation ``speed_jitter_frac * omega`` (optionally plus a sinusoidal
  vibration term);
* the true body rate is that speed along a slightly misaligned rotation axis;
* the raw reading is the inverse error model applied to the true rate plus
  white Gaussian noise of standard deviation ``noise_sigma`` on each axis.

Squaring noisy readings leaves a positive residual of ``noise_sigma**2`` in
each mean of squares. It is not removed here and it shows up as a
systematic shrinkage of the estimated scale factors, largest at low speed.

Reproducibility: every truth and every trial draws from its own generator,
derived from ``(seed, key...)`` through :class:`numpy.random.SeedSequence`, so
results do not depend on the order in which trials are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gyrocal import _kernels
from gyrocal.estimator import ObservationSet
from gyrocal.model import CalibrationParams, apply_calibration, inverse_model
from gyrocal.protocol import (
    Axis,
    Protocol,
    ProtocolStep,
    Segment,
    SegmentedLog,
)

TRUTH_STREAM = 0
TRIAL_STREAM = 1


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``key``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class SimConfig:
    scale_range: tuple[float, float] = (0.8, 1.2)
    bias_range: tuple[float, float] = (-0.1, 0.1)
    # draw |b| from bias_range and a random sign
    random_bias_sign: bool = False
    misalignment_max: float = 0.10
    noise_sigma: float = 0.035
    speed_jitter_frac: float = 0.05
    sample_rate: float = 200.0
    vibration_frac: float = 0.0
    vibration_freq: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale_range", tuple(float(v) for v in self.scale_range))
        object.__setattr__(self, "bias_range", tuple(float(v) for v in self.bias_range))
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi and math.isfinite(hi)):
            raise ValueError(f"invalid scale_range {self.scale_range}")
        blo, bhi = self.bias_range
        if not (blo <= bhi and math.isfinite(blo) and math.isfinite(bhi)):
            raise ValueError(f"invalid bias_range {self.bias_range}")
        if self.random_bias_sign and blo < 0.0:
            raise ValueError("bias_range is a magnitude range when random_bias_sign is set")
        if not 0.0 <= self.misalignment_max < 1.0:
            raise ValueError(f"misalignment_max must lie in [0, 1), got {self.misalignment_max}")
        if not self.noise_sigma >= 0.0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if not self.speed_jitter_frac >= 0.0:
            raise ValueError(f"speed_jitter_frac must be non-negative, got {self.speed_jitter_frac}")
        if not self.sample_rate > 0.0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not (self.vibration_frac >= 0.0 and self.vibration_freq >= 0.0):
            raise ValueError("vibration settings must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_range"] = list(self.scale_range)
        d["bias_range"] = list(self.bias_range)
        return d


@dataclass(frozen=True)
class ExtremeConfig(SimConfig):
    """Poor-quality sensors: gains in [1.2, 2.0], |bias| in [0.1, 0.2] rad/s."""

    scale_range: tuple[float, float] = (1.2, 2.0)
    bias_range: tuple[float, float] = (0.1, 0.2)
    random_bias_sign: bool = True


def noiseless(cfg: SimConfig) -> SimConfig:
    """Copy of ``cfg`` with noise, jitter, vibration and misalignment switched off."""
    fields = cfg.to_dict()
    fields.update(noise_sigma=0.0, speed_jitter_frac=0.0, misalignment_max=0.0, vibration_frac=0.0)
    return type(cfg)(**fields)


class GyroSample(NamedTuple):
    t: float
    mx: float
    my: float
    mz: float


@dataclass(frozen=True)
class GyroLog:
    """Continuous sample stream. ``obs_id`` is the step index, ``-1`` for dwell."""

    t: NDArray[np.float64]
    m: NDArray[np.float64]
    obs_id: NDArray[np.int64]
    actual: NDArray[np.float64] | None = None

    def __len__(self) -> int:
        return len(self.t)

    def samples(self) -> Iterator[GyroSample]:
        for ti, mi in zip(self.t, self.m):
            yield GyroSample(float(ti), float(mi[0]), float(mi[1]), float(mi[2]))


@dataclass(frozen=True)
class StepSamples:
    t: NDArray[np.float64]
    m: NDArray[np.float64]
    actual: NDArray[np.float64]


@dataclass(frozen=True)
class ProtocolRun:
    log: GyroLog
    segmented: SegmentedLog
    observations: ObservationSet
    axes: NDArray[np.float64]
    # (start, stop) sample index of each rotation in ``log``
    boundaries: tuple[tuple[int, int], ...]


def draw_truth(cfg: SimConfig, rng: np.random.Generator) -> CalibrationParams:
    k = rng.uniform(cfg.scale_range[0], cfg.scale_range[1], 3)
    if cfg.random_bias_sign:
        mag = rng.uniform(cfg.bias_range[0], cfg.bias_range[1], 3)
        b = mag * (2 * rng.integers(0, 2, 3) - 1)
    else:
        b = rng.uniform(cfg.bias_range[0], cfg.bias_range[1], 3)
    return CalibrationParams.from_arrays(k, b)


def draw_misaligned_axis(
    nominal: Axis | str, misalignment_max: float, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Unit rotation axis near ``nominal``.

    Each off-nominal direction cosine gets a magnitude ~ U(0, misalignment_max)
    and a random sign before renormalisation, so the tilt never exceeds
    ``atan(sqrt(2) * misalignment_max)``.
    """
    if not 0.0 <= misalignment_max < 1.0:
        raise ValueError(f"misalignment_max must lie in [0, 1), got {misalignment_max}")
    axis = Axis(nominal)
    v = axis.unit
    off = [i for i in range(3) if i != axis.index]
    mags = rng.uniform(0.0, misalignment_max, 2)
    signs = 2 * rng.integers(0, 2, 2) - 1
    v[off] = mags * signs
    return v / np.linalg.norm(v)


def simulate_step(
    truth: CalibrationParams,
    step: ProtocolStep,
    axis: ArrayLike,
    cfg: SimConfig,
    rng: np.random.Generator,
    t0: float = 0.0,
) -> StepSamples:
    """Raw readings for one rotation step about the (possibly misaligned) ``axis``.

    Draws one ``(n, 4)`` block of standard normals: column 0 is the speed
    jitter, columns 1..3 the measurement noise.
    """
    n = step.n_samples(cfg.sample_rate)
    t = t0 + np.arange(n) / cfg.sample_rate
    z = rng.standard_normal((n, 4))
    speed = step.direction.sign * step.omega + z[:, 0] * (cfg.speed_jitter_frac * step.omega)
    if cfg.vibration_frac > 0.0:
        speed = speed + cfg.vibration_frac * step.omega * np.sin(2.0 * np.pi * cfg.vibration_freq * t)
    actual = speed[:, None] * np.asarray(axis, dtype=float)[None, :]
    m = actual / truth.scale - truth.bias + z[:, 1:] * cfg.noise_sigma
    return StepSamples(t, m, actual)


def _timeline(protocol: Protocol, rate: float):
    n_rot = [s.n_samples(rate) for s in protocol.steps]
    n_dwell = [int(round(s.dwell_after * rate)) for s in protocol.steps]
    offsets = np.concatenate([[0], np.cumsum(np.add(n_rot, n_dwell))]).astype(np.int64)
    return n_rot, n_dwell, offsets


def _draw_axes(cfg: SimConfig, rng) -> NDArray[np.float64]:
    return np.array([draw_misaligned_axis(a, cfg.misalignment_max, rng) for a in Axis])


def simulate_observations(
    truth: CalibrationParams, protocol: Protocol, cfg: SimConfig, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Regression moments ``(n_steps, 6)`` of one run, without building the log.

    Consumes the generator exactly like :func:`simulate_protocol_run` up to the
    dwell samples, so both give the same observations for the same stream.
    """
    rate = cfg.sample_rate
    axes = _draw_axes(cfg, rng)
    n_rot, _, offsets = _timeline(protocol, rate)
    z = rng.standard_normal((sum(n_rot), 4))
    stops = np.cumsum(n_rot)
    starts = stops - n_rot
    steps = protocol.steps
    return _kernels.protocol_moments(
        z,
        starts,
        stops,
        offsets[:-1] / rate,
        [s.direction.sign for s in steps],
        [s.omega for s in steps],
        axes[[s.axis.index for s in steps]],
        truth.scale,
        truth.bias,
        cfg.speed_jitter_frac,
        cfg.noise_sigma,
        cfg.vibration_frac,
        cfg.vibration_freq,
        rate,
    )


def simulate_protocol_run(
    truth: CalibrationParams, protocol: Protocol, cfg: SimConfig, rng: np.random.Generator
) -> ProtocolRun:
    """Full labelled sample log of one protocol execution.

    One misaligned axis is drawn per nominal axis and shared by both
    directions about it. Each rotation is followed by a stationary dwell of
    ``step.dwell_after`` seconds, labelled ``-1``.
    """
    if cfg.sample_rate != protocol.sample_rate:
        raise ValueError(
            f"simulator rate {cfg.sample_rate} Hz differs from protocol rate {protocol.sample_rate} Hz"
        )
    rate = cfg.sample_rate
    axes = _draw_axes(cfg, rng)

    n_rot, n_dwell, offsets = _timeline(protocol, rate)

    rot = []
    for i, step in enumerate(protocol.steps):
        rot.append(simulate_step(truth, step, axes[step.axis.index], cfg, rng, t0=offsets[i] / rate))
    dwell_noise = rng.standard_normal((sum(n_dwell), 3)) * cfg.noise_sigma

    total = int(offsets[-1])
    t = np.arange(total) / rate
    m = np.empty((total, 3))
    actual = np.zeros((total, 3))
    obs_id = np.full(total, -1, dtype=np.int64)
    boundaries = []
    d0 = 0
    for i, block in enumerate(rot):
        a = int(offsets[i])
        b = a + n_rot[i]
        m[a:b] = block.m
        actual[a:b] = block.actual
        obs_id[a:b] = i
        m[b : b + n_dwell[i]] = inverse_model(truth, np.zeros(3)) + dwell_noise[d0 : d0 + n_dwell[i]]
        d0 += n_dwell[i]
        boundaries.append((a, b))

    log = GyroLog(t=t, m=m, obs_id=obs_id, actual=actual)
    segmented = SegmentedLog(tuple(Segment(i, t[a:b], m[a:b]) for i, (a, b) in enumerate(boundaries)))
    starts = np.array([a for a, _ in boundaries])
    stops = np.array([b for _, b in boundaries])
    moments = _kernels.segment_moments(m, starts, stops)
    omegas = np.array([s.omega for s in protocol.steps])
    observations = ObservationSet.from_arrays(moments, omegas**2)
    return ProtocolRun(log, segmented, observations, axes, tuple(boundaries))


@dataclass(frozen=True)
class SineTrackingRun:
    t: NDArray[np.float64]
    actual: NDArray[np.float64]
    raw: NDArray[np.float64]
    calibrated: NDArray[np.float64]


def simulate_sine_tracking(
    truth: CalibrationParams,
    estimate: CalibrationParams,
    amplitude: float,
    freq: float,
    cfg: SimConfig,
    rng: np.random.Generator,
    duration: float = 4.0,
) -> SineTrackingRun:
    """Sinusoidal rotation about ``(1, 1, 1)/sqrt(3)``, before and after correction.

    The servo speed is ``amplitude * sin(2 pi freq t)`` with jitter of standard
    deviation ``speed_jitter_frac * |speed|``.
    """
    n = int(round(duration * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    cmd = amplitude * np.sin(2.0 * np.pi * freq * t)
    speed = cmd + rng.standard_normal(n) * cfg.speed_jitter_frac * np.abs(cmd)
    axis = np.ones(3) / math.sqrt(3.0)
    actual = speed[:, None] * axis[None, :]
    raw = inverse_model(truth, actual) + rng.standard_normal((n, 3)) * cfg.noise_sigma
    return SineTrackingRun(t, actual, raw, apply_calibration(estimate, raw))
