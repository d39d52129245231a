"""Six-observation rotation protocol and per-revolution reduction of logs.

The protocol rotates the sensor one full turn counter-clockwise and one full
turn clockwise about each of its three axes. Counter-clockwise about an axis is
a positive angular velocity on that axis (right-hand rule). At unit speed the
ideal raw readings form the design::

    (+1, 0, 0) (-1, 0, 0) (0, +1, 0) (0, -1, 0) (0, 0, +1) (0, 0, -1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gyrocal import _kernels
from gyrocal.errors import LogFormatError, SegmentationError
from gyrocal.estimator import Observation, ObservationSet


class Axis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"

    @property
    def index(self) -> int:
        return "xyz".index(self.value)

    @property
    def unit(self) -> NDArray[np.float64]:
        v = np.zeros(3)
        v[self.index] = 1.0
        return v


class Direction(str, Enum):
    CCW = "ccw"
    CW = "cw"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.CCW else -1.0


@dataclass(frozen=True)
class ProtocolStep:
    axis: Axis
    direction: Direction
    omega: float
    revolutions: int = 1
    dwell_after: float = 3.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", Axis(self.axis))
        object.__setattr__(self, "direction", Direction(self.direction))
        if not (math.isfinite(self.omega) and self.omega > 0.0):
            raise ValueError(f"omega must be positive, got {self.omega}")
        if int(self.revolutions) != self.revolutions or self.revolutions < 1:
            raise ValueError(f"revolutions must be a positive integer, got {self.revolutions}")
        if not self.dwell_after >= 0.0:
            raise ValueError(f"dwell_after must be non-negative, got {self.dwell_after}")

    @property
    def duration(self) -> float:
        """Rotation time in seconds."""
        return self.revolutions * 2.0 * math.pi / self.omega

    @property
    def ideal_rate(self) -> NDArray[np.float64]:
        """Body rate of an ideally mounted sensor during this step."""
        return self.direction.sign * self.omega * self.axis.unit

    def n_samples(self, sample_rate: float) -> int:
        return int(round(sample_rate * self.duration))

    def to_dict(self) -> dict:
        return {
            "axis": self.axis.value,
            "direction": self.direction.value,
            "omega": self.omega,
            "revolutions": int(self.revolutions),
            "dwell_after": self.dwell_after,
        }


@dataclass(frozen=True)
class Protocol:
    steps: tuple[ProtocolStep, ...]
    sample_rate: float = 200.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("protocol needs at least one step")
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0.0):
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.steps)

    def ideal_design(self) -> NDArray[np.float64]:
        """Ideal raw readings per step, one row each (identity sensor, no noise)."""
        return np.array([s.ideal_rate for s in self.steps])

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "steps": [dict(obs_id=i, **s.to_dict()) for i, s in enumerate(self.steps)],
        }

    @classmethod
    def from_dict(cls, data: dict, rate_scale: float = 1.0) -> Protocol:
        """Parse a protocol sidecar; ``rate_scale`` converts omega units to rad/s."""
        allowed = {"sample_rate", "steps"}
        unknown = set(data) - allowed
        if unknown:
            raise LogFormatError(f"unknown protocol keys: {sorted(unknown)}")
        try:
            raw_steps = data["steps"]
        except KeyError:
            raise LogFormatError("protocol is missing 'steps'") from None
        step_keys = {"obs_id", "axis", "direction", "omega", "revolutions", "dwell_after"}
        steps = []
        for i, s in enumerate(raw_steps):
            bad = set(s) - step_keys
            if bad:
                raise LogFormatError(f"steps[{i}]: unknown keys {sorted(bad)}")
            if "obs_id" in s and s["obs_id"] != i:
                raise LogFormatError(f"steps[{i}]: obs_id {s['obs_id']} out of order")
            try:
                steps.append(
                    ProtocolStep(
                        axis=Axis(s["axis"]),
                        direction=Direction(s["direction"]),
                        omega=float(s["omega"]) * rate_scale,
                        revolutions=s.get("revolutions", 1),
                        dwell_after=float(s.get("dwell_after", 3.0)),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise LogFormatError(f"steps[{i}]: {exc}") from exc
        return cls(tuple(steps), float(data.get("sample_rate", 200.0)))


def g_optimal_protocol(
    omega: float, sample_rate: float = 200.0, revolutions: int = 1, dwell_after: float = 3.0
) -> Protocol:
    """Six steps ``[+X, -X, +Y, -Y, +Z, -Z]`` at constant speed ``omega`` (rad/s)."""
    steps = tuple(
        ProtocolStep(axis, direction, omega, revolutions, dwell_after)
        for axis in Axis
        for direction in (Direction.CCW, Direction.CW)
    )
    return Protocol(steps, sample_rate)


@dataclass(frozen=True)
class Segment:
    step_index: int
    t: NDArray[np.float64]
    m: NDArray[np.float64]

    def __post_init__(self) -> None:
        if len(self.m) == 0:
            raise SegmentationError(f"segment {self.step_index} is empty")


@dataclass(frozen=True)
class SegmentedLog:
    segments: tuple[Segment, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.segments)


def average_revolution(samples: ArrayLike, omega: float) -> Observation:
    """Reduce one rotation segment to a regression row.

    ``samples`` is an ``(n, 3)`` array of raw rates. The row holds the means of
    the components and the means of their squares (not the squares of the
    means); the response is the squared commanded speed.
    """
    m = np.asarray(samples, dtype=float)
    if m.ndim != 2 or m.shape[1] != 3:
        raise ValueError(f"samples must have shape (n, 3), got {m.shape}")
    if m.shape[0] == 0:
        raise SegmentationError("cannot average an empty segment")
    moments = _kernels.segment_moments(m, [0], [m.shape[0]])[0]
    return Observation.from_moments(moments, omega * omega)


def observations_from(segmented: SegmentedLog, protocol: Protocol) -> ObservationSet:
    if len(segmented) != len(protocol):
        raise SegmentationError(
            f"{len(segmented)} segments for a {len(protocol)}-step protocol"
        )
    rows = []
    for seg in segmented.segments:
        step = protocol.steps[seg.step_index]
        rows.append(average_revolution(seg.m, step.omega))
    return ObservationSet(tuple(rows))


def _runs(mask: NDArray[np.bool_]) -> list[tuple[int, int]]:
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


def segment_log(
    t: ArrayLike,
    m: ArrayLike,
    protocol: Protocol,
    labels: ArrayLike | None = None,
    motion_threshold: float = 0.5,
    min_duration: float = 0.5,
) -> SegmentedLog:
    """Split a continuous log into one segment per protocol step.

    With ``labels`` (per-sample step ids, ``-1`` for dwell samples), samples
    are grouped by id. Each id must form one contiguous block and ids must
    appear in increasing order.

    Without labels, rotation is detected from the reading magnitude: runs
    where ``|M|`` exceeds ``motion_threshold * omega`` for at least
    ``min_duration`` revolution periods (``2 pi / omega``) become segments,
    with ``omega`` the slowest step speed of the protocol.
    """
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    n_steps = len(protocol)

    if labels is not None:
        lab = np.asarray(labels, dtype=np.int64)
        if lab.shape != t.shape:
            raise LogFormatError("labels must have one entry per sample")
        if np.any((lab >= 0) & (lab >= n_steps)) or np.any(lab < -1):
            raise SegmentationError(f"labels must lie in -1..{n_steps - 1}")
        segments = []
        last_stop = -1
        for sid in range(n_steps):
            idx = np.flatnonzero(lab == sid)
            if idx.size == 0:
                raise SegmentationError(f"no samples labelled for step {sid}")
            if idx[-1] - idx[0] + 1 != idx.size:
                raise SegmentationError(f"samples for step {sid} are not contiguous")
            if idx[0] <= last_stop:
                raise SegmentationError(f"step {sid} overlaps or precedes step {sid - 1}")
            last_stop = idx[-1]
            segments.append(Segment(sid, t[idx], m[idx]))
        return SegmentedLog(tuple(segments))

    omega = min(s.omega for s in protocol.steps)
    speed = np.linalg.norm(m, axis=1)
    moving = speed > motion_threshold * omega
    min_len = min_duration * (2.0 * math.pi / omega)
    dt = 1.0 / protocol.sample_rate
    runs = [(a, b) for a, b in _runs(moving) if (b - a) * dt >= min_len]
    if len(runs) != n_steps:
        raise SegmentationError(f"detected {len(runs)} rotation segments, expected {n_steps}")
    return SegmentedLog(tuple(Segment(i, t[a:b], m[a:b]) for i, (a, b) in enumerate(runs)))
