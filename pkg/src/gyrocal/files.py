"""On-disk formats: sample-log CSV, JSON reports and sidecars.

Sample log CSV (header required, exact)::

    obs_id,t,mx,my,mz

``obs_id`` is the protocol step (0..n-1) or -1 for dwell samples, ``t`` is in
seconds and the rates are in rad/s. Floats are written with ``repr`` so they
read back bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from gyrocal.errors import LogFormatError
from gyrocal.simulator import GyroLog

LOG_HEADER = ("obs_id", "t", "mx", "my", "mz")


def write_log_csv(path: str | Path, log: GyroLog, labeled: bool = True) -> None:
    obs = log.obs_id if labeled else np.full(len(log), -1, dtype=np.int64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for oid, t, m in zip(obs.tolist(), log.t.tolist(), log.m.tolist()):
            w.writerow((oid, repr(t), repr(m[0]), repr(m[1]), repr(m[2])))


def read_log_csv(path: str | Path, rate_scale: float = 1.0) -> GyroLog:
    """Parse a sample log; ``rate_scale`` converts the rate columns to rad/s."""
    obs, ts, ms = [], [], []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise LogFormatError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LogFormatError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != LOG_HEADER:
            raise LogFormatError(f"{path}:1: expected header {','.join(LOG_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LOG_HEADER):
                raise LogFormatError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                oid = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise LogFormatError(f"{path}:{lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in vals):
                raise LogFormatError(f"{path}:{lineno}: non-finite value")
            if oid < -1:
                raise LogFormatError(f"{path}:{lineno}: obs_id must be >= -1, got {oid}")
            if ts and vals[0] < ts[-1]:
                raise LogFormatError(f"{path}:{lineno}: time goes backwards")
            obs.append(oid)
            ts.append(vals[0])
            ms.append(vals[1:])
    if not ts:
        raise LogFormatError(f"{path}: no samples")
    m = np.array(ms, dtype=float)
    if rate_scale != 1.0:
        m = m * rate_scale
    return GyroLog(t=np.array(ts), m=m, obs_id=np.array(obs, dtype=np.int64))


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: str | Path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise LogFormatError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
