"""Run configuration for the command-line tool.

A config file is a JSON object with these optional sections::

    {
      "seed": 0,
      "units": "rad",
      "sim": {"noise_sigma": 0.035, "extreme": false, ...},
      "solver": {"tolerance": 1e-6, "max_iterations": 100, "condition_bound": 1e12},
      "protocol": {"omega": 1.0, "revolutions": 1, "dwell_after": 3.0},
      "campaign": {"n_truths": 30, "n_trials": 500, "omega": 1.0, "grid": [0.3, ...]},
      "truth": {"kx": 1.0, "ky": 1.0, "kz": 1.0, "bx": 0.0, "by": 0.0, "bz": 0.0},
      "convergence": {"omega": 1.0, "cases": [{"kx": ..., "bz": ...}, ...]}
    }

Unknown keys are rejected. With ``"units": "deg"`` every angular rate in the
file (speeds, noise level, bias range, truth biases) is read as deg/s and
converted to rad/s here; nothing downstream sees degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from gyrocal.errors import ConfigError
from gyrocal.estimator import SolverConfig
from gyrocal.model import PARAM_NAMES, CalibrationParams
from gyrocal.simulator import ExtremeConfig, SimConfig

UNITS = {"rad": 1.0, "deg": math.pi / 180.0}

_SIM_KEYS = {f.name for f in fields(SimConfig)} - {"seed"} | {"extreme"}
_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
_PROTOCOL_KEYS = {"omega", "revolutions", "dwell_after"}
_CAMPAIGN_KEYS = {"n_truths", "n_trials", "omega", "grid"}
_CONVERGENCE_KEYS = {"omega", "cases"}
_TOP_KEYS = {"seed", "units", "sim", "solver", "protocol", "campaign", "truth", "convergence"}


@dataclass(frozen=True)
class ProtocolSettings:
    omega: float = 1.0
    revolutions: int = 1
    dwell_after: float = 3.0


@dataclass(frozen=True)
class CampaignSettings:
    n_truths: int = 30
    n_trials: int = 500
    omega: float = 1.0
    grid: tuple[float, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    units: str = "rad"
    sim: SimConfig = field(default_factory=SimConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    protocol: ProtocolSettings = field(default_factory=ProtocolSettings)
    campaign: CampaignSettings = field(default_factory=CampaignSettings)
    truth: CalibrationParams | None = None
    convergence_cases: tuple[CalibrationParams, ...] | None = None
    convergence_omega: float = 1.0

    @property
    def rate_scale(self) -> float:
        return UNITS[self.units]

    def to_dict(self) -> dict:
        """Resolved configuration, all rates in rad/s."""
        out = {
            "seed": self.seed,
            "sim": self.sim.to_dict() | {"kind": type(self.sim).__name__},
            "solver": {
                "tolerance": self.solver.tolerance,
                "max_iterations": self.solver.max_iterations,
                "condition_bound": self.solver.condition_bound,
            },
            "protocol": {
                "omega": self.protocol.omega,
                "revolutions": self.protocol.revolutions,
                "dwell_after": self.protocol.dwell_after,
            },
            "campaign": {
                "n_truths": self.campaign.n_truths,
                "n_trials": self.campaign.n_trials,
                "omega": self.campaign.omega,
                "grid": list(self.campaign.grid) if self.campaign.grid is not None else None,
            },
            "truth": self.truth.as_dict() if self.truth else None,
            "convergence": {
                "omega": self.convergence_omega,
                "cases": [c.as_dict() for c in self.convergence_cases]
                if self.convergence_cases
                else None,
            },
        }
        return out


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _params(d: dict, where: str, scale: float) -> CalibrationParams:
    _check_keys(d, set(PARAM_NAMES), where)
    missing = [k for k in PARAM_NAMES if k not in d]
    if missing:
        raise ConfigError(f"{where}: missing {', '.join(missing)}")
    try:
        return CalibrationParams(
            float(d["kx"]), float(d["ky"]), float(d["kz"]),
            float(d["bx"]) * scale, float(d["by"]) * scale, float(d["bz"]) * scale,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: dict, units: str | None = None, seed: int | None = None) -> RunConfig:
    """Validate a config mapping. ``units`` and ``seed`` override the file."""
    _check_keys(data, _TOP_KEYS, "config")
    units = units or data.get("units", "rad")
    if units not in UNITS:
        raise ConfigError(f"units: expected one of {sorted(UNITS)}, got {units!r}")
    scale = UNITS[units]
    seed = int(data.get("seed", 0)) if seed is None else int(seed)
    if seed < 0:
        raise ConfigError(f"seed: must be non-negative, got {seed}")

    sim_d = dict(data.get("sim", {}))
    _check_keys(sim_d, _SIM_KEYS, "sim")
    extreme = bool(sim_d.pop("extreme", False))
    for key in ("noise_sigma",):
        if key in sim_d:
            sim_d[key] = float(sim_d[key]) * scale
    if "bias_range" in sim_d:
        sim_d["bias_range"] = tuple(float(v) * scale for v in sim_d["bias_range"])
    try:
        sim = (ExtremeConfig if extreme else SimConfig)(seed=seed, **sim_d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from exc

    solver_d = data.get("solver", {})
    _check_keys(solver_d, _SOLVER_KEYS, "solver")
    try:
        solver = SolverConfig(**solver_d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    prot_d = dict(data.get("protocol", {}))
    _check_keys(prot_d, _PROTOCOL_KEYS, "protocol")
    if "omega" in prot_d:
        prot_d["omega"] = float(prot_d["omega"]) * scale
    protocol = ProtocolSettings(**prot_d)
    if not protocol.omega > 0.0:
        raise ConfigError(f"protocol.omega: must be positive, got {protocol.omega}")
    if int(protocol.revolutions) != protocol.revolutions or protocol.revolutions < 1:
        raise ConfigError(f"protocol.revolutions: must be a positive integer")

    camp_d = dict(data.get("campaign", {}))
    _check_keys(camp_d, _CAMPAIGN_KEYS, "campaign")
    if "omega" in camp_d:
        camp_d["omega"] = float(camp_d["omega"]) * scale
    if camp_d.get("grid") is not None:
        camp_d["grid"] = tuple(float(v) * scale for v in camp_d["grid"])
    campaign = CampaignSettings(**camp_d)
    if campaign.n_truths < 1 or campaign.n_trials < 1:
        raise ConfigError("campaign: n_truths and n_trials must be >= 1")
    if not campaign.omega > 0.0:
        raise ConfigError(f"campaign.omega: must be positive, got {campaign.omega}")
    if campaign.grid is not None:
        g = campaign.grid
        if not g or any(w <= 0.0 for w in g) or any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError("campaign.grid: must be positive and strictly increasing")

    truth = _params(data["truth"], "truth", scale) if data.get("truth") is not None else None

    conv_d = data.get("convergence", {}) or {}
    _check_keys(conv_d, _CONVERGENCE_KEYS, "convergence")
    cases = None
    if conv_d.get("cases"):
        cases = tuple(
            _params(c, f"convergence.cases[{i}]", scale) for i, c in enumerate(conv_d["cases"])
        )
    conv_omega = float(conv_d.get("omega", 1.0)) * scale

    return RunConfig(
        seed=seed,
        units=units,
        sim=sim,
        solver=solver,
        protocol=protocol,
        campaign=campaign,
        truth=truth,
        convergence_cases=cases,
        convergence_omega=conv_omega,
    )
