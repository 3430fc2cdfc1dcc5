"""Scenario configuration: YAML text validated into a strict schema.

Config files use engineering units (Hz, ueV, dBm); :meth:`ScenarioConfig.system_params`
and friends convert to the SI/angular units used by the engines. Unknown
keys are rejected everywhere. Omitted fields take reference-device
defaults, and the fully populated config is echoed into every output
header so a run can be reproduced from its CSV alone.
"""

from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import model as m

SCENARIOS = (
    "rabi-map",
    "gain-map",
    "tune-map",
    "tones",
    "readout",
    "compress",
    "fit",
    "noise-budget",
    "calibrate-pump",
)


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.detail = message


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CavityConfig(_Strict):
    frequency_hz: float = Field(5.198e9, gt=0)
    kappa_in_hz: float = Field(7e6, ge=0)
    kappa_out_hz: float = Field(7e6, ge=0)
    kappa_int_hz: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _total(self):
        if self.kappa_in_hz + self.kappa_out_hz + self.kappa_int_hz <= 0:
            raise ValueError("total cavity decay rate must be positive")
        return self


class DqdConfig(_Strict):
    gap_hz: float = Field(m.REF_GAP_1, ge=0, description="2 t_c / h")
    epsilon_uev: float = 0.0
    g_c_hz: float = Field(60e6, ge=0)
    gamma_1_hz: float = Field(100e6, ge=0)
    gamma_phi_hz: float = Field(0.0, ge=0)
    lever_arm: float = Field(m.REF_LEVER_ARM, gt=0)


def _default_dqds():
    return (DqdConfig(),)


class SystemConfig(_Strict):
    cavity: CavityConfig = CavityConfig()
    dqds: tuple[DqdConfig, ...] = Field(default_factory=_default_dqds, min_length=1, max_length=2)


class GridConfig(_Strict):
    """Either an evenly spaced ``start/stop/num`` range or explicit ``values``."""

    start: Optional[float] = None
    stop: Optional[float] = None
    num: Optional[int] = Field(None, ge=1, le=100000)
    values: Optional[tuple[float, ...]] = None

    @model_validator(mode="after")
    def _one_form(self):
        ranged = (self.start, self.stop, self.num)
        if self.values is not None:
            if any(v is not None for v in ranged):
                raise ValueError("give either values or start/stop/num, not both")
            if len(self.values) == 0:
                raise ValueError("values must not be empty")
        elif any(v is None for v in ranged):
            raise ValueError("start, stop and num are all required")
        return self

    def array(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.start, self.stop, self.num)


def _grid(start, stop, num) -> GridConfig:
    return GridConfig(start=start, stop=stop, num=num)


_READOUT_EPS = tuple(
    float(x) for x in np.round(np.concatenate([-np.geomspace(100, 1, 9), [0.0], np.geomspace(1, 100, 9)]), 6)
)


class GridsConfig(_Strict):
    probe_offset_hz: GridConfig = _grid(-40e6, 40e6, 61)
    epsilon_uev: GridConfig = _grid(-20.0, 20.0, 61)
    beat_hz: GridConfig = _grid(-15e6, 15e6, 60)
    probe_power_dbm: GridConfig = _grid(-180.0, -115.0, 27)
    epsilon2_uev: GridConfig = GridConfig(values=_READOUT_EPS)
    dqd_index: int = Field(0, ge=0, le=1)


class PumpConfig(_Strict):
    power_dbm: Optional[float] = Field(None, description="omit to calibrate")
    beat_hz: float = 100e3
    phase_rad: float = 0.0

    @model_validator(mode="after")
    def _beat(self):
        if self.beat_hz == 0:
            raise ValueError("beat_hz must be nonzero")
        return self


class ProbeConfig(_Strict):
    power_dbm: float = -160.0
    offset_hz: float = -4e6
    phase_rad: float = 0.0


class CalibrationConfig(_Strict):
    target_db: float = m.REF_GAIN_DB
    signal_offset_hz: float = -4e6
    tol_db: float = Field(0.005, gt=0)


class TuneConfig(_Strict):
    signal_offset_hz: float = 3e6


class ToneConfig(_Strict):
    n_harmonics: int = Field(2, ge=1, le=8)


class NoiseConfig(_Strict):
    n_sapa: float = Field(1.5, ge=0)
    n_hemt: float = Field(10.0, ge=0)
    gain_db: float = Field(m.REF_GAIN_DB, ge=0)
    bandwidth_hz: float = Field(10.0, gt=0)
    repeats: int = Field(30, ge=2)
    floor_rise: Optional[float] = Field(None, ge=1)


class ReadoutConfig(_Strict):
    sapa_index: int = Field(0, ge=0, le=1)
    on_offset_hz: float = -4e6
    off_offset_hz: float = 0.0
    decouple_sapa_off: bool = True


class FitConfig(_Strict):
    input: Optional[str] = None
    model: Literal["lorentzian", "coupled"] = "coupled"
    method: Literal["gauss_newton", "simplex"] = "gauss_newton"
    fixed: tuple[str, ...] = ("omega_r", "kappa")
    init: dict[str, float] = Field(default_factory=dict)


class IntegratorConfig(_Strict):
    tol_rel: float = Field(1e-9, gt=0, lt=1)
    settle_criterion: float = Field(1e-6, gt=0, lt=1)
    max_periods: int = Field(200, ge=2)


class ScenarioConfig(_Strict):
    scenario: Literal[SCENARIOS]  # type: ignore[valid-type]
    seed: int = Field(0, ge=0, lt=2**64)
    output: Optional[str] = None
    system: SystemConfig = SystemConfig()
    pump: PumpConfig = PumpConfig()
    probe: ProbeConfig = ProbeConfig()
    grids: GridsConfig = GridsConfig()
    calibration: CalibrationConfig = CalibrationConfig()
    tune: TuneConfig = TuneConfig()
    tones: ToneConfig = ToneConfig()
    noise: NoiseConfig = NoiseConfig()
    readout: ReadoutConfig = ReadoutConfig()
    fit: FitConfig = FitConfig()
    integrator: IntegratorConfig = IntegratorConfig()

    @model_validator(mode="before")
    @classmethod
    def _readout_two_dots(cls, data):
        if isinstance(data, dict) and data.get("scenario") == "readout":
            system = dict(data.get("system") or {})
            if "dqds" not in system:
                system["dqds"] = [{}, {"gap_hz": m.REF_GAP_2}]
                data = {**data, "system": system}
        return data

    @model_validator(mode="after")
    def _consistency(self):
        n = len(self.system.dqds)
        if self.scenario == "readout" and n != 2:
            raise ValueError("readout needs exactly two dqds")
        if self.grids.dqd_index >= n:
            raise ValueError(f"grids.dqd_index {self.grids.dqd_index} out of range for {n} dqd(s)")
        if self.scenario == "fit" and not self.fit.input:
            raise ValueError("fit scenario needs fit.input (CSV path)")
        return self

    # conversions -----------------------------------------------------

    def system_params(self) -> m.SystemParams:
        c = self.system.cavity
        cavity = m.CavityParams(m.hz(c.frequency_hz), m.hz(c.kappa_in_hz), m.hz(c.kappa_out_hz), m.hz(c.kappa_int_hz))
        dqds = tuple(
            m.DqdParams(
                m.uev_to_joule(d.epsilon_uev),
                m.gap_hz_to_tc(d.gap_hz),
                m.hz(d.g_c_hz),
                m.hz(d.gamma_1_hz),
                m.hz(d.gamma_phi_hz),
                d.lever_arm,
            )
            for d in self.system.dqds
        )
        return m.SystemParams(cavity, dqds)

    def integrator_kwargs(self) -> dict:
        i = self.integrator
        return {"tol_rel": i.tol_rel, "settle_criterion": i.settle_criterion, "max_periods": i.max_periods}

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _format_loc(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def validate_config(data) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(p for p in err["loc"] if not (isinstance(p, str) and p.startswith("function-")))
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        elif err["type"] == "missing":
            msg = "required key missing"
        raise ConfigError(msg, _format_loc(loc)) from None


def parse_config(text: str) -> ScenarioConfig:
    """Parse YAML (JSON is a subset) into a validated :class:`ScenarioConfig`."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    return validate_config(data)


def override(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    data = cfg.model_dump(mode="json")
    data.update({k: v for k, v in changes.items() if v is not None})
    return validate_config(data)
