"""Run configuration (JSON key/value tree) and the standard simulation scenario.

All quantities are SI with angles in radians. Schema (every key optional)::

    {
      "seed": 1,
      "out": "run",
      "earth": "wgs84",
      "trajectory": "paper_default" | [ {SegmentSpec fields}, ... ],
      "origin": [lon, lat, h],
      "heading0": 0.0,
      "truth_dt": 0.01,
      "truth_interval": 1.0,
      "sensors": {SensorSpec fields},
      "filter": {FilterConfig scalar fields, "meas": {MeasConfig fields}},
      "noise_schedule": null | "reference" | [[start, end, std], ...],
      "init": {"att": [3], "dv": [3], "dp": [3], "K_frac": 0.01,
               "psi": 0.0, "theta": 0.0, "lever": [3], "b_g": [3], "b_a": [3]}
    }
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InsodError, InvalidConfig
from .frames import WGS84
from .fusion import FilterConfig, perturb_nav
from .odometry import MeasConfig, MeasKind, MountParams
from .strapdown import NavState
from .trajsim import (DEFAULT_ORIGIN, DEG, NoiseSchedule, SegmentSpec, SensorSpec,
                      build_trajectory, default_paper_trajectory)

EARTH_MODELS = {"wgs84": WGS84}


@dataclass
class InitSpec:
    """Filter start relative to truth: navigation errors plus the initial
    parameter guesses (K as a fraction above nominal)."""

    att: list = field(default_factory=lambda: [0.002 * DEG, 0.01 * DEG, 0.002 * DEG])
    dv: list = field(default_factory=lambda: [0.01, 0.01, 0.01])
    dp: list = field(default_factory=lambda: [0.1, 0.1, 0.1])
    K_frac: float = 0.01
    psi: float = 0.0
    theta: float = 0.0
    lever: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    b_g: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    b_a: list = field(default_factory=lambda: [0.0, 0.0, 0.0])

    @classmethod
    def exact(cls, spec: SensorSpec) -> "InitSpec":
        return cls([0.0] * 3, [0.0] * 3, [0.0] * 3, 0.0, spec.psi, spec.theta,
                   list(spec.lever), list(spec.gyro_bias), list(spec.accel_bias))

    def apply(self, nav_true: NavState, K_nominal: float):
        nav0 = perturb_nav(nav_true, self.att, self.dv, self.dp)
        mount0 = MountParams(K=K_nominal * (1.0 + self.K_frac), psi=self.psi, theta=self.theta,
                             lever=np.array(self.lever, float))
        return nav0, mount0, np.array(self.b_g, float), np.array(self.b_a, float)


@dataclass
class RunConfig:
    seed: int = 1
    out: str = "run"
    earth: str = "wgs84"
    trajectory: object = "paper_default"
    origin: list = field(default_factory=lambda: list(DEFAULT_ORIGIN))
    heading0: float = 0.0
    truth_dt: float = 0.01
    truth_interval: float = 1.0
    sensors: SensorSpec = field(default_factory=SensorSpec)
    filter: FilterConfig = field(default_factory=FilterConfig)
    noise_schedule: NoiseSchedule | None = None
    init: InitSpec = field(default_factory=InitSpec)

    def __post_init__(self):
        if self.earth not in EARTH_MODELS:
            raise InvalidConfig(f"earth: unknown model {self.earth!r}")
        if not self.truth_dt > 0 or not self.truth_interval > 0:
            raise InvalidConfig("truth_dt and truth_interval must be positive")
        if abs(self.sensors.T - self.filter.T) > 1e-12:
            raise InvalidConfig("filter.T: must equal sensors.T")
        if isinstance(self.trajectory, str) and self.trajectory != "paper_default":
            raise InvalidConfig(f"trajectory: unknown preset {self.trajectory!r}")
        if self.filter.noise_schedule is None and self.noise_schedule is not None:
            self.filter.noise_schedule = self.noise_schedule

    def segments(self) -> list:
        if isinstance(self.trajectory, str):
            if self.trajectory != "paper_default":
                raise InvalidConfig(f"trajectory: unknown preset {self.trajectory!r}")
            return default_paper_trajectory()
        return list(self.trajectory)

    def build_truth(self):
        s = self.sensors
        return build_trajectory(self.segments(), np.asarray(self.origin, float), self.heading0,
                                self.truth_dt, s.mounting, s.lever, EARTH_MODELS[self.earth])


def _build(cls, data, path: str):
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise InvalidConfig(f"{path}: unknown field(s) {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except InsodError as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{path}: {exc}") from None


def _schedule(value, kind):
    if value is None:
        return None
    if value == "reference":
        return NoiseSchedule.reference_schedule(kind)
    try:
        return NoiseSchedule([tuple(float(x) for x in w) for w in value])
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"noise_schedule: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(f"unknown top-level field(s) {', '.join(sorted(unknown))}")
    sensors = _build(SensorSpec, data.pop("sensors", {}), "sensors")
    fdata = dict(data.pop("filter", {}))
    if "kind" in fdata:
        try:
            fdata["kind"] = MeasKind.parse(fdata["kind"])
        except ValueError:
            raise InvalidConfig(f"filter.kind: unknown kind {fdata['kind']!r}") from None
    kind = fdata.get("kind", FilterConfig.kind)
    if "meas" in fdata:
        base = dataclasses.asdict(MeasConfig.default(kind))
        base.update(fdata["meas"] if isinstance(fdata["meas"], dict) else {})
        fdata["meas"] = _build(MeasConfig, base, "filter.meas")
    if "bank" in fdata and fdata["bank"] is not None:
        fdata["bank"] = tuple(float(x) for x in fdata["bank"])
    if "noise_schedule" in fdata:
        raise InvalidConfig("filter.noise_schedule: set the top-level noise_schedule instead")
    filt = _build(FilterConfig, fdata, "filter")
    sched = _schedule(data.pop("noise_schedule", None), filt.kind)
    init = _build(InitSpec, data.pop("init", {}), "init")
    traj = data.pop("trajectory", "paper_default")
    if not isinstance(traj, str):
        if not isinstance(traj, list):
            raise InvalidConfig("trajectory: expected 'paper_default' or a list of segments")
        traj = [_build(SegmentSpec, s, f"trajectory[{i}]") for i, s in enumerate(traj)]
    try:
        return RunConfig(sensors=sensors, filter=filt, noise_schedule=sched, init=init,
                         trajectory=traj, **data)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


def with_kind(cfg: FilterConfig, kind, mmae: bool | None = None) -> FilterConfig:
    """Copy of ``cfg`` switched to another measurement kind (the measurement
    settings revert to that kind's defaults)."""
    kind = MeasKind.parse(kind)
    meas = cfg.meas if kind is cfg.kind else MeasConfig.default(kind)
    return dataclasses.replace(cfg, kind=kind, meas=meas,
                               mmae=cfg.mmae if mmae is None else mmae)
