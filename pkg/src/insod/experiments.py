"""Closed-loop simulation runs on the reference scenario and their summaries."""
from __future__ import annotations

import dataclasses
import functools

import numpy as np

from .config import EARTH_MODELS, InitSpec, RunConfig
from .frames import local_offset
from .fusion import INJECTION_BANKS, FilterConfig, FilterOutput, run_filter
from .odometry import MeasConfig, MeasKind
from .strapdown import NavState
from .trajsim import (UG, NoiseSchedule, SensorSpec, Truth, build_trajectory, clean_increments,
                      encode_odometer, imu_from_truth)


def seeds_for(seed):
    """Independent generator seeds for IMU noise and measurement-noise injection."""
    imu_ss, inj_ss = np.random.SeedSequence(seed).spawn(2)
    return imu_ss, inj_ss


@functools.lru_cache(maxsize=4)
def _scenario(key):
    cfg = RunConfig()
    traj = build_trajectory(cfg.segments(), np.asarray(cfg.origin, float), cfg.heading0,
                            cfg.truth_dt, key[0], np.array(key[1]), EARTH_MODELS[cfg.earth])
    return traj, clean_increments(traj, key[2])


def reference_scenario(spec: SensorSpec | None = None):
    """Truth of the reference 5000 s run plus its noise-free IMU increments
    (cached per mounting/lever/interval)."""
    spec = SensorSpec() if spec is None else spec
    return _scenario((tuple(spec.mounting), tuple(spec.lever), spec.T))


def simulate(cfg: RunConfig, clean=None):
    """Truth, IMU and odometer streams for a run configuration."""
    truth = cfg.build_truth()
    imu_seed, _ = seeds_for(cfg.seed)
    imu = imu_from_truth(truth, cfg.sensors, seed=imu_seed, clean=clean)
    return truth, imu, encode_odometer(truth, cfg.sensors)


def start_state(truth: Truth) -> NavState:
    return NavState(truth.C_bn[0].copy(), truth.v[0].copy(), truth.p[0].copy())


def fuse(cfg: RunConfig, imu, odo, truth: Truth) -> FilterOutput:
    nav0, mount0, bg0, ba0 = cfg.init.apply(start_state(truth), cfg.sensors.K)
    _, inj_seed = seeds_for(cfg.seed)
    return run_filter(imu, odo, cfg.filter, nav0, mount0, bg0, ba0, seed=inj_seed)


@dataclasses.dataclass
class RunSummary:
    kind: str
    seed: int
    herr: float
    distance: float
    dK_rel: float
    dpsi: float
    dtheta: float
    dlever: np.ndarray
    dba: np.ndarray
    dbg: np.ndarray

    @property
    def herr_rel(self) -> float:
        return self.herr / self.distance

    def line(self) -> str:
        return (f"{self.kind} seed {self.seed}: herr {self.herr:.2f} m "
                f"({100 * self.herr_rel:.4f}%), dK/K {100 * self.dK_rel:+.4f}%, "
                f"dpsi {np.degrees(self.dpsi):+.4f} deg, dtheta {np.degrees(self.dtheta):+.4f} deg, "
                f"dlever {np.round(self.dlever, 3)} m, dba {np.round(self.dba / UG, 1)} ug")


def summarize(out: FilterOutput, truth: Truth, spec: SensorSpec, kind, seed) -> RunSummary:
    i = int(np.searchsorted(truth.t, out.t[-1] - 1e-9))
    off = local_offset(truth.p[i], out.p[-1])
    return RunSummary(str(MeasKind.parse(kind).value), int(seed), float(np.hypot(off[0], off[2])),
                      float(truth.d[i]), float(out.K[-1] / spec.K - 1.0),
                      float(out.psi[-1] - spec.psi), float(out.theta[-1] - spec.theta),
                      out.lever[-1] - spec.lever, out.b_a[-1] - spec.accel_bias,
                      out.b_g[-1] - spec.gyro_bias)


def filter_for(kind, mmae: bool = False, schedule: NoiseSchedule | None = None,
               baseline: bool = False, bank=None) -> FilterConfig:
    """Filter setup of the reference experiments.

    ``baseline`` gives the fixed filter using the smallest std of the
    injection bank without gating; ``mmae`` runs the injection bank.
    """
    kind = MeasKind.parse(kind)
    if baseline:
        stds = INJECTION_BANKS[kind] if bank is None else bank
        meas = dataclasses.replace(MeasConfig.default(kind), odo_std=min(stds),
                                   gate_threshold=None)
        return FilterConfig(kind=kind, meas=meas, noise_schedule=schedule)
    if mmae:
        return FilterConfig(kind=kind, mmae=True, noise_schedule=schedule,
                            bank=INJECTION_BANKS[kind] if bank is None else bank)
    return FilterConfig(kind=kind, noise_schedule=schedule)


def reference_run(kind, seed, filt: FilterConfig | None = None, spec: SensorSpec | None = None,
                  init: InitSpec | None = None):
    """One closed-loop run on the reference trajectory.

    Returns ``(FilterOutput, RunSummary, truth)``.
    """
    spec = SensorSpec() if spec is None else spec
    truth, clean = reference_scenario(spec)
    filt = filter_for(kind) if filt is None else filt
    cfg = RunConfig(seed=seed, sensors=spec, filter=filt,
                    init=InitSpec() if init is None else init)
    imu_seed, _ = seeds_for(seed)
    imu = imu_from_truth(truth, spec, seed=imu_seed, clean=clean)
    odo = encode_odometer(truth, spec)
    out = fuse(cfg, imu, odo, truth)
    return out, summarize(out, truth, spec, filt.kind, seed), truth


def adapted_std_tracking(out: FilterOutput, schedule: NoiseSchedule, bank, floor: float):
    """Share of each schedule window during which the adapted std lies
    between the bank neighbours of the injected std.

    The bounds are widened by ``floor * sum(bank)``, the largest shift the
    weight floor alone can cause.
    """
    b = np.sort(np.asarray(bank, dtype=float))
    slack = floor * float(np.sum(np.abs(b)))
    shares = []
    for w in schedule.windows:
        m = (out.t > w.start) & (out.t <= w.end)
        j = int(np.argmin(np.abs(b - w.std)))
        lo, hi = b[max(j - 1, 0)] - slack, b[min(j + 1, len(b) - 1)] + slack
        a = out.adapted_std[m]
        shares.append(float(np.mean((a >= lo) & (a <= hi))) if a.size else float("nan"))
    return shares
