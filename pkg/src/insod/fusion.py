"""Error-state EKF over the INS/odometer state with closed-loop feedback, and
the multiple-model adaptive bank over the odometer noise std."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import odometry as od
from .errors import (
    CovarianceNotPD,
    DegenerateLikelihoods,
    InvalidConfig,
    SingularInnovationCovariance,
    StreamGap,
)
from .frames import (
    WGS84,
    EarthModel,
    curvature_matrix,
    d_earth_rate_dp,
    dgravity_dh,
    dgravity_dlat,
    earth_rate_n,
    radii,
    rotvec_to_dcm,
    skew,
    transport_rate,
)
from .odometry import MeasConfig, MeasKind, MountParams
from .strapdown import NavState, StepInfo, lever_velocity_integral_step, strapdown_step

DEG = math.pi / 180.0
UG = 9.80665e-6

DEFAULT_BANKS = {
    MeasKind.PA: (0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
    MeasKind.PI: (0.5, 1.0, 2.0),
    MeasKind.PV: (1.0, 2.0, 3.0, 5.0),
}
# banks bracketing the injected noise levels of the three-window experiment
INJECTION_BANKS = {
    MeasKind.PA: (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 5.0),
    MeasKind.PI: (0.5, 1.0, 2.0, 5.0),
    MeasKind.PV: (0.5, 1.0, 2.0, 3.0, 5.0, 20.0),
}


@dataclass
class FilterConfig:
    """Noise, initial uncertainty and cadence of the navigation filter.

    Process noise densities are continuous-time (units^2/s); initial stds are in
    SI units except ``sd_K_frac`` (fraction of the nominal scale factor) and
    ``sd_s`` (pulses).
    """

    kind: MeasKind = MeasKind.PV
    meas: MeasConfig | None = None
    T: float = 0.02
    update_interval: float = 1.0
    gyro_arw: float = 0.001 * DEG / 60.0
    accel_vrw: float = 5.0 * UG
    q_bg: float = (1e-5 * DEG / 3600.0) ** 2
    q_ba: float = (1e-3 * UG) ** 2
    q_K: float = 1e-12
    q_mount: float = 1e-14
    q_lever: float = 1e-12
    q_s: float = 1e-8
    sd_att: float = 0.1 * DEG
    sd_vel: float = 0.1
    sd_pos_h: float = 1.0
    sd_pos_v: float = 2.0
    sd_bg: float = 0.01 * DEG / 3600.0
    sd_ba: float = 50.0 * UG
    sd_K_frac: float = 0.05
    sd_mount: float = 3.0 * DEG
    sd_lever: float = 1.0
    sd_s: float = 1.0
    mmae: bool = False
    bank: tuple | None = None
    weight_floor: float = 1e-6
    noise_schedule: object | None = None
    engine: str = "auto"

    def __post_init__(self):
        self.kind = MeasKind.parse(self.kind)
        if self.meas is None:
            self.meas = MeasConfig.default(self.kind)
        for name in ("gyro_arw", "accel_vrw", "q_bg", "q_ba", "q_K", "q_mount", "q_lever", "q_s"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be non-negative")
        if self.T <= 0:
            raise InvalidConfig("T must be positive")
        ratio = self.update_interval / self.T
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-6:
            raise InvalidConfig("update_interval must be a positive multiple of T")
        if self.engine not in ("auto", "numpy", "numba"):
            raise InvalidConfig("engine must be auto, numpy or numba")
        if self.bank is not None and len(self.bank) < 2 and self.mmae:
            raise InvalidConfig("an adaptive bank needs at least two models")

    @property
    def n_state(self) -> int:
        return od.N_BASE + 1 if self.kind is MeasKind.PA else od.N_BASE

    @property
    def window(self) -> int:
        return int(round(self.update_interval / self.T))

    def model_stds(self) -> tuple:
        if not self.mmae:
            return (self.meas.odo_std,)
        return tuple(self.bank) if self.bank is not None else DEFAULT_BANKS[self.kind]

    def initial_cov(self, K_nominal: float, lat: float, h: float = 0.0) -> np.ndarray:
        R_E, R_N = radii(lat)
        d = np.zeros(self.n_state)
        d[od.PHI] = self.sd_att
        d[od.VEL] = self.sd_vel
        d[od.POS] = [self.sd_pos_h / ((R_E + h) * math.cos(lat)), self.sd_pos_h / (R_N + h),
                     self.sd_pos_v]
        d[od.BG] = self.sd_bg
        d[od.BA] = self.sd_ba
        d[od.K_IDX] = self.sd_K_frac * K_nominal
        d[od.PSI] = d[od.THETA] = self.sd_mount
        d[od.LEV] = self.sd_lever
        if self.kind is MeasKind.PA:
            d[od.DS] = self.sd_s
        return np.diag(d**2)

    def process_noise(self) -> np.ndarray:
        q = np.zeros(self.n_state)
        q[od.PHI] = self.gyro_arw**2
        q[od.VEL] = self.accel_vrw**2
        q[od.BG] = self.q_bg
        q[od.BA] = self.q_ba
        q[od.K_IDX] = self.q_K
        q[od.PSI] = q[od.THETA] = self.q_mount
        q[od.LEV] = self.q_lever
        if self.kind is MeasKind.PA:
            q[od.DS] = self.q_s
        return np.diag(q)


def f_matrix(nav: NavState, info: StepInfo, mount: MountParams | None = None,
             augmented: bool = False, earth: EarthModel = WGS84) -> np.ndarray:
    """Continuous-time error dynamics (21x21, or 22x22 with the pulse error)."""
    v, p = nav.v, nav.p
    lat, h = p[1], p[2]
    C = nav.C_bn
    R_E, R_N = radii(lat, earth)
    RE, RN = R_E + h, R_N + h
    cL = math.cos(lat)
    tL = math.tan(lat)
    vn, _, ve = v
    w_ie = earth_rate_n(lat, earth)
    w_en = transport_rate(v, p, earth)
    w_in = w_ie + w_en
    dWie = d_earth_rate_dp(lat, earth)
    A_v = np.zeros((3, 3))
    A_v[0, 2] = 1.0 / RE
    A_v[1, 2] = tL / RE
    A_v[2, 0] = -1.0 / RN
    A_p = np.zeros((3, 3))
    A_p[0, 2] = -ve / RE**2
    A_p[1, 1] = ve / (cL * cL * RE)
    A_p[1, 2] = -ve * tL / RE**2
    A_p[2, 2] = vn / RN**2

    n = od.N_BASE + 1 if augmented else od.N_BASE
    F = np.zeros((n, n))
    F[0:3, 0:3] = -skew(w_in)
    F[0:3, 3:6] = A_v
    F[0:3, 6:9] = dWie + A_p
    F[0:3, 9:12] = -C
    Sv = skew(v)
    F[3:6, 0:3] = skew(info.f_n)
    F[3:6, 3:6] = -skew(2.0 * w_ie + w_en) + Sv @ A_v
    F[3:6, 6:9] = Sv @ (2.0 * dWie + A_p)
    F[4, 8] += -dgravity_dh(lat, h, earth)
    F[4, 7] += -dgravity_dlat(lat, h, earth)
    F[3:6, 12:15] = C
    F[6:9, 3:6] = curvature_matrix(p, earth)
    F[6, 1] = ve * math.sin(lat) / (RE * cL * cL)
    F[6, 2] = -ve / (RE * RE * cL)
    F[7, 2] = -vn / (RN * RN)
    if augmented:
        if mount is None:
            raise ValueError("augmented dynamics need the mounting parameters")
        w_eb = od.omega_eb_b((info.dth1 + info.dth2) / info.T, nav.C_nb, w_ie)
        F[od.DS, :] = od.delta_s_row(nav, mount, w_eb, w_ie)
    return F


def _check_cov(P):
    if not np.all(np.isfinite(P)) or np.any(np.diag(P) < 0):
        raise CovarianceNotPD("covariance became non-finite or has negative variances")


def propagate(P, F, Q, T: float) -> np.ndarray:
    """``P+ = Phi P Phi^T + Q T`` with ``Phi = I + F T``."""
    Phi = np.eye(len(P)) + F * T
    out = Phi @ P @ Phi.T + Q * T
    out = 0.5 * (out + out.T)
    _check_cov(out)
    return out


def update(x, P, z, zhat, H, R):
    """Linear measurement update with the Joseph-form covariance.

    Returns ``(x+, P+, innovation, S)`` where ``innovation = z - zhat - H x``.
    """
    x = np.asarray(x, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zhat = np.zeros_like(z) if zhat is None else np.atleast_1d(np.asarray(zhat, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    innov = z - zhat - H @ x
    PHt = P @ H.T
    S = H @ PHt + R
    S = 0.5 * (S + S.T)
    try:
        cf = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationCovariance("innovation covariance is not positive definite") from exc
    Kg = np.linalg.solve(cf.T, np.linalg.solve(cf, PHt.T)).T
    x_new = x + Kg @ innov
    IKH = np.eye(len(x)) - Kg @ H
    P_new = IKH @ P @ IKH.T + Kg @ R @ Kg.T
    P_new = 0.5 * (P_new + P_new.T)
    _check_cov(P_new)
    return x_new, P_new, innov, S


def feedback(nav: NavState, mount: MountParams, b_g, b_a, x):
    """Apply an error estimate to copies of the navigation solution and
    parameters; returns ``(nav, mount, b_g, b_a, zeros_like(x))``."""
    x = np.asarray(x, dtype=float)
    nav = nav.copy()
    mount = mount.copy()
    nav.C_bn = rotvec_to_dcm(x[od.PHI]) @ nav.C_bn
    nav.v = nav.v - x[od.VEL]
    nav.p = nav.p - x[od.POS]
    b_g = np.asarray(b_g, dtype=float) + x[od.BG]
    b_a = np.asarray(b_a, dtype=float) + x[od.BA]
    mount.K = mount.K - x[od.K_IDX]
    mount.psi = mount.psi - x[od.PSI]
    mount.theta = mount.theta - x[od.THETA]
    mount.lever = mount.lever - x[od.LEV]
    if len(x) > od.N_BASE:
        nav.s = nav.s - x[od.DS]
    return nav, mount, b_g, b_a, np.zeros_like(x)


def gate(innovation, S, config: MeasConfig, R=None) -> np.ndarray:
    """Measurement covariance after the odometer-row threshold test.

    A raw odometer innovation at or beyond ``config.gate_threshold`` swaps the
    nominal odometer std for ``config.inflated_std``; NHC rows never change.
    """
    innovation = np.atleast_1d(innovation)
    if R is None:
        R = np.diag([config.odo_std**2] + [config.nhc_std**2] * (len(innovation) - 1))
    R = np.array(R, dtype=float)
    if config.gate_threshold is not None and abs(innovation[0]) >= config.gate_threshold:
        R[0, 0] = config.inflated_std**2
    return R


def log_gaussian(e, S) -> float:
    """Log of the zero-mean Gaussian density of residual ``e`` with covariance ``S``."""
    e = np.atleast_1d(e)
    S = np.atleast_2d(S)
    cf = np.linalg.cholesky(S)
    y = np.linalg.solve(cf, e)
    return float(-0.5 * y @ y - np.sum(np.log(np.diag(cf))) - 0.5 * len(e) * math.log(2 * math.pi))


def floor_weights(w, floor: float) -> np.ndarray:
    """Normalize onto the simplex with every weight at least ``floor``."""
    w = np.asarray(w, dtype=float)
    m = len(w)
    if floor * m > 1.0:
        raise ValueError("weight floor too large for the bank size")
    w = w / w.sum()
    fixed = np.zeros(m, dtype=bool)
    for _ in range(m):
        free = ~fixed
        out = np.where(fixed, floor, 0.0)
        out[free] = w[free] / w[free].sum() * (1.0 - floor * fixed.sum())
        low = free & (out < floor)
        if not low.any():
            return out
        fixed |= low
    return np.full(m, 1.0 / m)


@dataclass
class ModelBank:
    """Candidate odometer stds with weights and per-model covariances."""

    stds: np.ndarray
    weights: np.ndarray
    P: list
    floor: float = 1e-6
    residuals: list = field(default_factory=list)
    S: list = field(default_factory=list)

    @classmethod
    def uniform(cls, stds, P0, floor: float = 1e-6) -> "ModelBank":
        m = len(stds)
        return cls(np.asarray(stds, float), np.full(m, 1.0 / m), [P0.copy() for _ in range(m)], floor)

    @property
    def adapted_std(self) -> float:
        return float(self.weights @ self.stds)


def mmae_step(bank: ModelBank, x_prior, z, zhat, H, R_of_std, degenerate_ok: bool = True):
    """Update every bank member with its own measurement covariance and fuse.

    ``R_of_std(std)`` builds the measurement covariance of a model. Member
    covariances in ``bank.P`` are replaced by their posteriors; the fused
    covariance includes the spread of member estimates. Returns
    ``(x_fused, P_fused, adapted_std)``.
    """
    m = len(bank.stds)
    xs, logl = [], np.empty(m)
    bank.residuals, bank.S = [], []
    for j in range(m):
        xj, Pj, e, S = update(x_prior, bank.P[j], z, zhat, H, R_of_std(bank.stds[j]))
        xs.append(xj)
        bank.P[j] = Pj
        bank.residuals.append(e)
        bank.S.append(S)
        logl[j] = log_gaussian(e, S)
    if not np.all(np.isfinite(logl)):
        if not degenerate_ok:
            raise DegenerateLikelihoods("residual likelihoods are not finite")
        w = np.full(m, 1.0 / m)
    else:
        lw = np.log(bank.weights) + logl
        w = np.exp(lw - lw.max())
        if not np.isfinite(w.sum()) or w.sum() <= 0:
            if not degenerate_ok:
                raise DegenerateLikelihoods("all residual likelihoods underflowed")
            w = np.full(m, 1.0 / m)
    bank.weights = floor_weights(w, bank.floor)
    X = np.array(xs)
    x = bank.weights @ X
    P = np.zeros_like(bank.P[0])
    for j in range(m):
        dx = X[j] - x
        P += bank.weights[j] * (bank.P[j] + np.outer(dx, dx))
    return x, 0.5 * (P + P.T), bank.adapted_std


@dataclass
class FilterOutput:
    """Per-update filter history (row ``i`` is the ``i``-th update)."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    C_bn: np.ndarray
    s: np.ndarray
    K: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    lever: np.ndarray
    b_g: np.ndarray
    b_a: np.ndarray
    P_diag: np.ndarray
    innov: np.ndarray
    weights: np.ndarray
    adapted_std: np.ndarray
    stds: np.ndarray
    raw_meas: np.ndarray


def check_streams(imu, odo, T: float):
    if len(imu) == 0:
        raise StreamGap("empty IMU stream")
    if len(odo) != len(imu):
        raise StreamGap(f"IMU has {len(imu)} epochs but odometer has {len(odo)}")
    dt = np.diff(imu.t)
    if len(dt) and (np.max(dt) > 1.5 * T or np.min(dt) < 0.5 * T):
        k = int(np.argmax(np.abs(dt - T)))
        raise StreamGap(f"IMU epoch spacing {dt[k]:.6g} s at index {k + 1} departs from {T} s")
    if np.max(np.abs(np.asarray(odo.t) - np.asarray(imu.t))) > 0.5 * T:
        raise StreamGap("odometer epochs are not aligned with IMU epochs")


def _inject(series_t, series, config: FilterConfig, seed):
    if config.noise_schedule is None:
        return series
    from .trajsim import inject_noise

    return inject_noise(series_t, series, config.noise_schedule, seed)


def measurement_series(odo, config: FilterConfig, seed=None):
    """Per-update odometer measurements for the configured kind (with any
    scheduled noise added) and the update step indices."""
    w = config.window
    n = len(odo)
    idx = np.arange(w - 1, n, w)
    N = np.asarray(odo.N, dtype=float)
    if config.kind is MeasKind.PA:
        raw = N[idx]
    elif config.kind is MeasKind.PI:
        prev = np.concatenate([[0.0], N[idx[:-1]]])
        raw = N[idx] - prev
    else:
        rates = od.run_prefilter(N, config.T, config.meas.prefilter_q)
        raw = rates[idx]
    return idx, _inject(np.asarray(odo.t)[idx], raw, config, seed)


def _use_numba(config: FilterConfig) -> bool:
    if config.engine == "numpy":
        return False
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        if config.engine == "numba":
            raise
        return False
    return True


def run_filter(imu, odo, config: FilterConfig, nav0: NavState, mount0: MountParams,
               b_g0=None, b_a0=None, seed=None, s0_pulses: float = 0.0) -> FilterOutput:
    """Run the closed-loop filter over aligned IMU/odometer streams.

    ``nav0`` is the navigation state at the start of the first IMU step and
    ``s0_pulses`` the pulse count assumed there. The state is propagated every
    IMU step; the odometer/NHC update and full feedback happen every
    ``config.window`` steps.
    """
    T = config.T
    check_streams(imu, odo, T)
    kind = config.kind
    mc = config.meas
    n_x = config.n_state
    idx, meas = measurement_series(odo, config, seed)
    nav = nav0.copy()
    nav.s = float(s0_pulses)
    mount = mount0.copy()
    b_g = np.zeros(3) if b_g0 is None else np.asarray(b_g0, float).copy()
    b_a = np.zeros(3) if b_a0 is None else np.asarray(b_a0, float).copy()
    P0 = config.initial_cov(mount0.K, nav0.p[1], nav0.p[2])
    Qc = config.process_noise()
    stds = np.asarray(config.model_stds(), dtype=float)
    bank = ModelBank.uniform(stds, P0, config.weight_floor)
    adaptive = config.mmae
    augmented = kind is MeasKind.PA
    fast = _use_numba(config)
    if fast:
        from ._kernels import WindowPropagator

        prop = WindowPropagator(imu, T, Qc, kind, mc.pi_jacobian)

    n_up = len(idx)
    out = {k: [] for k in ("t", "p", "v", "C_bn", "s", "K", "psi", "theta", "lever", "b_g", "b_a",
                           "P_diag", "innov", "weights", "adapted_std")}
    eye = np.eye(n_x)
    start = 0
    for u in range(n_up):
        stop = idx[u] + 1
        if fast:
            nav, info, Phi_acc, Q_acc, ds_sum, H_acc = prop.run(nav, mount, b_g, b_a, start, stop)
        else:
            Phi_acc = eye.copy()
            Q_acc = np.zeros((n_x, n_x))
            H_acc = np.zeros(od.N_BASE)
            ds_sum = 0.0
            for k in range(start, stop):
                nav, info = strapdown_step(nav, imu.dth1[k], imu.dth2[k], imu.dv1[k], imu.dv2[k], T,
                                           b_g=b_g, b_a=b_a)
                ds = mount.K * (mount.C_bm[0] @ lever_velocity_integral_step(info, mount.lever))
                nav.s += ds
                ds_sum += ds
                if kind is MeasKind.PI:
                    if mc.pi_jacobian == "exact":
                        H_acc += od.h_k_integrated(info, mount, nav.p[1]) @ Phi_acc[:21, :21]
                    else:
                        w_ie_k = earth_rate_n(nav.p[1])
                        w_eb_k = od.omega_eb_b((info.dth1 + info.dth2) / T, nav.C_nb, w_ie_k)
                        H_acc += od.jac_sdot(nav, mount, w_eb_k, w_ie_k) * T
                F = f_matrix(nav, info, mount, augmented)
                Phi = eye + F * T
                Q_acc = Phi @ Q_acc @ Phi.T + Qc * T
                Phi_acc = Phi @ Phi_acc
        start = stop

        w_ie = earth_rate_n(nav.p[1])
        w_eb = od.omega_eb_b((info.dth1 + info.dth2) / T, nav.C_nb, w_ie)
        if kind is MeasKind.PA:
            payload = od.PAInput(meas[u])
        elif kind is MeasKind.PI:
            if mc.pi_jacobian == "exact":
                row = np.linalg.solve(Phi_acc[:21, :21].T, H_acc)
            else:
                row = H_acc
            payload = od.PIInput(meas[u], ds_sum, row)
        else:
            payload = od.PVInput(meas[u])
        z, zhat, H, R = od.measurement_bundle(kind, nav, mount, payload, mc, w_eb, w_ie)
        y = zhat - z  # predicted-minus-measured observes the error state
        for j in range(len(stds)):
            Pj = Phi_acc @ bank.P[j] @ Phi_acc.T + Q_acc
            bank.P[j] = 0.5 * (Pj + Pj.T)
        x0 = np.zeros(n_x)

        def R_of(std, R=R):
            Rj = R.copy()
            Rj[0, 0] = std**2
            return Rj

        if adaptive:
            x, P, a_std = mmae_step(bank, x0, y, None, H, R_of)
            innov = y
        else:
            Rg = gate(y, None, mc, R) if kind is MeasKind.PV else R
            x, P, innov, _ = update(x0, bank.P[0], y, None, H, Rg)
            bank.P[0] = P
            a_std = math.sqrt(Rg[0, 0])
        nav, mount, b_g, b_a, _ = feedback(nav, mount, b_g, b_a, x)

        out["t"].append(imu.t[stop - 1])
        out["p"].append(nav.p.copy())
        out["v"].append(nav.v.copy())
        out["C_bn"].append(nav.C_bn.copy())
        out["s"].append(nav.s)
        out["K"].append(mount.K)
        out["psi"].append(mount.psi)
        out["theta"].append(mount.theta)
        out["lever"].append(mount.lever.copy())
        out["b_g"].append(b_g.copy())
        out["b_a"].append(b_a.copy())
        out["P_diag"].append(np.diag(P).copy())
        out["innov"].append(-np.asarray(innov))
        out["weights"].append(bank.weights.copy())
        out["adapted_std"].append(a_std)
    arr = {k: np.asarray(v) for k, v in out.items()}
    return FilterOutput(stds=stds, raw_meas=np.asarray(meas), **arr)


def perturb_nav(nav: NavState, att=(0.0, 0.0, 0.0), dv=(0.0, 0.0, 0.0), dp_m=(0.0, 0.0, 0.0),
                earth: EarthModel = WGS84) -> NavState:
    """Copy of ``nav`` carrying attitude error ``att`` (rad, N-U-E, in the
    filter's own definition), velocity error ``dv`` (m/s) and position error
    ``dp_m`` (north, up, east metres)."""
    out = nav.copy()
    out.C_bn = rotvec_to_dcm(-np.asarray(att, float)) @ nav.C_bn
    out.v = nav.v + np.asarray(dv, float)
    R_E, R_N = radii(nav.p[1], earth)
    dn, du, de = dp_m
    out.p = nav.p + np.array([de / ((R_E + nav.p[2]) * math.cos(nav.p[1])), dn / (R_N + nav.p[2]), du])
    return out
