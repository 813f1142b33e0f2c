"""Odometer pulse measurement models (accumulation, increment, velocity), the
nonholonomic constraint, their error-state Jacobians, and the constant-
acceleration pulse prefilter.

Error-state layout (21 base states, plus ``DS`` in pulse-accumulation mode)::

    [phi^n(3), dv^n(3), dp(3), db_g(3), db_a(3), dK, dpsi, dtheta, dl^b(3), ds]

Attitude error follows ``C~_n^b = C_n^b (I + phi x)``; bias errors are the
residual sensor errors after compensation (corrected output minus truth);
everything else is estimate minus truth.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import CovarianceNotPD, KindMismatch, WindowUnderflow
from .frames import d_earth_rate_dp, d_mount, elementary_rotation, mount_dcm, skew
from .strapdown import NavState, StepInfo, dcm_integrals, lever_velocity_integral_step

PHI = slice(0, 3)
VEL = slice(3, 6)
POS = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
K_IDX = 15
PSI = 16
THETA = 17
LEV = slice(18, 21)
DS = 21
N_BASE = 21


class MeasKind(enum.Enum):
    PA = "pa"
    PI = "pi"
    PV = "pv"

    @classmethod
    def parse(cls, value) -> "MeasKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass
class MountParams:
    """Odometer scale factor, IMU mounting angles and lever arm.

    ``phi`` (roll mounting) is carried but never estimated.
    """

    K: float
    psi: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    lever: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("scale factor K must be positive")
        self.lever = np.asarray(self.lever, dtype=float)

    @property
    def C_bm(self) -> np.ndarray:
        return mount_dcm(self.phi, self.theta, self.psi)

    def copy(self) -> "MountParams":
        return MountParams(self.K, self.psi, self.theta, self.phi, self.lever.copy())


@dataclass
class MeasConfig:
    """Noise and gating settings of the odometer/NHC measurement."""

    odo_std: float = 1.0
    nhc_std: float = 0.05
    gate_threshold: float | None = None
    inflated_std: float = 5.0
    pi_jacobian: str = "exact"
    window: int = 50
    prefilter_q: float = 1.0

    def __post_init__(self):
        if self.odo_std <= 0 or self.nhc_std <= 0:
            raise ValueError("measurement stds must be positive")
        if self.inflated_std < self.odo_std:
            raise ValueError("inflated std must not be below the nominal std")
        if self.pi_jacobian not in ("exact", "approx"):
            raise ValueError("pi_jacobian must be 'exact' or 'approx'")

    @classmethod
    def default(cls, kind) -> "MeasConfig":
        kind = MeasKind.parse(kind)
        if kind is MeasKind.PA:
            return cls(odo_std=1.0, nhc_std=0.02)
        if kind is MeasKind.PI:
            return cls(odo_std=1.0, nhc_std=0.05)
        return cls(odo_std=0.5, nhc_std=0.05, gate_threshold=1.5, inflated_std=5.0)


def omega_eb_b(w_ib_b, C_nb, w_ie_n) -> np.ndarray:
    """Body rate w.r.t. the earth from the corrected gyro rate."""
    return np.asarray(w_ib_b, float) - np.asarray(C_nb, float) @ np.asarray(w_ie_n, float)


def vehicle_velocity(nav: NavState, mount: MountParams, w_eb) -> np.ndarray:
    """Velocity of the vehicle-frame origin resolved in vehicle axes."""
    u = nav.C_bn.T @ nav.v + np.cross(w_eb, mount.lever)
    return mount.C_bm @ u


def s_dot(nav: NavState, mount: MountParams, w_eb) -> float:
    """Pulse rate (pulses/s) of the odometer."""
    return mount.K * vehicle_velocity(nav, mount, w_eb)[0]


def _jac_rows(nav: NavState, mount: MountParams, w_eb, w_ie_n, rows, gains, with_K):
    """Linearized rows ``gain * e_i^T C_b^m (C_n^b v + w_eb x l)`` over the 21
    base error states."""
    C_nb = nav.C_bn.T
    C_bm = mount.C_bm
    lx = skew(mount.lever)
    u = C_nb @ nav.v + np.cross(w_eb, mount.lever)
    D_M2, D_M3 = d_mount(mount.theta, mount.psi)
    M1 = elementary_rotation(1, mount.phi)
    M2 = elementary_rotation(2, mount.psi)
    M3 = elementary_rotation(3, mount.theta)
    dC_dpsi = M1 @ M3 @ D_M2
    dC_dtheta = M1 @ D_M3 @ M2
    A_phi = C_nb @ skew(nav.v) + lx @ C_nb @ skew(w_ie_n)
    A_pos = lx @ C_nb @ d_earth_rate_dp(nav.p[1])
    A_lev = skew(w_eb)
    out = np.zeros((len(rows), N_BASE))
    for r, (i, g) in enumerate(zip(rows, gains)):
        ec = C_bm[i]
        out[r, PHI] = -g * ec @ A_phi
        out[r, VEL] = g * ec @ C_nb
        out[r, POS] = g * ec @ A_pos
        out[r, BG] = -g * ec @ lx
        if with_K[r]:
            out[r, K_IDX] = ec @ u
        out[r, PSI] = g * dC_dpsi[i] @ u
        out[r, THETA] = g * dC_dtheta[i] @ u
        out[r, LEV] = g * ec @ A_lev
    return out


def jac_sdot(nav: NavState, mount: MountParams, w_eb, w_ie_n) -> np.ndarray:
    """Row ``M_k`` (length 21): Jacobian of the pulse rate w.r.t. the error state."""
    return _jac_rows(nav, mount, w_eb, w_ie_n, (0,), (mount.K,), (True,))[0]


def delta_s_row(nav: NavState, mount: MountParams, w_eb, w_ie_n) -> np.ndarray:
    """Dynamics row of the augmented pulse error: ``[M_k, 0]``."""
    return np.append(jac_sdot(nav, mount, w_eb, w_ie_n), 0.0)


def nhc_value_and_jac(nav: NavState, mount: MountParams, w_eb, w_ie_n):
    """Predicted (up, right) vehicle velocities and their 2x21 Jacobian."""
    w = vehicle_velocity(nav, mount, w_eb)
    H = _jac_rows(nav, mount, w_eb, w_ie_n, (1, 2), (1.0, 1.0), (False, False))
    return w[1:], H


def h_k_integrated(info: StepInfo, mount: MountParams, lat: float) -> np.ndarray:
    """Integral of ``M_k`` over one IMU step (closed forms), length 21."""
    C_bm = mount.C_bm
    e = C_bm[0]
    K = mount.K
    T = info.T
    lx = skew(mount.lever)
    int_C, int_Cv = dcm_integrals(info.C_nb_k, info.dth1, info.dth2, info.v_k, info.v_k1, T,
                                  info.w_in)
    lever_int = lever_velocity_integral_step(info, mount.lever)
    w_eb_int = info.dth1 + info.dth2 - int_C @ info.w_ie
    D_M2, D_M3 = d_mount(mount.theta, mount.psi)
    M1 = elementary_rotation(1, mount.phi)
    M2 = elementary_rotation(2, mount.psi)
    M3 = elementary_rotation(3, mount.theta)
    H = np.zeros(N_BASE)
    H[PHI] = -K * e @ (int_Cv + lx @ int_C @ skew(info.w_ie))
    H[VEL] = K * e @ int_C
    H[POS] = K * e @ lx @ int_C @ d_earth_rate_dp(lat)
    H[BG] = -K * e @ lx * T
    H[K_IDX] = e @ lever_int
    H[PSI] = K * (M1 @ M3 @ D_M2)[0] @ lever_int
    H[THETA] = K * (M1 @ D_M3 @ M2)[0] @ lever_int
    H[LEV] = K * e @ skew(w_eb_int)
    return H


def jac_increment_exact(H_rows, Phis) -> np.ndarray:
    """Pulse-increment Jacobian w.r.t. the error state at the window end.

    ``H_rows[k]`` is the integrated row of step ``k`` and ``Phis[k]`` the
    transition matrix over that step.
    """
    if len(H_rows) < 1:
        raise WindowUnderflow("pulse-increment window is empty")
    n = len(H_rows[0])
    acc = np.eye(n)
    row = np.zeros(n)
    for H, Phi in zip(H_rows, Phis):
        row += H @ acc
        acc = Phi[:n, :n] @ acc
    return np.linalg.solve(acc.T, row)


def jac_increment_approx(M_rows, T: float) -> np.ndarray:
    """Mild-motion approximation: ``sum(M_k) T``."""
    if len(M_rows) < 1:
        raise WindowUnderflow("pulse-increment window is empty")
    return np.sum(np.asarray(M_rows, dtype=float), axis=0) * T


@dataclass
class PulseVelKf:
    """Three-state (count, rate, rate-of-rate) filter on accumulated pulses
    driven by white jerk of intensity ``q``."""

    x: np.ndarray
    P: np.ndarray
    q: float = 1.0
    r: float = 1.0 / 12.0

    @classmethod
    def start(cls, N0: float, q: float = 1.0) -> "PulseVelKf":
        return cls(np.array([float(N0), 0.0, 0.0]), np.diag([1.0, 1e4, 1e4]), q)

    @property
    def rate(self) -> float:
        return float(self.x[1])


def _prefilter_matrices(T: float, q: float):
    F = np.array([[1.0, T, 0.5 * T * T], [0.0, 1.0, T], [0.0, 0.0, 1.0]])
    Q = q * np.array([
        [T**5 / 20, T**4 / 8, T**3 / 6],
        [T**4 / 8, T**3 / 3, T**2 / 2],
        [T**3 / 6, T**2 / 2, T],
    ])
    return F, Q


def pv_prefilter_step(kf: PulseVelKf, N_k: float, T: float):
    """Predict over ``T`` and update with pulse count ``N_k``; returns the
    updated filter and its rate estimate."""
    if T <= 0:
        raise ValueError("T must be positive")
    F, Q = _prefilter_matrices(T, kf.q)
    x = F @ kf.x
    P = F @ kf.P @ F.T + Q
    S = P[0, 0] + kf.r
    Kg = P[:, 0] / S
    x = x + Kg * (N_k - x[0])
    P = P - np.outer(Kg, P[0, :])
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)) or np.any(np.diag(P) <= 0):
        raise CovarianceNotPD("pulse prefilter covariance broke down")
    out = PulseVelKf(x, P, kf.q, kf.r)
    return out, float(x[1])


def run_prefilter(N, T: float, q: float = 1.0) -> np.ndarray:
    """Pulse-rate estimates for a whole accumulated-count series.

    Same recursion as :func:`pv_prefilter_step`, unrolled with scalar
    arithmetic for long streams.
    """
    N = np.asarray(N, dtype=float)
    F, Q = _prefilter_matrices(T, q)
    r = 1.0 / 12.0
    x0, x1, x2 = N[0], 0.0, 0.0
    P = np.diag([1.0, 1e4, 1e4])
    rates = np.empty(len(N))
    rates[0] = 0.0
    # steady-state gain is reached quickly; iterate the covariance until it converges, then freeze
    converged = False
    gain = None
    for k in range(1, len(N)):
        x0, x1, x2 = x0 + T * x1 + 0.5 * T * T * x2, x1 + T * x2, x2
        if not converged:
            Pp = F @ P @ F.T + Q
            S = Pp[0, 0] + r
            g = Pp[:, 0] / S
            Pn = Pp - np.outer(g, Pp[0, :])
            Pn = 0.5 * (Pn + Pn.T)
            if gain is not None and np.max(np.abs(g - gain)) < 1e-15:
                converged = True
            gain = g
            P = Pn
        res = N[k] - x0
        x0 += gain[0] * res
        x1 += gain[1] * res
        x2 += gain[2] * res
        rates[k] = x1
    return rates


def naive_pulse_velocity(dN, T: float):
    """Pulse rate by differencing, ``dN / T``."""
    if T <= 0:
        raise ValueError("T must be positive")
    return np.asarray(dN, dtype=float) / T


@dataclass
class PAInput:
    N: float


@dataclass
class PIInput:
    dN: float
    ds_pred: float
    H_row: np.ndarray


@dataclass
class PVInput:
    sdot: float


_PAYLOAD = {MeasKind.PA: PAInput, MeasKind.PI: PIInput, MeasKind.PV: PVInput}


def measurement_bundle(kind, nav: NavState, mount: MountParams, payload, config: MeasConfig,
                       w_eb, w_ie_n, odo_std: float | None = None):
    """Stack the odometer row on the two NHC rows.

    Returns ``(z, zhat, H, R)``; ``H`` is the Jacobian of ``zhat`` w.r.t. the
    error state (22 columns in PA mode, 21 otherwise).
    """
    kind = MeasKind.parse(kind)
    if not isinstance(payload, _PAYLOAD[kind]):
        raise KindMismatch(f"{kind.name} needs {_PAYLOAD[kind].__name__}, "
                           f"got {type(payload).__name__}")
    nhc, H_nhc = nhc_value_and_jac(nav, mount, w_eb, w_ie_n)
    n = N_BASE + 1 if kind is MeasKind.PA else N_BASE
    H = np.zeros((3, n))
    H[1:, :N_BASE] = H_nhc
    if kind is MeasKind.PA:
        z0, zhat0 = payload.N, nav.s
        H[0, DS] = 1.0
    elif kind is MeasKind.PI:
        z0, zhat0 = payload.dN, payload.ds_pred
        H[0, :N_BASE] = payload.H_row
    else:
        z0, zhat0 = payload.sdot, s_dot(nav, mount, w_eb)
        H[0, :N_BASE] = jac_sdot(nav, mount, w_eb, w_ie_n)
    std = config.odo_std if odo_std is None else odo_std
    z = np.array([z0, 0.0, 0.0])
    zhat = np.array([zhat0, nhc[0], nhc[1]])
    R = np.diag([std**2, config.nhc_std**2, config.nhc_std**2])
    return z, zhat, H, R
