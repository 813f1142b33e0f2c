"""Strapdown mechanization in the N-U-E frame with the two-sample update, plus
the closed-form per-step integrals used by the odometer measurement models."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .frames import (
    WGS84,
    EarthModel,
    curvature_matrix,
    earth_rate_n,
    gravity,
    orthonormalize,
    rotvec_to_dcm,
    skew,
    transport_rate,
)

E1 = np.array([1.0, 0.0, 0.0])


@dataclass
class NavState:
    """Navigation solution of the IMU point.

    ``s`` is the predicted accumulated odometer count (pulses, real valued).
    """

    C_bn: np.ndarray
    v: np.ndarray
    p: np.ndarray
    s: float = 0.0

    def copy(self) -> "NavState":
        return NavState(self.C_bn.copy(), self.v.copy(), self.p.copy(), float(self.s))

    @property
    def C_nb(self) -> np.ndarray:
        return self.C_bn.T


class ConingCoeffs(NamedTuple):
    a_w: np.ndarray
    b_w: np.ndarray


class StepInfo(NamedTuple):
    """Quantities of one mechanization step reused by the measurement models."""

    C_nb_k: np.ndarray  # attitude at the start of the step
    v_k: np.ndarray
    v_k1: np.ndarray
    dth1: np.ndarray  # bias-corrected angle increments
    dth2: np.ndarray
    dv1: np.ndarray
    dv2: np.ndarray
    w_in: np.ndarray  # mid-step omega_in^n
    w_ie: np.ndarray
    f_n: np.ndarray  # mid-step specific force in n
    T: float


def coning_coeffs(dth1, dth2, T: float) -> ConingCoeffs:
    """Linear angular-rate model ``w(t) = a_w (t - t_k) + b_w`` fitted to two
    half-interval angle increments."""
    dth1 = np.asarray(dth1, dtype=float)
    dth2 = np.asarray(dth2, dtype=float)
    return ConingCoeffs(4.0 * (dth2 - dth1) / T**2, (3.0 * dth1 - dth2) / T)


def body_rotation_vector(dth1, dth2) -> np.ndarray:
    """Two-sample coning-compensated rotation vector."""
    return dth1 + dth2 + (2.0 / 3.0) * np.cross(dth1, dth2)


def attitude_update(C_bn, dth1, dth2, w_in, T: float) -> np.ndarray:
    phi_b = body_rotation_vector(np.asarray(dth1, float), np.asarray(dth2, float))
    zeta = np.asarray(w_in, dtype=float) * T
    C = rotvec_to_dcm(-zeta) @ C_bn @ rotvec_to_dcm(phi_b)
    return orthonormalize(C)


def specific_force_increment_body(dth1, dth2, dv1, dv2) -> np.ndarray:
    """Rotation- and sculling-compensated velocity increment in the body frame
    at the start of the step."""
    dth = dth1 + dth2
    dv = dv1 + dv2
    return dv + 0.5 * np.cross(dth, dv) + (2.0 / 3.0) * (np.cross(dth1, dv2) + np.cross(dv1, dth2))


def _earth_terms(v, p, earth):
    w_ie = earth_rate_n(p[1], earth)
    w_en = transport_rate(v, p, earth)
    g = gravity(p[1], p[2], earth)
    return w_ie, w_en, g


def velocity_update(nav: NavState, dth1, dth2, dv1, dv2, T: float,
                    b_a=None, earth: EarthModel = WGS84):
    """Two-sample velocity update. Returns ``(v_new, w_in_mid, w_ie_mid, f_n)``.

    Increments are raw; ``b_a`` (if given) is removed as ``b_a * T/2`` per
    sub-interval. Earth-rate, transport-rate and gravity are evaluated at the
    mid-step state after one predictor pass.
    """
    dth1 = np.asarray(dth1, float)
    dth2 = np.asarray(dth2, float)
    dv1 = np.asarray(dv1, float)
    dv2 = np.asarray(dv2, float)
    if b_a is not None:
        dv1 = dv1 - b_a * (0.5 * T)
        dv2 = dv2 - b_a * (0.5 * T)
    dv_b = specific_force_increment_body(dth1, dth2, dv1, dv2)
    Cdv = nav.C_bn @ dv_b

    v, p = nav.v, nav.p
    w_ie, w_en, g = _earth_terms(v, p, earth)
    w_in = w_ie + w_en
    v_pred = v + Cdv - 0.5 * np.cross(w_in * T, Cdv) + (g - np.cross(2 * w_ie + w_en, v)) * T

    v_mid = 0.5 * (v + v_pred)
    p_mid = p + 0.5 * T * (curvature_matrix(p, earth) @ v_mid)
    w_ie, w_en, g = _earth_terms(v_mid, p_mid, earth)
    w_in = w_ie + w_en
    dv_sf = Cdv - 0.5 * np.cross(w_in * T, Cdv)
    v_new = v + dv_sf + (g - np.cross(2 * w_ie + w_en, v_mid)) * T
    return v_new, w_in, w_ie, dv_sf / T


def position_update(p, v_old, v_new, T: float, earth: EarthModel = WGS84) -> np.ndarray:
    """Trapezoidal integration of ``R_c v`` with the curvature at mid-step."""
    v_avg = 0.5 * (np.asarray(v_old, float) + np.asarray(v_new, float))
    p = np.asarray(p, dtype=float)
    p_mid = p + 0.5 * T * (curvature_matrix(p, earth) @ v_avg)
    return p + T * (curvature_matrix(p_mid, earth) @ v_avg)


def strapdown_step(nav: NavState, dth1, dth2, dv1, dv2, T: float, b_g=None, b_a=None,
                   earth: EarthModel = WGS84):
    """One full attitude/velocity/position update.

    Returns the new :class:`NavState` (``s`` untouched) and a
    :class:`StepInfo` for the odometer models.
    """
    dth1 = np.asarray(dth1, float)
    dth2 = np.asarray(dth2, float)
    if b_g is not None:
        dth1 = dth1 - b_g * (0.5 * T)
        dth2 = dth2 - b_g * (0.5 * T)
    dv1 = np.asarray(dv1, float)
    dv2 = np.asarray(dv2, float)
    if b_a is not None:
        dv1 = dv1 - b_a * (0.5 * T)
        dv2 = dv2 - b_a * (0.5 * T)
    v_new, w_in, w_ie, f_n = velocity_update(nav, dth1, dth2, dv1, dv2, T, earth=earth)
    p_new = position_update(nav.p, nav.v, v_new, T, earth)
    C_new = attitude_update(nav.C_bn, dth1, dth2, w_in, T)
    info = StepInfo(nav.C_bn.T, nav.v, v_new, dth1, dth2, dv1, dv2, w_in, w_ie, f_n, T)
    return NavState(C_new, v_new, p_new, nav.s), info


def theta_moments(dth1, dth2, T: float):
    """Exact integrals of the quadratic body-angle model
    ``theta(t) = a_w t^2/2 + b_w t`` weighted by ``(1 - t/T)`` and ``t/T``, and
    the corresponding ``t``-weighted moments.

    Returns ``(m0, m1, n0, n1)`` with
    ``m0 = int theta (1 - t/T)``, ``m1 = int theta t/T``,
    ``n0 = int t theta (1 - t/T)``, ``n1 = int t theta t/T``.
    """
    m1 = T * (3.0 * dth1 + dth2) / 6.0
    m0 = T * dth1 / 3.0
    n1 = T**2 * (7.0 * dth1 + 3.0 * dth2) / 20.0
    n0 = T**2 * (9.0 * dth1 + dth2) / 60.0
    return m0, m1, n0, n1


def lever_velocity_integral(C_nb_k, dth1, dth2, v_k, v_k1, lever, T: float,
                            w_in=None, w_ie=None) -> np.ndarray:
    """Closed form of ``int_{t_k}^{t_k+T} C_n^b v^n + omega_eb^b x l^b dt``
    (body axes at ``t_k``).

    Velocity is taken linear over the step; the body angle follows the
    two-sample quadratic model. Products of earth-scale rates are dropped.
    ``w_in``/``w_ie`` default to zero, which reduces the result to
    ``T/2 C (v_k + v_k1) + (dth1 + dth2) x l`` plus the attitude cross terms.
    """
    C = np.asarray(C_nb_k, float)
    dth1 = np.asarray(dth1, float)
    dth2 = np.asarray(dth2, float)
    lever = np.asarray(lever, float)
    Cv0 = C @ v_k
    Cv1 = C @ v_k1
    m0, m1, n0, n1 = theta_moments(dth1, dth2, T)
    out = 0.5 * T * (Cv0 + Cv1)
    out -= np.cross(m0, Cv0) + np.cross(m1, Cv1)
    out += np.cross(dth1 + dth2, lever)
    if w_in is not None:
        Cw0 = C @ np.cross(w_in, v_k)
        Cw1 = C @ np.cross(w_in, v_k1)
        out += T**2 / 6.0 * Cw0 + T**2 / 3.0 * Cw1
        out -= np.cross(n0, Cw0) + np.cross(n1, Cw1)
    if w_ie is not None:
        c = C @ w_ie
        out -= np.cross(T * c - np.cross(m0 + m1, c), lever)
    return out


def lever_velocity_integral_step(info: StepInfo, lever) -> np.ndarray:
    return lever_velocity_integral(info.C_nb_k, info.dth1, info.dth2, info.v_k, info.v_k1,
                                   lever, info.T, info.w_in, info.w_ie)


def dcm_integrals(C_nb_k, dth1, dth2, v_k, v_k1, T: float, w_in=None):
    """Closed forms of ``int C_n^b dt`` and ``int C_n^b (v^n x) dt`` over one step.

    ``w_in`` adds the first-order navigation-frame rotation terms; without it
    the result is the body-rotation-only form.
    """
    C = np.asarray(C_nb_k, float)
    m0, m1, _, _ = theta_moments(np.asarray(dth1, float), np.asarray(dth2, float), T)
    th_bar = m0 + m1
    Sv0 = skew(v_k)
    Sv1 = skew(v_k1)
    int_C = T * C - skew(th_bar) @ C
    int_Cv = 0.5 * T * C @ (Sv0 + Sv1) - skew(m0) @ C @ Sv0 - skew(m1) @ C @ Sv1
    if w_in is not None:
        CW = C @ skew(w_in)
        int_C += 0.5 * T * T * CW
        int_Cv += T * T * CW @ (Sv0 / 6.0 + Sv1 / 3.0)
    return int_C, int_Cv


def predict_pulse_count(nav: NavState, mount, info: StepInfo) -> float:
    """Propagate the predicted accumulated pulse count by one step."""
    lever_int = lever_velocity_integral_step(info, mount.lever)
    return nav.s + mount.K * (mount.C_bm[0] @ lever_int)
