"""Compiled per-step propagation between filter updates.

Mirrors, operation for operation, :func:`insod.strapdown.strapdown_step`,
:func:`insod.fusion.f_matrix`, :func:`insod.odometry.h_k_integrated` and
:func:`insod.odometry.jac_sdot`; the test suite checks the two paths agree.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .frames import WGS84
from .odometry import MeasKind
from .strapdown import NavState, StepInfo

_EARTH = np.array([WGS84.a, WGS84.e2, WGS84.omega_ie, WGS84.g_equator, WGS84.g_k,
                   WGS84.flattening, WGS84.m_ratio])


@nb.njit(cache=True)
def _skew(v):
    S = np.zeros((3, 3))
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@nb.njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@nb.njit(cache=True)
def _rodrigues(phi):
    a2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    S = _skew(phi)
    if a2 < 1e-16:
        s = 1.0 - a2 / 6.0
        c = 0.5 - a2 / 24.0
    else:
        a = math.sqrt(a2)
        s = math.sin(a) / a
        c = (1.0 - math.cos(a)) / a2
    return np.eye(3) + s * S + c * (S @ S)


@nb.njit(cache=True)
def _radii(lat, E):
    s2 = math.sin(lat) ** 2
    w = 1.0 - E[1] * s2
    return E[0] / math.sqrt(w), E[0] * (1.0 - E[1]) / w**1.5


@nb.njit(cache=True)
def _w_ie(lat, E):
    out = np.zeros(3)
    out[0] = E[2] * math.cos(lat)
    out[1] = E[2] * math.sin(lat)
    return out


@nb.njit(cache=True)
def _w_en(v, p, E):
    R_E, R_N = _radii(p[1], E)
    out = np.empty(3)
    out[0] = v[2] / (R_E + p[2])
    out[1] = v[2] * math.tan(p[1]) / (R_E + p[2])
    out[2] = -v[0] / (R_N + p[2])
    return out


@nb.njit(cache=True)
def _g0(lat, E):
    s2 = math.sin(lat) ** 2
    return E[3] * (1.0 + E[4] * s2) / math.sqrt(1.0 - E[1] * s2), s2


@nb.njit(cache=True)
def _gravity(lat, h, E):
    g0, s2 = _g0(lat, E)
    f, m, a = E[5], E[6], E[0]
    g = np.zeros(3)
    g[1] = -g0 * (1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * h + 3.0 * h * h / a**2)
    return g


@nb.njit(cache=True)
def _dgdh(lat, h, E):
    g0, s2 = _g0(lat, E)
    f, m, a = E[5], E[6], E[0]
    return g0 * (-2.0 / a * (1.0 + f + m - 2.0 * f * s2) + 6.0 * h / a**2)


@nb.njit(cache=True)
def _dgdlat(lat, h, E):
    s2 = math.sin(lat) ** 2
    sin2 = math.sin(2.0 * lat)
    w = 1.0 - E[1] * s2
    g0 = E[3] * (1.0 + E[4] * s2) / math.sqrt(w)
    dg0 = E[3] * sin2 * (E[4] / math.sqrt(w) + 0.5 * E[1] * (1.0 + E[4] * s2) / w**1.5)
    f, m, a = E[5], E[6], E[0]
    bracket = 1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * h + 3.0 * h * h / a**2
    return dg0 * bracket + g0 * 4.0 * f * h / a * sin2


@nb.njit(cache=True)
def _rc_times(p, v, E):
    R_E, R_N = _radii(p[1], E)
    out = np.empty(3)
    out[0] = v[2] / ((R_E + p[2]) * math.cos(p[1]))
    out[1] = v[0] / (R_N + p[2])
    out[2] = v[1]
    return out


@nb.njit(cache=True)
def _elem(axis, ang):
    c, s = math.cos(ang), math.sin(ang)
    M = np.eye(3)
    if axis == 1:
        M[1, 1] = c
        M[1, 2] = s
        M[2, 1] = -s
        M[2, 2] = c
    elif axis == 2:
        M[0, 0] = c
        M[0, 2] = -s
        M[2, 0] = s
        M[2, 2] = c
    else:
        M[0, 0] = c
        M[0, 1] = s
        M[1, 0] = -s
        M[1, 1] = c
    return M


@nb.njit(cache=True)
def _step(C, v, p, dth1, dth2, dv1, dv2, T, E):
    """One mechanization step on bias-corrected increments."""
    dth = dth1 + dth2
    dv = dv1 + dv2
    dv_b = dv + 0.5 * _cross(dth, dv) + (2.0 / 3.0) * (_cross(dth1, dv2) + _cross(dv1, dth2))
    Cdv = C @ dv_b
    w_ie = _w_ie(p[1], E)
    w_en = _w_en(v, p, E)
    g = _gravity(p[1], p[2], E)
    w_in = w_ie + w_en
    v_pred = v + Cdv - 0.5 * _cross(w_in * T, Cdv) + (g - _cross(2 * w_ie + w_en, v)) * T
    v_mid = 0.5 * (v + v_pred)
    p_mid = p + 0.5 * T * _rc_times(p, v_mid, E)
    w_ie = _w_ie(p_mid[1], E)
    w_en = _w_en(v_mid, p_mid, E)
    g = _gravity(p_mid[1], p_mid[2], E)
    w_in = w_ie + w_en
    dv_sf = Cdv - 0.5 * _cross(w_in * T, Cdv)
    v_new = v + dv_sf + (g - _cross(2 * w_ie + w_en, v_mid)) * T
    # position, trapezoid with mid-step curvature
    v_avg = 0.5 * (v + v_new)
    pm = p + 0.5 * T * _rc_times(p, v_avg, E)
    p_new = p + T * _rc_times(pm, v_avg, E)
    # attitude
    phi_b = dth + (2.0 / 3.0) * _cross(dth1, dth2)
    Cn = _rodrigues(-w_in * T) @ C @ _rodrigues(phi_b)
    Cn = 1.5 * Cn - 0.5 * Cn @ Cn.T @ Cn
    return Cn, v_new, p_new, w_in, w_ie, dv_sf / T


@nb.njit(cache=True)
def _lever_int(Cnb, dth1, dth2, v0, v1, lever, T, w_in, w_ie):
    Cv0 = Cnb @ v0
    Cv1 = Cnb @ v1
    m1 = T * (3.0 * dth1 + dth2) / 6.0
    m0 = T * dth1 / 3.0
    n1 = T**2 * (7.0 * dth1 + 3.0 * dth2) / 20.0
    n0 = T**2 * (9.0 * dth1 + dth2) / 60.0
    out = 0.5 * T * (Cv0 + Cv1)
    out -= _cross(m0, Cv0) + _cross(m1, Cv1)
    out += _cross(dth1 + dth2, lever)
    Cw0 = Cnb @ _cross(w_in, v0)
    Cw1 = Cnb @ _cross(w_in, v1)
    out += T**2 / 6.0 * Cw0 + T**2 / 3.0 * Cw1
    out -= _cross(n0, Cw0) + _cross(n1, Cw1)
    c = Cnb @ w_ie
    out -= _cross(T * c - _cross(m0 + m1, c), lever)
    return out


@nb.njit(cache=True)
def _mount_parts(psi, theta, phi):
    M1 = _elem(1, phi)
    M2 = _elem(2, psi)
    M3 = _elem(3, theta)
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(theta), math.sin(theta)
    D2 = np.zeros((3, 3))
    D2[0, 0] = -sp
    D2[0, 2] = -cp
    D2[2, 0] = cp
    D2[2, 2] = -sp
    D3 = np.zeros((3, 3))
    D3[0, 0] = -st
    D3[0, 1] = ct
    D3[1, 0] = -ct
    D3[1, 1] = -st
    C_bm = M1 @ M3 @ M2
    dpsi = M1 @ M3 @ D2
    dth = M1 @ D3 @ M2
    return C_bm, dpsi, dth


@nb.njit(cache=True)
def _dwie_dp(lat, E):
    J = np.zeros((3, 3))
    J[0, 1] = -E[2] * math.sin(lat)
    J[1, 1] = E[2] * math.cos(lat)
    return J


@nb.njit(cache=True)
def _msdot_row(Cbn, v, lat, K, psi, theta, phi, lever, w_eb, w_ie, E):
    C_nb = Cbn.T
    C_bm, dpsi, dth = _mount_parts(psi, theta, phi)
    lx = _skew(lever)
    u = C_nb @ v + _cross(w_eb, lever)
    ec = C_bm[0].copy()
    A_phi = C_nb @ _skew(v) + lx @ C_nb @ _skew(w_ie)
    A_pos = lx @ C_nb @ _dwie_dp(lat, E)
    row = np.zeros(21)
    row[0:3] = -K * (ec @ A_phi)
    row[3:6] = K * (ec @ C_nb)
    row[6:9] = K * (ec @ A_pos)
    row[9:12] = -K * (ec @ lx)
    row[15] = ec @ u
    row[16] = K * (dpsi[0] @ u)
    row[17] = K * (dth[0] @ u)
    row[18:21] = K * (ec @ _skew(w_eb))
    return row


@nb.njit(cache=True)
def _hk_row(Cnb_k, dth1, dth2, v0, v1, w_in, w_ie, T, lat, K, psi, theta, phi, lever, E):
    C_bm, dpsi, dthm = _mount_parts(psi, theta, phi)
    e = C_bm[0].copy()
    lx = _skew(lever)
    m0 = T * dth1 / 3.0
    m1 = T * (3.0 * dth1 + dth2) / 6.0
    th_bar = m0 + m1
    Sv0 = _skew(v0)
    Sv1 = _skew(v1)
    int_C = T * Cnb_k - _skew(th_bar) @ Cnb_k
    int_Cv = 0.5 * T * Cnb_k @ (Sv0 + Sv1) - _skew(m0) @ Cnb_k @ Sv0 - _skew(m1) @ Cnb_k @ Sv1
    CW = Cnb_k @ _skew(w_in)
    int_C += 0.5 * T * T * CW
    int_Cv += T * T * CW @ (Sv0 / 6.0 + Sv1 / 3.0)
    li = _lever_int(Cnb_k, dth1, dth2, v0, v1, lever, T, w_in, w_ie)
    w_eb_int = dth1 + dth2 - int_C @ w_ie
    H = np.zeros(21)
    H[0:3] = -K * (e @ (int_Cv + lx @ int_C @ _skew(w_ie)))
    H[3:6] = K * (e @ int_C)
    H[6:9] = K * (e @ lx @ int_C @ _dwie_dp(lat, E))
    H[9:12] = -K * (e @ lx) * T
    H[15] = e @ li
    H[16] = K * (dpsi[0] @ li)
    H[17] = K * (dthm[0] @ li)
    H[18:21] = K * (e @ _skew(w_eb_int))
    return H


@nb.njit(cache=True)
def _fmat(Cbn, v, p, f_n, n, E):
    lat, h = p[1], p[2]
    R_E, R_N = _radii(lat, E)
    RE, RN = R_E + h, R_N + h
    cL = math.cos(lat)
    tL = math.tan(lat)
    vn, ve = v[0], v[2]
    w_ie = _w_ie(lat, E)
    w_en = _w_en(v, p, E)
    w_in = w_ie + w_en
    dW = _dwie_dp(lat, E)
    A_v = np.zeros((3, 3))
    A_v[0, 2] = 1.0 / RE
    A_v[1, 2] = tL / RE
    A_v[2, 0] = -1.0 / RN
    A_p = np.zeros((3, 3))
    A_p[0, 2] = -ve / RE**2
    A_p[1, 1] = ve / (cL * cL * RE)
    A_p[1, 2] = -ve * tL / RE**2
    A_p[2, 2] = vn / RN**2
    F = np.zeros((n, n))
    F[0:3, 0:3] = -_skew(w_in)
    F[0:3, 3:6] = A_v
    F[0:3, 6:9] = dW + A_p
    F[0:3, 9:12] = -Cbn
    Sv = _skew(v)
    F[3:6, 0:3] = _skew(f_n)
    F[3:6, 3:6] = -_skew(2.0 * w_ie + w_en) + Sv @ A_v
    F[3:6, 6:9] = Sv @ (2.0 * dW + A_p)
    F[4, 8] += -_dgdh(lat, h, E)
    F[4, 7] += -_dgdlat(lat, h, E)
    F[3:6, 12:15] = Cbn
    F[6, 5] = 1.0 / (RE * cL)
    F[7, 3] = 1.0 / RN
    F[8, 4] = 1.0
    F[6, 1] = ve * math.sin(lat) / (RE * cL * cL)
    F[6, 2] = -ve / (RE * RE * cL)
    F[7, 2] = -vn / (RN * RN)
    return F


@nb.njit(cache=True)
def _window(C, v, p, s, dth1s, dth2s, dv1s, dv2s, start, stop, T, bg, ba, K, psi, theta, phi,
            lever, Qc, n, kind, exact, E):
    """Propagate from step ``start`` to ``stop`` (exclusive). ``kind``: 0 PA,
    1 PI, 2 PV."""
    Phi_acc = np.eye(n)
    Q_acc = np.zeros((n, n))
    H_acc = np.zeros(21)
    ds_sum = 0.0
    C_bm, _, _ = _mount_parts(psi, theta, phi)
    e = C_bm[0].copy()
    QT = Qc * T
    I = np.eye(n)
    info_C = C.T.copy()
    info_v0 = v.copy()
    a1 = np.zeros(3)
    a2 = np.zeros(3)
    b1 = np.zeros(3)
    b2 = np.zeros(3)
    w_in = np.zeros(3)
    w_ie = np.zeros(3)
    f_n = np.zeros(3)
    for k in range(start, stop):
        a1 = dth1s[k] - bg * (0.5 * T)
        a2 = dth2s[k] - bg * (0.5 * T)
        b1 = dv1s[k] - ba * (0.5 * T)
        b2 = dv2s[k] - ba * (0.5 * T)
        info_C = C.T.copy()
        info_v0 = v.copy()
        C, v_new, p, w_in, w_ie, f_n = _step(C, v, p, a1, a2, b1, b2, T, E)
        li = _lever_int(info_C, a1, a2, info_v0, v_new, lever, T, w_in, w_ie)
        ds = K * (e @ li)
        s += ds
        ds_sum += ds
        v = v_new
        if kind == 1:
            if exact:
                Hk = _hk_row(info_C, a1, a2, info_v0, v_new, w_in, w_ie, T, p[1], K, psi, theta,
                             phi, lever, E)
                H_acc += Hk @ Phi_acc
            else:
                wi = _w_ie(p[1], E)
                w_eb = (a1 + a2) / T - C.T @ wi
                H_acc += _msdot_row(C, v, p[1], K, psi, theta, phi, lever, w_eb, wi, E) * T
        F = _fmat(C, v, p, f_n, n, E)
        if kind == 0:
            wi = _w_ie(p[1], E)
            w_eb = (a1 + a2) / T - C.T @ wi
            F[21, :21] = _msdot_row(C, v, p[1], K, psi, theta, phi, lever, w_eb, wi, E)
        Phi = I + F * T
        Q_acc = Phi @ Q_acc @ Phi.T + QT
        Phi_acc = Phi @ Phi_acc
    return (C, v, p, s, Phi_acc, Q_acc, ds_sum, H_acc, info_C, info_v0, a1, a2, b1, b2, w_in,
            w_ie, f_n)


_KIND_CODE = {MeasKind.PA: 0, MeasKind.PI: 1, MeasKind.PV: 2}


class WindowPropagator:
    """Holds contiguous IMU arrays and runs the compiled window loop."""

    def __init__(self, imu, T, Qc, kind, pi_jacobian="exact"):
        self.d1 = np.ascontiguousarray(imu.dth1, dtype=float)
        self.d2 = np.ascontiguousarray(imu.dth2, dtype=float)
        self.v1 = np.ascontiguousarray(imu.dv1, dtype=float)
        self.v2 = np.ascontiguousarray(imu.dv2, dtype=float)
        self.T = float(T)
        self.Qc = np.ascontiguousarray(Qc, dtype=float)
        self.kind = _KIND_CODE[MeasKind.parse(kind)]
        self.exact = pi_jacobian == "exact"

    def run(self, nav: NavState, mount, b_g, b_a, start: int, stop: int):
        n = len(self.Qc)
        r = _window(np.ascontiguousarray(nav.C_bn, dtype=float), nav.v.astype(float),
                    nav.p.astype(float), float(nav.s), self.d1, self.d2, self.v1, self.v2,
                    int(start), int(stop), self.T, np.asarray(b_g, float), np.asarray(b_a, float),
                    float(mount.K), float(mount.psi), float(mount.theta), float(mount.phi),
                    np.asarray(mount.lever, float), self.Qc, n, self.kind, self.exact, _EARTH)
        (C, v, p, s, Phi_acc, Q_acc, ds_sum, H_acc, Cnb_k, v_k, a1, a2, b1, b2, w_in, w_ie,
         f_n) = r
        info = StepInfo(Cnb_k, v_k, v, a1, a2, b1, b2, w_in, w_ie, f_n, self.T)
        return NavState(C, v, p, s), info, Phi_acc, Q_acc, ds_sum, H_acc
