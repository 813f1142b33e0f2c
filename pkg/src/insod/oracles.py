"""Independent numerical references for the closed forms: fine-step attitude
integration with composite Simpson quadrature, and central finite differences.

Nothing here reuses the closed-form code paths it is meant to check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import WGS84, earth_rate_n, mount_dcm, rotvec_to_dcm, skew
from .strapdown import NavState


@dataclass
class MildStep:
    """One random IMU step with linear body rate and linear velocity."""

    C_nb_k: np.ndarray
    dth1: np.ndarray
    dth2: np.ndarray
    v_k: np.ndarray
    v_k1: np.ndarray
    w_in: np.ndarray
    w_ie: np.ndarray
    lever: np.ndarray
    lat: float
    T: float


def random_dcm(rng) -> np.ndarray:
    return rotvec_to_dcm(rng.normal(size=3) * rng.uniform(0, np.pi) / np.sqrt(3))


def random_mild_step(rng, T: float = 0.02, max_rate: float = 0.03, max_speed: float = 30.0,
                     max_accel: float = 2.0) -> MildStep:
    """Draw a land-vehicle-like step: rates below ``max_rate`` rad/s, speed
    below ``max_speed`` m/s, acceleration below ``max_accel`` m/s^2."""
    w0 = rng.uniform(-1, 1, 3) * max_rate / np.sqrt(3)
    w1 = w0 + rng.uniform(-1, 1, 3) * 0.1 * max_rate / np.sqrt(3)
    w0, w1 = np.clip(w0, -max_rate, max_rate), np.clip(w1, -max_rate, max_rate)
    # linear rate from w0 to w1 integrated over both halves
    wm = 0.5 * (w0 + w1)
    dth1 = 0.25 * T * (w0 + wm)
    dth2 = 0.25 * T * (wm + w1)
    v_k = rng.uniform(-1, 1, 3) * max_speed / np.sqrt(3)
    v_k1 = v_k + rng.uniform(-1, 1, 3) * max_accel / np.sqrt(3) * T
    lat = rng.uniform(-1.2, 1.2)
    w_ie = earth_rate_n(lat)
    w_in = w_ie + rng.uniform(-1, 1, 3) * 5e-6
    lever = rng.uniform(-1.5, 1.5, 3)
    return MildStep(random_dcm(rng), dth1, dth2, v_k, v_k1, w_in, w_ie, lever, lat, T)


def attitude_nodes(C_nb_k, dth1, dth2, w_in, T: float, n_sub: int = 20):
    """Body attitude ``C_n^b(t)`` at ``2 n_sub + 1`` equispaced nodes of one
    step, by RK4 on ``dC/dt = -(w_ib x) C + C (w_in x)`` with the linear body
    rate implied by the two angle increments.

    Returns ``(t, C_nodes, w_ib_nodes)``.
    """
    dth1 = np.asarray(dth1, float)
    dth2 = np.asarray(dth2, float)
    # linear rate w(t) = w0 + (w1 - w0) t / T reproducing both half increments
    w0 = (3.0 * dth1 - dth2) / T
    slope = 4.0 * (dth2 - dth1) / T**2
    W_in = skew(w_in)

    def rate(t):
        return w0 + slope * t

    def deriv(t, C):
        return -skew(rate(t)) @ C + C @ W_in

    n = 2 * n_sub
    h = T / n
    t = np.linspace(0.0, T, n + 1)
    Cs = np.empty((n + 1, 3, 3))
    C = np.array(C_nb_k, dtype=float)
    Cs[0] = C
    for i in range(n):
        ti = t[i]
        k1 = deriv(ti, C)
        k2 = deriv(ti + h / 2, C + h / 2 * k1)
        k3 = deriv(ti + h / 2, C + h / 2 * k2)
        k4 = deriv(ti + h, C + h * k3)
        C = C + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        Cs[i + 1] = C
    W = np.array([rate(ti) for ti in t])
    return t, Cs, W


def simpson_weights(n_nodes: int, T: float) -> np.ndarray:
    if n_nodes % 2 == 0:
        raise ValueError("Simpson needs an odd node count")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * T / (3.0 * (n_nodes - 1))


def step_quadrature(step: MildStep, n_sub: int = 20):
    """Quadrature references of one step.

    Returns ``dict(int_C, int_Cv, lever_int, t, C, w_ib, v)`` where
    ``lever_int`` integrates ``C_n^b v + (w_ib - C_n^b w_ie) x l``.
    """
    t, Cs, W = attitude_nodes(step.C_nb_k, step.dth1, step.dth2, step.w_in, step.T, n_sub)
    wq = simpson_weights(len(t), step.T)
    V = step.v_k[None, :] + (step.v_k1 - step.v_k)[None, :] * (t / step.T)[:, None]
    int_C = np.einsum("i,ijk->jk", wq, Cs)
    int_Cv = sum(wq[i] * Cs[i] @ skew(V[i]) for i in range(len(t)))
    lever = np.zeros(3)
    for i in range(len(t)):
        w_eb = W[i] - Cs[i] @ step.w_ie
        lever += wq[i] * (Cs[i] @ V[i] + np.cross(w_eb, step.lever))
    return dict(int_C=int_C, int_Cv=int_Cv, lever_int=lever, t=t, C=Cs, w_ib=W, v=V)


def central_diff(fun, x0, h):
    """Central-difference Jacobian of ``fun`` (vector or scalar output) at
    ``x0`` with per-coordinate steps ``h``."""
    x0 = np.asarray(x0, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x0.shape)
    f0 = np.atleast_1d(fun(x0))
    J = np.zeros((f0.size, x0.size))
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = h[i]
        J[:, i] = (np.atleast_1d(fun(x0 + e)) - np.atleast_1d(fun(x0 - e))) / (2 * h[i])
    return J


def perturbed_vehicle_velocity(nav: NavState, K, psi, theta, phi, lever, w_ib, dx) -> np.ndarray:
    """``diag(K, 1, 1) C_b^m (C_n^b v + w_eb x l)`` evaluated directly with each
    error channel of ``dx`` (21 entries) applied in its own definition:
    multiplicative attitude, residual gyro bias, additive elsewhere."""
    phi_n = dx[0:3]
    C_nb = nav.C_bn.T @ rotvec_to_dcm(phi_n)
    v = nav.v + dx[3:6]
    p = nav.p + dx[6:9]
    w = np.asarray(w_ib, float) + dx[9:12]
    Kh = K + dx[15]
    C_bm = mount_dcm(phi, theta + dx[17], psi + dx[16])
    l = np.asarray(lever, float) + dx[18:21]
    w_eb = w - C_nb @ earth_rate_n(p[1], WGS84)
    u = C_bm @ (C_nb @ v + np.cross(w_eb, l))
    return np.array([Kh * u[0], u[1], u[2]])
