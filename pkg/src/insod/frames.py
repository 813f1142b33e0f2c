"""Earth model, geodesy and rotation algebra.

Conventions used everywhere in the package:

* navigation frame ``n`` is North-Up-East (x = north, y = up, z = east);
* positions are geodetic arrays ordered ``[lon, lat, h]`` (rad, rad, m);
* vehicle frame ``m`` is forward-up-right;
* ``C_b^n`` maps body-frame vectors into the navigation frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PolarSingularity

COS_LAT_MIN = 1e-12


@dataclass(frozen=True)
class EarthModel:
    """Reference ellipsoid plus normal-gravity parameters (WGS-84 defaults)."""

    a: float = 6378137.0
    e2: float = 6.69437999014e-3
    omega_ie: float = 7.292115e-5
    g_equator: float = 9.7803253359
    g_k: float = 1.93185265241e-3  # Somigliana constant
    flattening: float = 1.0 / 298.257223563
    m_ratio: float = 3.44978650684e-3  # omega^2 a^2 b / GM

    def __post_init__(self):
        if self.a <= 0 or not (0.0 <= self.e2 < 1.0):
            raise ValueError("EarthModel needs a > 0 and 0 <= e2 < 1")


WGS84 = EarthModel()


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix ``S`` with ``S @ u == cross(v, u)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew` (antisymmetric part only)."""
    return 0.5 * np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]])


def rotvec_to_dcm(phi) -> np.ndarray:
    """Rodrigues formula, ``exp(skew(phi))``."""
    phi = np.asarray(phi, dtype=float)
    a2 = phi @ phi
    S = skew(phi)
    if a2 < 1e-16:
        # series to machine precision for tiny angles
        s = 1.0 - a2 / 6.0
        c = 0.5 - a2 / 24.0
    else:
        a = np.sqrt(a2)
        s = np.sin(a) / a
        c = (1.0 - np.cos(a)) / a2
    return np.eye(3) + s * S + c * (S @ S)


def orthonormalize(C: np.ndarray) -> np.ndarray:
    """Closest rotation matrix (symmetric correction, one Newton step is plenty
    for the drift levels seen per integration step)."""
    return 1.5 * C - 0.5 * C @ C.T @ C


def dcm_to_quat(C: np.ndarray) -> np.ndarray:
    """Scalar-first unit quaternion of a DCM (Shepperd's method), q0 >= 0."""
    tr = np.trace(C)
    cand = np.array([tr, C[0, 0], C[1, 1], C[2, 2]])
    i = int(np.argmax(cand))
    if i == 0:
        q0 = 0.5 * np.sqrt(1.0 + tr)
        q = [q0, (C[2, 1] - C[1, 2]) / (4 * q0), (C[0, 2] - C[2, 0]) / (4 * q0),
             (C[1, 0] - C[0, 1]) / (4 * q0)]
    elif i == 1:
        q1 = 0.5 * np.sqrt(1.0 + 2 * C[0, 0] - tr)
        q = [(C[2, 1] - C[1, 2]) / (4 * q1), q1, (C[0, 1] + C[1, 0]) / (4 * q1),
             (C[0, 2] + C[2, 0]) / (4 * q1)]
    elif i == 2:
        q2 = 0.5 * np.sqrt(1.0 + 2 * C[1, 1] - tr)
        q = [(C[0, 2] - C[2, 0]) / (4 * q2), (C[0, 1] + C[1, 0]) / (4 * q2), q2,
             (C[1, 2] + C[2, 1]) / (4 * q2)]
    else:
        q3 = 0.5 * np.sqrt(1.0 + 2 * C[2, 2] - tr)
        q = [(C[1, 0] - C[0, 1]) / (4 * q3), (C[0, 2] + C[2, 0]) / (4 * q3),
             (C[1, 2] + C[2, 1]) / (4 * q3), q3]
    q = np.asarray(q)
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_dcm(q) -> np.ndarray:
    q0, q1, q2, q3 = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [q0*q0 + q1*q1 - q2*q2 - q3*q3, 2*(q1*q2 - q0*q3), 2*(q1*q3 + q0*q2)],
        [2*(q1*q2 + q0*q3), q0*q0 - q1*q1 + q2*q2 - q3*q3, 2*(q2*q3 - q0*q1)],
        [2*(q1*q3 - q0*q2), 2*(q2*q3 + q0*q1), q0*q0 - q1*q1 - q2*q2 + q3*q3],
    ])


def wrap_lon(lon):
    """Wrap longitude into (-pi, pi]."""
    w = np.mod(lon + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w) if np.ndim(w) else (np.pi if w == -np.pi else w)


def radii(lat, earth: EarthModel = WGS84):
    """Transverse (prime-vertical) and meridian radii of curvature ``(R_E, R_N)``."""
    s2 = np.sin(lat) ** 2
    w = 1.0 - earth.e2 * s2
    R_E = earth.a / np.sqrt(w)
    R_N = earth.a * (1.0 - earth.e2) / w**1.5
    return R_E, R_N


def _check_pole(lat):
    if np.any(np.abs(np.cos(lat)) <= COS_LAT_MIN):
        raise PolarSingularity(f"latitude {lat!r} too close to a pole")


def curvature_matrix(p, earth: EarthModel = WGS84) -> np.ndarray:
    """Matrix mapping N-U-E velocity to ``d[lon, lat, h]/dt``."""
    lat, h = p[1], p[2]
    _check_pole(lat)
    R_E, R_N = radii(lat, earth)
    Rc = np.zeros((3, 3))
    Rc[0, 2] = 1.0 / ((R_E + h) * np.cos(lat))
    Rc[1, 0] = 1.0 / (R_N + h)
    Rc[2, 1] = 1.0
    return Rc


def earth_rate_n(lat, earth: EarthModel = WGS84) -> np.ndarray:
    return earth.omega_ie * np.array([np.cos(lat), np.sin(lat), 0.0])


def d_earth_rate_dp(lat, earth: EarthModel = WGS84) -> np.ndarray:
    """Jacobian of :func:`earth_rate_n` w.r.t. ``[lon, lat, h]``."""
    J = np.zeros((3, 3))
    J[0, 1] = -np.sin(lat)
    J[1, 1] = np.cos(lat)
    return earth.omega_ie * J


def transport_rate(v, p, earth: EarthModel = WGS84) -> np.ndarray:
    """Rotation rate of the N-U-E frame w.r.t. the earth, ``omega_en^n``."""
    lat, h = p[1], p[2]
    _check_pole(lat)
    R_E, R_N = radii(lat, earth)
    vn, _, ve = v
    return np.array([ve / (R_E + h), ve * np.tan(lat) / (R_E + h), -vn / (R_N + h)])


def elementary_rotation(axis: int, angle: float) -> np.ndarray:
    """Frame rotation ``M_i(angle)`` about axis 1, 2 or 3."""
    c, s = np.cos(angle), np.sin(angle)
    if axis == 1:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    if axis == 2:
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    if axis == 3:
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"axis must be 1, 2 or 3, got {axis}")


def mount_dcm(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-vehicle DCM by the 2-3-1 sequence, ``M1(phi) M3(theta) M2(psi)``."""
    return elementary_rotation(1, phi) @ elementary_rotation(3, theta) @ elementary_rotation(2, psi)


def d_mount(theta: float, psi: float):
    """Angle derivatives ``(dM2/dpsi, dM3/dtheta)`` of the elementary rotations."""
    cp, sp = np.cos(psi), np.sin(psi)
    ct, st = np.cos(theta), np.sin(theta)
    D_M2 = np.array([[-sp, 0.0, -cp], [0.0, 0.0, 0.0], [cp, 0.0, -sp]])
    D_M3 = np.array([[-st, ct, 0.0], [-ct, -st, 0.0], [0.0, 0.0, 0.0]])
    return D_M2, D_M3


def gravity_magnitude(lat, h, earth: EarthModel = WGS84):
    """Normal gravity (Somigliana with second-order free-air correction)."""
    s2 = np.sin(lat) ** 2
    g0 = earth.g_equator * (1.0 + earth.g_k * s2) / np.sqrt(1.0 - earth.e2 * s2)
    f, m, a = earth.flattening, earth.m_ratio, earth.a
    return g0 * (1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * h + 3.0 * h * h / a**2)


def dgravity_dh(lat, h, earth: EarthModel = WGS84):
    s2 = np.sin(lat) ** 2
    g0 = earth.g_equator * (1.0 + earth.g_k * s2) / np.sqrt(1.0 - earth.e2 * s2)
    f, m, a = earth.flattening, earth.m_ratio, earth.a
    return g0 * (-2.0 / a * (1.0 + f + m - 2.0 * f * s2) + 6.0 * h / a**2)


def dgravity_dlat(lat, h, earth: EarthModel = WGS84):
    s2 = np.sin(lat) ** 2
    sin2 = np.sin(2.0 * lat)
    w = 1.0 - earth.e2 * s2
    g0 = earth.g_equator * (1.0 + earth.g_k * s2) / np.sqrt(w)
    dg0 = earth.g_equator * sin2 * (earth.g_k / np.sqrt(w)
                                    + 0.5 * earth.e2 * (1.0 + earth.g_k * s2) / w**1.5)
    f, m, a = earth.flattening, earth.m_ratio, earth.a
    bracket = 1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * h + 3.0 * h * h / a**2
    return dg0 * bracket + g0 * 4.0 * f * h / a * sin2


def gravity(lat, h, earth: EarthModel = WGS84) -> np.ndarray:
    """Gravity vector in N-U-E: ``[0, -g, 0]``."""
    return np.array([0.0, -gravity_magnitude(lat, h, earth), 0.0])


def local_offset(p_from, p_to, earth: EarthModel = WGS84) -> np.ndarray:
    """North/up/east displacement (m) from ``p_from`` to ``p_to`` in the
    tangent plane at ``p_from``; accurate for separations far below R."""
    R_E, R_N = radii(p_from[1], earth)
    dn = (p_to[1] - p_from[1]) * (R_N + p_from[2])
    de = wrap_lon(p_to[0] - p_from[0]) * (R_E + p_from[2]) * np.cos(p_from[1])
    return np.array([dn, p_to[2] - p_from[2], de])
