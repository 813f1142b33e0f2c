"""Ground-truth land-vehicle trajectories, IMU/odometer synthesis, noise
injection and the pulse quantization statistics harness.

The vehicle-frame origin moves with speed ``u(t)`` along its heading ``chi(t)``
(forward = ``[cos chi, 0, sin chi]`` in N-U-E), so the nonholonomic constraint
and the odometer model hold exactly. The IMU sits at ``-l^b`` from that
origin and its attitude carries the mounting rotation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from scipy import stats

from .errors import InsufficientSamples, InvalidSegment
from .frames import WGS84, EarthModel, gravity_magnitude, mount_dcm, radii

DEG = math.pi / 180.0
DEG_PER_H = DEG / 3600.0
UG = 9.80665e-6

SEGMENT_KINDS = ("still", "const_speed", "const_accel", "sine_accel", "turn")


@dataclass(frozen=True)
class SegmentSpec:
    """One piece of the speed/heading profile.

    ``const_speed`` holds the entering speed unless ``speed`` is set on the
    very first segment. ``sine_accel`` moves from the entering speed to
    ``speed`` with a half-sine acceleration pulse (or, if ``amplitude`` is
    given instead, with that peak acceleration). ``turn`` holds speed while the
    heading rate (rad/s, positive turns right) ramps up to ``turn_rate`` and
    back down with raised-cosine edges of length ``ramp``; the heading change
    is ``turn_rate * (duration - ramp)``. Smooth edges keep the IMU velocity
    continuous despite the lever arm.
    """

    kind: str
    duration: float
    speed: float | None = None
    accel: float = 0.0
    amplitude: float | None = None
    turn_rate: float = 0.0
    ramp: float = 1.0

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise InvalidSegment(f"unknown segment kind {self.kind!r}")
        if not self.duration > 0:
            raise InvalidSegment("segment duration must be positive")
        if self.speed is not None and self.speed < 0:
            raise InvalidSegment("negative speed requested")
        if self.kind == "turn" and not 0 < self.ramp <= 0.5 * self.duration:
            raise InvalidSegment("turn ramp must lie in (0, duration/2]")


class _Piece(NamedTuple):
    t0: float
    t1: float
    u0: float
    chi0: float
    d0: float
    acc: float  # const accel
    dsin: float  # speed change of a half-sine transition
    rate: float  # heading rate
    ramp: float


class Profile:
    """Compiled analytic speed/heading/distance history."""

    def __init__(self, segments, heading0: float = 0.0):
        if not segments:
            raise InvalidSegment("empty segment list")
        pieces = []
        t, u, chi, d = 0.0, 0.0, float(heading0), 0.0
        for i, seg in enumerate(segments):
            D = float(seg.duration)
            acc = dsin = rate = 0.0
            ramp = 1.0
            if seg.kind == "still":
                if u > 1e-9:
                    raise InvalidSegment("still segment entered at nonzero speed")
                u = 0.0
            elif seg.kind == "const_speed":
                if i == 0 and seg.speed is not None:
                    u = float(seg.speed)
            elif seg.kind == "const_accel":
                acc = float(seg.accel)
                if u + acc * D < -1e-9:
                    raise InvalidSegment("constant deceleration drives speed negative")
            elif seg.kind == "sine_accel":
                if seg.speed is not None:
                    dsin = float(seg.speed) - u
                elif seg.amplitude is not None:
                    dsin = 2.0 * seg.amplitude * D / math.pi
                if u + dsin < -1e-9:
                    raise InvalidSegment("sine transition drives speed negative")
            else:
                rate = float(seg.turn_rate)
                ramp = float(seg.ramp)
            pieces.append(_Piece(t, t + D, u, chi, d, acc, dsin, rate, ramp))
            d += u * D + 0.5 * acc * D * D + 0.5 * dsin * D
            u = max(u + acc * D + dsin, 0.0)
            chi += rate * (D - ramp)
            t += D
        self.pieces = pieces
        self.duration = t
        self._t0 = np.array([p.t0 for p in pieces])
        self._cols = {k: np.array([getattr(p, k) for p in pieces])
                      for k in ("t0", "t1", "u0", "chi0", "d0", "acc", "dsin",
                                "rate", "ramp")}

    def evaluate(self, t):
        """Return ``(u, u_dot, chi, chi_dot, chi_ddot, d)`` at times ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self._t0, t, side="right") - 1, 0, len(self.pieces) - 1)
        c = {k: v[idx] for k, v in self._cols.items()}
        tau = np.clip(t - c["t0"], 0.0, c["t1"] - c["t0"])
        D = c["t1"] - c["t0"]
        x = np.pi * tau / D
        u = c["u0"] + c["acc"] * tau + 0.5 * c["dsin"] * (1.0 - np.cos(x))
        u_dot = c["acc"] + 0.5 * c["dsin"] * np.pi / D * np.sin(x)
        d = (c["d0"] + c["u0"] * tau + 0.5 * c["acc"] * tau**2
             + 0.5 * c["dsin"] * (tau - D / np.pi * np.sin(x)))
        # raised-cosine edges on the heading rate
        r = c["ramp"]
        sig = D - tau
        a = np.pi / r
        head = tau < r
        tail = sig < r
        g = np.ones_like(tau)
        ig = 0.5 * r + (tau - r)
        gd = np.zeros_like(tau)
        g = np.where(head, 0.5 * (1 - np.cos(a * tau)), g)
        ig = np.where(head, 0.5 * tau - np.sin(a * tau) / (2 * a), ig)
        gd = np.where(head, 0.5 * a * np.sin(a * tau), gd)
        g = np.where(tail, 0.5 * (1 - np.cos(a * sig)), g)
        ig = np.where(tail, (D - r) - (0.5 * sig - np.sin(a * sig) / (2 * a)), ig)
        gd = np.where(tail, -0.5 * a * np.sin(a * sig), gd)
        rate = c["rate"]
        return u, u_dot, c["chi0"] + rate * ig, rate * g, rate * gd, d

    def sine_mask(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self._t0, t, side="right") - 1, 0, len(self.pieces) - 1)
        return self._cols["dsin"][idx] != 0.0


def _cross(a, b):
    return np.cross(a, b)


def _rotate_T(C, x):
    """Batched ``C^T x`` for stacked 3x3 ``C``."""
    return np.einsum("nji,nj->ni", C, x)


class Kinematics:
    """Continuous-time truth of the IMU point: attitude, velocity, rates and
    specific force at arbitrary times, given the integrated position track."""

    def __init__(self, profile: Profile, origin, mounting=(0.0, 0.0, 0.0), lever=(0.0, 0.0, 0.0),
                 earth: EarthModel = WGS84):
        self.profile = profile
        self.origin = np.asarray(origin, dtype=float)
        self.mounting = tuple(float(a) for a in mounting)
        self.C_bm = mount_dcm(*self.mounting)
        self.lever = np.asarray(lever, dtype=float)
        self.earth = earth
        self.t_grid = None
        self.p_grid = None
        self.pdot_grid = None

    # --- position track -------------------------------------------------
    def position(self, t):
        """Cubic Hermite interpolation of the integrated position track (the
        constant origin before integration)."""
        t = np.asarray(t, dtype=float)
        if self.t_grid is None:
            return np.broadcast_to(self.origin, t.shape + (3,)).copy()
        h = self.t_grid[1] - self.t_grid[0]
        i = np.clip(np.floor(t / h).astype(int), 0, len(self.t_grid) - 2)
        s = ((t - self.t_grid[i]) / h)[..., None]
        p0, p1 = self.p_grid[i], self.p_grid[i + 1]
        m0, m1 = self.pdot_grid[i] * h, self.pdot_grid[i + 1] * h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1

    # --- kinematic state --------------------------------------------------
    def state(self, t, p=None):
        """Truth quantities at times ``t`` (1-D array).

        Returns a dict with ``p, v, C_bn, w_ib, f_b, d, pdot``.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        e = self.earth
        if p is None:
            p = self.position(t)
        u, u_dot, chi, chi_dot, chi_ddot, d = self.profile.evaluate(t)
        n = len(t)
        c, s = np.cos(chi), np.sin(chi)
        fwd = np.stack([c, np.zeros(n), s], axis=1)
        right = np.stack([-s, np.zeros(n), c], axis=1)
        up = np.tile([0.0, 1.0, 0.0], (n, 1))
        C_mn = np.stack([fwd, up, right], axis=2)  # columns are m axes in n
        C_bn = C_mn @ self.C_bm
        lat, h = p[:, 1], p[:, 2]
        R_E, R_N = radii(lat, e)
        RE, RN = R_E + h, R_N + h
        tanL = np.tan(lat)
        w_ie = e.omega_ie * np.stack([np.cos(lat), np.sin(lat), np.zeros(n)], axis=1)
        w_nb = np.stack([np.zeros(n), -chi_dot, np.zeros(n)], axis=1)
        r = C_bn @ self.lever
        vm = u[:, None] * fwd

        def transport(v):
            return np.stack([v[:, 2] / RE, v[:, 2] * tanL / RE, -v[:, 0] / RN], axis=1)

        v = vm
        for _ in range(3):
            w_en = transport(v)
            w_eb = w_en + w_nb
            v = vm - _cross(w_eb, r)
        w_en = transport(v)
        w_eb = w_en + w_nb
        a_m = u_dot[:, None] * fwd + (u * chi_dot)[:, None] * right
        lat_dot = v[:, 0] / RN
        w_nb_dot = np.stack([np.zeros(n), -chi_ddot, np.zeros(n)], axis=1)
        w_en_dot = np.stack([
            a_m[:, 2] / RE,
            a_m[:, 2] * tanL / RE + v[:, 2] * lat_dot / (np.cos(lat) ** 2 * RE),
            -a_m[:, 0] / RN,
        ], axis=1)
        v_dot = a_m - _cross(w_en_dot + w_nb_dot, r) - _cross(w_eb, _cross(w_nb, r))
        g = np.zeros((n, 3))
        g[:, 1] = -gravity_magnitude(lat, h, e)
        f_n = v_dot + _cross(2 * w_ie + w_en, v) - g
        f_b = _rotate_T(C_bn, f_n)
        w_ib = _rotate_T(C_bn, w_ie + w_en + w_nb)
        pdot = np.stack([v[:, 2] / (RE * np.cos(lat)), v[:, 0] / RN, v[:, 1]], axis=1)
        return dict(p=p, v=v, C_bn=C_bn, w_ib=w_ib, f_b=f_b, d=d, pdot=pdot)

    def integrate_position(self, duration: float, dt: float, iterations: int = 6):
        """Picard iteration of ``p' = R_c v`` on a grid of step ``dt`` with
        Simpson's rule per interval (v depends on p only through the transport
        rate and curvature, so the iteration contracts quickly)."""
        n = int(round(duration / dt))
        t = np.arange(n + 1) * dt
        tm = t[:-1] + 0.5 * dt
        self.t_grid = None
        p = np.broadcast_to(self.origin, (n + 1, 3)).copy()
        pm = np.broadcast_to(self.origin, (n, 3)).copy()
        for _ in range(iterations):
            f = self.state(t, p)["pdot"]
            fm = self.state(tm, pm)["pdot"]
            inc = dt / 6.0 * (f[:-1] + 4.0 * fm + f[1:])
            p = np.vstack([self.origin, self.origin + np.cumsum(inc, axis=0)])
            pm = 0.5 * (p[:-1] + p[1:]) + dt / 8.0 * (f[:-1] - f[1:])
        self.t_grid = t
        self.p_grid = p
        self.pdot_grid = self.state(t, p)["pdot"]
        return t, p


class TruthSample(NamedTuple):
    t: float
    p: np.ndarray
    v: np.ndarray
    C_bn: np.ndarray
    w_ib: np.ndarray
    f_b: np.ndarray
    d: float


@dataclass
class Truth:
    """Truth samples stored column-wise; iterate for :class:`TruthSample`."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    C_bn: np.ndarray
    w_ib: np.ndarray
    f_b: np.ndarray
    d: np.ndarray
    kin: Kinematics | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> TruthSample:
        return TruthSample(float(self.t[i]), self.p[i], self.v[i], self.C_bn[i], self.w_ib[i],
                           self.f_b[i], float(self.d[i]))

    def __iter__(self) -> Iterator[TruthSample]:
        for i in range(len(self)):
            yield self[i]

    def at(self, t) -> dict:
        """Continuous-time truth (requires the generating kinematics)."""
        if self.kin is None:
            raise ValueError("truth has no kinematic model attached")
        return self.kin.state(np.atleast_1d(t))

    def subsample(self, every: int) -> "Truth":
        sl = slice(None, None, every)
        return Truth(self.t[sl], self.p[sl], self.v[sl], self.C_bn[sl], self.w_ib[sl],
                     self.f_b[sl], self.d[sl], self.kin)


def build_trajectory(segments, origin, heading0: float = 0.0, dt: float = 0.01,
                     mounting=(0.0, 0.0, 0.0), lever=(0.0, 0.0, 0.0),
                     earth: EarthModel = WGS84) -> Truth:
    """Integrate a segment profile into truth samples every ``dt`` seconds.

    ``mounting`` is ``(phi, theta, psi)`` of the IMU w.r.t. the vehicle frame
    and ``lever`` the body-frame vector from the IMU to the vehicle origin.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    prof = Profile(segments, heading0)
    kin = Kinematics(prof, origin, mounting, lever, earth)
    t, p = kin.integrate_position(prof.duration, dt)
    st = kin.state(t, p)
    return Truth(t, p, st["v"], st["C_bn"], st["w_ib"], st["f_b"], st["d"], kin)


def default_paper_trajectory(lo: float = 8.013, hi: float = 19.987, total: float = 5000.0,
                             period: float = 120.0, turn_periods=(4, 10, 16, 22, 28),
                             turn_rate: float = 9.0 * DEG) -> list:
    """Periodic speed profile with five 90-degree turns and a long final straight.

    Each period holds ``lo`` for 10 s, rises to ``hi`` over 10 s (half-sine
    acceleration), holds ``hi`` for 60 s, falls back over 10 s and holds ``lo``
    for 30 s. Turns (90 degrees with 1 s rate ramps) happen 40-51 s into the
    listed periods, alternating right/left.

    The default plateaus are slightly off round numbers so that the pulse rate
    is not commensurate with a 1 s update grid. Round speeds (an integer
    pulse rate) make every update sample the same quantization phase.
    """
    template = [("const", 10.0), ("up", 10.0), ("const", 60.0), ("down", 10.0), ("const", 30.0)]
    segs: list[SegmentSpec] = []
    t = 0.0
    k = 0
    turn_dir = 1.0
    first = True
    while t < total - 1e-9:
        for kind, D in template:
            D = min(D, total - t)
            if D <= 1e-9:
                break
            if kind == "up":
                segs.append(SegmentSpec("sine_accel", D, speed=hi))
            elif kind == "down":
                segs.append(SegmentSpec("sine_accel", D, speed=lo))
            elif D == 60.0 and k in turn_periods:
                segs += [SegmentSpec("const_speed", 20.0),
                         SegmentSpec("turn", 11.0, turn_rate=turn_dir * turn_rate, ramp=1.0),
                         SegmentSpec("const_speed", 29.0)]
                turn_dir = -turn_dir
            else:
                segs.append(SegmentSpec("const_speed", D, speed=lo if first else None))
            first = False
            t += D
        k += 1
    return segs


DEFAULT_ORIGIN = np.array([121.0 * DEG, 31.0 * DEG, 10.0])


@dataclass
class SensorSpec:
    """IMU and odometer error/mounting specification (SI units)."""

    gyro_bias: np.ndarray = field(default_factory=lambda: np.full(3, 0.005 * DEG_PER_H))
    gyro_arw: float = 0.001 * DEG / 60.0  # rad/sqrt(s)
    accel_bias: np.ndarray = field(default_factory=lambda: np.full(3, 30.0 * UG))
    accel_vrw: float = 5.0 * UG  # (m/s^2)/sqrt(Hz)
    K: float = 59.8
    psi: float = 3.0 * DEG
    theta: float = 2.0 * DEG
    phi: float = 0.0
    lever: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.5, 0.8]))
    dp0: float = 0.0
    T: float = 0.02

    def __post_init__(self):
        self.gyro_bias = np.broadcast_to(np.asarray(self.gyro_bias, float), (3,)).copy()
        self.accel_bias = np.broadcast_to(np.asarray(self.accel_bias, float), (3,)).copy()
        self.lever = np.asarray(self.lever, dtype=float)
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not 0.0 <= self.dp0 < 1.0:
            raise ValueError("dp0 must lie in [0, 1)")
        if not self.T > 0:
            raise ValueError("IMU interval must be positive")
        if self.gyro_arw < 0 or self.accel_vrw < 0:
            raise ValueError("noise densities must be non-negative")

    @property
    def mounting(self):
        return (self.phi, self.theta, self.psi)

    @classmethod
    def perfect(cls, **kw) -> "SensorSpec":
        base = dict(gyro_bias=np.zeros(3), gyro_arw=0.0, accel_bias=np.zeros(3), accel_vrw=0.0)
        base.update(kw)
        return cls(**base)


class ImuSample(NamedTuple):
    t: float
    dth1: np.ndarray
    dth2: np.ndarray
    dv1: np.ndarray
    dv2: np.ndarray


@dataclass
class ImuData:
    """IMU increments; ``t[k]`` is the end time of step ``k``."""

    t: np.ndarray
    dth1: np.ndarray
    dth2: np.ndarray
    dv1: np.ndarray
    dv2: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> ImuSample:
        return ImuSample(float(self.t[i]), self.dth1[i], self.dth2[i], self.dv1[i], self.dv2[i])

    @property
    def T(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else float(self.t[0])


class OdoSample(NamedTuple):
    t: float
    N: int


@dataclass
class OdoData:
    t: np.ndarray
    N: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> OdoSample:
        return OdoSample(float(self.t[i]), int(self.N[i]))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def clean_increments(truth: Truth, T: float, chunk: int = 20000):
    """Error-free angle/velocity increments over each half step via 4-node
    Gauss-Legendre quadrature of the truth rates."""
    kin = truth.kin
    if kin is None:
        raise ValueError("truth has no kinematic model attached")
    n = int(round((truth.t[-1] - truth.t[0]) / T + 1e-9))
    h = 0.5 * T
    n_half = 2 * n
    starts = truth.t[0] + np.arange(n_half) * h
    dth = np.empty((n_half, 3))
    dv = np.empty((n_half, 3))
    offs = 0.5 * h * (_GL_X + 1.0)
    w = 0.5 * h * _GL_W
    for a in range(0, n_half, chunk):
        s = starts[a:a + chunk]
        tn = (s[:, None] + offs[None, :]).ravel()
        st = kin.state(tn)
        dth[a:a + chunk] = np.einsum("j,njk->nk", w, st["w_ib"].reshape(len(s), 4, 3))
        dv[a:a + chunk] = np.einsum("j,njk->nk", w, st["f_b"].reshape(len(s), 4, 3))
    t_end = truth.t[0] + (np.arange(n) + 1) * T
    return t_end, dth[0::2], dth[1::2], dv[0::2], dv[1::2]


def imu_from_truth(truth: Truth, spec: SensorSpec, seed=None, clean=None) -> ImuData:
    """IMU increments with constant biases and white noise on each half step.

    ``clean`` may carry precomputed :func:`clean_increments` output so that
    Monte-Carlo repetitions only redraw the noise.
    """
    T = spec.T
    t, a1, a2, b1, b2 = clean if clean is not None else clean_increments(truth, T)
    rng = np.random.default_rng(seed)
    h = 0.5 * T
    sg = spec.gyro_arw * math.sqrt(h)
    sa = spec.accel_vrw * math.sqrt(h)
    n = len(t)

    def noisy(x, bias, sd):
        out = x + bias * h
        if sd > 0:
            out = out + rng.normal(0.0, sd, (n, 3))
        return out

    return ImuData(t.copy(), noisy(a1, spec.gyro_bias, sg), noisy(a2, spec.gyro_bias, sg),
                   noisy(b1, spec.accel_bias, sa), noisy(b2, spec.accel_bias, sa))


def encode_odometer(truth, spec: SensorSpec, times=None) -> OdoData:
    """Integer accumulated pulses ``floor(K d + dp0)`` at ``times`` (defaults
    to every IMU step end)."""
    if times is None:
        n = int(round((truth.t[-1] - truth.t[0]) / spec.T + 1e-9))
        times = truth.t[0] + (np.arange(n) + 1) * spec.T
    times = np.asarray(times, dtype=float)
    if getattr(truth, "kin", None) is not None:
        d = truth.kin.profile.evaluate(times)[5]
    else:
        d = np.interp(times, truth.t, truth.d)
    N = np.floor(spec.K * d + spec.dp0).astype(np.int64)
    return OdoData(times, N)


@dataclass(frozen=True)
class NoiseWindow:
    start: float
    end: float
    std: float


@dataclass
class NoiseSchedule:
    windows: list = field(default_factory=list)

    def __post_init__(self):
        ws = [w if isinstance(w, NoiseWindow) else NoiseWindow(*w) for w in self.windows]
        for a, b in zip(ws, ws[1:]):
            if b.start < a.end:
                raise ValueError("noise windows must be ordered and non-overlapping")
        for w in ws:
            if w.end <= w.start or w.std < 0:
                raise ValueError("invalid noise window")
        self.windows = ws

    def std_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for w in self.windows:
            out[(t >= w.start) & (t < w.end)] = w.std
        return out

    @classmethod
    def reference_schedule(cls, kind) -> "NoiseSchedule":
        """Three-window noise-injection schedule over 0-1000-3000-5000 s."""
        k = str(getattr(kind, "value", kind)).lower()
        stds = (0.5, 5.0, 20.0) if k == "pv" else (0.5, 2.0, 5.0)
        return cls([(0.0, 1000.0, stds[0]), (1000.0, 3000.0, stds[1]), (3000.0, 5000.0 + 1e-6, stds[2])])


def inject_noise(t, series, schedule: NoiseSchedule, seed=None):
    """Add zero-mean Gaussian noise with the scheduled std to ``series``
    sampled at ``t``; untouched outside every window."""
    t = np.asarray(t, dtype=float)
    series = np.asarray(series, dtype=float)
    if not schedule.windows:
        return series.copy()
    rng = np.random.default_rng(seed)
    std = schedule.std_at(t)
    return series + rng.standard_normal(series.shape) * std


def randomized_pulse_errors(n: int, seed=None, K: float = 59.8, T: float = 0.02,
                            speed_range=(1.0, 30.0)):
    """Accumulated quantization errors on a random-speed trajectory.

    Speeds are redrawn for every interval and ``dp0`` is uniform, matching the
    independence regime of the uniform-error result.
    Returns ``(e, dp0)``.
    """
    rng = np.random.default_rng(seed)
    dp0 = rng.uniform(0.0, 1.0)
    speeds = rng.uniform(*speed_range, n)
    d = np.cumsum(speeds * T)
    x = K * d + dp0
    N = np.floor(x)
    return N - K * d, dp0


class PulseErrorStats(NamedTuple):
    accum_var: float
    accum_hist: np.ndarray
    hist_edges: np.ndarray
    chi2_pvalue: float
    incr_var: float
    incr_lag1: float
    bound_ok: bool


def pulse_error_stats(e, dp0: float, bins: int = 20) -> PulseErrorStats:
    """Variance, histogram/uniformity test and bound check of accumulated
    errors, plus variance and lag-1 autocovariance of their increments."""
    e = np.asarray(e, dtype=float)
    if len(e) < 10_000:
        raise InsufficientSamples(f"need at least 1e4 samples, got {len(e)}")
    # tiny slack for the floating-point product K*d
    bound_ok = bool(np.all((e > dp0 - 1.0 - 1e-9) & (e <= dp0 + 1e-9)))
    hist, edges = np.histogram(e - (dp0 - 1.0), bins=bins, range=(0.0, 1.0))
    pval = float(stats.chisquare(hist).pvalue)
    i = np.diff(e)
    ic = i - i.mean()
    lag1 = float(np.mean(ic[1:] * ic[:-1]))
    return PulseErrorStats(float(np.var(e)), hist, edges, pval, float(np.var(i)), lag1, bound_ok)


def lemma_stats(odo: OdoData, truth, spec: SensorSpec, bins: int = 20) -> PulseErrorStats:
    """Empirical statistics of accumulated ``e_k = N_k - K d(t_k)`` and
    increment ``i_k = e_k - e_{k-1}`` errors."""
    if len(odo) < 10_000:
        raise InsufficientSamples(f"need at least 1e4 samples, got {len(odo)}")
    if getattr(truth, "kin", None) is not None:
        d = truth.kin.profile.evaluate(odo.t)[5]
    else:
        d = np.interp(odo.t, truth.t, truth.d)
    e = odo.N - spec.K * d
    return pulse_error_stats(e, spec.dp0, bins)
