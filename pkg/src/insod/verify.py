"""Oracle-backed verification suites: pulse-error statistics, Jacobian rows
against finite differences, closed-form step integrals against quadrature,
and pulse-velocity prefilter accuracy.

Every suite returns a list of :class:`Check` records; nothing raises on a
failed comparison.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import odometry as od
from .frames import earth_rate_n
from .odometry import MountParams
from .oracles import (central_diff, perturbed_vehicle_velocity, random_dcm, random_mild_step,
                      step_quadrature)
from .strapdown import NavState, dcm_integrals, lever_velocity_integral
from .trajsim import Profile, default_paper_trajectory, pulse_error_stats, randomized_pulse_errors

# error-state blocks compared separately (columns of the 21-state row)
BLOCKS = {"att": od.PHI, "vel": od.VEL, "pos": od.POS, "gyro": od.BG, "K": slice(15, 16),
          "psi": slice(16, 17), "theta": slice(17, 18), "lever": od.LEV}
# central-difference steps per error channel
FD_STEPS = np.array([1e-6] * 3 + [1e-4] * 3 + [1e-3, 1e-3, 1.0] + [1e-6] * 3 + [0.0] * 3
                    + [1e-4, 1e-4, 1e-4] + [1e-4] * 3)


@dataclass
class Check:
    name: str
    value: float
    tol: str
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: {self.value:.6g} (require {self.tol})"

    def as_dict(self) -> dict:
        return dict(name=self.name, value=float(self.value), tol=self.tol,
                    passed=bool(self.passed), seconds=round(self.seconds, 3))


def thread_count() -> int:
    env = os.environ.get("INSOD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def fan_out(fn, items):
    """Map ``fn`` over ``items`` on up to ``INSOD_THREADS`` worker threads."""
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# pulse-error statistics -----------------------------------------------------

def lemma_suite(seed=0, n: int = 200_000, bins: int = 20) -> list:
    t0 = time.perf_counter()
    e, dp0 = randomized_pulse_errors(n, seed=seed)
    st = pulse_error_stats(e, dp0, bins)
    dt = time.perf_counter() - t0
    return [
        Check("accumulated error variance", st.accum_var, "1/12 +- 5%",
              abs(st.accum_var - 1 / 12) <= 0.05 / 12, dt),
        Check("accumulated error uniformity chi2 p-value", st.chi2_pvalue, "> 0.01",
              st.chi2_pvalue > 0.01, dt),
        Check("accumulated error bound violations", float(not st.bound_ok), "== 0",
              st.bound_ok, dt),
        Check("increment error variance", st.incr_var, "1/6 +- 5%",
              abs(st.incr_var - 1 / 6) <= 0.05 / 6, dt),
        Check("increment error lag-1 autocovariance", st.incr_lag1, "-1/12 +- 10%",
              abs(st.incr_lag1 + 1 / 12) <= 0.1 / 12, dt),
    ]


# Jacobian rows --------------------------------------------------------------

def random_state(rng):
    """Random navigation state, mounting and body rate of a land vehicle."""
    lat = rng.uniform(-1.2, 1.2)
    p = np.array([rng.uniform(-np.pi, np.pi), lat, rng.uniform(-100, 2000)])
    nav = NavState(random_dcm(rng), rng.uniform(-25, 25, 3), p)
    mount = MountParams(K=rng.uniform(20, 100), psi=rng.uniform(-0.1, 0.1),
                        theta=rng.uniform(-0.1, 0.1), phi=rng.uniform(-0.05, 0.05),
                        lever=rng.uniform(-2, 2, 3))
    w_ib = rng.uniform(-0.3, 0.3, 3)
    return nav, mount, w_ib


def block_errors(analytic, numeric) -> dict:
    """Relative deviation per error-state block (norm of difference over the
    norm of the reference block; absolute when the block vanishes)."""
    out = {}
    for name, sl in BLOCKS.items():
        a, b = np.atleast_1d(analytic[sl]), np.atleast_1d(numeric[sl])
        scale = np.linalg.norm(b)
        out[name] = float(np.linalg.norm(a - b) / scale) if scale > 1e-12 else float(
            np.linalg.norm(a - b))
    return out


def sdot_fd_row(nav, mount, w_ib) -> np.ndarray:
    def fun(dx):
        return perturbed_vehicle_velocity(nav, mount.K, mount.psi, mount.theta, mount.phi,
                                          mount.lever, w_ib, dx)[0]

    steps = FD_STEPS.copy()
    steps[od.BA] = 1.0  # accel-bias columns are identically zero
    return central_diff(fun, np.zeros(od.N_BASE), steps)[0]


def nhc_fd_rows(nav, mount, w_ib) -> np.ndarray:
    def fun(dx):
        return perturbed_vehicle_velocity(nav, mount.K, mount.psi, mount.theta, mount.phi,
                                          mount.lever, w_ib, dx)[1:]

    steps = FD_STEPS.copy()
    steps[od.BA] = 1.0
    return central_diff(fun, np.zeros(od.N_BASE), steps)


def jacobian_suite(seed=0, n_states: int = 100, tol: float = 1e-5) -> list:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_nhc = 0.0
    ident = 0.0
    for _ in range(n_states):
        nav, mount, w_ib = random_state(rng)
        w_ie = earth_rate_n(nav.p[1])
        w_eb = od.omega_eb_b(w_ib, nav.C_nb, w_ie)
        row = od.jac_sdot(nav, mount, w_eb, w_ie)
        fd = sdot_fd_row(nav, mount, w_ib)
        worst = max(worst, max(block_errors(row, fd).values()))
        _, H = od.nhc_value_and_jac(nav, mount, w_eb, w_ie)
        Hfd = nhc_fd_rows(nav, mount, w_ib)
        for r in range(2):
            errs = block_errors(H[r], Hfd[r])
            errs.pop("K")
            worst_nhc = max(worst_nhc, max(errs.values()))
        sd = od.s_dot(nav, mount, w_eb)
        ident = max(ident, abs(row[od.K_IDX] * mount.K - sd) / max(abs(sd), 1e-300))
    dt = time.perf_counter() - t0
    return [
        Check("pulse-rate row vs finite differences (max block rel.)", worst, f"<= {tol:g}",
              worst <= tol, dt),
        Check("NHC rows vs finite differences (max block rel.)", worst_nhc, f"<= {tol:g}",
              worst_nhc <= tol, dt),
        Check("scale-factor column times K equals pulse rate (rel.)", ident, "<= 1e-12",
              ident <= 1e-12, dt),
    ]


# closed-form step integrals -------------------------------------------------

def _normalized(a, b, scale) -> float:
    return float(np.max(np.abs(a - b)) / scale)


def integral_errors(rng, n_steps: int, n_sub: int = 10):
    """Per-step deviations of the closed forms from Simpson quadrature on a
    1 kHz node grid (``n_sub = 10`` over a 0.02 s step)."""
    lev, ic, icv = [], [], []
    for _ in range(n_steps):
        st = random_mild_step(rng)
        q = step_quadrature(st, n_sub)
        lv = lever_velocity_integral(st.C_nb_k, st.dth1, st.dth2, st.v_k, st.v_k1, st.lever, st.T,
                                     st.w_in, st.w_ie)
        c, cv = dcm_integrals(st.C_nb_k, st.dth1, st.dth2, st.v_k, st.v_k1, st.T, st.w_in)
        lev.append(float(np.max(np.abs(lv - q["lever_int"]))))
        ic.append(_normalized(c, q["int_C"], st.T))
        vmax = max(np.linalg.norm(st.v_k), np.linalg.norm(st.v_k1), 1.0)
        icv.append(_normalized(cv, q["int_Cv"], st.T * vmax))
    return np.array(lev), np.array(ic), np.array(icv)


def integral_suite(seed=0, n_steps: int = 1000) -> list:
    t0 = time.perf_counter()
    chunks = [(seed, k) for k in range(max(1, min(thread_count(), 8)))]
    per = int(np.ceil(n_steps / len(chunks)))

    def work(c):
        return integral_errors(np.random.default_rng(list(c)), per)

    res = fan_out(work, chunks)
    lev = np.concatenate([r[0] for r in res])[:n_steps]
    ic = np.concatenate([r[1] for r in res])[:n_steps]
    icv = np.concatenate([r[2] for r in res])[:n_steps]
    # oracle self-consistency: halve the node spacing on a few steps
    rng = np.random.default_rng([seed, 99])
    drift = 0.0
    for _ in range(20):
        st = random_mild_step(rng)
        a, b = step_quadrature(st, 10), step_quadrature(st, 20)
        drift = max(drift, float(np.max(np.abs(a["lever_int"] - b["lever_int"]))))
    dt = time.perf_counter() - t0
    return [
        Check("lever-arm velocity integral vs quadrature (m per step)", lev.max(), "<= 1e-7",
              lev.max() <= 1e-7, dt),
        Check("int C dt vs quadrature (rel. per element)", ic.max(), "<= 1e-5",
              ic.max() <= 1e-5, dt),
        Check("int C (v x) dt vs quadrature (rel. per element)", icv.max(), "<= 1e-5",
              icv.max() <= 1e-5, dt),
        Check("quadrature oracle refinement drift (m)", drift, "<= 1e-9", drift <= 1e-9, dt),
    ]


# pulse-velocity prefilter ---------------------------------------------------

def prefilter_errors(K: float = 59.8, T: float = 0.02, q: float | None = None, segments=None):
    """Prefilter error on the reference speed profile.

    Returns ``(t, err, sine_mask)``.
    """
    q = od.MeasConfig().prefilter_q if q is None else q
    prof = Profile(default_paper_trajectory() if segments is None else segments)
    n = int(round(prof.duration / T))
    t = (np.arange(n) + 1) * T
    u, _, _, _, _, d = prof.evaluate(t)
    est = od.run_prefilter(np.floor(K * d), T, q)
    return t, est - K * u, prof.sine_mask(t)


def prefilter_suite(seed=0, warmup: float = 10.0) -> list:
    t0 = time.perf_counter()
    t, e, sine = prefilter_errors()
    steady = (~sine) & (t > warmup)
    frac = float(np.mean(np.abs(e[steady]) < 0.5))
    spike = float(np.max(np.abs(e[sine])))
    # constant-rate stream at 500 p/s
    T = 0.02
    tt = (np.arange(int(60 / T)) + 1) * T
    c = od.run_prefilter(np.floor(500.0 * tt), T)
    frac_c = float(np.mean(np.abs(c[tt > warmup] - 500.0) < 0.5))
    # 2 m/s^2 constant acceleration from 5 m/s at K = 59.8
    K = 59.8
    acc = od.run_prefilter(np.floor(K * (5.0 * tt + tt**2)), T)
    track = float(np.max(np.abs(acc - K * (5.0 + 2.0 * tt))[tt > warmup]))
    dt = time.perf_counter() - t0
    return [
        Check("steady segments: share of |error| < 0.5 p/s", frac, ">= 0.95", frac >= 0.95, dt),
        Check("sine-acceleration segments: max |error| (p/s)", spike, "> 0.5", spike > 0.5, dt),
        Check("500 p/s stream: share of |error| < 0.5 p/s", frac_c, ">= 0.95", frac_c >= 0.95, dt),
        Check("2 m/s^2 ramp: max |error| (p/s)", track, "<= 1", track <= 1.0, dt),
    ]


SUITES = {"lemmas": lemma_suite, "jacobians": jacobian_suite, "integrals": integral_suite,
          "prefilter": prefilter_suite}


def run_suite(name: str, seed=0) -> list:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](seed=seed)
