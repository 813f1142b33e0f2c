"""Acceptance criteria 1-10.

Every test logs one ``criterion N: PASS|FAIL ...`` line (printed in the
terminal summary) before asserting. Closed-loop runs are cached so the
criteria that share a run compute it once.
"""
import functools
import time

import numpy as np
import pytest

from insod.config import InitSpec
from insod.experiments import adapted_std_tracking, filter_for, reference_run
from insod.fusion import INJECTION_BANKS
from insod.odometry import MeasKind
from insod.trajsim import DEG, UG, NoiseSchedule, SensorSpec
from insod.verify import run_suite

KINDS = ("pa", "pi", "pv")
CLOSED_LOOP_SEEDS = range(1, 6)
LEVER_SEEDS = range(1, 11)


def _record(log, n, passed, detail):
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}"
    log.append(line)
    print(line)
    return line


@functools.lru_cache(maxsize=None)
def _run(kind, seed):
    t0 = time.perf_counter()
    _, summary, _ = reference_run(kind, seed)
    return summary, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def _suite(name):
    t0 = time.perf_counter()
    checks = run_suite(name, seed=0)
    return checks, time.perf_counter() - t0


def _checks_line(checks):
    return "; ".join(f"{c.name} {c.value:.4g} ({c.tol})" for c in checks)


def test_criterion_1_accumulated_error_statistics(acceptance_log):
    checks, dt = _suite("lemmas")
    acc = [c for c in checks if c.name.startswith("accumulated")]
    ok = all(c.passed for c in acc) and len(acc) == 3 and dt < 10.0
    line = _record(acceptance_log, 1, ok, f"{_checks_line(acc)}; suite {dt:.1f} s (< 10 s)")
    assert ok, line


def test_criterion_2_increment_error_statistics(acceptance_log):
    checks, dt = _suite("lemmas")
    inc = [c for c in checks if c.name.startswith("increment")]
    ok = all(c.passed for c in inc) and len(inc) == 2 and dt < 10.0
    line = _record(acceptance_log, 2, ok, f"{_checks_line(inc)}; suite {dt:.1f} s (< 10 s)")
    assert ok, line


def test_criterion_3_measurement_jacobians(acceptance_log):
    checks, dt = _suite("jacobians")
    ok = all(c.passed for c in checks) and dt < 5.0
    line = _record(acceptance_log, 3, ok, f"{_checks_line(checks)}; {dt:.1f} s (< 5 s)")
    assert ok, line


def test_criterion_4_closed_form_integrals(acceptance_log):
    checks, dt = _suite("integrals")
    ok = all(c.passed for c in checks) and dt < 30.0
    line = _record(acceptance_log, 4, ok, f"{_checks_line(checks)}; {dt:.1f} s (< 30 s)")
    assert ok, line


def test_criterion_5_prefilter_accuracy(acceptance_log):
    checks, _ = _suite("prefilter")
    profile = [c for c in checks if c.name.startswith(("steady", "sine"))]
    ok = all(c.passed for c in profile) and len(profile) == 2
    line = _record(acceptance_log, 5, ok, _checks_line(profile))
    assert ok, line


def test_criterion_6_closed_loop_accuracy(acceptance_log):
    med, worst, slowest = {}, 0.0, 0.0
    for kind in KINDS:
        runs = [_run(kind, s) for s in CLOSED_LOOP_SEEDS]
        med[kind] = float(np.median([r.herr for r, _ in runs]))
        worst = max(worst, max(r.herr_rel for r, _ in runs))
        slowest = max(slowest, max(dt for _, dt in runs))
    ordering = med["pv"] <= med["pa"] and med["pv"] <= med["pi"]
    ok = worst <= 5e-4 and ordering and slowest < 300.0
    detail = (f"worst final error {100 * worst:.4f}% of distance (<= 0.05%); median final "
              f"error PA {med['pa']:.2f} m, PI {med['pi']:.2f} m, PV {med['pv']:.2f} m "
              f"(PV lowest: {ordering}); slowest run {slowest:.0f} s")
    line = _record(acceptance_log, 6, ok, detail)
    assert ok, line


def _forward_lever_stats(kind):
    lx = np.array([_run(kind, s)[0].dlever[0] for s in LEVER_SEEDS])
    return lx.mean(), lx.std(ddof=1) / np.sqrt(lx.size)


def test_criterion_7_forward_lever_bias(acceptance_log):
    m_pi, se_pi = _forward_lever_stats("pi")
    m_pv, se_pv = _forward_lever_stats("pv")
    pi_biased = abs(m_pi) > 2 * se_pi
    pv_biased = abs(m_pv) > 2 * se_pv
    ok = pi_biased and not pv_biased
    detail = (f"forward lever error over {len(LEVER_SEEDS)} seeds: PI mean {m_pi:+.4f} m "
              f"(SE {se_pi:.4f}, biased: {pi_biased}), PV mean {m_pv:+.4f} m "
              f"(SE {se_pv:.4f}, biased: {pv_biased})")
    line = _record(acceptance_log, 7, ok, detail)
    assert ok, line


@functools.lru_cache(maxsize=None)
def _mmae_pair(kind):
    k = MeasKind.parse(kind)
    sched = NoiseSchedule.reference_schedule(k)
    _, fixed, _ = reference_run(k, 1, filter_for(k, schedule=sched, baseline=True))
    cfg = filter_for(k, mmae=True, schedule=sched)
    out, adaptive, _ = reference_run(k, 1, cfg)
    shares = adapted_std_tracking(out, sched, INJECTION_BANKS[k], cfg.weight_floor)
    return fixed.herr, adaptive.herr, shares


def test_criterion_8_adaptive_model_bank(acceptance_log):
    ok, parts = True, []
    for kind in KINDS:
        fixed, adaptive, shares = _mmae_pair(kind)
        good = adaptive < fixed and min(shares) >= 0.7
        ok &= good
        parts.append(f"{kind.upper()} adaptive {adaptive:.2f} m vs fixed {fixed:.2f} m, "
                     f"tracking {'/'.join(f'{s:.2f}' for s in shares)}")
    line = _record(acceptance_log, 8, ok, "; ".join(parts) + " (tracking >= 0.70 per window)")
    assert ok, line


def test_criterion_9_parameter_convergence(acceptance_log):
    runs = [_run(kind, s)[0] for kind in KINDS for s in CLOSED_LOOP_SEEDS]
    dK = max(abs(r.dK_rel) for r in runs)
    dmount = max(max(abs(r.dpsi), abs(r.dtheta)) for r in runs)
    dba = max(float(np.max(np.abs(r.dba))) for r in runs)
    ok = dK <= 1e-3 and dmount <= 0.05 * DEG and dba <= 10 * UG
    detail = (f"worst over {len(runs)} runs: |dK|/K {100 * dK:.4f}% (<= 0.1%), mounting "
              f"{np.degrees(dmount):.4f} deg (<= 0.05), accel bias {dba / UG:.2f} ug (<= 10)")
    line = _record(acceptance_log, 9, ok, detail)
    assert ok, line


def test_criterion_10_zero_error_sanity(acceptance_log):
    spec = SensorSpec.perfect()
    out, summary, _ = reference_run("pa", 1, spec=spec, init=InitSpec.exact(spec))
    settle = out.t > 100.0  # transient of the initial covariance
    r = out.innov[settle, 0]
    # The count minus the true distance in pulses lies in (dp0 - 1, dp0]. The
    # filter models round-off as zero-mean and absorbs the -1/2 mean into the
    # pulse state, so the same unit-width band is centred on the mean innovation.
    c = float(r.mean())
    inside = (r > c - 0.5) & (r <= c + 0.5)
    ok = summary.herr < 1.0 and bool(np.all(inside))
    detail = (f"final horizontal error {summary.herr:.3f} m over {summary.distance / 1e3:.1f} km "
              f"(< 1 m); PA innovations after 100 s in [{r.min():.3f}, {r.max():.3f}], "
              f"{100 * inside.mean():.1f}% inside ({c - 0.5:.3f}, {c + 0.5:.3f}] (all required)")
    line = _record(acceptance_log, 10, ok, detail)
    assert ok, line


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
