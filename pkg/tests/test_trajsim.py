import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insod.errors import InsufficientSamples, InvalidSegment
from insod.frames import curvature_matrix, earth_rate_n, gravity
from insod.trajsim import (DEFAULT_ORIGIN, NoiseSchedule, Profile, SegmentSpec, SensorSpec,
                           build_trajectory, default_paper_trajectory, encode_odometer,
                           imu_from_truth, inject_noise, lemma_stats, pulse_error_stats,
                           randomized_pulse_errors)



def test_still_segment():
    tr = build_trajectory([SegmentSpec("still", 10.0)], DEFAULT_ORIGIN, 0.0, 0.01)
    assert np.all(tr.v == 0.0)
    assert np.all(tr.d == 0.0)
    assert np.allclose(tr.p, DEFAULT_ORIGIN)


def test_const_speed_north_distance():
    tr = build_trajectory([SegmentSpec("const_speed", 100.0, speed=10.0)], DEFAULT_ORIGIN, 0.0, 0.01)
    assert tr.d[-1] == pytest.approx(1000.0, abs=0.01 * 10.0)
    assert np.allclose(tr.v[:, 0], 10.0)
    assert np.allclose(tr.v[:, 1:], 0.0, atol=1e-9)
    # northbound arc length from the meridian radius
    from insod.frames import radii

    dlat = tr.p[-1, 1] - tr.p[0, 1]
    _, R_N = radii(0.5 * (tr.p[-1, 1] + tr.p[0, 1]))
    assert dlat * (R_N + DEFAULT_ORIGIN[2]) == pytest.approx(1000.0, abs=1e-3)


def test_segment_validation():
    with pytest.raises(InvalidSegment):
        SegmentSpec("const_speed", 10.0, speed=-1.0)
    with pytest.raises(InvalidSegment):
        SegmentSpec("hover", 10.0)
    with pytest.raises(InvalidSegment):
        SegmentSpec("still", 0.0)
    with pytest.raises(InvalidSegment):
        Profile([SegmentSpec("const_speed", 5.0, speed=2.0), SegmentSpec("const_accel", 5.0, accel=-1.0)])
    with pytest.raises(InvalidSegment):
        Profile([])


@given(st.lists(st.tuples(st.sampled_from(["const_speed", "const_accel", "sine_accel", "turn"]),
                          st.floats(2.0, 30.0), st.floats(0.0, 25.0), st.floats(-0.5, 0.5)),
                min_size=1, max_size=8))
@settings(max_examples=40, deadline=None)
def test_profile_speed_continuous_and_distance_monotone(spec):
    segs = [SegmentSpec("const_speed", 5.0, speed=5.0)]
    for kind, D, sp, x in spec:
        if kind == "const_accel":
            segs.append(SegmentSpec(kind, D, accel=abs(x)))
        elif kind == "sine_accel":
            segs.append(SegmentSpec(kind, D, speed=sp))
        elif kind == "turn":
            segs.append(SegmentSpec(kind, D, turn_rate=x * 0.3, ramp=min(1.0, D / 2)))
        else:
            segs.append(SegmentSpec(kind, D))
    prof = Profile(segs)
    t = np.linspace(0.0, prof.duration, 4001)
    u, _, chi, _, _, d = prof.evaluate(t)
    assert np.all(u >= -1e-9)
    assert np.all(np.diff(d) >= -1e-9)
    # speed continuity across every boundary
    for p in prof.pieces[1:]:
        a, b = prof.evaluate(np.array([p.t0 - 1e-7, p.t0 + 1e-7]))[0]
        assert abs(a - b) < 1e-4


def test_default_trajectory_structure():
    segs = default_paper_trajectory()
    prof = Profile(segs)
    assert prof.duration == pytest.approx(5000.0)
    assert sum(s.kind == "turn" for s in segs) == 5
    # holds in every 120 s period at 0-10, 20-80 and 90-120 s
    t = np.arange(0.0, 5000.0, 0.5)
    u_dot = prof.evaluate(t)[1]
    phase = np.mod(t, 120.0)
    hold = (phase < 10) | ((phase > 20) & (phase < 80)) | (phase > 90)
    assert np.all(np.abs(u_dot[hold]) < 1e-12)
    assert np.all(np.abs(u_dot[(phase > 11) & (phase < 19)]) > 0)
    assert np.all(np.abs(u_dot[(phase > 81) & (phase < 89)]) > 0)
    # the route ends with a long straight
    last_turn = max(p.t1 for p in prof.pieces if p.rate != 0)
    assert 5000.0 - last_turn > 1000.0


def test_default_trajectory_distance(reference):
    truth, _ = reference
    assert 70e3 <= truth.d[-1] <= 82e3


def test_truth_kinematics_consistent(short_truth):
    tr = short_truth
    assert np.all(np.diff(tr.d) >= 0)
    # central difference of position against R_c v
    i = np.arange(1, len(tr) - 1, 97)
    dt = tr.t[2] - tr.t[0]
    for k in i:
        pd = (tr.p[k + 1] - tr.p[k - 1]) / dt
        Rc = curvature_matrix(tr.p[k])
        ref = Rc @ tr.v[k]
        assert np.allclose(pd, ref, rtol=1e-4, atol=1e-11)
        C = tr.C_bn[k]
        assert np.max(np.abs(C @ C.T - np.eye(3))) < 1e-9


def test_imu_statics():
    spec = SensorSpec.perfect(psi=0.0, theta=0.0, lever=np.zeros(3))
    tr = build_trajectory([SegmentSpec("still", 2.0)], DEFAULT_ORIGIN, 0.4, 0.01)
    imu = imu_from_truth(tr, spec, seed=0)
    C_nb = tr.C_bn[0].T
    h = 0.5 * spec.T
    w = C_nb @ earth_rate_n(DEFAULT_ORIGIN[1])
    f = -C_nb @ gravity(DEFAULT_ORIGIN[1], DEFAULT_ORIGIN[2])
    assert np.allclose(imu.dth1, w * h, rtol=1e-9, atol=1e-18)
    assert np.allclose(imu.dth2, w * h, rtol=1e-9, atol=1e-18)
    assert np.allclose(imu.dv1, f * h, rtol=1e-9)
    assert np.allclose(imu.dv2, f * h, rtol=1e-9)


def test_imu_noise_is_seeded(short_truth, short_spec):
    a = imu_from_truth(short_truth, short_spec, seed=7)
    b = imu_from_truth(short_truth, short_spec, seed=7)
    c = imu_from_truth(short_truth, short_spec, seed=8)
    assert np.array_equal(a.dth1, b.dth1)
    assert not np.array_equal(a.dth1, c.dth1)
    assert np.allclose(np.diff(a.t), short_spec.T)


def test_zero_noise_strapdown_round_trip(short_truth):
    from insod.frames import local_offset
    from insod.strapdown import NavState, strapdown_step

    spec = SensorSpec.perfect()
    imu = imu_from_truth(short_truth, spec)
    nav = NavState(short_truth.C_bn[0].copy(), short_truth.v[0].copy(), short_truth.p[0].copy())
    for k in range(len(imu)):
        nav, _ = strapdown_step(nav, imu.dth1[k], imu.dth2[k], imu.dv1[k], imu.dv2[k], spec.T)
    i = int(np.searchsorted(short_truth.t, imu.t[-1] - 1e-9))
    err = local_offset(short_truth.p[i], nav.p)
    km = short_truth.d[-1] / 1e3
    assert math.hypot(err[0], err[2]) < 1e-3 * km


def test_encode_examples():
    spec = SensorSpec(K=59.8)
    fake = SimpleNamespace(t=np.array([0.0, 1.0]), d=np.array([0.0, 1.0]))
    odo = encode_odometer(fake, spec, times=np.array([0.0, 1.0]))
    assert list(odo.N) == [0, 59]
    for dp0 in (0.0, 0.3, 0.999):
        odo = encode_odometer(fake, SensorSpec(dp0=dp0), times=np.array([0.0]))
        assert odo.N[0] == 0


@given(st.floats(0.0, 0.999), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_quantization_bound(dp0, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(20000) * 0.02
    d = np.cumsum(rng.uniform(0.0, 30.0, t.size) * 0.02)
    spec = SensorSpec(dp0=dp0)
    odo = encode_odometer(SimpleNamespace(t=t, d=d), spec, times=t)
    e = odo.N - spec.K * d
    assert np.all(e > dp0 - 1.0 - 1e-9) and np.all(e <= dp0 + 1e-9)
    assert np.all(np.diff(odo.N) >= 0)


def test_encode_on_truth_is_monotone(short_truth, short_spec):
    odo = encode_odometer(short_truth, short_spec)
    assert np.all(np.diff(odo.N) >= 0)
    assert len(odo) == round(short_truth.t[-1] / short_spec.T)


def test_constant_speed_errors_differ_by_constant():
    K, T, u = 59.8, 0.02, 13.37
    t = np.arange(1, 5001) * T
    d = u * t
    N = np.floor(K * d)
    e = N - K * d
    de = np.diff(e)
    c = -K * u * T
    # increments are the constant -K u T plus an integer carry
    frac = de - c - np.round(de - c)
    assert np.max(np.abs(frac)) < 1e-9


def test_inject_noise():
    t = np.arange(0.0, 3.0e4, 1.0)
    x = np.arange(t.size, dtype=float)
    assert np.array_equal(inject_noise(t, x, NoiseSchedule([]), seed=1), x)
    sch = NoiseSchedule([(1000.0, 21000.0, 2.0)])
    y = inject_noise(t, x, sch, seed=1)
    inside = (t >= 1000.0) & (t < 21000.0)
    assert np.array_equal(y[~inside], x[~inside])
    var = np.var(y[inside] - x[inside])
    assert 3.8 <= var <= 4.2
    assert abs(np.mean(y[inside] - x[inside])) < 0.1


def test_reference_schedule():
    s = NoiseSchedule.reference_schedule("pa")
    assert [(w.start, w.std) for w in s.windows] == [(0.0, 0.5), (1000.0, 2.0), (3000.0, 5.0)]
    s = NoiseSchedule.reference_schedule("pv")
    assert [w.std for w in s.windows] == [0.5, 5.0, 20.0]
    assert s.std_at(np.array([500.0, 2000.0, 5000.0])).tolist() == [0.5, 5.0, 20.0]
    with pytest.raises(ValueError):
        NoiseSchedule([(0.0, 10.0, 1.0), (5.0, 20.0, 1.0)])


def test_lemma_statistics():
    e, dp0 = randomized_pulse_errors(200_000, seed=11)
    s = pulse_error_stats(e, dp0)
    assert s.bound_ok
    assert s.accum_var == pytest.approx(1 / 12, rel=0.05)
    assert s.incr_var == pytest.approx(1 / 6, rel=0.05)
    assert s.incr_lag1 == pytest.approx(-1 / 12, rel=0.10)
    assert s.chi2_pvalue > 0.01
    assert len(s.accum_hist) >= 20


def test_lemma_stats_needs_samples(short_truth, short_spec):
    odo = encode_odometer(short_truth, short_spec, times=np.linspace(1, 100, 500))
    with pytest.raises(InsufficientSamples):
        lemma_stats(odo, short_truth, short_spec)
    with pytest.raises(InsufficientSamples):
        pulse_error_stats(np.zeros(10), 0.0)


def test_sensor_spec_validation():
    with pytest.raises(ValueError):
        SensorSpec(K=0.0)
    with pytest.raises(ValueError):
        SensorSpec(dp0=1.0)
    with pytest.raises(ValueError):
        SensorSpec(T=0.0)
