import math

import numpy as np
import pytest

from gravity_pingpong.collision import (CollisionState, StepOutcome,
                                        fast_velocity_threshold, flight_time,
                                        jacobian_fd, limit_map_deviation,
                                        reflect_velocity, simulate_orbit, step,
                                        step_many)
from gravity_pingpong.errors import (GrazingCollision,
                                     NonPositiveRelativeVelocity,
                                     SingularCollision)
from gravity_pingpong.wall import WallMotion, n_profile, q_profile

Q1 = q_profile(1.0, 2.0)
N2 = n_profile(2.0, 1.0)


def oracle_flight_time(t0, v0, profile, ds=1e-4, iters=80):
    """Independent root finder: dense scan of the flight residual plus plain
    bisection.  Knows nothing about the production solver internals."""
    g = profile.g
    f0 = profile.height(t0)

    def r(s):
        return f0 + v0 * s - 0.5 * g * s * s - profile.height(t0 + s)

    horizon = 2.0 * v0 / g + 4.0
    s_prev = ds * 1e-6
    s = ds
    while s < horizon:
        if r(s) < 0.0:
            lo, hi = s_prev, s
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                if r(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        s_prev = s
        s += ds
    raise AssertionError("oracle found no root")


# ----------------------------------------------------------------------
# flight times

def test_flight_symmetric_bounce():
    st = CollisionState.from_tv(0.25, 0.5, Q1)
    assert st.w == pytest.approx(0.75)
    assert flight_time(st, Q1) == pytest.approx(0.5, abs=1e-12)


def test_flight_q1_against_oracle():
    # residual factors as s (1.3 - 1.5 s): the root is exactly 13/15
    st = CollisionState.from_tv(0.1, 0.9, Q1)
    s = flight_time(st, Q1)
    assert s == pytest.approx(13.0 / 15.0, abs=1e-12)
    assert s == pytest.approx(oracle_flight_time(0.1, 0.9, Q1), abs=1e-8)


def test_flight_n2_against_oracle():
    # the first two period windows have no root; algebra on the third gives
    # s = 3.6 - sqrt(3.36)
    st = CollisionState.from_tv(0.3, 0.8, N2)
    s = flight_time(st, N2)
    assert s == pytest.approx(3.6 - math.sqrt(3.36), abs=1e-12)
    assert s == pytest.approx(oracle_flight_time(0.3, 0.8, N2), abs=1e-8)


def test_flight_random_states_match_oracle():
    rng = np.random.default_rng(7)
    for profile in (Q1, N2):
        for _ in range(25):
            t0 = rng.uniform(0.0, 1.0)
            v0 = rng.uniform(0.5, 4.0)
            if v0 - profile.slope(t0) <= 0.05:
                continue
            st = CollisionState.from_tv(t0, v0, profile)
            try:
                s = flight_time(st, profile)
            except (SingularCollision, GrazingCollision):
                continue
            assert s == pytest.approx(oracle_flight_time(t0, v0, profile),
                                      abs=1e-7)


def test_flight_requires_positive_relative_velocity():
    with pytest.raises(NonPositiveRelativeVelocity):
        CollisionState.from_tv(0.25, -0.25, Q1)  # w = 0 exactly
    bad = CollisionState(t=0.25, v=0.0, w=0.0, n=0)
    with pytest.raises(NonPositiveRelativeVelocity):
        flight_time(bad, Q1)


def test_singular_collision_detected():
    # from (0.5, 0.75) the bounce lands exactly on the corner time t = 1
    st = CollisionState.from_tv(0.5, 0.75, Q1)
    with pytest.raises(SingularCollision):
        flight_time(st, Q1)


def test_grazing_collision_detected():
    # crafted profile with residual s (s - 0.3)^2 from (t, v) = (0, 0.09):
    # tangential contact at s = 0.3 (profile is not periodic; the solver
    # does not require admissibility)
    prof = WallMotion([(0.0, 1.0, (0.0, 0.0, -0.4, -1.0))], g=2.0)
    st = CollisionState(t=0.0, v=0.09, w=0.09, n=0)
    with pytest.raises(GrazingCollision):
        flight_time(st, prof)


# ----------------------------------------------------------------------
# the step map

def test_step_hand_example():
    st = CollisionState.from_tv(0.25, 0.5, Q1)
    out = step(st, Q1)
    assert out.next.t == pytest.approx(0.75, abs=1e-9)
    assert out.next.v == pytest.approx(1.0, abs=1e-9)
    assert out.next.w == pytest.approx(0.75, abs=1e-9)
    assert out.s == pytest.approx(0.5, abs=1e-9)
    expected = np.array([[1.0 / 3.0, 2.0 / 3.0], [-2.0 / 3.0, 5.0 / 3.0]])
    assert np.allclose(out.jac, expected, atol=1e-9)
    assert np.linalg.det(out.jac) == pytest.approx(1.0, abs=1e-12)


def test_step_composes_flight_and_reflection():
    out = step(CollisionState.from_tv(0.1, 0.9, Q1), Q1)
    assert out.next.t == pytest.approx(29.0 / 30.0, abs=1e-12)
    assert out.next.v == pytest.approx(53.0 / 30.0, abs=1e-12)
    assert out.next.w == pytest.approx(1.3, abs=1e-12)


def test_reflection_is_an_involution():
    rng = np.random.default_rng(2)
    for _ in range(100):
        v, s, t1 = rng.uniform(-3, 3), rng.uniform(0, 2), rng.uniform(0, 5)
        once = reflect_velocity(v, s, t1, Q1)
        twice = -once + Q1.g * s + 2.0 * Q1.slope(t1)
        assert twice == pytest.approx(v, abs=1e-12)


def test_determinant_identity_random_states():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 1000:
        t0 = rng.uniform(0.0, 1.0)
        v0 = rng.uniform(1.0, 60.0)
        st = CollisionState.from_tv(t0, v0, Q1)
        try:
            out = step(st, Q1)
        except (SingularCollision, GrazingCollision):
            continue
        det = float(np.linalg.det(out.jac))
        assert det == pytest.approx(st.w / out.next.w, abs=1e-9)
        checked += 1


def test_energy_bookkeeping_between_collisions():
    rng = np.random.default_rng(4)
    g = Q1.g
    for _ in range(50):
        st = CollisionState.from_tv(rng.uniform(0, 1), rng.uniform(1, 10), Q1)
        try:
            out = step(st, Q1)
        except (SingularCollision, GrazingCollision):
            continue
        s = out.s
        # the free-fall parabola meets the wall at both endpoints
        h_start = Q1.height(st.t)
        h_end = h_start + st.v * s - 0.5 * g * s * s
        assert h_end == pytest.approx(Q1.height(st.t + s), abs=1e-10)
        # velocity immediately before impact
        v_before = st.v - g * s
        assert out.next.v == pytest.approx(
            -v_before + 2.0 * Q1.slope(out.next.t), abs=1e-10)


# ----------------------------------------------------------------------
# finite-difference cross-checks

def test_jacobian_fd_matches_analytic():
    st = CollisionState.from_tv(0.25, 0.5, Q1)
    out = step(st, Q1)
    fd = jacobian_fd(st, Q1, h=1e-6)
    assert np.allclose(fd, out.jac, atol=1e-4)
    assert np.linalg.det(fd) == pytest.approx(st.w / out.next.w, abs=1e-4)


def test_jacobian_fd_second_order_convergence():
    st = CollisionState.from_tv(0.37, 1.9, Q1)
    exact = step(st, Q1).jac
    err = {}
    for h in (1e-2, 1e-3):
        err[h] = np.abs(jacobian_fd(st, Q1, h=h) - exact).max()
    order = math.log(err[1e-2] / err[1e-3]) / math.log(10.0)
    assert 1.5 < order < 2.5


# ----------------------------------------------------------------------
# orbits

def test_simulate_orbit_single_step():
    rec = simulate_orbit(CollisionState.from_tv(0.25, 0.5, Q1), Q1, 1)
    assert rec.termination == "completed"
    assert len(rec.states) == 2
    assert rec.states[1].t == pytest.approx(0.75, abs=1e-9)
    assert rec.states[1].v == pytest.approx(1.0, abs=1e-9)


def test_orbit_time_increases_and_w_positive():
    rec = simulate_orbit(CollisionState.from_tv(0.123, 50.0, Q1), Q1, 2000)
    assert rec.termination == "completed"
    ts = [st.t for st in rec.states]
    assert all(b > a for a, b in zip(ts, ts[1:]))
    assert all(st.w > 0 for st in rec.states)
    assert rec.v_min <= 50.0 <= rec.v_max


def test_orbit_escape_threshold():
    rec = simulate_orbit(CollisionState.from_tv(0.123, 50.0, Q1), Q1, 100_000,
                         v_escape=55.0, keep_states=False)
    assert rec.termination in ("escaped-threshold", "completed")
    if rec.termination == "escaped-threshold":
        assert rec.v_max >= 55.0


# ----------------------------------------------------------------------
# vectorised path

def test_step_many_agrees_with_scalar():
    rng = np.random.default_rng(5)
    for profile in (Q1, N2):
        t = rng.uniform(0.0, 1.0, 400)
        v = rng.uniform(0.5, 300.0, 400)
        t1, v1, w1, s, code = step_many(t, v, profile)
        for i in range(0, 400, 17):
            if code[i] != 0:
                continue
            out = step(CollisionState.from_tv(t[i], v[i], profile), profile)
            assert s[i] == pytest.approx(out.s, abs=1e-9)
            assert v1[i] == pytest.approx(out.next.v, abs=1e-9)


def test_step_many_flags_low_energy():
    t1, v1, w1, s, code = step_many(np.array([0.25]), np.array([-0.25]), Q1)
    assert code[0] == 3  # low energy
    assert np.isnan(s[0])


def test_limit_map_deviation_scales_like_inverse_velocity():
    rng = np.random.default_rng(6)
    vs = np.logspace(2, 5, 10) * (1.0 + rng.uniform(0.01, 0.09, 10))
    med = []
    for vv in vs:
        t = rng.uniform(0.0, 1.0, 64)
        err = limit_map_deviation(t, np.full(64, vv), Q1)
        med.append(np.nanmedian(err))
    slope = np.polyfit(np.log(vs), np.log(med), 1)[0]
    assert -1.15 < slope < -0.85


def test_fast_threshold_is_moderate():
    assert 2.0 < fast_velocity_threshold(Q1) < 20.0
