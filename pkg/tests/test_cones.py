import math

import numpy as np
import pytest

from gravity_pingpong.cones import (Cone, check_cone_invariance, cone_at,
                                    curvature_evolution, curve_log_jacobian,
                                    distortion_check, distortion_check_backward,
                                    expansion_constants, least_expansion_sigma,
                                    monotonicity_cone_at, sigma_least_expansion,
                                    slope_step, slope_step_inverse)
from gravity_pingpong.curves import UnstableCurve
from gravity_pingpong.errors import CurveError, NotAdmissibleError
from gravity_pingpong.limit_map import TorusPoint
from gravity_pingpong.wall import n_profile, q_profile

Q1 = q_profile(1.0, 2.0)
N2 = n_profile(2.0, 1.0)
P = TorusPoint(0.3, 0.6)


# ----------------------------------------------------------------------
# cone fields

def test_cone_bounds_convex_regime():
    u = cone_at(P, Q1, "unstable")
    assert (u.slope_lo, u.slope_hi) == pytest.approx((2.0, 3.0))
    s = cone_at(P, Q1, "stable")
    assert (s.slope_lo, s.slope_hi) == pytest.approx((-1.0, -2.0 / 3.0))


def test_cone_bounds_concave_regime():
    u = cone_at(P, N2, "unstable")
    assert u.slope_hi == pytest.approx(-2.0)
    assert math.isinf(u.slope_lo)
    assert u.contains_slope(-5.0)
    assert u.contains_slope(math.inf)       # vertical is the other boundary
    assert not u.contains_slope(-1.0)
    s = cone_at(P, N2, "stable")
    assert s.contains_slope(3.0)
    assert not s.contains_slope(-3.0)


def test_cone_rejected_for_inadmissible_profile():
    bad = n_profile(1.0, 2.0)
    with pytest.raises(NotAdmissibleError):
        cone_at(P, bad, "unstable")


def test_monotonicity_cones_are_quadrants_in_convex_regime():
    u = monotonicity_cone_at(P, Q1, "unstable")
    assert u.contains_slope(0.5) and u.contains_slope(100.0)
    assert not u.contains_slope(-0.5)
    s = monotonicity_cone_at(P, Q1, "stable")
    assert s.contains_slope(-2.0) and not s.contains_slope(1.0)


def test_slope_step_hand_value_concave():
    # slope -3 at curvature -2, g = 1: image slope 2k + r/(1 + 2r/g) = -3.4
    assert slope_step(-3.0, -2.0, 1.0) == pytest.approx(-3.4)


def test_slope_step_inverse_inverts():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = rng.uniform(2.0, 3.0)
        k = 1.0
        fwd = slope_step(s, k, 2.0)
        # the inverse derivative at the image point uses the source curvature
        assert slope_step_inverse(fwd, k, 2.0) == pytest.approx(s, abs=1e-12)


def test_cone_invariance_no_violations():
    assert check_cone_invariance(Q1, 100_000, 11) == 0
    assert check_cone_invariance(N2, 100_000, 11) == 0


def test_cone_invariance_varying_curvature():
    # piecewise profile with nonconstant positive curvature
    prof = q_profile(1.0, 2.0)
    wobble = [(0.0, 0.5, (0.0, -0.55, 0.5, 0.2)),
              (0.5, 1.0, (0.0125, -0.4, 0.2, 0.4))]
    from gravity_pingpong.wall import WallMotion
    prof = WallMotion(wobble, g=2.0)
    assert prof.k_min > 0
    assert check_cone_invariance(prof, 50_000, 3) == 0


# ----------------------------------------------------------------------
# expansion constants

def test_expansion_constants_exact_values():
    rep = expansion_constants(Q1)
    assert rep.lam1 == pytest.approx(math.sqrt(5.0), abs=1e-12)
    assert rep.lam2 == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert rep.lam == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert rep.n0 == 13
    assert not rep.empirical


def test_n0_minimality():
    lam = math.sqrt(2.0)
    assert 6 * 12 / lam ** 12 >= 1.0
    assert 6 * 13 / lam ** 13 < 1.0


def test_expansion_holds_on_sampled_cone_vectors():
    rng = np.random.default_rng(1)
    rep = expansion_constants(Q1)
    t = rng.uniform(0, 1, 50_000)
    v = rng.uniform(0, 2, 50_000)
    t1 = (t + v) % 1.0
    ok = np.minimum(t1, 1 - t1) > 1e-9
    k1 = Q1.curvature_many(t1[ok])
    k0 = Q1.curvature_many(t[ok])
    slopes = 2.0 * k0 + rng.uniform(0, 1, ok.sum()) * (Q1.g / 2.0)
    vec = np.stack([np.ones(ok.sum()), slopes])
    vec /= np.hypot(vec[0], vec[1])
    img_t = vec[0] + vec[1] / 1.0          # [[1, 2/g], [2k, 4k/g+1]] at g=2
    img_v = 2 * k1 * vec[0] + (2 * k1 + 1.0) * vec[1]
    growth = np.hypot(img_t, img_v)
    assert growth.min() >= rep.lam - 1e-12


def test_noncontraction_on_monotonicity_cone():
    rng = np.random.default_rng(2)
    for profile in (Q1, N2):
        g = profile.g
        t = rng.uniform(0, 1, 20_000)
        v = rng.uniform(0, g, 20_000)
        t1 = (t + 2 * v / g) % 1.0
        ok = np.minimum(t1, 1 - t1) > 1e-9
        k1 = profile.curvature_many(t1[ok])
        n = int(ok.sum())
        if profile is Q1:
            angles = rng.uniform(0.0, 0.5 * math.pi, n)
        else:
            k0 = profile.curvature_many(t[ok])
            lo = 0.5 * math.pi
            hi = np.arctan(k0) + math.pi
            angles = lo + rng.uniform(0, 1, n) * (hi - lo)
        vec = np.stack([np.cos(angles), np.sin(angles)])
        img_t = vec[0] + (2.0 / g) * vec[1]
        img_v = 2 * k1 * vec[0] + (4 * k1 / g + 1.0) * vec[1]
        assert np.hypot(img_t, img_v).min() >= 1.0 - 1e-12


def test_empirical_constants_concave_regime():
    rep = expansion_constants(N2)
    assert rep.empirical
    assert rep.lam > 1.0
    assert rep.lam1 > rep.lam2 or rep.lam2 >= rep.lam
    # one-step sigma has the closed form sqrt(1+t) + sqrt(t), t = 8 here
    assert rep.sigma_one_step_min == pytest.approx(3.0 + math.sqrt(8.0), abs=1e-12)


# ----------------------------------------------------------------------
# least expansion coefficient

def test_sigma_one_step_value():
    val = least_expansion_sigma(P, Q1, 1)
    assert val == pytest.approx(math.sqrt(3.0) + math.sqrt(2.0), abs=1e-12)


def test_sigma_supermultiplicative():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 200:
        p = TorusPoint(rng.uniform(0, 1), rng.uniform(0, 2))
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, n))
        try:
            whole = least_expansion_sigma(p, Q1, n)
            first = least_expansion_sigma(p, Q1, m)
            # remaining steps start from the m-th image
            from gravity_pingpong.limit_map import torus_step
            q = p
            for _ in range(m):
                q, _ = torus_step(q, Q1)
            rest = least_expansion_sigma(q, Q1, n - m)
        except Exception:
            continue
        assert whole >= first * rest - 1e-9
        checked += 1


def test_sigma_exceeds_three_after_n0_steps():
    rng = np.random.default_rng(4)
    rep = expansion_constants(Q1)
    checked = 0
    while checked < 50:
        p = TorusPoint(rng.uniform(0, 1), rng.uniform(0, 2))
        try:
            val = least_expansion_sigma(p, Q1, rep.n0)
        except Exception:
            continue
        assert val > 3.0
        checked += 1


def test_sigma_concave_regime_uses_adapted_basis():
    val = least_expansion_sigma(P, N2, 1)
    assert val == pytest.approx(3.0 + math.sqrt(8.0), abs=1e-12)
    val2 = least_expansion_sigma(P, N2, 2)
    assert val2 >= val * val - 1e-9


def test_sigma_formula():
    assert sigma_least_expansion(2.0) == pytest.approx(math.sqrt(3) + math.sqrt(2))
    assert sigma_least_expansion(0.0) == 1.0
    assert sigma_least_expansion(-1e-18) == 1.0   # clamps FP noise


# ----------------------------------------------------------------------
# curvature transport

def test_curvature_decay_constant_profile():
    out = curvature_evolution(27.0, [2.0] * 5, Q1)
    # contraction factor 1/27 per step at the cone edge slope 2
    assert abs(out[1]) <= 1.0 + 1e-12
    for a, b in zip(out, out[1:]):
        assert abs(b) <= abs(a) / 27.0 + 1e-12


def test_curvature_zero_is_fixed_point():
    out = curvature_evolution(0.0, [2.3, 2.1, 2.9], Q1)
    assert np.all(out == 0.0)


def test_curvature_bound_with_jerk():
    from gravity_pingpong.wall import WallMotion
    prof = WallMotion([(0.0, 0.5, (0.0, -0.55, 0.5, 0.2)),
                       (0.5, 1.0, (0.0125, -0.4, 0.2, 0.4))], g=2.0)
    rng = np.random.default_rng(5)
    slopes = 2.0 * prof.k_min + rng.uniform(0, 1, 100)
    times = rng.uniform(0, 1, 100)
    out = curvature_evolution(5.0, slopes, prof, times=times)
    theta = 1.0 / (1.0 + 4.0 * prof.k_min / prof.g) ** 3
    bound = 2.0 * prof.max_jerk / (1.0 - theta) \
        + theta ** np.arange(101) * 5.0
    assert np.all(np.abs(out) <= bound + 1e-9)


def test_curvature_needs_times_when_jerk_nonzero():
    from gravity_pingpong.wall import WallMotion
    prof = WallMotion([(0.0, 0.5, (0.0, -0.55, 0.5, 0.2)),
                       (0.5, 1.0, (0.0125, -0.4, 0.2, 0.4))], g=2.0)
    with pytest.raises(ValueError):
        curvature_evolution(1.0, [2.0], prof)


def test_curvature_recursion_matches_curve_evolution():
    """Transported curvature equals the finite-difference curvature of an
    actually evolved curve (pins the sign of the recursion)."""
    g, s0, c0 = 2.0, 2.5, 4.0
    t0, v0 = 0.2, 0.31
    h = 1e-4
    ts = np.array([t0 - h, t0, t0 + h])
    vs = v0 + s0 * (ts - t0) + 0.5 * c0 * (ts - t0) ** 2
    t1 = ts + 2 * vs / g
    v1 = vs + 2 * Q1.slope_many(t1)
    psi1_pp = 2 * ((v1[2] - v1[1]) / (t1[2] - t1[1])
                   - (v1[1] - v1[0]) / (t1[1] - t1[0])) / (t1[2] - t1[0])
    predicted = curvature_evolution(c0, [s0], Q1)[1]
    assert psi1_pp == pytest.approx(predicted, rel=1e-5)


# ----------------------------------------------------------------------
# distortion

def test_distortion_vanishes_for_straight_curve_constant_curvature():
    cur = UnstableCurve.straight(TorusPoint(0.3, 0.35), 2.5, 1e-3,
                                 n_vertices=33)
    assert distortion_check(cur, Q1) == pytest.approx(0.0, abs=1e-9)


def test_distortion_finite_and_stable_under_refinement():
    # curved curve: quadratic graph with slope inside the unstable cone
    def build(n):
        ts = np.linspace(0.0, 1e-2, n)
        slopes = 2.2 + 30.0 * ts
        vs = 0.35 + 2.2 * ts + 15.0 * ts ** 2
        pts = np.column_stack([0.3 + ts, vs])
        return UnstableCurve(pts, slopes, np.full(n, 30.0))

    d1 = distortion_check(build(65), Q1)
    d2 = distortion_check(build(257), Q1)
    assert d1 > 0.0
    assert d1 == pytest.approx(d2, rel=0.05)


def test_distortion_rejects_curve_crossing_singularity():
    cur = UnstableCurve.straight(TorusPoint(0.4, 0.6), 2.5, 1e-2,
                                 n_vertices=17)
    with pytest.raises(CurveError):
        distortion_check(cur, Q1)


def test_backward_distortion_bounded_by_curve_length():
    def build(length):
        n = 65
        ts = np.linspace(0.0, length, n)
        slopes = 2.2 + 3.0 * ts
        vs = 0.37 + 2.2 * ts + 1.5 * ts ** 2
        pts = np.column_stack([0.31 + ts, vs])
        return UnstableCurve(pts, slopes, np.full(n, 3.0))

    spreads = []
    for length in (4e-3, 2e-3, 1e-3):
        spreads.append(distortion_check_backward(build(length), Q1, 5))
    # halving |W| roughly halves the backward log-Jacobian spread
    assert spreads[0] > spreads[1] > spreads[2] >= 0.0
    assert spreads[0] / spreads[2] == pytest.approx(4.0, rel=0.5)


def test_curve_log_jacobian_matches_matrix_norm():
    rng = np.random.default_rng(6)
    for _ in range(50):
        s = rng.uniform(2.0, 3.0)
        k1 = 1.0
        jac = np.array([[1.0, 1.0], [2 * k1, 2 * k1 + 1.0]])
        vec = np.array([1.0, s]) / math.hypot(1.0, s)
        expected = math.log(np.linalg.norm(jac @ vec))
        assert curve_log_jacobian(s, k1, 2.0) == pytest.approx(expected)
