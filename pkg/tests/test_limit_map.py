import math

import numpy as np
import pytest
from scipy import stats as sps

from gravity_pingpong.cones import monotonicity_cone_at
from gravity_pingpong.errors import SingularHit
from gravity_pingpong.limit_map import (CylinderPoint, TorusPoint,
                                        distance_to_singularity,
                                        distance_to_splus, limit_step,
                                        reduce_torus, singularity_set,
                                        torus_jacobian, torus_step,
                                        torus_step_inverse, torus_step_many,
                                        winding_bound)
from gravity_pingpong.wall import n_profile, q_profile

Q1 = q_profile(1.0, 2.0)
N2 = n_profile(2.0, 1.0)


# ----------------------------------------------------------------------
# the maps

def test_limit_step_symmetric_point():
    assert limit_step(0.0, 0.5, Q1) == pytest.approx((0.5, 0.5))


def test_limit_step_hand_value():
    t1, v1 = limit_step(0.1, 0.3, Q1)
    assert (t1, v1) == pytest.approx((0.4, 0.1))


def test_limit_step_agrees_with_collision_map_at_symmetric_point():
    # the closed form reproduces the hand-checked collision step here
    t1, v1 = limit_step(0.25, 0.5, Q1)
    assert (t1 % 1.0, v1) == pytest.approx((0.75, 1.0))


def test_limit_step_singular_hit():
    with pytest.raises(SingularHit):
        limit_step(0.5, 0.5, Q1)    # image time 0.5 + 0.5 = 1 exactly


def test_torus_step_examples():
    p, gamma = torus_step(TorusPoint(0.1, 1.8), Q1)
    assert (p.t, p.v) == pytest.approx((0.9, 0.6))
    assert gamma == 1
    p, gamma = torus_step(TorusPoint(0.9, 0.3), Q1)
    assert (p.t, p.v) == pytest.approx((0.2, 1.7))
    assert gamma == -1
    p, gamma = torus_step(TorusPoint(0.0, 0.5), Q1)
    assert (p.t, p.v) == pytest.approx((0.5, 0.5))
    assert gamma == 0


def test_torus_step_inverse_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = TorusPoint(rng.uniform(0, 1), rng.uniform(0, Q1.g))
        try:
            q, _ = torus_step(p, Q1)
            back = torus_step_inverse(q, Q1)
        except SingularHit:
            continue
        assert back.t == pytest.approx(p.t, abs=1e-10)
        assert back.v == pytest.approx(p.v, abs=1e-10)


def test_commutation_with_reduction():
    rng = np.random.default_rng(1)
    count = 0
    while count < 2000:
        t = rng.uniform(0.0, 1.0)
        v = rng.uniform(0.01, 3.0 * Q1.g)
        try:
            t1, v1 = limit_step(t, v, Q1)
            q, _ = torus_step(reduce_torus(t, v, Q1.g), Q1)
        except SingularHit:
            continue
        r = reduce_torus(t1, v1, Q1.g)
        assert abs(r.t - q.t) < 1e-12
        assert abs(r.v - q.v) < 1e-12
        count += 1


def test_winding_bound_holds():
    bound = winding_bound(Q1)
    rng = np.random.default_rng(2)
    t, v = rng.uniform(0, 1, 100_000), rng.uniform(0, Q1.g, 100_000)
    _, _, gamma, singular = torus_step_many(t, v, Q1)
    assert np.abs(gamma[~singular]).max() <= bound


def test_cylinder_point_decomposition():
    p = CylinderPoint(0.3, 7.1)
    assert p.winding(2.0) == 3
    q = p.torus(2.0)
    assert q.v == pytest.approx(1.1)
    assert q.t == pytest.approx(0.3)


# ----------------------------------------------------------------------
# jacobians and measure preservation

def test_torus_jacobian_constant_curvature():
    assert np.allclose(torus_jacobian(TorusPoint(0.3, 0.6), Q1),
                       [[1.0, 1.0], [2.0, 3.0]])
    assert np.allclose(torus_jacobian(TorusPoint(0.3, 0.6), N2),
                       [[1.0, 2.0], [-4.0, -7.0]])


def test_torus_jacobian_determinant_exactly_one():
    rng = np.random.default_rng(3)
    for profile in (Q1, N2):
        count = 0
        while count < 2000:
            p = TorusPoint(rng.uniform(0, 1), rng.uniform(0, profile.g))
            try:
                jac = torus_jacobian(p, profile)
            except SingularHit:
                continue
            assert abs(np.linalg.det(jac) - 1.0) < 1e-12
            count += 1


def test_torus_jacobian_matches_finite_differences():
    p = TorusPoint(0.3, 0.6)
    jac = torus_jacobian(p, Q1)
    h = 1e-7

    def image(t, v):
        q, _ = torus_step(TorusPoint(t, v), Q1)
        return np.array([q.t, q.v])

    fd = np.column_stack([
        (image(p.t + h, p.v) - image(p.t - h, p.v)) / (2 * h),
        (image(p.t, p.v + h) - image(p.t, p.v - h)) / (2 * h)])
    assert np.allclose(fd, jac, atol=1e-6)


def test_pushforward_preserves_uniformity():
    rng = np.random.default_rng(4)
    n = 1_000_000
    t, v = rng.uniform(0, 1, n), rng.uniform(0, Q1.g, n)
    t1, v1, _, singular = torus_step_many(t, v, Q1)
    t1, v1 = t1[~singular], v1[~singular]
    counts, *_ = np.histogram2d(t1, v1, bins=32,
                                range=[[0, 1], [0, Q1.g]])
    expected = len(t1) / 32 ** 2
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    p_value = float(sps.chi2.sf(chi2, 32 * 32 - 1))
    assert p_value > 0.001


# ----------------------------------------------------------------------
# singularity sets

def test_splus_membership_example():
    # (0.4, 0.6) satisfies t + 2v/g = 1 for g = 2
    assert distance_to_splus(TorusPoint(0.4, 0.6), 2.0) == pytest.approx(0.0)


def test_splus_slope_is_minus_half_g():
    for seg in singularity_set(Q1, "S+", 1):
        assert seg.slope_range == pytest.approx((-1.0, -1.0))


def test_sminus_slope_value():
    # slope g/2 + 2k = 3 for Q(1), g=2
    for seg in singularity_set(Q1, "S-", 1):
        assert seg.slope_range == pytest.approx((3.0, 3.0), abs=1e-9)


def test_generation_two_contains_generation_one():
    forest = singularity_set(Q1, "S+", 2)
    gens = sorted({seg.generation for seg in forest})
    assert gens == [1, 2]
    parents = {seg.parent for seg in forest if seg.generation == 2}
    assert all(p is not None for p in parents)


def test_forest_growth_across_generations():
    f1 = singularity_set(Q1, "S+", 1)
    f3 = singularity_set(Q1, "S+", 3)
    len1 = sum(seg.length for seg in f1)
    len3 = sum(seg.length for seg in f3)
    assert len3 > 2.0 * len1   # pullbacks stretch stable curves


def test_distance_examples():
    assert distance_to_splus(TorusPoint(0.5, 0.5), 2.0) == pytest.approx(0.0)
    d = distance_to_splus(TorusPoint(0.5, 0.6), 2.0)
    assert d == pytest.approx(0.1 / math.sqrt(2.0), abs=1e-12)


def test_distance_generic_matches_exact_for_gen1():
    segs = singularity_set(Q1, "S+", 1)
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = TorusPoint(rng.uniform(0, 1), rng.uniform(0, 2))
        exact = distance_to_splus(p, 2.0)
        brute = min(
            min(math.hypot((q[0] - p.t + 0.5) % 1.0 - 0.5,
                           (q[1] - p.v + 1.0) % 2.0 - 1.0)
                for q in seg.torus_points(2.0))
            for seg in segs)
        generic = distance_to_singularity(p, segs, 2.0)
        assert generic == pytest.approx(exact, abs=1e-12)
        assert brute == pytest.approx(exact, abs=2e-3)


def test_singularity_sets_properly_aligned():
    """Tangent directions of S+ sit inside the stable cones and those of S-
    inside the unstable cones of the monotonicity family, strictly."""
    for profile in (Q1, N2):
        for seg in singularity_set(profile, "S+", 1):
            pts = seg.torus_points(profile.g)
            for q in pts[:: max(1, len(pts) // 64)]:
                cone = monotonicity_cone_at(TorusPoint(q[0], q[1]),
                                            profile, "stable")
                assert cone.contains_slope(-profile.g / 2.0, margin=1e-9)
        for seg in singularity_set(profile, "S-", 1):
            pts = seg.torus_points(profile.g)
            for q in pts[:: max(1, len(pts) // 64)]:
                k0 = profile.curvature(q[0])
                cone = monotonicity_cone_at(TorusPoint(q[0], q[1]),
                                            profile, "unstable")
                assert cone.contains_slope(profile.g / 2.0 + 2.0 * k0,
                                           margin=1e-9)
