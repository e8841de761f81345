import math

import numpy as np
import pytest

from gravity_pingpong.errors import ProfileError
from gravity_pingpong.wall import (Regime, WallMotion, builtin_profile,
                                   format_profile, n_profile, parse_profile,
                                   q_profile)


def test_eval_quadratic_profile_values():
    q1 = q_profile(1.0, 2.0)
    assert q1.eval(0.5) == pytest.approx((-0.125, 0.0, 1.0, 0.0), abs=1e-15)
    assert q1.eval(0.25) == pytest.approx((-0.09375, -0.25, 1.0, 0.0), abs=1e-15)


def test_eval_periodicity_shift():
    q1 = q_profile(1.0, 2.0)
    assert q1.eval(1.5) == pytest.approx(q1.eval(0.5), abs=1e-15)


def test_eval_periodicity_sampled():
    prof = WallMotion([(0.0, 0.5, (0.0, 0.1, 0.3, 0.2)),
                       (0.5, 1.0, (0.025, -0.1, 0.7, -1.0 / 3.0))], g=1.5)
    rng = np.random.default_rng(0)
    for t in rng.uniform(0.0, 1.0, 500):
        a = prof.eval(t)
        b = prof.eval(t + 1.0)
        c = prof.eval(t + 7.0)
        for x, y, z in zip(a, b, c):
            assert abs(x - y) < 1e-12
            assert abs(x - z) < 1e-12


def test_eval_many_matches_scalar():
    prof = q_profile(1.7, 2.0)
    ts = np.linspace(-2.0, 3.0, 101)
    many = prof.eval_many(ts)
    for i, t in enumerate(ts):
        one = prof.eval(t)
        for j in range(4):
            assert many[j][i] == pytest.approx(one[j], abs=1e-14)


def test_one_sided_evaluation_at_corner():
    q1 = q_profile(1.0, 2.0)
    # slope has the corner at integer times: -1/2 from the right, +1/2 left
    assert q1.eval(0.0, side=+1)[1] == pytest.approx(-0.5)
    assert q1.eval(0.0, side=-1)[1] == pytest.approx(+0.5)
    assert q1.eval(1.0, side=-1)[1] == pytest.approx(+0.5)


def test_one_sided_evaluation_interior_breakpoint():
    # two pieces meeting smoothly at 0.5: both sides agree there
    prof = WallMotion([(0.0, 0.5, (0.0, -0.5, 0.5)),
                       (0.5, 1.0, (0.0, -0.5, 0.5))], g=2.0)
    assert prof.eval(0.5, side=-1) == pytest.approx(prof.eval(0.5, side=+1))


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0, 7.5])
def test_classify_regime_convex_family(k):
    assert q_profile(k, 2.0).classify_regime() is Regime.POSITIVE_CONVEX


@pytest.mark.parametrize("c,g,expected", [
    (2.0, 1.0, Regime.STRONGLY_CONCAVE),
    (3.0, 2.9, Regime.STRONGLY_CONCAVE),
    (1.0, 2.0, Regime.NOT_ADMISSIBLE),   # f'' = -1 with -g = -2 < -1 < 0
    (2.0, 2.0, Regime.NOT_ADMISSIBLE),   # boundary case f'' = -g exactly
])
def test_classify_regime_concave_family(c, g, expected):
    assert n_profile(c, g).classify_regime() is expected


def test_curvature_bounds_exact_for_cubic_pieces():
    # f'' is a cubic with interior extrema; bounds must use critical points
    prof = WallMotion([(0.0, 1.0, (0.0, 0.0, 1.0, 1.0, -0.5, 0.05))], g=2.0)
    ts = np.linspace(0.0, 1.0, 100_001)
    k = prof.eval_many(ts)[2]
    assert prof.k_min <= k.min() + 1e-12
    assert prof.k_max >= k.max() - 1e-12
    assert prof.k_min == pytest.approx(k.min(), abs=1e-6)
    assert prof.k_max == pytest.approx(k.max(), abs=1e-6)


def test_interval_bound_holds_on_samples():
    prof = q_profile(1.0, 2.0)
    ts = np.random.default_rng(1).uniform(0.0, 1.0, 100_000)
    k = prof.eval_many(ts)[2]
    assert np.all(k >= prof.k_min - 1e-12)
    assert np.all(k <= prof.k_max + 1e-12)


def test_validate_canonical_profile():
    rep = q_profile(1.0, 2.0).validate()
    assert rep.valid
    assert rep.corner_slopes == pytest.approx((-0.5, 0.5))


def test_validate_reports_broken_periodicity():
    prof = WallMotion([(0.0, 1.0, (0.0, 1.0))], g=2.0)   # f = t, f(1-) = 1
    rep = prof.validate()
    assert not rep.valid
    assert any("periodicity" in v for v in rep.violations)


def test_validate_reports_missing_corner():
    # f = t^2 (1-t)^2 has f'(0+) = f'(1-) = 0: degenerate model
    prof = WallMotion([(0.0, 1.0, (0.0, 0.0, 1.0, -2.0, 1.0))], g=2.0)
    rep = prof.validate()
    assert not rep.valid
    assert any("no corner" in v for v in rep.violations)


def test_validate_reports_interior_jump():
    prof = WallMotion([(0.0, 0.5, (0.0, 1.0)),
                       (0.5, 1.0, (0.6, -1.2))], g=2.0)
    rep = prof.validate()
    assert any("discontinuous" in v for v in rep.violations)


def test_constructor_rejects_bad_pieces():
    with pytest.raises(ProfileError):
        WallMotion([(0.0, 0.5, (0.0,))], g=2.0)            # gap at [0.5, 1)
    with pytest.raises(ProfileError):
        WallMotion([(0.0, 0.6, (0.0,)), (0.5, 1.0, (0.0,))], g=2.0)
    with pytest.raises(ProfileError):
        WallMotion([(0.0, 1.0, (0.0,))], g=-1.0)
    with pytest.raises(ProfileError):
        WallMotion([(0.0, 1.0, tuple(range(8)))], g=1.0)   # degree too high


def test_profile_file_roundtrip():
    prof = WallMotion([(0.0, 0.5, (0.0, 0.1, 0.3, 0.2)),
                       (0.5, 1.0, (0.025, -0.1, 0.7, -1.0 / 3.0))], g=1.5)
    text = format_profile(prof)
    back = parse_profile(text)
    assert back.g == prof.g
    for t in np.linspace(0.0, 1.0, 37):
        assert back.eval(t) == pytest.approx(prof.eval(t), abs=1e-15)


@pytest.mark.parametrize("text,fragment", [
    ("piece 0 1 0 0 0.5", "missing 'g"),
    ("g = 2.0", "no 'piece' lines"),
    ("g = 2.0\npiece 0 1 zero", "line 2"),
    ("g = nope\npiece 0 1 0", "line 1"),
    ("g = 2.0\nwhatever 1 2 3", "line 2"),
    ("g = 2.0\npiece 0 0.4 0", "cover"),
])
def test_parser_errors_carry_context(text, fragment):
    with pytest.raises(ProfileError) as err:
        parse_profile(text)
    assert fragment in str(err.value)


def test_builtin_profile_lookup():
    prof = builtin_profile("Q(1)", 2.0)
    assert prof.classify_regime() is Regime.POSITIVE_CONVEX
    prof = builtin_profile("N(2.5)", 1.0)
    assert prof.k_max == pytest.approx(-2.5)
    with pytest.raises(ProfileError):
        builtin_profile("Z(1)", 2.0)


def test_derived_grid_bounds():
    q1 = q_profile(1.0, 2.0)
    assert q1.f_min == pytest.approx(-0.125)
    assert q1.f_max == pytest.approx(0.0)
    assert q1.max_slope == pytest.approx(0.5)
    assert q1.max_jerk == 0.0
    assert q1.slope_rms == pytest.approx(math.sqrt(1.0 / 12.0), rel=1e-3)
