"""Event-driven collision map on the phase cylinder.

A point mass falls under gravity g and bounces elastically off the moving
wall.  Between collisions the height is the free-fall parabola; the next
collision time is the smallest s > 0 solving

    f(t) + v s - g s^2 / 2 = f(t + s)

with the ball strictly above the wall on (0, s).  The post-collision
velocity follows from reflecting the relative velocity:

    v1 = -v + g s + 2 f'(t + s)

The derivative of the step map (t, v) -> (t1, v1) is assembled in closed
form from f', f'' at the two collision times; its determinant equals
w/w1, the ratio of relative velocities, which makes w dt dv the invariant
measure of the map.

Root finding strategy
---------------------
The residual r(s) is piecewise polynomial in s with r'' = -(g + f''),
which has a fixed sign on every smooth piece for admissible wall motions:
r is piecewise concave in the convex regime and piecewise convex in the
strongly concave regime.  The solver therefore scans knot-clipped
subintervals (knots = times where t + s crosses a wall breakpoint or an
integer), looks for sign changes, and in the convex-residual case also
checks for interior dips via the sign of r' at subinterval ends; within a
smooth piece r' is monotone for admissible motions, so this is exhaustive.
Candidate roots are polished by safeguarded Newton.

The residual tolerance is 1e-12 at unit scale; for very large velocities
the evaluation of r itself carries O(eps * v * s) rounding noise, so the
stop criterion degrades gracefully to that floor.

A vectorised fast path covers high-velocity states, where the first
contact provably lies in the short window where the descending parabola
recrosses the band [f_min, f_max]; the residual is strictly monotone
there and plain bisection is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (GrazingCollision, NonPositiveRelativeVelocity,
                     NoRootFound, SingularCollision)
from .wall import WallMotion

RESIDUAL_TOL = 1e-12
SINGULAR_TOL = 1e-12
GRAZING_TOL = 1e-9
LOW_W_TOL = 1e-10

_OK = 0
_SINGULAR = 1
_GRAZING = 2
_LOW_W = 3
_NO_ROOT = 4

ABORT_LABELS = {_OK: "ok", _SINGULAR: "singular", _GRAZING: "grazing",
                _LOW_W: "low-energy", _NO_ROOT: "no-root"}


@dataclass(frozen=True)
class CollisionState:
    """State immediately after a collision: time, velocity, relative velocity."""

    t: float
    v: float
    w: float
    n: int = 0

    @classmethod
    def from_tv(cls, t: float, v: float, profile: WallMotion, n: int = 0):
        w = v - profile.slope(t)
        if w <= LOW_W_TOL:
            raise NonPositiveRelativeVelocity(
                f"relative velocity {w!r} at (t={t}, v={v}) is not positive")
        return cls(t=float(t), v=float(v), w=float(w), n=n)


@dataclass(frozen=True)
class StepOutcome:
    next: CollisionState
    s: float                    # flight time
    jac: np.ndarray             # d(t1, v1) / d(t, v), 2x2


@dataclass
class OrbitRecord:
    states: list[CollisionState]
    flights: list[float]
    termination: str            # completed | escaped-threshold | singular |
    #                             grazing | low-energy | no-root
    v_min: float
    v_max: float

    @property
    def length(self) -> int:
        return len(self.states)


# ----------------------------------------------------------------------
# scalar flight-time solver

def _residual_factory(state: CollisionState, profile: WallMotion):
    t0, v = state.t, state.v
    g = profile.g
    f0 = profile.height(t0)

    def r(s: float) -> float:
        return f0 + v * s - 0.5 * g * s * s - profile.height(t0 + s)

    def rprime(s: float) -> float:
        return v - g * s - profile.slope(t0 + s)

    def noise_floor(s: float) -> float:
        scale = abs(f0) + abs(v) * s + 0.5 * g * s * s + 1.0
        return max(RESIDUAL_TOL, 8.0 * np.finfo(float).eps * scale)

    return r, rprime, noise_floor


def _bisect_newton(r, rprime, lo: float, hi: float, tol_at) -> float:
    """Root of r in [lo, hi] with r(lo) >= 0 >= r(hi): safeguarded Newton.

    A few bisection steps shrink the bracket, then Newton iterations clipped
    to the bracket finish the job; bisection resumes whenever Newton stalls.
    """
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = r(mid)
        if abs(fm) <= tol_at(mid):
            # a couple of extra Newton steps sharpen the root towards
            # machine precision (helps finite-difference cross-checks)
            s = mid
            for _ in range(2):
                d = rprime(s)
                if d == 0.0:
                    break
                s2 = s - r(s) / d
                if lo <= s2 <= hi and abs(r(s2)) <= abs(r(s)):
                    s = s2
                else:
                    break
            return s
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
        # Newton from the better endpoint once the bracket is tame
        s = mid
        for _ in range(3):
            d = rprime(s)
            if d == 0.0:
                break
            s2 = s - r(s) / d
            if not (lo < s2 < hi):
                break
            s = s2
            fs = r(s)
            if abs(fs) <= tol_at(s):
                return s
            if fs > 0.0:
                lo = s
            else:
                hi = s
        if hi - lo <= 1e-17 * max(1.0, hi):
            return 0.5 * (lo + hi)
    return 0.5 * (lo + hi)


def _knot_offsets(profile: WallMotion, t0: float) -> np.ndarray:
    """Offsets in (0, 1] at which t0 + s crosses a piece boundary."""
    frac = t0 - math.floor(t0)
    bounds = {p.lo for p in profile.pieces}
    offs = sorted({(b - frac) % 1.0 for b in bounds} | {(1.0 - frac) % 1.0})
    offs = [o if o > 1e-15 else 1.0 for o in offs]
    return np.unique(offs)


def flight_time(state: CollisionState, profile: WallMotion) -> float:
    """Smallest s > 0 at which the ball meets the wall again.

    Raises GrazingCollision for tangential contact, SingularCollision when
    the contact lands within 1e-12 of an integer time, NoRootFound when the
    scan exhausts its horizon (which indicates a bad profile or state, not a
    legitimate orbit).
    """
    if state.w <= LOW_W_TOL:
        raise NonPositiveRelativeVelocity(
            f"flight from w={state.w!r} is below the low-energy cutoff")
    g = profile.g
    t0, v, w = state.t, state.v, state.w
    r, rp, noise = _residual_factory(state, profile)

    apex_drop = profile.height(t0) - profile.f_min + 1.0
    horizon = (v + math.sqrt(max(v * v + 2.0 * g * apex_drop, 0.0))) / g + 2.0

    # skip window where the parabola is strictly above every wall height
    skip_lo = skip_hi = None
    clear = profile.height(t0) + 0.5 * v * v / g - profile.f_max
    if v > 0.0 and clear > 0.5:
        disc = v * v - 2.0 * g * (profile.f_max - profile.height(t0))
        if disc > 0.0:
            sq = math.sqrt(disc)
            skip_lo = (v - sq) / g
            skip_hi = (v + sq) / g

    base_step = min(0.1, 1.0 / (4.0 * (max(abs(profile.k_min), abs(profile.k_max)) + g)))
    step = base_step * max(1.0, 2.0 * w / g)
    offsets = _knot_offsets(profile, t0)

    def knots_between(a: float, b: float):
        """Knot times in (a, b), ascending."""
        out = []
        m = math.floor(a)
        while m <= b:
            for o in offsets:
                s = m + o
                if a < s < b:
                    out.append(s)
            m += 1.0
        return out

    def scan(a: float, b: float) -> float | None:
        """First root in (a, b]; returns None if r stays positive."""
        pts = [a] + knots_between(a, b) + [b]
        prev = a
        rp_prev = rp(a)
        for lo, hi in zip(pts, pts[1:]):
            n_sub = max(1, int(math.ceil((hi - lo) / step)))
            for x in np.linspace(lo, hi, n_sub + 1)[1:]:
                x = float(x)
                r_x, rp_x = r(x), rp(x)
                if r_x <= 0.0:
                    return _bisect_newton(r, rp, prev, x, noise)
                # interior dip: r >= 0 at both ends but r' swings - to +;
                # exhaustive for admissible motions, where r' is monotone on
                # each smooth piece
                if rp_prev < 0.0 < rp_x:
                    s_min = _bisect_monotone(rp, prev, x)
                    r_min = r(s_min)
                    if r_min < -noise(s_min):
                        return _bisect_newton(r, rp, prev, s_min, noise)
                    if abs(r_min) <= noise(s_min):
                        raise GrazingCollision(
                            f"tangential contact near s={s_min!r}")
                prev, rp_prev = x, rp_x
        return None

    if skip_lo is not None and skip_lo > 0.0:
        root = scan(0.0, min(skip_lo, horizon))
        if root is None and skip_hi < horizon:
            root = scan(skip_hi, horizon)
    else:
        root = scan(0.0, horizon)

    if root is None:
        raise NoRootFound(
            f"no collision within horizon {horizon!r} from (t={t0}, v={v})")

    # smallest-root safety net: the residual must stay positive before the root
    grid = root * np.arange(1, 65) / 65.0
    vals = np.array([r(x) for x in grid])
    if (vals < -noise(root)).any():
        bad = float(grid[int(np.argmax(vals < -noise(root)))])
        raise NoRootFound(
            f"positivity check failed at s={bad!r}; earlier root missed")

    if abs(rp(root)) < GRAZING_TOL:
        raise GrazingCollision(f"tangential contact at s={root!r}")
    t1 = t0 + root
    if abs(t1 - round(t1)) < SINGULAR_TOL:
        raise SingularCollision(f"collision at integer time {t1!r}")
    return float(root)


def _bisect_monotone(fun, lo: float, hi: float) -> float:
    """Root of a monotone function with fun(lo) < 0 < fun(hi)."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fun(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# the step map and its derivative

def _collision_jacobian(t0: float, s: float, profile: WallMotion,
                        w1: float) -> np.ndarray:
    g = profile.g
    df0 = profile.slope(t0)
    t1 = t0 + s
    df1 = profile.slope(t1)
    k1 = profile.curvature(t1)
    d = (df0 - df1) / w1
    return np.array([
        [1.0 + d, s / w1],
        [2.0 * k1 + (2.0 * k1 + g) * d, (2.0 * k1 + g) * s / w1 - 1.0],
    ])


def step(state: CollisionState, profile: WallMotion) -> StepOutcome:
    """Advance one collision; returns the new state, flight time and Jacobian."""
    s = flight_time(state, profile)
    g = profile.g
    t1 = state.t + s
    df1 = profile.slope(t1)
    v1 = -state.v + g * s + 2.0 * df1
    w1 = v1 - df1
    if w1 <= LOW_W_TOL:
        raise NonPositiveRelativeVelocity(
            f"post-collision relative velocity {w1!r} below cutoff")
    jac = _collision_jacobian(state.t, s, profile, w1)
    nxt = CollisionState(t=t1, v=v1, w=w1, n=state.n + 1)
    return StepOutcome(next=nxt, s=s, jac=jac)


def jacobian_fd(state: CollisionState, profile: WallMotion,
                h: float = 1e-6) -> np.ndarray:
    """Central finite-difference derivative of the step map; test helper."""

    def image(t, v):
        st = CollisionState.from_tv(t, v, profile)
        out = step(st, profile)
        return np.array([out.next.t, out.next.v])

    col_t = (image(state.t + h, state.v) - image(state.t - h, state.v)) / (2.0 * h)
    col_v = (image(state.t, state.v + h) - image(state.t, state.v - h)) / (2.0 * h)
    return np.column_stack([col_t, col_v])


def reflect_velocity(v: float, s: float, t1: float, profile: WallMotion) -> float:
    """Elastic reflection law; applying it twice with the same (s, t1) is the
    identity, which pins down the sign conventions."""
    return -v + profile.g * s + 2.0 * profile.slope(t1)


def simulate_orbit(start: CollisionState, profile: WallMotion, n_steps: int,
                   v_escape: float | None = None,
                   keep_states: bool = True) -> OrbitRecord:
    """Iterate the collision map, recording states and the termination reason.

    Stops after n_steps ("completed"), when v exceeds v_escape
    ("escaped-threshold"), or on a typed solver error (singular, grazing,
    low-energy, no-root).  Singular and grazing orbits abort rather than
    continue: they form a null set and silently continuing would corrupt
    statistics.
    """
    states = [start]
    flights: list[float] = []
    v_min = v_max = start.v
    termination = "completed"
    cur = start
    for _ in range(n_steps):
        try:
            out = step(cur, profile)
        except SingularCollision:
            termination = "singular"
            break
        except GrazingCollision:
            termination = "grazing"
            break
        except NonPositiveRelativeVelocity:
            termination = "low-energy"
            break
        except NoRootFound:
            termination = "no-root"
            break
        cur = out.next
        flights.append(out.s)
        if keep_states:
            states.append(cur)
        v_min = min(v_min, cur.v)
        v_max = max(v_max, cur.v)
        if v_escape is not None and cur.v >= v_escape:
            termination = "escaped-threshold"
            break
    if not keep_states:
        states = [start, cur]
    return OrbitRecord(states=states, flights=flights, termination=termination,
                       v_min=v_min, v_max=v_max)


# ----------------------------------------------------------------------
# vectorised high-velocity path

def fast_velocity_threshold(profile: WallMotion) -> float:
    """Velocity above which the first contact provably sits in the descent
    window through the wall band, making vectorised bisection safe."""
    g = profile.g
    span = profile.f_max - profile.f_min
    m = profile.max_slope
    return (m + 2.0 + math.sqrt(2.0 * g * (span + 1.0))
            + math.sqrt((m + 1.0) ** 2 + 2.0 * g * span))


def _is_single_quadratic(profile: WallMotion) -> bool:
    return (len(profile.pieces) == 1
            and all(c == 0.0 for c in profile.pieces[0].coeffs[3:]))


def _flight_fast_quadratic(tf, vf, profile: WallMotion):
    """Closed-form flight times for single-piece quadratic profiles.

    Inside the descent window through the wall band the residual restricted
    to one wall period is a quadratic in s, so the first contact is a root
    of the quadratic formula; the window is narrower than one period, so at
    most two periods need checking.  Shifting the origin to the window
    entry keeps the formula well conditioned at large velocities.
    """
    g = profile.g
    c = profile.pieces[0].coeffs + (0.0, 0.0, 0.0)
    c0, c1, c2 = c[0], c[1], c[2]
    f0 = profile.eval_many(tf)[0]
    s_lo = (vf + np.sqrt(vf * vf - 2.0 * g * (profile.f_max - f0))) / g
    s_hi = (vf + np.sqrt(vf * vf - 2.0 * g * (profile.f_min - f0))) / g

    def solve_on(m, a, b):
        """Root of the residual with wall argument in period m, restricted
        to [a, b]; NaN where there is none.  Quadratic A x^2 + B' x + C' in
        x = s - a."""
        x0 = tf + a - m      # wall phase at the window entry, in [0, 1)
        A = -0.5 * g - c2
        B = (vf - g * a) - (c1 + 2.0 * c2 * x0)
        C = f0 + vf * a - 0.5 * g * a * a - (c0 + c1 * x0 + c2 * x0 * x0)
        disc = B * B - 4.0 * A * C
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        # stable branch: |B| + sq never cancels
        q = -0.5 * (B + np.where(B >= 0.0, sq, -sq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(q != 0.0, C / q, np.inf)
            r2 = np.where(A != 0.0, q / A, np.inf)
        lo_r = np.minimum(r1, r2)
        hi_r = np.maximum(r1, r2)
        width = b - a
        root = np.where((lo_r >= -1e-14) & (lo_r <= width), lo_r,
                        np.where((hi_r >= -1e-14) & (hi_r <= width), hi_r,
                                 np.nan))
        return np.where(ok, a + root, np.nan)

    m1 = np.floor(tf + s_lo)
    m2 = np.floor(tf + s_hi)
    split = np.minimum(m2 - tf, s_hi)   # where the window crosses a period
    s = solve_on(m1, s_lo, np.where(m2 > m1, split, s_hi))
    second = np.isnan(s) & (m2 > m1)
    if second.any():
        s2 = solve_on(m2, split, s_hi)
        s = np.where(second, s2, s)
    # Newton polish (also irons out the window-edge clipping)
    for _ in range(2):
        res = f0 + vf * s - 0.5 * g * s * s - profile.eval_many(tf + s)[0]
        d = vf - g * s - profile.eval_many(tf + s)[1]
        with np.errstate(invalid="ignore"):
            s = s - res / d
    return s


def _flight_enum_quadratic(tf, vf, profile: WallMotion):
    """Exact flight times for single-piece quadratic profiles at any speed.

    The residual is piecewise quadratic in s with knots where t + s crosses
    an integer, so the intervals are walked in order and the first valid
    quadratic root wins.  On the first interval the residual factors as
    x (A x + w) exactly, which sidesteps the trivial root at s = 0.
    Returns NaN where no root lies within the fall-back horizon (possible
    only through numerical pathology, flagged by the caller).
    """
    g = profile.g
    c = profile.pieces[0].coeffs + (0.0, 0.0, 0.0)
    c0, c1, c2 = c[0], c[1], c[2]
    A = -0.5 * g - c2
    f0 = profile.eval_many(tf)[0]
    tau = tf - np.floor(tf)
    w = vf - (c1 + 2.0 * c2 * tau)
    horizon = (vf + np.sqrt(vf * vf + 2.0 * g * (f0 - profile.f_min + 1.0))) / g + 2.0

    n = len(tf)
    s_found = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)

    # first interval [0, 1 - tau]: r = x (A x + w)
    if A != 0.0:
        x_star = -w / A
        hit = active & (x_star > 0.0) & (x_star <= (1.0 - tau))
        s_found[hit] = x_star[hit]
        active &= ~hit

    a = 1.0 - tau            # subsequent intervals start at integer phases
    k_max = int(np.ceil(horizon.max())) + 1
    for _ in range(k_max):
        if not active.any():
            break
        B = (vf - g * a)[active] - c1
        C = (f0 + vf * a - 0.5 * g * a * a)[active] - c0
        disc = B * B - 4.0 * A * C
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        q = -0.5 * (B + np.where(B >= 0.0, sq, -sq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(q != 0.0, C / q, np.inf)
            r2 = q / A if A != 0.0 else np.full_like(q, np.inf)
        lo_r = np.minimum(r1, r2)
        hi_r = np.maximum(r1, r2)
        root = np.where((lo_r >= -1e-14) & (lo_r <= 1.0), lo_r,
                        np.where((hi_r >= -1e-14) & (hi_r <= 1.0), hi_r, np.nan))
        root = np.where(ok, root, np.nan)
        idx = np.flatnonzero(active)
        found = np.isfinite(root)
        s_found[idx[found]] = a[idx[found]] + np.maximum(root[found], 0.0)
        active[idx[found]] = False
        a = a + 1.0
        active &= a <= horizon
    return s_found


def _flight_fast_bisect(tf, vf, profile: WallMotion):
    """Bisection fallback of the fast path for general piecewise profiles."""
    g = profile.g
    f0 = profile.eval_many(tf)[0]
    lo = (vf + np.sqrt(vf * vf - 2.0 * g * (profile.f_max - f0))) / g
    hi = (vf + np.sqrt(vf * vf - 2.0 * g * (profile.f_min - f0))) / g

    def res(sv):
        return f0 + vf * sv - 0.5 * g * sv * sv - profile.eval_many(tf + sv)[0]

    # r(lo) >= 0 >= r(hi) and r is strictly decreasing in between
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        pos = res(mid) >= 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    s = 0.5 * (lo + hi)
    for _ in range(3):
        d = vf - g * s - profile.eval_many(tf + s)[1]
        s = s - res(s) / d
    return s


def step_many(t, v, profile: WallMotion):
    """Vectorised collision step.

    Returns (t1, v1, w1, s, code) with code 0 for ok and the abort reason
    otherwise (see ABORT_LABELS).  High-velocity entries take a fast path
    (closed-form for quadratic profiles, vectorised bisection otherwise);
    the rest fall back to the scalar solver one by one.
    """
    g = profile.g
    t = np.asarray(t, dtype=float).copy()
    v = np.asarray(v, dtype=float).copy()
    n = t.shape[0]
    t1 = np.full(n, np.nan)
    v1 = np.full(n, np.nan)
    w1 = np.full(n, np.nan)
    s_out = np.full(n, np.nan)
    code = np.zeros(n, dtype=np.int8)

    w = v - profile.slope_many(t)
    low = w <= LOW_W_TOL
    code[low] = _LOW_W

    fast = (~low) & (v >= fast_velocity_threshold(profile))
    if fast.any():
        tf, vf = t[fast], v[fast]
        if _is_single_quadratic(profile):
            s = _flight_fast_quadratic(tf, vf, profile)
        else:
            s = _flight_fast_bisect(tf, vf, profile)
        tf1 = tf + s
        df1 = profile.eval_many(tf1)[1]
        vf1 = -vf + g * s + 2.0 * df1
        wf1 = vf1 - df1
        cf = np.zeros(s.shape, dtype=np.int8)
        cf[~np.isfinite(s)] = _NO_ROOT
        good = cf == 0
        cf[good & (np.abs(tf1 - np.round(tf1)) < SINGULAR_TOL)] = _SINGULAR
        good = cf == 0
        cf[good & (np.abs(vf - g * s - df1) < GRAZING_TOL)] = _GRAZING
        good = cf == 0
        cf[good & (wf1 <= LOW_W_TOL)] = _LOW_W
        t1[fast], v1[fast], w1[fast], s_out[fast] = tf1, vf1, wf1, s
        code[fast] = cf

    slow = (~low) & (~fast)
    if slow.any() and _is_single_quadratic(profile):
        tf, vf = t[slow], v[slow]
        s = _flight_enum_quadratic(tf, vf, profile)
        # polish: the closed form is already exact, one Newton step guards
        # against roundoff at knot-adjacent roots
        res = (profile.eval_many(tf)[0] + vf * s - 0.5 * g * s * s
               - profile.eval_many(tf + s)[0])
        d = vf - g * s - profile.eval_many(tf + s)[1]
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(np.abs(d) > GRAZING_TOL, s - res / d, s)
        tf1 = tf + s
        df1 = profile.eval_many(tf1)[1]
        vf1 = -vf + g * s + 2.0 * df1
        wf1 = vf1 - df1
        cf = np.zeros(s.shape, dtype=np.int8)
        cf[~np.isfinite(s)] = _NO_ROOT
        good = cf == 0
        cf[good & (np.abs(tf1 - np.round(tf1)) < SINGULAR_TOL)] = _SINGULAR
        good = cf == 0
        cf[good & (np.abs(vf - g * s - df1) < GRAZING_TOL)] = _GRAZING
        good = cf == 0
        cf[good & (wf1 <= LOW_W_TOL)] = _LOW_W
        t1[slow], v1[slow], w1[slow], s_out[slow] = tf1, vf1, wf1, s
        code[slow] = cf
        return t1, v1, w1, s_out, code

    for i in np.flatnonzero(slow):
        st = CollisionState(t=float(t[i]), v=float(v[i]), w=float(w[i]), n=0)
        try:
            out = step(st, profile)
        except SingularCollision:
            code[i] = _SINGULAR
        except GrazingCollision:
            code[i] = _GRAZING
        except NonPositiveRelativeVelocity:
            code[i] = _LOW_W
        except NoRootFound:
            code[i] = _NO_ROOT
        else:
            t1[i], v1[i] = out.next.t, out.next.v
            w1[i], s_out[i] = out.next.w, out.s
    return t1, v1, w1, s_out, code


def limit_map_deviation(t, v, profile: WallMotion):
    """Distance between the true step and the closed-form limit map at (t, v).

    Used to measure the O(1/v) approximation; entries whose limit image lands
    near the corner are reported as NaN (the deviation is O(1) there).
    """
    g = profile.g
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    t1, v1, _, _, code = step_many(t, v, profile)
    tl = t + 2.0 * v / g
    frac = np.abs(tl - np.round(tl))
    vl = v + 2.0 * profile.slope_many(tl)
    err = np.hypot(t1 - tl, v1 - vl)
    err[(code != _OK) | (frac < 0.05)] = np.nan
    return err
