"""Invariant cone fields and expansion estimates for the torus map.

Slopes of tangent vectors live on the projective circle; every cone used
here is a closed slope interval, stored as an angle interval so that the
half-plane cones of the strongly concave regime (which contain the
vertical direction) need no special casing.

Two cone families appear:

* the *monotonicity* cones that drive the ergodicity argument: for convex
  wall motion these are simply the positive/negative quadrant cones; for
  strongly concave motion the pair splits along the slope k0 = f''(t),
  with the unstable cone {dv/dt <= k0} and the stable cone {dv/dt >= k0};

* the *image* cones used for the quantitative hyperbolicity estimates in
  the convex regime: unstable [2 k0, 2 k0 + g/2] and stable
  [-g/2, -2 k0 / (4 k0/g + 1)], the images of the quadrant cones under
  the map derivative and its inverse.

One derivative step moves a tangent slope by

    s  ->  2 k1 + s / (1 + (2/g) s)

where k1 is the wall curvature at the image time.  The least expansion
coefficient of a cone-preserving matrix [[A, B], [C, D]] in coordinates
adapted to the cone is sigma = sqrt(1 + BC) + sqrt(BC); it is
supermultiplicative under composition, which upgrades one-step expansion
to arbitrarily strong expansion along nonsingular orbits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CurveError, NotAdmissibleError, SingularHit
from .limit_map import SINGULAR_TOL, TorusPoint, torus_jacobian, torus_step
from .wall import Regime, WallMotion

STRICT_MARGIN = 1e-9  # angle margin for "strictly interior"


# ----------------------------------------------------------------------
# projective slopes

def slope_to_angle(s: float) -> float:
    """Angle in (-pi/2, pi/2] representing the direction of slope s."""
    if math.isinf(s):
        return 0.5 * math.pi
    return math.atan(s)


@dataclass(frozen=True)
class Cone:
    """Closed slope interval on the projective circle.

    slope_lo / slope_hi are the boundary slopes walking counterclockwise
    (increasing angle); either may be +-inf for half-plane cones.
    """

    slope_lo: float
    slope_hi: float
    kind: str  # "unstable" | "stable"

    @property
    def angle_lo(self) -> float:
        return slope_to_angle(self.slope_lo)

    @property
    def angle_hi(self) -> float:
        a = slope_to_angle(self.slope_hi)
        lo = self.angle_lo
        # unwrap so the interval is traversed with increasing angle
        while a <= lo:
            a += math.pi
        return a

    @property
    def width(self) -> float:
        return self.angle_hi - self.angle_lo

    def contains_slope(self, s: float, margin: float = 0.0) -> bool:
        a = slope_to_angle(s)
        lo, hi = self.angle_lo, self.angle_hi
        a = a + math.pi * math.ceil((lo - a) / math.pi)  # shift into [lo, lo+pi)
        return lo + margin <= a <= hi - margin

    def sample_slopes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Slopes drawn uniformly in cone angle (interior)."""
        angles = rng.uniform(self.angle_lo + 1e-12, self.angle_hi - 1e-12, n)
        return np.tan(angles)


def _angles_contained(angles, lo, hi, margin: float) -> np.ndarray:
    a = np.asarray(angles, dtype=float)
    shift = np.ceil((lo - a) / math.pi)
    a = a + math.pi * shift
    return (a >= lo + margin) & (a <= hi - margin)


# ----------------------------------------------------------------------
# cone fields

def _regime_or_raise(profile: WallMotion) -> Regime:
    regime = profile.classify_regime()
    if regime is Regime.NOT_ADMISSIBLE:
        raise NotAdmissibleError(
            f"{profile!r} is neither convex nor strongly concave")
    return regime


def cone_at(p: TorusPoint, profile: WallMotion, kind: str) -> Cone:
    """Hyperbolicity cone at p.

    Convex regime: the unstable cone is the derivative image of the
    positive quadrant, [2k, 2k + g/2] with k the curvature at p's own
    time; the stable cone is the preimage of the negative quadrant,
    {w : dF w lies below the horizontal}, which works out to
    [-g/2, -2k" / (4k"/g + 1)] with k" the curvature at p's *image* time.
    With the image-time parameter, strict invariance of the stable family
    holds for every admissible profile; parametrised by the local
    curvature instead it fails once the curvature varies enough along the
    wall (the two agree when f'' is constant).

    Strongly concave regime: the half-plane pair split along slope k0.
    """
    regime = _regime_or_raise(profile)
    g = profile.g
    k0 = profile.curvature(p.t)
    if regime is Regime.POSITIVE_CONVEX:
        if kind == "unstable":
            return Cone(2.0 * k0, 2.0 * k0 + 0.5 * g, kind)
        if kind == "stable":
            t1 = (p.t + 2.0 * p.v / g) % 1.0
            k_img = profile.curvature(t1)
            return Cone(-0.5 * g, -2.0 * k_img / (4.0 * k_img / g + 1.0), kind)
    else:
        if kind == "unstable":
            return Cone(-math.inf, k0, kind)      # vertical through k0
        if kind == "stable":
            return Cone(k0, math.inf, kind)
    raise ValueError(f"unknown cone kind {kind!r}")


def monotonicity_cone_at(p: TorusPoint, profile: WallMotion, kind: str) -> Cone:
    """The strictly invariant cones of the ergodicity argument.

    Convex regime: positive quadrant (unstable) and negative quadrant
    (stable).  Strongly concave regime: identical to :func:`cone_at`.
    """
    regime = _regime_or_raise(profile)
    if regime is Regime.STRONGLY_CONCAVE:
        return cone_at(p, profile, kind)
    if kind == "unstable":
        return Cone(0.0, math.inf, kind)
    if kind == "stable":
        return Cone(-math.inf, 0.0, kind)
    raise ValueError(f"unknown cone kind {kind!r}")


def slope_step(s, k1, g: float):
    """Image of tangent slope s under the map derivative with image
    curvature k1; works on scalars and arrays, vertical maps to 2k1 + g/2."""
    s = np.asarray(s, dtype=float)
    beta = 2.0 / g
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isinf(s), 2.0 * k1 + 0.5 * g,
                       2.0 * k1 + s / (1.0 + beta * s))
    return out if out.ndim else float(out)


def slope_step_inverse(s, k0, g: float):
    """Image of tangent slope s under the inverse derivative at a point with
    curvature k0 (vertical maps to -g/2)."""
    s = np.asarray(s, dtype=float)
    denom = (4.0 * k0 / g + 1.0) - (2.0 / g) * s
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isinf(s), -0.5 * g, (s - 2.0 * k0) / denom)
    return out if out.ndim else float(out)


def check_cone_invariance(profile: WallMotion, n_samples: int, rng_seed: int,
                          margin: float = STRICT_MARGIN) -> int:
    """Sample points and cone-boundary slopes; count strict-invariance failures.

    For each sampled point both boundary slopes and one interior slope of
    the unstable cone are pushed forward and tested against the interior of
    the image-point cone; the stable cone is tested the same way under the
    inverse derivative.  Returns the number of violations (expected 0).
    """
    regime = _regime_or_raise(profile)
    g = profile.g
    rng = np.random.default_rng(rng_seed)
    n = n_samples
    t0 = rng.uniform(0.0, 1.0, n)
    v0 = rng.uniform(0.0, g, n)
    t1 = (t0 + 2.0 * v0 / g) % 1.0
    ok = np.minimum(t1, 1.0 - t1) > 1e-9   # off the singularity
    t0, v0, t1 = t0[ok], v0[ok], t1[ok]
    k0 = profile.curvature_many(t0)
    k1 = profile.curvature_many(t1)

    violations = 0
    if regime is Regime.POSITIVE_CONVEX:
        u_lo, u_hi = 2.0 * k0, 2.0 * k0 + 0.5 * g
        img_lo, img_hi = 2.0 * k1, 2.0 * k1 + 0.5 * g
        lam = rng.uniform(0.0, 1.0, len(t0))
        for s in (u_lo, u_hi, u_lo + lam * (u_hi - u_lo)):
            si = slope_step(s, k1, g)
            inside = (si > img_lo + margin) & (si < img_hi - margin)
            violations += int((~inside).sum())
        # stable cones pull back under the inverse derivative: the cone at
        # p0 carries the curvature of its image time (k1), the cone at the
        # preimage of p0 carries k0, and the inverse derivative landing at
        # that preimage has parameter k0 as well
        s_lo = np.full(len(t0), -0.5 * g)
        s_hi = -2.0 * k1 / (4.0 * k1 / g + 1.0)
        pim_lo = np.full(len(t0), -0.5 * g)
        pim_hi = -2.0 * k0 / (4.0 * k0 / g + 1.0)
        lam = rng.uniform(0.0, 1.0, len(t0))
        for s in (s_lo, s_hi, s_lo + lam * (s_hi - s_lo)):
            si = slope_step_inverse(s, k0, g)
            inside = (si > pim_lo + margin) & (si < pim_hi - margin)
            violations += int((~inside).sum())
    else:
        # half-plane cones split at slope k: as angle intervals the unstable
        # cone is [pi/2, atan(k) + pi] and the stable one [atan(k), pi/2];
        # boundary directions are the slope k and the vertical
        a_vert = 0.5 * math.pi
        lam = rng.uniform(0.2, 5.0, len(t0))
        for s in (k0, np.full(len(t0), math.inf), k0 - lam):
            si = slope_step(s, k1, g)
            a = np.arctan(si) + math.pi
            inside = (a > a_vert + margin) & (a < np.arctan(k1) + math.pi - margin)
            violations += int((~inside).sum())
        vprev = (v0 - 2.0 * profile.slope_many(t0)) % g
        tprev = (t0 - 2.0 * vprev / g) % 1.0
        kprev = profile.curvature_many(tprev)
        for s in (k0, np.full(len(t0), math.inf), k0 + lam):
            si = slope_step_inverse(s, k0, g)
            a = np.arctan(si)
            inside = (a > np.arctan(kprev) + margin) & (a < a_vert - margin)
            violations += int((~inside).sum())
    return violations


# ----------------------------------------------------------------------
# expansion constants

@dataclass(frozen=True)
class ExpansionReport:
    lam: float          # uniform expansion rate Lambda = min(lam1, lam2)
    lam1: float         # unstable-cone forward expansion
    lam2: float         # stable-cone backward expansion
    n0: int             # smallest n with 6n / lam^n < 1
    sigma_one_step_min: float
    regime: Regime
    empirical: bool     # True when lam was obtained by sampling, not formula


def _n0_from(lam: float) -> int:
    if not lam > 1.0:
        raise NotAdmissibleError(f"expansion rate {lam!r} is not > 1")
    n = 1
    while 6.0 * n / lam ** n >= 1.0:
        n += 1
        if n > 10_000:
            raise NotAdmissibleError("expansion too weak to reach 6n/Lambda^n < 1")
    return n


def _min_ratio_on_cone(mat: np.ndarray, cone: Cone, n_grid: int = 2001) -> float:
    angles = np.linspace(cone.angle_lo, cone.angle_hi, n_grid)
    vecs = np.stack([np.cos(angles), np.sin(angles)])
    img = mat @ vecs
    return float(np.min(np.hypot(img[0], img[1])))


def sigma_least_expansion(t_entry: float) -> float:
    """sigma = sqrt(1 + t) + sqrt(t) for the cone-adapted product entry t=BC."""
    t = max(t_entry, 0.0)
    return math.sqrt(1.0 + t) + math.sqrt(t)


def expansion_constants(profile: WallMotion) -> ExpansionReport:
    """Uniform hyperbolicity constants of the torus map.

    Convex regime (closed forms, k = min f''):

        lam1^2 = min(1 + 4k, 4/g^2 + (1 + 4k/g)^2)
        lam2^2 = min(4k^2 + (1 + 4k/g)^2, 4/g^2 + 1)

    Strongly concave regime: no closed form is available, so both rates are
    minimised numerically over the cone boundary directions and the range
    of wall curvatures; the report is flagged ``empirical``.
    """
    regime = _regime_or_raise(profile)
    g = profile.g
    k_lo, k_hi = profile.k_min, profile.k_max
    if regime is Regime.POSITIVE_CONVEX:
        k = k_lo
        lam1 = math.sqrt(min(1.0 + 4.0 * k, 4.0 / g ** 2 + (1.0 + 4.0 * k / g) ** 2))
        lam2 = math.sqrt(min(4.0 * k ** 2 + (1.0 + 4.0 * k / g) ** 2,
                             4.0 / g ** 2 + 1.0))
        sigma = sigma_least_expansion(4.0 * k / g)
        empirical = False
    else:
        lam1 = math.inf
        lam2 = math.inf
        sigma = math.inf
        ks = np.linspace(k_lo, k_hi, 9)
        for k0 in ks:
            for k1 in ks:
                fwd = np.array([[1.0, 2.0 / g], [2.0 * k1, 4.0 * k1 / g + 1.0]])
                inv = np.array([[4.0 * k0 / g + 1.0, -2.0 / g], [-2.0 * k0, 1.0]])
                lam1 = min(lam1, _min_ratio_on_cone(fwd, Cone(-math.inf, k0, "unstable")))
                lam2 = min(lam2, _min_ratio_on_cone(inv, Cone(k0, math.inf, "stable")))
        # t = BC of the cone-adapted one-step matrix is bilinear in (k0, k1),
        # so its minimum sits at a corner of the curvature rectangle
        t_min = min((2.0 / g) * (k0 + k1 + 2.0 * k0 * k1 / g)
                    for k0 in (k_lo, k_hi) for k1 in (k_lo, k_hi))
        sigma = sigma_least_expansion(t_min)
        empirical = True
    lam = min(lam1, lam2)
    return ExpansionReport(lam=lam, lam1=lam1, lam2=lam2, n0=_n0_from(lam),
                           sigma_one_step_min=sigma, regime=regime,
                           empirical=empirical)


# ----------------------------------------------------------------------
# least expansion along orbits

def _cone_basis(k: float) -> np.ndarray:
    """Basis ((0,1), (1,k)) turning the half-plane cone pair at curvature k
    into coordinate cones."""
    return np.array([[0.0, 1.0], [1.0, k]])


def least_expansion_sigma(p: TorusPoint, profile: WallMotion, n: int) -> float:
    """sigma of the n-step derivative along the orbit of p.

    Convex regime: the invariant cone is the positive quadrant, so the
    canonical coordinates are already adapted.  Strongly concave regime:
    each step is conjugated by the local basis ((0,1), (1, k)) at the
    source and target curvatures before the entries are read off.
    Raises SingularHit if the orbit meets the singularity first.
    """
    regime = _regime_or_raise(profile)
    g = profile.g
    cur = p
    total = np.eye(2)
    for _ in range(n):
        jac = torus_jacobian(cur, profile)
        if regime is Regime.STRONGLY_CONCAVE:
            k0 = profile.curvature(cur.t)
            t1 = (cur.t + 2.0 * cur.v / g) % 1.0
            k1 = profile.curvature(t1)
            jac = np.linalg.solve(_cone_basis(k1), jac @ _cone_basis(k0))
        total = jac @ total
        cur, _ = torus_step(cur, profile)
    return sigma_least_expansion(float(total[0, 1] * total[1, 0]))


# ----------------------------------------------------------------------
# curvature transport and distortion

def curvature_evolution(psi2_start: float, slopes, profile: WallMotion,
                        times=None, check_bound: bool = True) -> np.ndarray:
    """Transport the curve curvature psi'' along an orbit with given slopes.

    One step of the map turns a curve v = psi(t) with slope psi' and
    curvature psi'' into a curve whose curvature at the image time t_m is

        psi''_m = 2 f'''(t_m) + psi''_{m-1} / (1 + (2/g) psi'_{m-1})^3

    (differentiating the slope-update law; the denominator exceeds 1 in
    modulus throughout the unstable cone, so curvature stays bounded).
    ``slopes`` are psi'_0 .. psi'_{m-1}; ``times`` are the image collision
    times t_1 .. t_m and may be omitted when f''' vanishes identically.

    With check_bound the contraction estimate

        |psi''_m| <= 2 max|f'''| / (1 - theta) + theta^m |psi''_0|

    is asserted, with theta = 1/(1 + 4 k_min/g)^3 in the convex regime.
    """
    regime = _regime_or_raise(profile)
    g = profile.g
    slopes = np.asarray(slopes, dtype=float)
    m = len(slopes)
    if times is None:
        if profile.max_jerk > 0.0:
            raise ValueError("profile has f''' != 0; image times are required")
        jerks = np.zeros(m)
    else:
        times = np.asarray(times, dtype=float)
        if len(times) != m:
            raise ValueError("need one image time per slope")
        jerks = profile.eval_many(times)[3]

    if regime is Regime.POSITIVE_CONVEX:
        theta = 1.0 / (1.0 + 4.0 * profile.k_min / g) ** 3
        if np.any(slopes < 2.0 * profile.k_min - 1e-12):
            raise CurveError("slope sequence leaves the unstable cone")
    else:
        theta = 1.0 / (2.0 * abs(profile.k_max) / g - 1.0) ** 3
        if np.any(slopes > profile.k_max + 1e-12):
            raise CurveError("slope sequence leaves the unstable cone")

    out = np.empty(m + 1)
    out[0] = psi2_start
    for i in range(m):
        out[i + 1] = 2.0 * jerks[i] + out[i] / (1.0 + (2.0 / g) * slopes[i]) ** 3
    if check_bound:
        bound = (2.0 * profile.max_jerk / (1.0 - theta)
                 + theta ** np.arange(m + 1) * abs(psi2_start))
        if np.any(np.abs(out) > bound + 1e-9):
            raise AssertionError("curvature bound violated along the orbit")
    return out


def curve_log_jacobian(slopes, k1, g: float) -> np.ndarray:
    """log of the one-step stretch factor of a curve with tangent slopes
    ``slopes`` whose image sees wall curvature k1."""
    s = np.asarray(slopes, dtype=float)
    s1 = slope_step(s, k1, g)
    factor = np.abs(1.0 + (2.0 / g) * s)
    return np.log(factor) + 0.5 * (np.log1p(s1 ** 2) - np.log1p(s ** 2))


def distortion_check(curve, profile: WallMotion) -> float:
    """Empirical Lipschitz constant of log J along an unstable curve.

    ``curve`` must provide ``points`` (n, 2 lift coordinates) and ``slopes``
    arrays; it must not cross S+.  Returns
    sup |log J(x) - log J(y)| / d(x, y) over adjacent vertex pairs (0 for a
    straight curve over constant wall curvature).
    """
    g = profile.g
    pts = np.asarray(curve.points, dtype=float)
    slopes = np.asarray(curve.slopes, dtype=float)
    h = pts[:, 0] + 2.0 * pts[:, 1] / g
    if np.floor(h.min()) != np.floor(h.max()):
        raise CurveError("curve crosses S+; distortion undefined")
    t1 = h % 1.0
    k1 = profile.curvature_many(t1)
    logj = curve_log_jacobian(slopes, k1, g)
    seg = np.diff(pts, axis=0)
    d = np.hypot(seg[:, 0], seg[:, 1])
    good = d > 0.0
    if not good.any():
        return 0.0
    return float(np.max(np.abs(np.diff(logj))[good] / d[good]))


def distortion_check_backward(curve, profile: WallMotion, n: int) -> float:
    """max over x, y on the curve of |log J F^-n (x) - log J F^-n (y)|.

    The n-fold inverse Jacobian along the curve is the reciprocal of the
    forward stretches over the backward orbit; the curve must stay clear of
    the backward singularity set for n steps (checked stage by stage).
    """
    g = profile.g
    pts = np.asarray(curve.points, dtype=float).copy()
    slopes = np.asarray(curve.slopes, dtype=float).copy()
    log_total = np.zeros(len(pts))
    for _ in range(n):
        # the inverse map is discontinuous where the curve meets the corner
        # line {t in Z}; hitting it at any stage means the original curve
        # crossed the n-step backward singularity set
        if np.floor(pts[:, 0].min()) != np.floor(pts[:, 0].max()):
            raise CurveError("curve crosses the backward singularity set")
        tt = pts[:, 0] % 1.0
        if np.minimum(tt, 1.0 - tt).min() < SINGULAR_TOL:
            raise CurveError("backward orbit hits the corner line")
        v0 = pts[:, 1] - 2.0 * profile.slope_many(tt)
        t0 = pts[:, 0] - 2.0 * v0 / g
        k1 = profile.curvature_many(tt)
        # invert the slope update: s0 such that slope_step(s0) = s
        u = slopes - 2.0 * k1
        s0 = u / (1.0 - (2.0 / g) * u)
        log_total -= curve_log_jacobian(s0, k1, g)
        pts = np.column_stack([t0, v0])
        slopes = s0
    return float(log_total.max() - log_total.min())
