"""Unstable curves and their fragmentation under the torus map.

An unstable curve is cut wherever an iterate crosses the singularity set
S+ (the image would land on the wall corner, where the map jumps).  This
module tracks the connected components of evolved curves, the minimum
expansion accumulated on each component's preimage, and the distance of
image points to component boundaries (the growth-lemma statistic r_n).

Representation: everything is driven by the parametrisation of the *base*
curve.  Sample points are iterated forward in lifted plane coordinates
(no mod reduction), carrying tangent slope, curvature and accumulated
log-stretch.  The crossing function

    h_k(u) = t_k(u) + (2/g) v_k(u)

is monotone in u along every smooth piece (its u-derivative is a product
of factors 1 + (2/g) slope, which the invariant cones keep uniformly away
from zero, with a fixed sign per stage), so stage-k cuts are exactly the
parameters where h_k passes an integer; between adjacent samples they are
counted by floor differences and located by inverse interpolation.  Curve
images expand by a factor per step, so after many steps a short seed
produces thousands of components; the dense-sampling approach handles
that regime in bulk where per-cut root polishing would not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cones import cone_at, expansion_constants
from .errors import CurveError
from .limit_map import TorusPoint, torus_step, torus_step_inverse
from .wall import WallMotion

DEFAULT_DELTA0 = 1e-3      # short-curve scale for the expansion experiments
VERTEX_SPACING = 1e-4
DROP_TOL = 1e-12
MAX_SAMPLES = 2_000_001


@dataclass
class UnstableCurve:
    """Polyline curve with per-vertex slope and curvature.

    Points are lift coordinates; the reduction mod (1, g) is the curve on
    the torus.  Vertices must be ordered along the curve.
    """

    points: np.ndarray       # (n, 2)
    slopes: np.ndarray       # (n,)
    curvatures: np.ndarray   # (n,)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.slopes = np.asarray(self.slopes, dtype=float)
        self.curvatures = np.asarray(self.curvatures, dtype=float)
        if len(self.points) < 2:
            raise CurveError("curve needs at least two vertices")
        seg = np.diff(self.points, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seglen <= 0.0):
            raise CurveError("degenerate (zero-length) polyline segment")
        self._cum = np.concatenate([[0.0], np.cumsum(seglen)])

    @classmethod
    def straight(cls, center: TorusPoint | tuple, slope: float, length: float,
                 curvature: float = 0.0, n_vertices: int = 2) -> "UnstableCurve":
        """Straight segment of given arclength centred at a point."""
        if length <= 0.0:
            raise CurveError("curve length must be positive")
        c = np.array([center.t, center.v] if hasattr(center, "t") else center,
                     dtype=float)
        d = np.array([1.0, slope]) / math.hypot(1.0, slope)
        u = np.linspace(-0.5 * length, 0.5 * length, n_vertices)
        pts = c + u[:, None] * d
        return cls(points=pts, slopes=np.full(n_vertices, float(slope)),
                   curvatures=np.full(n_vertices, float(curvature)))

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def points_at(self, u) -> np.ndarray:
        """(m, 2) points at arclength parameters u (linear interpolation)."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, self.length)
        return np.column_stack([np.interp(u, self._cum, self.points[:, 0]),
                                np.interp(u, self._cum, self.points[:, 1])])

    def slopes_at(self, u) -> np.ndarray:
        return np.interp(np.asarray(u, dtype=float), self._cum, self.slopes)

    def curvatures_at(self, u) -> np.ndarray:
        return np.interp(np.asarray(u, dtype=float), self._cum, self.curvatures)

    def validate_in_cone(self, profile: WallMotion, margin: float = 0.0):
        """Raise CurveError unless every vertex slope sits in the unstable
        cone at its base point (reduced to the torus)."""
        g = profile.g
        for pt, s in zip(self.points, self.slopes):
            p = TorusPoint(pt[0] % 1.0, pt[1] % g)
            if not cone_at(p, profile, "unstable").contains_slope(s, margin):
                raise CurveError(
                    f"slope {s!r} at {p} outside the unstable cone")


# ----------------------------------------------------------------------
# bulk iteration of sampled curve points

def _iterate_samples(curve: UnstableCurve, params: np.ndarray,
                     profile: WallMotion, n: int):
    """Iterate base points n steps, collecting fragmentation bookkeeping.

    Returns (t, v, slope, curv, logj, cuts, per_pair): final state arrays,
    the accumulated log stretch factor, the sorted base parameters of every
    stage cut (located by inverse interpolation of the crossing function),
    and the number of cuts caught between each pair of adjacent samples
    (when some entry exceeds 1 the grid is too coarse to separate them).
    """
    g = profile.g
    beta = 2.0 / g
    pts = curve.points_at(params)
    t = pts[:, 0].copy()
    v = pts[:, 1].copy()
    slope = curve.slopes_at(params)
    curv = curve.curvatures_at(params)
    logj = np.zeros(len(params))
    cuts: list[float] = []
    per_pair = np.zeros(len(params) - 1)
    for _ in range(n):
        h = t + beta * v
        # stage cuts: h is monotone along the curve, so floor differences
        # between adjacent samples count the integer crossings exactly
        for i in np.flatnonzero(np.floor(h[1:]) != np.floor(h[:-1])):
            lo, hi = h[i], h[i + 1]
            first = math.floor(min(lo, hi)) + 1
            last = math.floor(max(lo, hi))
            per_pair[i] += last - first + 1
            for m in range(first, last + 1):
                lam = (m - lo) / (hi - lo)
                cuts.append(float(params[i] + lam * (params[i + 1] - params[i])))
        t = h                                   # lifted image time
        _, df1, k1, jerk1 = profile.eval_many(t)
        v = v + 2.0 * df1
        fac = 1.0 + beta * slope
        s_next = 2.0 * k1 + slope / fac
        logj += np.log(np.abs(fac)) + 0.5 * (np.log1p(s_next * s_next)
                                             - np.log1p(slope * slope))
        curv = 2.0 * jerk1 + curv / fac ** 3
        slope = s_next
    return t, v, slope, curv, logj, np.sort(np.asarray(cuts)), per_pair


@dataclass
class FragmentationRecord:
    """Image components of an unstable curve after n steps.

    ``lambdas`` holds the minimum n-step expansion over each component's
    preimage; components too short to carry a sample inherit the stretch of
    their bracketing samples.  ``components`` are materialised polylines
    (vertex spacing is the sampling step times the local stretch, so it
    meets the requested spacing whenever the sample budget allows).
    """

    n: int
    components: list[UnstableCurve]
    lambdas: list[float]
    intervals: list[tuple[float, float]]     # base-parameter intervals
    image_lengths: np.ndarray                # per component
    cut_params: np.ndarray
    # per-sample data for distance statistics
    sample_params: np.ndarray
    sample_run: np.ndarray                   # component index per sample
    sample_arclen: np.ndarray                # image arclength coordinate
    run_bounds: np.ndarray                   # (n_runs, 2) arclength of ends

    @property
    def n_components(self) -> int:
        return len(self.lambdas)

    @property
    def sum_inverse_lambda(self) -> float:
        return float(sum(1.0 / lam for lam in self.lambdas))

    def total_image_length(self) -> float:
        return float(self.image_lengths.sum())

    def boundary_distances(self) -> np.ndarray:
        """r_n per sample: image arclength to the nearer component end."""
        lo = self.run_bounds[self.sample_run, 0]
        hi = self.run_bounds[self.sample_run, 1]
        return np.minimum(self.sample_arclen - lo, hi - self.sample_arclen)


def evolve_curve(curve: UnstableCurve, profile: WallMotion, n: int,
                 spacing: float = VERTEX_SPACING,
                 max_samples: int = MAX_SAMPLES,
                 samples_per_cut: int = 32,
                 materialise: bool = True) -> FragmentationRecord:
    """Evolve an unstable curve n steps, cutting at singularity crossings.

    The sample budget is chosen from a pilot pass so that components carry
    enough samples for their minimum expansion and the image polylines meet
    the vertex spacing target, up to ``max_samples``.  Cut parameters come
    from inverse interpolation of the monotone crossing functions; their
    accuracy is far below the sample spacing (the functions are smooth).
    """
    # pilot pass: estimate cut count and image length to size the sample grid
    pilot_n = 4097
    p_params = np.linspace(0.0, curve.length, pilot_n)
    *_, p_logj, p_cuts, _pp = _iterate_samples(curve, p_params, profile, n)
    est_len = float(np.trapezoid(np.exp(p_logj),
                                 dx=curve.length / (pilot_n - 1)))
    n_samples = max(4097, samples_per_cut * (len(p_cuts) + 1))
    if materialise:
        n_samples = max(n_samples, int(est_len / spacing) + 2)
    n_samples = int(min(n_samples, max_samples))

    params = np.linspace(0.0, curve.length, n_samples)
    t, v, slope, curv, logj, cuts, _ = _iterate_samples(curve, params, profile, n)

    # arclength coordinate of every sample along the (fragmented) image
    du = params[1] - params[0]
    stretch = np.exp(logj)
    seg_len = 0.5 * (stretch[:-1] + stretch[1:]) * du
    arclen = np.concatenate([[0.0], np.cumsum(seg_len)])
    cut_arclen = np.interp(cuts, params, arclen)

    run_of_sample = np.searchsorted(cuts, params)
    bounds_lo = np.concatenate([[0.0], cut_arclen])
    bounds_hi = np.concatenate([cut_arclen, [arclen[-1]]])
    run_bounds = np.column_stack([bounds_lo, bounds_hi])
    image_lengths = bounds_hi - bounds_lo

    n_runs = len(cuts) + 1
    lambdas = _run_minima(stretch, run_of_sample, n_runs)
    edges = np.concatenate([[0.0], cuts, [curve.length]])

    keep = np.flatnonzero(image_lengths > DROP_TOL)
    components: list[UnstableCurve] = []
    if materialise:
        pts = np.column_stack([t, v])
        for i in keep:
            idx = np.flatnonzero(run_of_sample == i)
            if len(idx) < 2:
                continue
            p = pts[idx]
            dseg = np.hypot(*np.diff(p, axis=0).T)
            good = np.concatenate([[True], dseg > 0.0])
            if good.sum() >= 2:
                components.append(UnstableCurve(p[good], slope[idx][good],
                                                curv[idx][good]))
    return FragmentationRecord(
        n=n, components=components,
        lambdas=[float(lambdas[i]) for i in keep],
        intervals=[(float(edges[i]), float(edges[i + 1])) for i in keep],
        image_lengths=image_lengths[keep],
        cut_params=cuts,
        sample_params=params, sample_run=run_of_sample,
        sample_arclen=arclen, run_bounds=run_bounds)


def _run_minima(stretch: np.ndarray, run_of_sample: np.ndarray,
                n_runs: int) -> np.ndarray:
    """Minimum stretch per run; sample-free runs inherit their neighbours'."""
    out = np.full(n_runs, np.inf)
    np.minimum.at(out, run_of_sample, stretch)
    empty = ~np.isfinite(out)
    if empty.any():
        # empty runs are hairline slivers between two cuts inside one sample
        # gap; use the nearer sampled stretch on each side
        idx = np.flatnonzero(empty)
        filled = np.flatnonzero(~empty)
        for i in idx:
            j = filled[np.argmin(np.abs(filled - i))]
            out[i] = out[j]
    return out


def count_components(curve: UnstableCurve, profile: WallMotion, n: int,
                     n_samples: int = 8193, max_retries: int = 3) -> int:
    """Number of connected components of the n-step image.

    Counting is exact when no adjacent sample pair carries two cuts (the
    crossing functions are monotone per stage); the sample grid is refined
    until that holds or the retry budget runs out.
    """
    total = 0
    for _ in range(max_retries + 1):
        params = np.linspace(0.0, curve.length, n_samples)
        *_, cuts, per_pair = _iterate_samples(curve, params, profile, n)
        total = len(cuts)
        if per_pair.max() <= 1.0:
            return total + 1
        n_samples = 4 * (n_samples - 1) + 1
    return total + 1


def random_unstable_curve(profile: WallMotion, rng: np.random.Generator,
                          length: float,
                          center: TorusPoint | None = None) -> UnstableCurve:
    """Short straight unstable curve at a random (or given) center."""
    g = profile.g
    if center is None:
        center = TorusPoint(rng.uniform(0.0, 1.0), rng.uniform(0.0, g))
    cone = cone_at(center, profile, "unstable")
    slope = float(cone.sample_slopes(rng, 1)[0])
    return UnstableCurve.straight(center, slope, length)


def complexity_count(profile: WallMotion, n: int, n_trials: int,
                     curve_length: float = 1e-4, rng_seed: int = 0,
                     singularity_forest=None) -> int:
    """Max component count of short curves after n steps.

    Half of the trial curves are centred uniformly, half near the supplied
    singularity forest (multiple points of the forest are where the local
    fragmentation is richest).  The linear complexity bound caps the result
    at 6 n for curves short enough to stay local over n steps.
    """
    rng = np.random.default_rng(rng_seed)
    g = profile.g
    centers: list[TorusPoint] = []
    if singularity_forest:
        all_pts = np.vstack([seg.torus_points(g) for seg in singularity_forest])
        take = rng.integers(0, len(all_pts), n_trials // 2)
        for i in take:
            jitter = rng.normal(0.0, 2.0 * curve_length, 2)
            centers.append(TorusPoint((all_pts[i, 0] + jitter[0]) % 1.0,
                                      (all_pts[i, 1] + jitter[1]) % g))
    while len(centers) < n_trials:
        centers.append(TorusPoint(rng.uniform(0.0, 1.0), rng.uniform(0.0, g)))
    worst = 0
    for center in centers:
        curve = random_unstable_curve(profile, rng, curve_length, center)
        worst = max(worst, count_components(curve, profile, n))
    return worst


@dataclass
class GrowthTable:
    """Empirical boundary-distance statistics for the growth estimate."""

    steps: int
    eps: np.ndarray
    fraction: np.ndarray      # mes_W { r_steps < eps } / |W|, curve-averaged
    n_curves: int
    n_samples: int

    def linear_coefficient(self) -> float:
        """Least-squares slope of fraction vs eps through the origin."""
        num = float(np.dot(self.eps, self.fraction))
        den = float(np.dot(self.eps, self.eps))
        return num / den if den > 0 else math.nan


def growth_experiment(profile: WallMotion, curves, n_blocks: int,
                      eps_grid) -> GrowthTable:
    """Measure mes_W { r_(n_blocks * N0) < eps } over an ensemble of curves.

    N0 comes from the expansion constants of the profile.  Fractions reach
    1 once eps exceeds every component length and vanish as eps -> 0; the
    growth estimate predicts a linear tail in eps with a uniform constant.
    """
    curves = list(curves)
    n0 = expansion_constants(profile).n0
    steps = n_blocks * n0
    eps_grid = np.asarray(eps_grid, dtype=float)
    frac = np.zeros(len(eps_grid))
    total = 0
    for curve in curves:
        record = evolve_curve(curve, profile, steps, materialise=False)
        r = record.boundary_distances()
        for j, eps in enumerate(eps_grid):
            frac[j] += float((r < eps).mean())
        total += len(r)
    frac /= len(curves)
    return GrowthTable(steps=steps, eps=eps_grid, fraction=frac,
                       n_curves=len(curves), n_samples=total)


# ----------------------------------------------------------------------
# separation times

def _nearest_representative(x: TorusPoint, y: TorusPoint, g: float) -> np.ndarray:
    """Plane representative of y nearest to x."""
    dt = (y.t - x.t + 0.5) % 1.0 - 0.5
    dv = (y.v - x.v + 0.5 * g) % g - 0.5 * g
    return np.array([x.t + dt, x.v + dv])


def _segment_crosses_splus(x: TorusPoint, y: TorusPoint, g: float) -> bool:
    """h = t + 2v/g is linear, so the straight segment crosses {h in Z}
    exactly when the endpoint values straddle an integer."""
    yr = _nearest_representative(x, y, g)
    hx = x.t + 2.0 * x.v / g
    hy = yr[0] + 2.0 * yr[1] / g
    return math.floor(min(hx, hy)) != math.floor(max(hx, hy))


def _segment_crosses_sminus(x: TorusPoint, y: TorusPoint, profile: WallMotion,
                            n_probe: int = 65) -> bool:
    """Backward singularity crossing, probed densely (the defining function
    involves f' and is only piecewise monotone)."""
    g = profile.g
    yr = _nearest_representative(x, y, g)
    lam = np.linspace(0.0, 1.0, n_probe)
    ts = x.t + lam * (yr[0] - x.t)
    vs = x.v + lam * (yr[1] - x.v)
    # crossing the corner line t in Z separates inverse branches as well
    if math.floor(ts.min()) != math.floor(ts.max()):
        return True
    h = ts + (4.0 / g) * profile.slope_many(ts) - 2.0 * vs / g
    return math.floor(h.min()) != math.floor(h.max())


def separation_time(x: TorusPoint, y: TorusPoint, profile: WallMotion,
                    direction: str = "forward", horizon: int = 64) -> int | None:
    """Smallest n <= horizon at which the pair is cut apart, else None.

    Forward: first n for which the segment joining the n-th images crosses
    S+ (so the pair lies in different continuity components of the next
    iterate).  Backward: the same with inverse images and S-.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, not {direction!r}")
    if x == y:
        raise ValueError("separation time needs two distinct points")
    cx, cy = x, y
    for n in range(horizon + 1):
        if direction == "forward":
            if _segment_crosses_splus(cx, cy, profile.g):
                return n
            cx = torus_step(cx, profile)[0]
            cy = torus_step(cy, profile)[0]
        else:
            if _segment_crosses_sminus(cx, cy, profile):
                return n
            cx = torus_step_inverse(cx, profile)
            cy = torus_step_inverse(cy, profile)
    return None
