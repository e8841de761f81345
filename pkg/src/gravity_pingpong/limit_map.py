"""Large-velocity limit of the collision dynamics.

For fast collisions the full map is approximated by the closed-form map

    (t, v)  ->  (t + 2v/g,  v + 2 f'(t + 2v/g))

acting on the phase cylinder.  Because only t mod 1 and v mod g enter the
formulas, the limit map descends to the torus [0, 1) x [0, g); the integer
part of v/g changes by a winding increment gamma per step.  The torus map
preserves Lebesgue measure (its Jacobian has unit determinant everywhere).

The map is singular on the set S+ of points whose image time is an integer
(the wall corner), and its inverse is singular on the mirror set S-.  Both
sets, and their higher generations under pullback, are represented here as
sampled polylines kept in *lifted* plane coordinates: each polyline is a
continuous curve in R^2 whose reduction mod (1, g) is the torus object.
Working in the lift avoids fake cuts at chart boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularHit
from .wall import WallMotion

SINGULAR_TOL = 1e-12
DEFAULT_RESOLUTION = 1e-3


@dataclass(frozen=True)
class TorusPoint:
    """Point on the torus: t in [0, 1), v in [0, g)."""

    t: float
    v: float


@dataclass(frozen=True)
class CylinderPoint:
    """Cylinder point split as v = v_mod + m g with v_mod in [0, g)."""

    t: float   # time mod 1
    v: float   # full velocity

    def winding(self, g: float) -> int:
        return int(math.floor(self.v / g))

    def torus(self, g: float) -> TorusPoint:
        m = math.floor(self.v / g)
        return TorusPoint(self.t - math.floor(self.t), self.v - m * g)


def reduce_torus(t: float, v: float, g: float) -> TorusPoint:
    """Half-open reduction onto [0,1) x [0,g); ties resolve downward."""
    return TorusPoint(t - math.floor(t), v - g * math.floor(v / g))


def _dist_to_integers(x: float) -> float:
    return abs(x - round(x))


# ----------------------------------------------------------------------
# the maps

def limit_step(t: float, v: float, profile: WallMotion) -> tuple[float, float]:
    """One step of the closed-form limit map on the cylinder.

    Raises SingularHit when the image time t + 2v/g is within 1e-12 of an
    integer (the orbit would land on the wall corner).
    """
    if v <= 0.0:
        raise ValueError(f"limit map needs v > 0, got {v}")
    g = profile.g
    t1 = t + 2.0 * v / g
    if _dist_to_integers(t1) < SINGULAR_TOL:
        raise SingularHit(f"image time {t1!r} is at the corner")
    v1 = v + 2.0 * profile.slope(t1)
    return t1, v1


def torus_step(p: TorusPoint, profile: WallMotion) -> tuple[TorusPoint, int]:
    """Torus image of p plus the winding increment gamma.

    gamma is the integer change of floor(v/g) induced by the step; it is
    bounded by ceil(2 max|f'| / g) and has zero mean under Lebesgue measure.
    """
    g = profile.g
    t1 = (p.t + 2.0 * p.v / g) % 1.0
    if t1 < SINGULAR_TOL or 1.0 - t1 < SINGULAR_TOL:
        raise SingularHit(f"torus step from {p} lands on the corner")
    v1_raw = p.v + 2.0 * profile.slope(t1)
    gamma = math.floor(v1_raw / g)
    return TorusPoint(t1, v1_raw - g * gamma), gamma


def torus_step_many(t, v, profile: WallMotion):
    """Vectorised torus step.

    Returns (t1, v1, gamma, singular) arrays; entries flagged singular got
    their image computed with the right-sided corner value and should be
    discarded or jittered by the caller.
    """
    g = profile.g
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    t1 = (t + 2.0 * v / g) % 1.0
    singular = np.minimum(t1, 1.0 - t1) < SINGULAR_TOL
    v1_raw = v + 2.0 * profile.slope_many(t1)
    gamma = np.floor(v1_raw / g)
    v1 = v1_raw - g * gamma
    return t1, v1, gamma.astype(np.int64), singular


def torus_jacobian(p: TorusPoint, profile: WallMotion) -> np.ndarray:
    """Derivative of the torus map at p: [[1, 2/g], [2 k1, 4 k1/g + 1]].

    k1 is the wall curvature at the image time, so the point must be off S+.
    The determinant is identically 1 (Lebesgue measure preservation).
    """
    g = profile.g
    t1 = (p.t + 2.0 * p.v / g) % 1.0
    if t1 < SINGULAR_TOL or 1.0 - t1 < SINGULAR_TOL:
        raise SingularHit(f"no derivative on S+ at {p}")
    k1 = profile.curvature(t1)
    return np.array([[1.0, 2.0 / g], [2.0 * k1, 4.0 * k1 / g + 1.0]])


def torus_step_inverse(p: TorusPoint, profile: WallMotion) -> TorusPoint:
    """Inverse torus step; singular when p sits on S0 = {t = 0}."""
    g = profile.g
    if p.t < SINGULAR_TOL or 1.0 - p.t < SINGULAR_TOL:
        raise SingularHit(f"inverse step from the corner line at {p}")
    v0 = (p.v - 2.0 * profile.slope(p.t)) % g
    t0 = (p.t - 2.0 * v0 / g) % 1.0
    return TorusPoint(t0, v0)


def winding_bound(profile: WallMotion) -> int:
    """ceil(2 max|f'| / g), a hard bound on |gamma|."""
    return int(math.ceil(2.0 * profile.max_slope / profile.g))


# ----------------------------------------------------------------------
# singularity sets

@dataclass
class SingularitySegment:
    """One smooth polyline piece of a singularity set, in lift coordinates.

    ``points`` is an (n, 2) array tracing a continuous plane curve whose
    reduction mod (1, g) lies on the torus.  ``generation`` counts pullbacks:
    generation 1 is the defining set itself, generation k+1 is the preimage
    of a generation-k segment (its index recorded in ``parent``).
    """

    which: str            # "S+" or "S-"
    generation: int
    points: np.ndarray
    slope_range: tuple[float, float]
    parent: int | None = None

    @property
    def length(self) -> float:
        d = np.diff(self.points, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def torus_points(self, g: float) -> np.ndarray:
        pts = self.points.copy()
        pts[:, 0] -= np.floor(pts[:, 0])
        pts[:, 1] -= g * np.floor(pts[:, 1] / g)
        return pts


def _polyline_slope_range(points: np.ndarray) -> tuple[float, float]:
    d = np.diff(points, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = d[:, 1] / d[:, 0]
    slopes = slopes[np.isfinite(slopes)]
    if len(slopes) == 0:
        return (math.nan, math.nan)
    return float(slopes.min()), float(slopes.max())


def _resample_to_resolution(points: np.ndarray, resolution: float) -> np.ndarray:
    """Insert linearly interpolated vertices until spacing <= resolution."""
    seg = np.diff(points, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    n_sub = np.maximum(1, np.ceil(lengths / resolution).astype(int))
    if np.all(n_sub == 1):
        return points
    chunks = []
    for i, n in enumerate(n_sub):
        ts = np.linspace(0.0, 1.0, n + 1)[:-1]
        chunks.append(points[i] + ts[:, None] * seg[i])
    chunks.append(points[-1:])
    return np.vstack(chunks)


def _splus_generation1(profile: WallMotion, resolution: float) -> list[SingularitySegment]:
    g = profile.g
    segs = []
    n = max(2, int(math.ceil(math.hypot(1.0, g / 2.0) / resolution)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    for j in (1, 2):
        vs = 0.5 * g * (j - ts)
        pts = np.column_stack([ts, vs])
        segs.append(SingularitySegment("S+", 1, pts, (-g / 2.0, -g / 2.0)))
    return segs


def _sminus_generation1(profile: WallMotion, resolution: float) -> list[SingularitySegment]:
    """Branches of {t + (4/g) f'(t) - 2v/g = j}, i.e. v = (g/2)(t - j) + 2 f'(t).

    The corner makes f' ambiguous at t = 0; the branch continuous from the
    interior t in (0, 1) is taken (right-sided f').  Branches are clipped to
    the velocity band [0, g) and split where they leave it.
    """
    g = profile.g
    n = max(64, int(math.ceil(4.0 * (1.0 + g) / resolution)))
    ts = np.linspace(0.0, 1.0, n + 1)
    ts[0] = min(1e-12, 0.25 / n)            # stay off the corner
    ts[-1] = 1.0 - min(1e-12, 0.25 / n)
    base = 0.5 * g * ts + 2.0 * profile.slope_many(ts)
    j_lo = int(math.floor(base.min() / (0.5 * g))) - 1
    j_hi = int(math.ceil(base.max() / (0.5 * g))) + 1
    segs = []
    slopes = 0.5 * g + 2.0 * profile.curvature_many(ts)
    for j in range(j_lo, j_hi + 1):
        vs = base - 0.5 * g * j
        inside = (vs >= 0.0) & (vs < g)
        if not inside.any():
            continue
        # split into maximal runs of in-band samples
        idx = np.flatnonzero(inside)
        cuts = np.flatnonzero(np.diff(idx) > 1)
        for run in np.split(idx, cuts + 1):
            if len(run) < 2:
                continue
            pts = np.column_stack([ts[run], vs[run]])
            pts = _resample_to_resolution(pts, resolution)
            srange = (float(slopes[run].min()), float(slopes[run].max()))
            segs.append(SingularitySegment("S-", 1, pts, srange))
    return segs


def _pull_back_segment(seg: SingularitySegment, profile: WallMotion,
                       resolution: float, seg_index: int,
                       inverse: bool) -> list[SingularitySegment]:
    """Preimage (inverse=True) or image (inverse=False) of one lift polyline.

    The map applied pointwise is continuous except where the argument of the
    wall slope crosses an integer, so the parent is first split there, and
    each continuous piece is mapped and re-refined to the target resolution.
    """
    g = profile.g

    def apply_inverse(pts):
        tt = pts[:, 0]
        vv = pts[:, 1]
        v0 = vv - 2.0 * profile.slope_many(tt)
        t0 = tt - 2.0 * v0 / g
        return np.column_stack([t0, v0])

    def apply_forward(pts):
        tt = pts[:, 0]
        vv = pts[:, 1]
        t1 = tt + 2.0 * vv / g
        v1 = vv + 2.0 * profile.slope_many(t1)
        return np.column_stack([t1, v1])

    # one map application stretches by at most roughly the matrix norm, so
    # refine the parent enough that the image lands at the target resolution
    k_abs = max(abs(profile.k_min), abs(profile.k_max))
    stretch = 2.0 + 2.0 / g + 2.0 * k_abs * (1.0 + 2.0 / g)
    pts = _resample_to_resolution(seg.points, resolution / stretch)
    # split where the slope argument crosses an integer: t for the inverse
    # map, t + 2v/g for the forward map
    arg = pts[:, 0] if inverse else pts[:, 0] + 2.0 * pts[:, 1] / g
    cuts = np.flatnonzero(np.floor(arg[1:]) != np.floor(arg[:-1]))
    pieces = np.split(pts, cuts + 1)
    out = []
    for piece in pieces:
        if len(piece) < 2:
            continue
        img = apply_inverse(piece) if inverse else apply_forward(piece)
        img = _resample_to_resolution(img, resolution)
        # recentre the lift so exported coordinates stay small
        mid = img[len(img) // 2]
        img[:, 0] -= math.floor(mid[0])
        img[:, 1] -= g * math.floor(mid[1] / g)
        out.append(SingularitySegment(seg.which, seg.generation + 1, img,
                                      _polyline_slope_range(img), parent=seg_index))
    return out


def singularity_set(profile: WallMotion, which: str, generation: int,
                    resolution: float = DEFAULT_RESOLUTION) -> list[SingularitySegment]:
    """Forest of singularity segments up to the requested generation.

    which="S+": the sets cutting forward iterates; generation n collects
    S+ together with its first n-1 pullbacks (the boundaries of the n-step
    continuity components).  which="S-" does the same for the inverse map,
    with pushforwards.  Generation-n output contains every lower generation,
    with parent links recording the pullback forest.
    """
    if generation < 1:
        raise ValueError("generation must be >= 1")
    if which not in ("S+", "S-"):
        raise ValueError(f"unknown singularity set {which!r}")
    if which == "S+":
        forest = _splus_generation1(profile, resolution)
        inverse = True
    else:
        forest = _sminus_generation1(profile, resolution)
        inverse = False
    frontier = list(range(len(forest)))
    for _ in range(generation - 1):
        new_frontier = []
        for idx in frontier:
            children = _pull_back_segment(forest[idx], profile, resolution,
                                          idx, inverse=inverse)
            for child in children:
                forest.append(child)
                new_frontier.append(len(forest) - 1)
        frontier = new_frontier
    return forest


def distance_to_splus(p: TorusPoint, g: float) -> float:
    """Exact plane distance from p to the generation-1 set {t + 2v/g in Z}."""
    h = p.t + 2.0 * p.v / g
    return _dist_to_integers(h) / math.hypot(1.0, 2.0 / g)


def distance_to_singularity(p: TorusPoint, segments, g: float) -> float:
    """Euclidean torus distance from p to the nearest segment.

    Uses the exact line-family formula when every segment is generation-1
    S+; otherwise the minimum of point-to-edge distances over all polylines,
    with each edge shifted by the deck translation nearest to p (edges are
    short, so one shift per edge is enough).
    """
    segments = list(segments)
    if segments and all(s.which == "S+" and s.generation == 1 for s in segments):
        return distance_to_splus(p, g)
    best = math.inf
    pt = np.array([p.t, p.v])
    for seg in segments:
        a = seg.points[:-1]
        b = seg.points[1:]
        shift = np.empty_like(a)
        shift[:, 0] = np.round(a[:, 0] - pt[0])
        shift[:, 1] = g * np.round((a[:, 1] - pt[1]) / g)
        a = a - shift
        b = b - shift
        ab = b - a
        denom = (ab * ab).sum(axis=1)
        denom[denom == 0.0] = 1.0
        lam = np.clip(((pt - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
        proj = a + lam[:, None] * ab
        d = np.hypot(proj[:, 0] - pt[0], proj[:, 1] - pt[1])
        if len(d):
            best = min(best, float(d.min()))
    return best
