"""Piecewise-polynomial wall motion.

The wall height is a 1-periodic function f(t), piecewise polynomial of
degree <= 5 on a partition of [0, 1).  The model needs f, its first three
derivatives, exact bounds on the second derivative k(t) = f''(t), and the
corner at integer times: f'(0+) != f'(1-).  Polynomial pieces make every
one of those quantities available in closed form.

Two canonical families cover the admissible regimes:

* ``q_profile(k, g)``:  f(t) = k (t^2 - t) / 2, so f'' = k (convex for k > 0)
* ``n_profile(c, g)``:  f(t) = c (t - t^2) / 2, so f'' = -c

Both vanish at t = 0, 1 and carry the corner f'(0+) = -f'(1-).
"""

from __future__ import annotations

import bisect
import enum
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ProfileError

# Tolerances for the value-level profile invariants.
PERIODICITY_TOL = 1e-12
SMOOTHNESS_TOL = 1e-9
CORNER_TOL = 1e-9

MAX_DEGREE = 5


class Regime(enum.Enum):
    """Admissibility class of a wall motion for gravitational constant g."""

    POSITIVE_CONVEX = "positive-convex"      # min f'' > 0
    STRONGLY_CONCAVE = "strongly-concave"    # max f'' < -g
    NOT_ADMISSIBLE = "not-admissible"


def _poly_derivative(coeffs: np.ndarray) -> np.ndarray:
    """Coefficient array (ascending powers) of the derivative polynomial."""
    n = len(coeffs)
    if n <= 1:
        return np.zeros(1)
    return coeffs[1:] * np.arange(1, n, dtype=float)


def _poly_eval(coeffs: np.ndarray, x):
    """Horner evaluation, works on scalars and arrays."""
    result = np.zeros_like(np.asarray(x, dtype=float))
    for c in coeffs[::-1]:
        result = result * x + c
    return result


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of a x^2 + b x + c, numerically stable, degenerate-safe."""
    if a == 0.0:
        if b == 0.0:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    # Avoid cancellation: compute the large-magnitude root first.
    q = -0.5 * (b + math.copysign(sq, b)) if b != 0.0 else 0.5 * sq
    if q == 0.0:
        return [0.0]
    return [q / a, c / q]


def _cubic_range_on(coeffs: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    """Exact min/max of a degree<=3 polynomial on [lo, hi].

    Evaluates endpoints plus the real critical points inside the interval;
    the critical points of a cubic come from the quadratic formula.
    """
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), trim="b")
    if len(coeffs) == 0:
        return 0.0, 0.0
    if len(coeffs) > 4:
        raise ValueError("expected a polynomial of degree <= 3")
    cand = [lo, hi]
    deriv = _poly_derivative(coeffs)
    # deriv has degree <= 2: coefficient order c0 + c1 x + c2 x^2
    d = np.zeros(3)
    d[: len(deriv)] = deriv
    for r in _quadratic_roots(d[2], d[1], d[0]):
        if lo < r < hi:
            cand.append(r)
    vals = [float(_poly_eval(coeffs, x)) for x in cand]
    return min(vals), max(vals)


@dataclass(frozen=True)
class Piece:
    """One polynomial piece of the wall profile on [lo, hi)."""

    lo: float
    hi: float
    coeffs: tuple[float, ...]  # ascending powers, degree <= MAX_DEGREE


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the value-level profile checks; report-only, never raises."""

    violations: tuple[str, ...]
    corner_slopes: tuple[float, float]  # (f'(0+), f'(1-))

    @property
    def valid(self) -> bool:
        return not self.violations


class WallMotion:
    """1-periodic piecewise-polynomial wall height with derivatives.

    The constructor enforces structural sanity (pieces partition [0, 1)
    exactly, degrees within bound, g > 0) and raises ProfileError otherwise.
    Value-level invariants (periodicity of f, interior smoothness, presence
    of the corner) are checked by :meth:`validate`, which only reports.

    Instances are immutable and safe to share between threads.
    """

    def __init__(self, pieces, g: float, name: str | None = None):
        pieces = [Piece(float(p[0]), float(p[1]), tuple(float(c) for c in p[2]))
                  if not isinstance(p, Piece) else p for p in pieces]
        if not pieces:
            raise ProfileError("profile needs at least one piece")
        if not (g > 0.0 and math.isfinite(g)):
            raise ProfileError(f"gravitational constant must be positive, got {g}")
        pieces = sorted(pieces, key=lambda p: p.lo)
        if pieces[0].lo != 0.0 or pieces[-1].hi != 1.0:
            raise ProfileError("pieces must cover [0, 1) exactly")
        for a, b in zip(pieces, pieces[1:]):
            if a.hi != b.lo:
                raise ProfileError(
                    f"pieces must be contiguous: [{a.lo}, {a.hi}) then [{b.lo}, {b.hi})")
        for p in pieces:
            if not p.lo < p.hi:
                raise ProfileError(f"empty piece [{p.lo}, {p.hi})")
            if len(p.coeffs) > MAX_DEGREE + 1:
                raise ProfileError(f"piece degree exceeds {MAX_DEGREE}")

        self.pieces = tuple(pieces)
        self.g = float(g)
        self.name = name or "custom"

        # Per-derivative coefficient tables, padded to fixed width so that
        # vectorised evaluation can gather rows by piece index.
        width = MAX_DEGREE + 1
        table = np.zeros((len(pieces), width))
        for i, p in enumerate(pieces):
            table[i, : len(p.coeffs)] = p.coeffs
        self._coeffs = [table]
        for _ in range(3):
            prev = self._coeffs[-1]
            nxt = np.zeros_like(prev)
            for i in range(len(pieces)):
                d = _poly_derivative(prev[i])
                nxt[i, : len(d)] = d
            self._coeffs.append(nxt)
        # effective Horner width per derivative table (>=1)
        self._widths = []
        for c in self._coeffs:
            nz = np.flatnonzero((c != 0.0).any(axis=0))
            self._widths.append(int(nz[-1]) + 1 if len(nz) else 1)
        self._breaks = np.array([p.lo for p in pieces] + [1.0])
        # plain-float coefficient tables keep scalar evaluation off the
        # numpy scalar path (orbit loops call eval() millions of times)
        self._py_coeffs = [tuple(tuple(float(x) for x in row[:w])
                                 for row in tab)
                           for tab, w in zip(self._coeffs, self._widths)]
        self._py_breaks = [p.lo for p in pieces] + [1.0]

        # Exact second-derivative bounds (f'' has degree <= 3).
        k_lo, k_hi = math.inf, -math.inf
        for i, p in enumerate(pieces):
            m, M = _cubic_range_on(self._coeffs[2][i], p.lo, p.hi)
            k_lo, k_hi = min(k_lo, m), max(k_hi, M)
        self.k_min = k_lo
        self.k_max = k_hi

        # Coarser bounds used by solvers: |f'|, |f'''| and the height range.
        # A dense grid is enough here; these feed brackets and safety margins,
        # not correctness-critical comparisons.
        grid = np.linspace(0.0, 1.0, 4097)
        fv, dfv, _, d3v = self.eval_many(grid)
        self.f_min, self.f_max = float(fv.min()), float(fv.max())
        self.max_slope = float(np.abs(dfv).max())
        self.slope_rms = float(np.sqrt((dfv * dfv).mean()))
        self.max_jerk = float(np.abs(d3v).max())

    # ------------------------------------------------------------------
    # evaluation

    def _piece_index(self, u: float, side: int) -> int:
        """Index of the piece containing u in [0, 1); side=-1 takes the
        left-limit piece at interior breakpoints and wraps u=0 to the last
        piece (the 1- limit)."""
        if side < 0:
            i = bisect.bisect_left(self._py_breaks, u) - 1
            if i < 0:  # u == 0.0 from the left is the end of the last piece
                return len(self.pieces) - 1
        else:
            i = bisect.bisect_right(self._py_breaks, u) - 1
        return min(max(i, 0), len(self.pieces) - 1)

    def eval(self, t: float, side: int = +1) -> tuple[float, float, float, float]:
        """(f, f', f'', f''') of the 1-periodic extension at time t.

        At a breakpoint the one-sided values are returned: side=+1 gives the
        limit from the right (default), side=-1 from the left.  Values are
        never averaged across the corner.  For side=-1 at integer t this
        evaluates the 1- limit.
        """
        u = t - math.floor(t)
        if side < 0 and u == 0.0:
            u = 1.0
            i = len(self.pieces) - 1
        elif len(self.pieces) == 1:
            i = 0
        else:
            i = self._piece_index(u, side)
        out = []
        for tab in self._py_coeffs:
            acc = 0.0
            for c in reversed(tab[i]):
                acc = acc * u + c
            out.append(acc)
        return tuple(out)

    def eval_many(self, t):
        """Vectorised (f, f', f'', f''') at an array of times, right-sided."""
        t = np.asarray(t, dtype=float)
        u = t - np.floor(t)
        out = []
        if len(self.pieces) == 1:
            for c, w in zip(self._coeffs, self._widths):
                row = c[0]
                acc = np.full_like(u, row[w - 1])
                for j in range(w - 2, -1, -1):
                    acc *= u
                    acc += row[j]
                out.append(acc)
            return tuple(out)
        idx = np.clip(np.searchsorted(self._breaks, u, side="right") - 1,
                      0, len(self.pieces) - 1)
        for c, w in zip(self._coeffs, self._widths):
            acc = np.zeros_like(u)
            for i in range(len(self.pieces)):
                mask = idx == i
                if not mask.any():
                    continue
                um = u[mask]
                row = c[i]
                a = np.full_like(um, row[w - 1])
                for j in range(w - 2, -1, -1):
                    a *= um
                    a += row[j]
                acc[mask] = a
            out.append(acc)
        return tuple(out)

    def height(self, t: float) -> float:
        return self.eval(t)[0]

    def slope(self, t: float) -> float:
        return self.eval(t)[1]

    def curvature(self, t: float) -> float:
        """k(t) = f''(t), right-sided at breakpoints."""
        return self.eval(t)[2]

    def slope_many(self, t):
        return self.eval_many(t)[1]

    def curvature_many(self, t):
        return self.eval_many(t)[2]

    # ------------------------------------------------------------------
    # classification and validation

    def corner_slopes(self) -> tuple[float, float]:
        """(f'(0+), f'(1-)); the model's single singularity when they differ."""
        right = self.eval(0.0, side=+1)[1]
        left = self.eval(0.0, side=-1)[1]
        return right, left

    def classify_regime(self) -> Regime:
        """Exact regime from the closed-form bounds of f'' per piece."""
        if self.k_min > 0.0:
            return Regime.POSITIVE_CONVEX
        if self.k_max < -self.g:
            return Regime.STRONGLY_CONCAVE
        return Regime.NOT_ADMISSIBLE

    @property
    def admissible(self) -> bool:
        return self.classify_regime() is not Regime.NOT_ADMISSIBLE

    def validate(self) -> ValidationReport:
        """Check the value-level invariants and list every violation.

        Checks: f(0+) = f(1-) (value periodicity), continuity of f, f', f''
        at interior breakpoints, and presence of the corner f'(0+) != f'(1-).
        """
        bad = []
        f0 = self.eval(0.0, side=+1)[0]
        f1 = self.eval(0.0, side=-1)[0]
        if abs(f0 - f1) > PERIODICITY_TOL:
            bad.append(f"value-periodicity violated: f(0+)={f0!r} f(1-)={f1!r}")
        for p in self.pieces[1:]:
            left = self.eval(p.lo, side=-1)
            right = self.eval(p.lo, side=+1)
            names = ("f", "f'", "f''")
            for nm, a, b in zip(names, left, right):
                if abs(a - b) > SMOOTHNESS_TOL:
                    bad.append(
                        f"{nm} discontinuous at breakpoint t={p.lo}: {a!r} vs {b!r}")
        sr, sl = self.corner_slopes()
        if abs(sr - sl) <= CORNER_TOL:
            bad.append(f"no corner: model degenerate (f'(0+)={sr!r} = f'(1-)={sl!r})")
        return ValidationReport(violations=tuple(bad), corner_slopes=(sr, sl))

    def __repr__(self):
        return (f"WallMotion({self.name}, g={self.g}, pieces={len(self.pieces)}, "
                f"k in [{self.k_min:.6g}, {self.k_max:.6g}])")


# ----------------------------------------------------------------------
# canonical profiles

def q_profile(k: float = 1.0, g: float = 2.0) -> WallMotion:
    """Convex family: f(t) = k (t^2 - t)/2, f'' = k.  Admissible for k > 0."""
    return WallMotion([(0.0, 1.0, (0.0, -k / 2.0, k / 2.0))], g=g, name=f"Q({k:g})")


def n_profile(c: float = 2.0, g: float = 1.0) -> WallMotion:
    """Concave family: f(t) = c (t - t^2)/2, f'' = -c.  Admissible for c > g."""
    return WallMotion([(0.0, 1.0, (0.0, c / 2.0, -c / 2.0))], g=g, name=f"N({c:g})")


def builtin_profile(spec: str, g: float) -> WallMotion:
    """Resolve catalog names like ``Q(1)`` or ``N(2.5)`` to profiles."""
    s = spec.strip()
    if len(s) >= 4 and s[0] in "QNqn" and s[1] == "(" and s.endswith(")"):
        try:
            val = float(s[2:-1])
        except ValueError as exc:
            raise ProfileError(f"bad profile parameter in {spec!r}") from exc
        if s[0] in "Qq":
            return q_profile(val, g)
        return n_profile(val, g)
    raise ProfileError(f"unknown builtin profile {spec!r}; expected Q(k) or N(c)")


# ----------------------------------------------------------------------
# file format: `g = <float>` then one `piece <lo> <hi> <c0> ... <c5>` per line

def parse_profile(text: str, name: str = "profile") -> WallMotion:
    """Parse the line-oriented profile format; errors carry line numbers."""
    g = None
    pieces = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("g"):
            parts = [p.strip() for p in line.split("=", 1)]
            if len(parts) != 2 or parts[0] != "g":
                raise ProfileError(f"line {ln}: expected 'g = <float>', got {raw!r}")
            try:
                g = float(parts[1])
            except ValueError as exc:
                raise ProfileError(f"line {ln}: bad float for g: {parts[1]!r}") from exc
        elif line.startswith("piece"):
            tokens = line.split()
            if len(tokens) < 4 or len(tokens) > 4 + MAX_DEGREE:
                raise ProfileError(
                    f"line {ln}: expected 'piece <lo> <hi> <c0> [... c{MAX_DEGREE}]'")
            try:
                vals = [float(tok) for tok in tokens[1:]]
            except ValueError as exc:
                raise ProfileError(f"line {ln}: bad float in piece") from exc
            pieces.append((vals[0], vals[1], tuple(vals[2:])))
        else:
            raise ProfileError(f"line {ln}: unrecognised directive {raw!r}")
    if g is None:
        raise ProfileError("missing 'g = <float>' line")
    if not pieces:
        raise ProfileError("no 'piece' lines found")
    try:
        return WallMotion(pieces, g=g, name=name)
    except ProfileError as exc:
        raise ProfileError(f"invalid profile: {exc}") from exc


def load_profile(path) -> WallMotion:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_profile(text, name=os.path.basename(str(path)))


def format_profile(profile: WallMotion) -> str:
    """Serialise a profile back to the line-oriented format."""
    lines = [f"g = {profile.g!r}"]
    for p in profile.pieces:
        coeffs = " ".join(repr(c) for c in p.coeffs)
        lines.append(f"piece {p.lo!r} {p.hi!r} {coeffs}")
    return "\n".join(lines) + "\n"
