"""Statistical experiments on the torus map and the full collision map.

All experiments are seeded Monte Carlo; the invariant measure of the torus
map is Lebesgue, so independent uniform sampling draws directly from it,
and ensemble iteration vectorises over sample clouds.  Standard errors use
batch means with a fixed partition (32 contiguous batches), which keeps
outputs byte-reproducible for a given seed.

Orbit-level experiments on the full collision map use the vectorised
stepper; orbits that hit a singular, grazing or low-energy state abort and
are counted separately rather than polluting the statistics (such orbits
form a null set for admissible wall motions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

from .collision import step_many
from .limit_map import torus_step_many
from .wall import WallMotion

N_BATCHES = 32
JITTER = 1e-9


@dataclass(frozen=True)
class Observable:
    """Bounded observable on the torus (or cylinder), vectorised.

    ``mean`` is the declared average under the invariant measure when known
    analytically; experiments use it to center without estimation noise.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mean: float | None = None


def builtin_observables(g: float) -> dict[str, Observable]:
    return {
        "cos_t": Observable("cos_t", lambda t, v: np.cos(2.0 * np.pi * t), 0.0),
        "sin_t": Observable("sin_t", lambda t, v: np.sin(2.0 * np.pi * t), 0.0),
        "v": Observable("v", lambda t, v: v, 0.5 * g),
        "cos_v": Observable("cos_v", lambda t, v: np.cos(2.0 * np.pi * v / g), 0.0),
        "const": Observable("const", lambda t, v: np.ones_like(t), 1.0),
    }


@dataclass
class StatReport:
    """Uniform result container emitted by the CLI as JSON."""

    experiment: str
    n_samples: int
    estimates: dict
    standard_errors: dict
    passed: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "n_samples": self.n_samples,
            "estimates": self.estimates,
            "standard_errors": self.standard_errors,
            "passed": self.passed,
            **self.extra,
        }


def batch_se(values: np.ndarray, n_batches: int = N_BATCHES) -> float:
    """Standard error via contiguous batch means (fixed partition)."""
    values = np.asarray(values, dtype=float)
    m = len(values) // n_batches
    if m < 1:
        return float(values.std(ddof=1) / math.sqrt(max(len(values) - 1, 1)))
    means = values[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def _uniform_cloud(profile: WallMotion, n: int, rng: np.random.Generator):
    return rng.uniform(0.0, 1.0, n), rng.uniform(0.0, profile.g, n)


def _step_cloud(t, v, profile, rng, counters=None):
    """One torus step of a sample cloud, jittering singular hits."""
    t1, v1, gamma, singular = torus_step_many(t, v, profile)
    if singular.any():
        if counters is not None:
            counters["singular_jitters"] = counters.get("singular_jitters", 0) \
                + int(singular.sum())
        tj = (t[singular] + rng.uniform(0.5, 1.5, int(singular.sum())) * JITTER) % 1.0
        t1s, v1s, gs, _ = torus_step_many(tj, v[singular], profile)
        t1[singular], v1[singular], gamma[singular] = t1s, v1s, gs
    return t1, v1, gamma


# ----------------------------------------------------------------------
# ergodic averages

def birkhoff_average(obs: Observable, start, profile: WallMotion, n: int,
                     rng_seed: int = 0) -> StatReport:
    """Time average of obs along one torus orbit of length n.

    Exact singular hits restart the point with a tiny jitter and are
    counted; they occur with probability zero for generic starts.
    """
    rng = np.random.default_rng(rng_seed)
    g = profile.g
    t = float(start[0] if not hasattr(start, "t") else start.t)
    v = float(start[1] if not hasattr(start, "t") else start.v)
    total = 0.0
    restarts = 0
    remaining = n
    slope = profile.slope
    chunk = 65536
    buf_t = np.empty(chunk)
    buf_v = np.empty(chunk)
    # the orbit is sequential, so the map runs in a plain float loop; the
    # observable is vectorised over buffered chunks of the trajectory
    while remaining > 0:
        m = min(chunk, remaining)
        for i in range(m):
            buf_t[i] = t
            buf_v[i] = v
            t1 = (t + 2.0 * v / g) % 1.0
            if t1 < 1e-12 or 1.0 - t1 < 1e-12:
                restarts += 1
                t = (t + rng.uniform(0.5, 1.5) * JITTER) % 1.0
                t1 = (t + 2.0 * v / g) % 1.0
            v = (v + 2.0 * slope(t1)) % g
            t = t1
        total += float(obs.fn(buf_t[:m], buf_v[:m]).sum())
        remaining -= m
    avg = total / n
    return StatReport(
        experiment=f"birkhoff[{obs.name}]", n_samples=n,
        estimates={"average": avg},
        standard_errors={"average": float("nan")},
        extra={"restarts": restarts, "declared_mean": obs.mean})


# ----------------------------------------------------------------------
# correlations and the central limit theorem

@dataclass
class CorrelationResult:
    lags: np.ndarray
    c: np.ndarray             # covariance estimates C(lag)
    se: np.ndarray
    c0: float
    decay_rate: float         # fitted b in C(n) ~ exp(-b n); nan if no fit
    n_points: int
    singular_jitters: int


def autocorrelation(obs: Observable, profile: WallMotion, lags: int,
                    n_points: int, rng_seed: int = 0,
                    shuffled: bool = False) -> CorrelationResult:
    """Ensemble autocovariance C(l) = E[phi(x) phi(F^l x)] - mean^2.

    Starting points are iid uniform (the invariant measure), so C(l) needs
    no burn-in.  With ``shuffled`` the lagged values are randomly permuted,
    which destroys the dynamical coupling and provides an independence
    control (C(l) compatible with 0 for l >= 1).
    """
    rng = np.random.default_rng(rng_seed)
    counters: dict = {}
    t, v = _uniform_cloud(profile, n_points, rng)
    phi0 = obs.fn(t, v)
    mean = obs.mean if obs.mean is not None else float(phi0.mean())
    phi0c = phi0 - mean
    cs = [float((phi0c * phi0c).mean())]
    ses = [batch_se(phi0c * phi0c)]
    for lag in range(1, lags + 1):
        t, v, _ = _step_cloud(t, v, profile, rng, counters)
        phin = obs.fn(t, v) - mean
        prod = phi0c * phin
        if shuffled:
            prod = phi0c * rng.permutation(phin)
        cs.append(float(prod.mean()))
        ses.append(batch_se(prod))
    c = np.array(cs)
    se = np.array(ses)
    decay = _fit_decay_rate(c, se)
    return CorrelationResult(lags=np.arange(lags + 1), c=c, se=se,
                             c0=float(c[0]), decay_rate=decay,
                             n_points=n_points,
                             singular_jitters=counters.get("singular_jitters", 0))


def _fit_decay_rate(c: np.ndarray, se: np.ndarray) -> float:
    """Exponential rate from lags where |C| clears the noise floor."""
    usable = np.flatnonzero((np.abs(c) > 2.0 * se) & (np.arange(len(c)) >= 1))
    if len(usable) < 2:
        return float("nan")
    x = usable.astype(float)
    y = np.log(np.abs(c[usable]))
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def correlation_sum_variance(corr: CorrelationResult) -> float:
    """sigma^2 = C(0) + 2 sum C(n), truncated at the noise floor.

    The cut is the first lag from which |C| stays below 2 SE for three
    consecutive lags (the series is summable, but its tail is unmeasurable
    at finite ensemble size).  Raises ValueError when the result is not
    positive, which signals a degenerate observable or a too-short run.
    """
    below = np.abs(corr.c) < 2.0 * corr.se
    cut = len(corr.c)
    run = 0
    for i in range(1, len(corr.c)):
        run = run + 1 if below[i] else 0
        if run == 3:
            cut = i - 2
            break
    sigma2 = corr.c0 + 2.0 * float(corr.c[1:cut].sum())
    if sigma2 <= 0.0:
        raise ValueError(
            f"truncated correlation sum gave sigma^2 = {sigma2!r} <= 0")
    return sigma2


@dataclass
class CLTResult:
    ks_distance: float
    sigma2_corr: float        # variance from the correlation-sum formula
    sigma2_ensemble: float    # direct variance of the normalised sums
    n_per_sum: int
    n_ensembles: int
    singular_jitters: int


def clt_experiment(obs: Observable, profile: WallMotion, n_per_sum: int,
                   n_ensembles: int, rng_seed: int = 0,
                   corr_lags: int = 64,
                   corr_points: int = 400_000) -> CLTResult:
    """Distribution of normalised Birkhoff sums against N(0, sigma^2).

    The observable must have a declared mean (it is subtracted; a zero
    declared mean matches the hypothesis of the theorem).  sigma^2 comes
    from the truncated two-sided correlation sum; the Kolmogorov-Smirnov
    distance is taken between the n_ensembles normalised sums and the
    centred normal with that variance.
    """
    if obs.mean is None:
        raise ValueError("clt_experiment needs an observable with declared mean")
    corr = autocorrelation(obs, profile, corr_lags, corr_points, rng_seed + 1)
    sigma2 = correlation_sum_variance(corr)

    rng = np.random.default_rng(rng_seed)
    counters: dict = {}
    t, v = _uniform_cloud(profile, n_ensembles, rng)
    acc = np.zeros(n_ensembles)
    for _ in range(n_per_sum):
        acc += obs.fn(t, v) - obs.mean
        t, v, _ = _step_cloud(t, v, profile, rng, counters)
    sums = acc / math.sqrt(n_per_sum)
    sigma2_emp = float(sums.var(ddof=1))
    ks = float(sps.kstest(sums, "norm", args=(0.0, math.sqrt(sigma2))).statistic)
    return CLTResult(ks_distance=ks, sigma2_corr=sigma2,
                     sigma2_ensemble=sigma2_emp, n_per_sum=n_per_sum,
                     n_ensembles=n_ensembles,
                     singular_jitters=counters.get("singular_jitters", 0))


# ----------------------------------------------------------------------
# winding number

def gamma_mean(profile: WallMotion, n_samples: int, rng_seed: int = 0) -> StatReport:
    """Monte Carlo average of the winding increment over the torus.

    The increment has zero Lebesgue mean for every 1-periodic wall motion,
    which is what makes the escaping set null; the report carries the mean,
    its batch-means standard error and the z-score.
    """
    rng = np.random.default_rng(rng_seed)
    t, v = _uniform_cloud(profile, n_samples, rng)
    _, _, gamma, singular = torus_step_many(t, v, profile)
    gamma = gamma[~singular].astype(float)
    mean = float(gamma.mean())
    se = batch_se(gamma)
    return StatReport(
        experiment="gamma-mean", n_samples=len(gamma),
        estimates={"mean": mean},
        standard_errors={"mean": se},
        passed=bool(abs(mean) <= 3.0 * se),
        extra={"z": mean / se if se > 0 else float("inf"),
               "singular_discards": int(singular.sum())})


# ----------------------------------------------------------------------
# collision-map orbit statistics

def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class RecurrenceResult:
    fraction: float
    ci: tuple[float, float]
    returned: int
    completed: int
    aborted: int
    n_orbits: int
    t_horizon: int


def recurrence_stats(profile: WallMotion, band: tuple[float, float], eps: float,
                     t_horizon: int, n_orbits: int,
                     rng_seed: int = 0) -> RecurrenceResult:
    """Fraction of orbits of the collision map returning near their start.

    Starts are uniform in time and in the velocity band; an orbit counts as
    returned once (t mod 1, v) comes within eps of its start (cylinder
    metric, time wrapped).  Aborted orbits (singular, grazing or low-energy
    events) are excluded from the denominator and reported.
    """
    if band[0] < 10.0 * profile.g:
        raise ValueError("start band must sit above the low-energy regime "
                         f"(v >= {10.0 * profile.g})")
    rng = np.random.default_rng(rng_seed)
    t0 = rng.uniform(0.0, 1.0, n_orbits)
    v0 = rng.uniform(band[0], band[1], n_orbits)
    t, v = t0.copy(), v0.copy()
    alive = np.ones(n_orbits, dtype=bool)
    returned = np.zeros(n_orbits, dtype=bool)
    aborted = np.zeros(n_orbits, dtype=bool)
    idx = np.arange(n_orbits)
    for _ in range(t_horizon):
        if not alive.any():
            break
        ia = idx[alive]
        t1, v1, _, _, code = step_many(t[ia], v[ia], profile)
        ok = code == 0
        aborted[ia[~ok]] = True
        alive[ia[~ok]] = False
        ia = ia[ok]
        tm = t1[ok] % 1.0
        vm = v1[ok]
        t[ia], v[ia] = tm, vm
        dt = np.abs(tm - t0[ia])
        dt = np.minimum(dt, 1.0 - dt)
        hit = np.hypot(dt, vm - v0[ia]) < eps
        returned[ia[hit]] = True
        alive[ia[hit]] = False
    completed = int(n_orbits - aborted.sum())
    k = int(returned.sum())
    frac = k / completed if completed else 0.0
    return RecurrenceResult(fraction=frac, ci=wilson_interval(k, completed),
                            returned=k, completed=completed,
                            aborted=int(aborted.sum()), n_orbits=n_orbits,
                            t_horizon=t_horizon)


@dataclass
class EscapeResult:
    exceeded_fraction: float       # hit multiplier * v0 at some step <= T
    exceeded_ci: tuple[float, float]
    escaping_like_fraction: float  # crossed and never came back below
    bounded_fraction: float        # never left [v0 - d, v0 + d]
    completed: int
    aborted: int
    n_orbits: int
    t_horizon: int
    threshold_multiplier: float
    bounded_delta: float


def escape_fraction(profile: WallMotion, band: tuple[float, float],
                    multiplier: float, t_horizon: int, n_orbits: int,
                    bounded_delta: float | None = None,
                    rng_seed: int = 0) -> EscapeResult:
    """Escape statistics of collision-map orbits over a finite horizon.

    ``exceeded_fraction`` counts orbits whose velocity passed
    multiplier * v0 at any step; being cumulative it can only grow with the
    horizon (high excursions exist).  ``escaping_like_fraction`` counts
    orbits that crossed the threshold and never dipped back below it, the
    finite-horizon face of a genuinely escaping orbit; recurrence pulls
    crossed orbits back, so this fraction shrinks as the horizon grows once
    crossings saturate (the escaping set proper is null).
    ``bounded_fraction`` counts orbits that never left [v0 - d, v0 + d];
    the default window grows like the diffusive spread sqrt(T) so that a
    positive fraction witnesses bounded behaviour at high energy.
    """
    if band[0] < 10.0 * profile.g:
        raise ValueError("start band must sit above the low-energy regime")
    rng = np.random.default_rng(rng_seed)
    if bounded_delta is None:
        bounded_delta = 2.0 * profile.slope_rms * math.sqrt(t_horizon)
    t0 = rng.uniform(0.0, 1.0, n_orbits)
    v0 = rng.uniform(band[0], band[1], n_orbits)
    t, v = t0.copy(), v0.copy()
    alive = np.ones(n_orbits, dtype=bool)
    exceeded = np.zeros(n_orbits, dtype=bool)
    came_back = np.zeros(n_orbits, dtype=bool)
    in_window = np.ones(n_orbits, dtype=bool)
    aborted = np.zeros(n_orbits, dtype=bool)
    idx = np.arange(n_orbits)
    for _ in range(t_horizon):
        if not alive.any():
            break
        ia = idx[alive]
        t1, v1, _, _, code = step_many(t[ia], v[ia], profile)
        ok = code == 0
        aborted[ia[~ok]] = True
        alive[ia[~ok]] = False
        ia = ia[ok]
        t[ia], v[ia] = t1[ok] % 1.0, v1[ok]
        above = v[ia] >= multiplier * v0[ia]
        came_back[ia[exceeded[ia] & ~above]] = True
        exceeded[ia[above]] = True
        in_window[ia[np.abs(v[ia] - v0[ia]) > bounded_delta]] = False
    done = ~aborted
    completed = int(done.sum())
    k = int(exceeded[done].sum())
    k_esc = int((exceeded & ~came_back & done).sum())
    kb = int((in_window & done).sum())
    return EscapeResult(
        exceeded_fraction=k / completed if completed else 0.0,
        exceeded_ci=wilson_interval(k, completed),
        escaping_like_fraction=k_esc / completed if completed else 0.0,
        bounded_fraction=kb / completed if completed else 0.0,
        completed=completed, aborted=int(aborted.sum()), n_orbits=n_orbits,
        t_horizon=t_horizon, threshold_multiplier=multiplier,
        bounded_delta=bounded_delta)


# ----------------------------------------------------------------------
# box-averaged mixing estimator for the full map

@dataclass
class MixingRow:
    n: int
    box_height: float
    v_base: float
    estimate: float
    se: float
    product_of_means: float
    dropped: int


def mixing_box_estimator(phi1: Observable, phi2: Observable,
                         profile: WallMotion, box_heights, ns,
                         n_samples: int, v_base: float = 50.0,
                         rng_seed: int = 0) -> list[MixingRow]:
    """Importance-sampled box average of phi1 * (phi2 o F^n).

    The invariant measure has density w = v - f'(t), so uniform samples in
    the box V = [0,1) x [v_base, v_base + height] are weighted by w and the
    estimator is self-normalised.  Orbits aborting before n steps are
    dropped and counted.  The mixing property predicts convergence to the
    product of the global means as n and the box grow.
    """
    rng = np.random.default_rng(rng_seed)
    rows = []
    for height in box_heights:
        t0 = rng.uniform(0.0, 1.0, n_samples)
        v0 = rng.uniform(v_base, v_base + height, n_samples)
        weight = v0 - profile.slope_many(t0)
        a = phi1.fn(t0, v0)
        t, v = t0.copy(), v0.copy()
        ok = np.ones(n_samples, dtype=bool)
        step_idx = 0
        for n in sorted(ns):
            while step_idx < n:
                t1, v1, _, _, code = step_many(t[ok], v[ok], profile)
                still = code == 0
                sel = np.flatnonzero(ok)
                ok[sel[~still]] = False
                t[sel[still]] = t1[still] % 1.0
                v[sel[still]] = v1[still]
                step_idx += 1
            b = phi2.fn(t[ok], v[ok])
            contrib = weight[ok] * a[ok] * b
            norm = weight[ok]
            est = float(contrib.sum() / norm.sum())
            # batch SE of a ratio estimator: delta method on batch means
            m = len(contrib) // N_BATCHES
            if m >= 1:
                cb = contrib[: m * N_BATCHES].reshape(N_BATCHES, m).mean(axis=1)
                nb = norm[: m * N_BATCHES].reshape(N_BATCHES, m).mean(axis=1)
                ratios = cb / nb
                se = float(ratios.std(ddof=1) / math.sqrt(N_BATCHES))
            else:
                se = float("nan")
            pm = ((phi1.mean if phi1.mean is not None else float("nan"))
                  * (phi2.mean if phi2.mean is not None else float("nan")))
            rows.append(MixingRow(n=n, box_height=float(height),
                                  v_base=v_base, estimate=est, se=se,
                                  product_of_means=pm,
                                  dropped=int(n_samples - ok.sum())))
    return rows


# ----------------------------------------------------------------------
# orbit classification

@dataclass(frozen=True)
class ClassifierThresholds:
    escape_ratio: float = 2.0      # grew past ratio * v0 without dipping
    bounded_delta: float = 2.0     # window half-width around v0
    oscillation_ratio: float = 4.0


def classify_orbit(vs, termination: str,
                   thresholds: ClassifierThresholds = ClassifierThresholds()) -> str:
    """Finite-horizon heuristic label for a velocity history.

    Rules (first match wins): aborted when the orbit did not complete;
    escaping-like when the velocity doubled per ``escape_ratio`` without
    dipping below the start window; bounded-like when it never left the
    window; oscillatory-like when the max/min ratio is large and the orbit
    came back below its start after peaking; bounded-like otherwise (the
    honest answer for an undecided finite sample).
    """
    if termination not in ("completed", "escaped-threshold"):
        return "aborted"
    vs = np.asarray(vs, dtype=float)
    v0 = vs[0]
    d = thresholds.bounded_delta
    if vs.max() >= thresholds.escape_ratio * v0 and vs.min() >= v0 - d:
        return "escaping-like"
    if np.all(np.abs(vs - v0) <= d):
        return "bounded-like"
    peak = int(vs.argmax())
    if vs.max() / max(vs.min(), 1e-300) > thresholds.oscillation_ratio \
            and np.any(vs[peak:] < v0):
        return "oscillatory-like"
    return "bounded-like"
