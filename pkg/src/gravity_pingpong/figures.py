"""Report figures, rendered to PNG files next to their CSV data.

Everything draws through the Agg backend so the report path works headless;
figure metadata is stripped for byte-stable output under a fixed seed.
"""

from __future__ import annotations

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

DPI = 150
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=DPI, metadata=_META, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def singularity_figure(profile, forests: dict, path) -> str:
    """Singularity sets on the torus, one color per generation."""
    g = profile.g
    fig, ax = plt.subplots(figsize=(6, 5))
    cmap = plt.get_cmap("viridis")
    max_gen = max((seg.generation for segs in forests.values() for seg in segs),
                  default=1)
    for which, style in (("S+", "-"), ("S-", "--")):
        for seg in forests.get(which, []):
            pts = seg.torus_points(g)
            # break the polyline at chart wraps for clean plotting
            jump = np.flatnonzero((np.abs(np.diff(pts[:, 0])) > 0.5)
                                  | (np.abs(np.diff(pts[:, 1])) > 0.5 * g))
            color = cmap((seg.generation - 1) / max(max_gen - 1, 1))
            for piece in np.split(np.arange(len(pts)), jump + 1):
                if len(piece) > 1:
                    ax.plot(pts[piece, 0], pts[piece, 1], style, color=color,
                            lw=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, g)
    ax.set_xlabel("t mod 1")
    ax.set_ylabel("v mod g")
    ax.set_title(f"singularity sets, {profile.name} (g={profile.g:g})")
    return _save(fig, path)


def phase_portrait_figure(profile, orbits: list[np.ndarray], path) -> str:
    """Scatter of torus-map orbits; chaotic orbits fill the torus."""
    g = profile.g
    fig, ax = plt.subplots(figsize=(6, 5))
    for pts in orbits:
        ax.plot(pts[:, 0], pts[:, 1], ".", ms=0.5, alpha=0.6)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, g)
    ax.set_xlabel("t mod 1")
    ax.set_ylabel("v mod g")
    ax.set_title(f"torus map orbits, {profile.name}")
    return _save(fig, path)


def correlation_figure(result, path) -> str:
    """|C(n)| on a log scale with the 2 SE noise band."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(result.lags, np.abs(result.c), "o-", ms=3, label="|C(n)|")
    ax.semilogy(result.lags, 2.0 * result.se, ":", color="gray",
                label="2 SE noise floor")
    ax.set_xlabel("lag n")
    ax.set_ylabel("|C(n)|")
    title = "autocorrelation decay"
    if math.isfinite(result.decay_rate):
        title += f" (fitted rate {result.decay_rate:.2f})"
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def clt_figure(sums: np.ndarray, sigma2: float, path) -> str:
    """Histogram of normalised Birkhoff sums against the predicted normal."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(sums, bins=64, density=True, alpha=0.6, label="normalised sums")
    xs = np.linspace(sums.min(), sums.max(), 256)
    sig = math.sqrt(sigma2)
    ax.plot(xs, np.exp(-0.5 * (xs / sig) ** 2) / (sig * math.sqrt(2 * math.pi)),
            "k-", label=f"N(0, {sigma2:.3f})")
    ax.set_xlabel("S_n / sqrt(n)")
    ax.set_ylabel("density")
    ax.set_title("central limit behaviour")
    ax.legend()
    return _save(fig, path)


def limit_error_figure(vs: np.ndarray, errs: np.ndarray, slope: float,
                       path) -> str:
    """Log-log deviation between the collision map and its limit map."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(vs, errs, "o", ms=3, alpha=0.7, label="median deviation")
    anchor = errs[0] * (vs / vs[0]) ** slope
    ax.loglog(vs, anchor, "k--", label=f"fit slope {slope:.3f}")
    ax.set_xlabel("velocity v")
    ax.set_ylabel("|F(t,v) - F_inf(t,v)|")
    ax.set_title("limit map approximation error")
    ax.legend()
    return _save(fig, path)


def fragmentation_figure(ns: np.ndarray, counts: np.ndarray, path) -> str:
    """Observed component counts against the linear complexity bound."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, counts, "o-", label="max components observed")
    ax.plot(ns, 6 * np.asarray(ns), "k--", label="bound 6n")
    ax.set_xlabel("iterations n")
    ax.set_ylabel("components")
    ax.set_title("curve fragmentation vs complexity bound")
    ax.legend()
    return _save(fig, path)
