"""Command-line experiment runner.

Subcommands select which config sections run:

    pingpong simulate      --config run.cfg      # collision orbits -> CSV
    pingpong verify-cones  --config run.cfg      # cone report -> JSON
    pingpong singularities --config run.cfg      # polylines -> CSV
    pingpong fragmentation --config run.cfg      # component counts -> CSV
    pingpong stats         --config run.cfg      # one JSON/CSV per section
    pingpong report        --config run.cfg      # figures + CSV bundle
    pingpong list-profiles

Identical (config, seed) runs write byte-identical CSV/JSON outputs; the
exit status is nonzero iff some hard check failed.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .collision import (CollisionState, limit_map_deviation, simulate_orbit,
                        step_many)
from .cones import check_cone_invariance, expansion_constants
from .config import ConfigError, ExperimentConfig, ExperimentSection, load_config
from .curves import complexity_count, evolve_curve, random_unstable_curve
from .errors import PingpongError
from .limit_map import singularity_set, torus_step_many
from .stats import (autocorrelation, birkhoff_average, builtin_observables,
                    clt_experiment, escape_fraction, gamma_mean,
                    mixing_box_estimator, recurrence_stats)
from .wall import n_profile, q_profile


@dataclass
class RunManifest:
    config_hash: str
    version: str
    seed: int
    experiments: list[dict]
    wall_clock: float      # printed, never serialised: outputs stay stable

    def to_dict(self) -> dict:
        return {
            "config_sha256": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "experiments": self.experiments,
        }


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path, header: list[str], rows) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return str(path)


def write_json(path, obj: dict) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")
    return str(path)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON-serialisable: {type(x)}")


def _derive_seed(seed: int, ordinal: int) -> int:
    return int(np.random.SeedSequence([seed, ordinal]).generate_state(1)[0])


# ----------------------------------------------------------------------
# per-section runners; each returns (passed, outputs, summary)

def _run_simulate(cfg: ExperimentConfig, sec: ExperimentSection, seed: int,
                  prefix: str):
    opts = sec.options
    profile = cfg.profile
    start = CollisionState.from_tv(float(opts["t0"]), float(opts["v0"]), profile)
    record = simulate_orbit(start, profile, int(opts["n_steps"]),
                            v_escape=opts.get("v_escape"))
    rows = []
    for i, st in enumerate(record.states):
        s = record.flights[i] if i < len(record.flights) else None
        rows.append((st.n, st.t, st.v, st.w, s))
    path = write_csv(prefix + ".csv", ["n", "t", "v", "w", "s"], rows)
    passed = record.termination != "no-root"
    summary = {"termination": record.termination, "v_min": record.v_min,
               "v_max": record.v_max, "steps": len(record.flights)}
    return passed, [path], summary


def _run_verify_cones(cfg: ExperimentConfig, sec: ExperimentSection,
                      seed: int, prefix: str):
    profile = cfg.profile
    n_samples = int(sec.options.get("n_samples", 1_000_000))
    report = expansion_constants(profile)
    violations = check_cone_invariance(profile, n_samples, seed)
    obj = {
        "regime": profile.classify_regime().value,
        "lambda": report.lam,
        "lambda1": report.lam1,
        "lambda2": report.lam2,
        "n0": report.n0,
        "sigma_min": report.sigma_one_step_min,
        "violations": violations,
        "empirical": report.empirical,
        "n_samples": n_samples,
    }
    path = write_json(prefix + ".json", obj)
    return violations == 0, [path], obj


def _run_singularities(cfg: ExperimentConfig, sec: ExperimentSection,
                       seed: int, prefix: str):
    profile = cfg.profile
    which = sec.options.get("which", "both")
    generation = int(sec.options.get("generation", 1))
    resolution = float(sec.options.get("resolution", 1e-3))
    kinds = ["S+", "S-"] if which == "both" else [which]
    rows = []
    total = 0
    for kind in kinds:
        forest = singularity_set(profile, kind, generation, resolution)
        total += len(forest)
        for seg in forest:
            for t, v in seg.torus_points(profile.g):
                rows.append((seg.which, seg.generation, t, v))
    path = write_csv(prefix + ".csv", ["which", "generation", "t", "v"],
                     [(a, b, _fmt(c), _fmt(d)) for a, b, c, d in rows])
    return True, [path], {"segments": total, "points": len(rows)}


def _run_fragmentation(cfg: ExperimentConfig, sec: ExperimentSection,
                       seed: int, prefix: str):
    profile = cfg.profile
    n = int(sec.options.get("n", 5))
    n_trials = int(sec.options.get("n_trials", 100))
    curve_length = float(sec.options.get("curve_length", 1e-4))
    spc = int(sec.options.get("samples_per_cut", 32))
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0
    worst_sum = 0.0
    for trial in range(n_trials):
        curve = random_unstable_curve(profile, rng, curve_length)
        record = evolve_curve(curve, profile, n, samples_per_cut=spc,
                              materialise=False)
        worst = max(worst, record.n_components)
        worst_sum = max(worst_sum, record.sum_inverse_lambda)
        rows.append((trial, n, record.n_components,
                     record.sum_inverse_lambda, 6 * n))
    path = write_csv(prefix + ".csv",
                     ["trial", "n", "components", "sum_inv_lambda",
                      "max_bound_6n"], rows)
    passed = worst <= 6 * n
    return passed, [path], {"max_components": worst, "bound": 6 * n,
                            "max_sum_inv_lambda": worst_sum}


def _run_stats(cfg: ExperimentConfig, sec: ExperimentSection, seed: int,
               prefix: str):
    profile = cfg.profile
    opts = sec.options
    obs_table = builtin_observables(profile.g)
    experiment = opts["experiment"]
    outputs = []

    def obs_of(key, default):
        name = str(opts.get(key, default))
        if name not in obs_table:
            raise ConfigError(f"unknown observable {name!r}; "
                              f"choose from {sorted(obs_table)}")
        return obs_table[name]

    if experiment == "birkhoff":
        rep = birkhoff_average(obs_of("observable", "cos_t"),
                               (float(opts.get("t0", 0.1234)),
                                float(opts.get("v0", 0.4567))),
                               profile, int(opts.get("n_steps", 1_000_000)),
                               seed)
        outputs.append(write_json(prefix + ".json", rep.to_dict()))
        return True, outputs, rep.to_dict()

    if experiment == "autocorrelation":
        res = autocorrelation(obs_of("observable", "cos_t"), profile,
                              int(opts.get("lags", 50)),
                              int(opts.get("n_samples", 1_000_000)), seed)
        outputs.append(write_csv(prefix + ".csv", ["lag", "c", "se"],
                                 zip(res.lags, res.c, res.se)))
        summary = {"c0": res.c0, "decay_rate": res.decay_rate,
                   "n_points": res.n_points,
                   "singular_jitters": res.singular_jitters}
        outputs.append(write_json(prefix + ".json", summary))
        return True, outputs, summary

    if experiment == "clt":
        res = clt_experiment(obs_of("observable", "cos_t"), profile,
                             int(opts.get("n_per_sum", 10_000)),
                             int(opts.get("n_ensembles", 10_000)), seed,
                             corr_lags=int(opts.get("corr_lags", 64)),
                             corr_points=int(opts.get("corr_points", 400_000)))
        summary = {"ks_distance": res.ks_distance,
                   "sigma2_corr": res.sigma2_corr,
                   "sigma2_ensemble": res.sigma2_ensemble,
                   "n_per_sum": res.n_per_sum,
                   "n_ensembles": res.n_ensembles}
        outputs.append(write_json(prefix + ".json", summary))
        return True, outputs, summary

    if experiment == "gamma-mean":
        rep = gamma_mean(profile, int(opts.get("n_samples", 1_000_000)), seed)
        outputs.append(write_json(prefix + ".json", rep.to_dict()))
        return bool(rep.passed), outputs, rep.to_dict()

    if experiment == "recurrence":
        res = recurrence_stats(profile,
                               (float(opts.get("v_lo", 20.0)),
                                float(opts.get("v_hi", 22.0))),
                               float(opts.get("eps", 0.5)),
                               int(opts.get("t_horizon", 100_000)),
                               int(opts.get("n_orbits", 1000)), seed)
        summary = {"fraction": res.fraction, "ci": list(res.ci),
                   "returned": res.returned, "completed": res.completed,
                   "aborted": res.aborted}
        outputs.append(write_json(prefix + ".json", summary))
        return True, outputs, summary

    if experiment == "escape":
        res = escape_fraction(profile,
                              (float(opts.get("v_lo", 50.0)),
                               float(opts.get("v_hi", 52.0))),
                              float(opts.get("multiplier", 2.0)),
                              int(opts.get("t_horizon", 10_000)),
                              int(opts.get("n_orbits", 500)),
                              bounded_delta=opts.get("bounded_delta"), rng_seed=seed)
        summary = {"exceeded_fraction": res.exceeded_fraction,
                   "escaping_like_fraction": res.escaping_like_fraction,
                   "bounded_fraction": res.bounded_fraction,
                   "bounded_delta": res.bounded_delta,
                   "completed": res.completed, "aborted": res.aborted}
        outputs.append(write_json(prefix + ".json", summary))
        return True, outputs, summary

    if experiment == "mixing":
        heights = [float(x) for x in
                   str(opts.get("box_heights", "50,200")).split(",")]
        ns = [int(x) for x in str(opts.get("ns", "0,10,30")).split(",")]
        rows = mixing_box_estimator(
            obs_of("observable", "cos_t"), obs_of("observable2", "cos_t"),
            profile, heights, ns, int(opts.get("n_samples", 100_000)),
            v_base=float(opts.get("v_base", 100.0)), rng_seed=seed)
        outputs.append(write_csv(
            prefix + ".csv",
            ["n", "box_height", "v_base", "estimate", "se",
             "product_of_means", "dropped"],
            [(r.n, r.box_height, r.v_base, r.estimate, r.se,
              r.product_of_means, r.dropped) for r in rows]))
        summary = {"rows": len(rows)}
        outputs.append(write_json(prefix + ".json", {
            "rows": [{"n": r.n, "box_height": r.box_height,
                      "estimate": r.estimate, "se": r.se} for r in rows]}))
        return True, outputs, summary

    raise ConfigError(f"unhandled stats experiment {experiment!r}")


def _run_report(cfg: ExperimentConfig, sec: ExperimentSection, seed: int,
                prefix: str):
    from . import figures
    profile = cfg.profile
    opts = sec.options
    g = profile.g
    outputs = []
    summary = {}
    obs_table = builtin_observables(g)
    rng = np.random.default_rng(seed)

    # singularity sets
    generation = int(opts.get("generation", 3))
    resolution = float(opts.get("resolution", 1e-3))
    forests = {k: singularity_set(profile, k, generation, resolution)
               for k in ("S+", "S-")}
    rows = [(seg.which, seg.generation, _fmt(t), _fmt(v))
            for k in forests for seg in forests[k]
            for t, v in seg.torus_points(g)]
    outputs.append(write_csv(prefix + "-singularities.csv",
                             ["which", "generation", "t", "v"], rows))
    outputs.append(figures.singularity_figure(
        profile, forests, prefix + "-singularities.png"))

    # torus phase portrait + one orbit dump
    n_orbits = int(opts.get("n_orbits", 6))
    orbit_steps = int(opts.get("orbit_steps", 4000))
    orbits = []
    first_rows = []
    for k in range(n_orbits):
        t = np.array([rng.uniform(0.0, 1.0)])
        v = np.array([rng.uniform(0.0, g)])
        pts = np.empty((orbit_steps, 2))
        for i in range(orbit_steps):
            pts[i] = t[0], v[0]
            t1, v1, gam, singular = torus_step_many(t, v, profile)
            if singular[0]:
                t = (t + 1e-9) % 1.0
                t1, v1, gam, _ = torus_step_many(t, v, profile)
            if k == 0:
                first_rows.append((i, float(t[0]), float(v[0]), int(gam[0])))
            t, v = t1, v1
        orbits.append(pts)
    outputs.append(write_csv(prefix + "-orbit.csv",
                             ["n", "t_mod", "v_mod", "gamma"], first_rows))
    outputs.append(figures.phase_portrait_figure(
        profile, orbits, prefix + "-portrait.png"))

    # correlation decay
    corr = autocorrelation(obs_table["cos_v"], profile,
                           int(opts.get("lags", 40)),
                           int(opts.get("n_samples", 200_000)), seed + 1)
    outputs.append(write_csv(prefix + "-correlation.csv", ["lag", "c", "se"],
                             zip(corr.lags, corr.c, corr.se)))
    outputs.append(figures.correlation_figure(
        corr, prefix + "-correlation.png"))
    summary["correlation_c0"] = corr.c0

    # CLT histogram
    res = clt_experiment(obs_table["cos_t"], profile,
                         int(opts.get("n_per_sum", 2000)),
                         int(opts.get("n_ensembles", 4000)), seed + 2,
                         corr_lags=32, corr_points=100_000)
    sums = _clt_sums(obs_table["cos_t"], profile,
                     int(opts.get("n_per_sum", 2000)),
                     int(opts.get("n_ensembles", 4000)), seed + 2)
    hist, edges = np.histogram(sums, bins=64, density=True)
    outputs.append(write_csv(prefix + "-clt.csv",
                             ["bin_lo", "bin_hi", "density"],
                             zip(edges[:-1], edges[1:], hist)))
    outputs.append(figures.clt_figure(sums, res.sigma2_corr,
                                      prefix + "-clt.png"))
    summary["clt_ks"] = res.ks_distance

    # limit-map approximation error
    decades = int(opts.get("v_decades", 4))
    per_v = int(opts.get("samples_per_v", 48))
    vs = np.logspace(2, 2 + decades - 1, 4 * decades)
    med = []
    for vv in vs:
        tt = rng.uniform(0.0, 1.0, per_v)
        vvj = vv * (1.0 + rng.uniform(0.0, 0.05, per_v))
        err = limit_map_deviation(tt, vvj, profile)
        med.append(float(np.nanmedian(err)))
    med = np.array(med)
    good = np.isfinite(med) & (med > 0)
    slope = float(np.polyfit(np.log(vs[good]), np.log(med[good]), 1)[0])
    outputs.append(write_csv(prefix + "-limit-error.csv",
                             ["v", "median_error"], zip(vs, med)))
    outputs.append(figures.limit_error_figure(
        vs[good], med[good], slope, prefix + "-limit-error.png"))
    summary["limit_error_slope"] = slope

    # fragmentation counts vs the complexity bound
    ns = list(range(1, 6))
    counts = [complexity_count(profile, n, 40, rng_seed=seed + 3) for n in ns]
    outputs.append(write_csv(prefix + "-fragmentation.csv",
                             ["n", "max_components", "bound_6n"],
                             [(n, c, 6 * n) for n, c in zip(ns, counts)]))
    outputs.append(figures.fragmentation_figure(
        np.array(ns), np.array(counts), prefix + "-fragmentation.png"))
    summary["max_components"] = max(counts)

    outputs.append(write_json(prefix + "-summary.json", summary))
    passed = bool(-1.15 <= slope <= -0.85) and all(
        c <= 6 * n for n, c in zip(ns, counts))
    return passed, outputs, summary


def _clt_sums(obs, profile, n_per_sum, n_ensembles, seed):
    """Raw normalised sums for the report histogram (same sampling scheme
    as clt_experiment)."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 1.0, n_ensembles)
    v = rng.uniform(0.0, profile.g, n_ensembles)
    acc = np.zeros(n_ensembles)
    for _ in range(n_per_sum):
        acc += obs.fn(t, v) - obs.mean
        t1, v1, _, singular = torus_step_many(t, v, profile)
        if singular.any():
            t[singular] = (t[singular] + 1e-9) % 1.0
            t1, v1, _, _ = torus_step_many(t, v, profile)
        t, v = t1, v1
    return acc / math.sqrt(n_per_sum)


_RUNNERS = {
    "simulate": _run_simulate,
    "verify-cones": _run_verify_cones,
    "singularities": _run_singularities,
    "fragmentation": _run_fragmentation,
    "stats": _run_stats,
    "report": _run_report,
}

# sections that can run on defaults when the config omits them
_DEFAULTABLE = {"verify-cones", "singularities", "fragmentation", "report"}


def run_sections(cfg: ExperimentConfig, kind: str) -> RunManifest:
    """Execute every config section of the given kind and write the manifest."""
    t_start = time.monotonic()
    os.makedirs(cfg.out_dir, exist_ok=True)
    sections = cfg.sections_of(kind)
    if sections:
        jobs = [(i, sec) for i, sec in enumerate(cfg.sections)
                if sec.kind == kind]
    elif kind in _DEFAULTABLE:
        jobs = [(0, ExperimentSection(kind=kind, options={}, line=0))]
    else:
        raise ConfigError(f"config has no [{kind}] section")

    def execute(ordinal_sec):
        ordinal, sec = ordinal_sec
        seed = _derive_seed(cfg.seed, ordinal)
        name = sec.options.get("experiment", "")
        tag = f"{sec.kind}-{ordinal:02d}" + (f"-{name}" if name else "")
        prefix = os.path.join(cfg.out_dir, tag)
        passed, outputs, summary = _RUNNERS[sec.kind](cfg, sec, seed, prefix)
        return {"section": sec.kind, "ordinal": ordinal, "name": tag,
                "passed": bool(passed),
                "outputs": [os.path.basename(p) for p in outputs],
                "summary": summary}

    if cfg.threads > 1 and kind != "report" and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(execute, jobs))
    else:
        results = [execute(j) for j in jobs]
    results.sort(key=lambda r: r["ordinal"])

    manifest = RunManifest(config_hash=cfg.config_hash(), version=__version__,
                           seed=cfg.seed, experiments=results,
                           wall_clock=time.monotonic() - t_start)
    write_json(os.path.join(cfg.out_dir, "manifest.json"), manifest.to_dict())
    return manifest


def list_profiles() -> str:
    lines = ["builtin wall-motion profiles:"]
    for spec, g in (("Q(1)", 2.0), ("Q(2)", 2.0), ("N(2)", 1.0), ("N(3)", 1.0)):
        prof = q_profile(float(spec[2:-1]), g) if spec[0] == "Q" \
            else n_profile(float(spec[2:-1]), g)
        regime = prof.classify_regime().value
        lines.append(f"  {spec:6s} g={g:g}: f'' in [{prof.k_min:g}, {prof.k_max:g}]"
                     f" -> {regime}")
    lines.append("families: Q(k): f = k(t^2-t)/2 (convex for k > 0); "
                 "N(c): f = c(t-t^2)/2 (strongly concave for c > g)")
    lines.append("custom profiles: text file with 'g = <float>' and "
                 "'piece <lo> <hi> <c0> ... <c5>' lines")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pingpong",
        description="bouncing-ball dynamics laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("simulate", "verify-cones", "singularities", "fragmentation",
                "stats", "report"):
        p = sub.add_parser(cmd)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output dir")
        p.add_argument("--threads", type=int, default=None)
    sub.add_parser("list-profiles")
    args = parser.parse_args(argv)

    if args.command == "list-profiles":
        print(list_profiles())
        return 0

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.threads is not None:
            cfg.threads = args.threads
        manifest = run_sections(cfg, args.command)
    except (ConfigError, PingpongError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for res in manifest.experiments:
        status = "pass" if res["passed"] else "FAIL"
        print(f"[{status}] {res['name']}: {', '.join(res['outputs'])}")
    print(f"wall clock: {manifest.wall_clock:.2f}s", file=sys.stderr)
    return 0 if all(r["passed"] for r in manifest.experiments) else 1


if __name__ == "__main__":
    sys.exit(main())
