"""Config-file driven experiment definitions.

The format is line oriented and diff friendly: global `key = value` lines
followed by one `[section]` block per experiment.  Values are plain
scalars; lists use commas.  Unknown keys are rejected with their line
number, and every run must carry an explicit seed (reproducibility is a
contract, not an option).

    profile = Q(1)
    g = 2.0
    seed = 42
    out = results

    [verify-cones]
    n_samples = 1000000

    [stats]
    experiment = gamma-mean
    n_samples = 1000000
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import ProfileError
from .wall import WallMotion, builtin_profile, load_profile

GLOBAL_KEYS = {"profile", "g", "seed", "out", "threads"}

SECTION_KEYS = {
    "simulate": {"t0", "v0", "n_steps", "v_escape"},
    "verify-cones": {"n_samples"},
    "singularities": {"which", "generation", "resolution"},
    "fragmentation": {"n", "n_trials", "curve_length", "samples_per_cut"},
    "stats": {"experiment", "observable", "observable2", "t0", "v0",
              "n_steps", "n_samples", "lags", "n_per_sum", "n_ensembles",
              "corr_lags", "corr_points", "v_lo", "v_hi", "eps",
              "t_horizon", "n_orbits", "multiplier", "bounded_delta",
              "box_heights", "ns", "v_base"},
    "report": {"generation", "resolution", "n_orbits", "orbit_steps",
               "lags", "n_samples", "n_per_sum", "n_ensembles",
               "v_decades", "samples_per_v"},
}

STATS_EXPERIMENTS = {"birkhoff", "autocorrelation", "clt", "gamma-mean",
                     "recurrence", "escape", "mixing"}


@dataclass
class ExperimentSection:
    kind: str
    options: dict
    line: int


@dataclass
class ExperimentConfig:
    """Parsed configuration: profile + seed + experiment sections."""

    profile: WallMotion
    seed: int
    out_dir: str
    threads: int
    sections: list[ExperimentSection]
    source_text: str
    profile_spec: str

    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()

    def sections_of(self, kind: str) -> list[ExperimentSection]:
        return [s for s in self.sections if s.kind == kind]


class ConfigError(ValueError):
    pass


def _parse_scalar(raw: str):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate a config file; all errors carry line numbers."""
    import os

    global_opts: dict = {}
    sections: list[ExperimentSection] = []
    current: ExperimentSection | None = None

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            kind = line[1:-1].strip()
            if kind not in SECTION_KEYS:
                raise ConfigError(f"line {ln}: unknown section [{kind}]")
            current = ExperimentSection(kind=kind, options={}, line=ln)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if current is None:
            if key not in GLOBAL_KEYS:
                raise ConfigError(f"line {ln}: unknown global key {key!r}")
            global_opts[key] = _parse_scalar(val)
        else:
            if key not in SECTION_KEYS[current.kind]:
                raise ConfigError(
                    f"line {ln}: unknown key {key!r} in [{current.kind}]")
            current.options[key] = _parse_scalar(val)

    if "seed" not in global_opts:
        raise ConfigError("config must set a seed (reproducibility contract)")
    seed = global_opts["seed"]
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    if "profile" not in global_opts:
        raise ConfigError("config must name a profile (builtin or file path)")

    spec = str(global_opts["profile"])
    if spec and spec[0] in "QNqn" and "(" in spec:
        if "g" not in global_opts:
            raise ConfigError("builtin profiles need an explicit g")
        profile = builtin_profile(spec, float(global_opts["g"]))
    else:
        if "g" in global_opts:
            raise ConfigError("g comes from the profile file; drop the g key")
        path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
        try:
            profile = load_profile(path)
        except OSError as exc:
            raise ConfigError(f"cannot read profile file {spec!r}: {exc}") from exc

    for sec in sections:
        _validate_section(sec)

    threads = int(global_opts.get("threads", 1))
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return ExperimentConfig(
        profile=profile, seed=seed,
        out_dir=str(global_opts.get("out", "pingpong-out")),
        threads=threads, sections=sections, source_text=text,
        profile_spec=spec)


def _require_positive(sec: ExperimentSection, key: str):
    if key in sec.options:
        val = sec.options[key]
        if not isinstance(val, (int, float)) or val < 1:
            raise ConfigError(
                f"line {sec.line}: [{sec.kind}] {key} must be >= 1, got {val!r}")


def _validate_section(sec: ExperimentSection):
    for key in ("n_steps", "n_samples", "n_trials", "n_per_sum",
                "n_ensembles", "n_orbits", "lags", "generation", "n",
                "t_horizon", "corr_lags", "corr_points", "orbit_steps",
                "samples_per_v", "v_decades", "samples_per_cut"):
        _require_positive(sec, key)
    if sec.kind == "simulate":
        for key in ("t0", "v0", "n_steps"):
            if key not in sec.options:
                raise ConfigError(
                    f"line {sec.line}: [simulate] needs {key}")
    if sec.kind == "stats":
        exp = sec.options.get("experiment")
        if exp not in STATS_EXPERIMENTS:
            raise ConfigError(
                f"line {sec.line}: [stats] experiment must be one of "
                f"{sorted(STATS_EXPERIMENTS)}, got {exp!r}")
    if sec.kind == "singularities":
        which = sec.options.get("which", "both")
        if which not in ("S+", "S-", "both"):
            raise ConfigError(
                f"line {sec.line}: which must be S+, S- or both, got {which!r}")


def load_config(path) -> ExperimentConfig:
    import os
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text, base_dir=os.path.dirname(str(path)) or ".")
    except ProfileError as exc:
        raise ConfigError(str(exc)) from exc
