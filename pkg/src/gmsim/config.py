"""Experiment configuration: a flat key-value tree with sections, full
validation that reports every error at once, and a canonical byte-stable
serialization used for config hashes and round-trips.
"""

from __future__ import annotations

import difflib
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import potentials
from .dynamics import InitialLaw, StepPolicy

_POTENTIAL_KEYS = {
    "kind", "p", "kappa", "amplitude", "radius", "slopes", "r_max",
    "m", "lambda", "C", "A", "alpha",
}
_DYNAMICS_KEYS = {"n", "dim", "mode", "scheme", "dt", "adaptive_drift_cap", "dt_min"}
_LAW_KEYS = {
    "kind", "mean", "sigma", "half_width", "point_a", "point_b", "weight",
    "path", "center_to_zero",
}
_EXPERIMENT_KEYS = {"horizon", "obs_stride", "obs_count", "obs_times", "seed", "runs"}
_OUTPUT_KEYS = {"dir", "formats"}
_SECTIONS = {
    "potential_V": _POTENTIAL_KEYS,
    "potential_W": _POTENTIAL_KEYS,
    "dynamics": _DYNAMICS_KEYS,
    "initial_law": _LAW_KEYS,
    "initial_law_b": _LAW_KEYS,
    "experiment": _EXPERIMENT_KEYS,
    "output": _OUTPUT_KEYS,
}


class ConfigError(ValueError):
    """Carries the full list of validation errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class SimConfig:
    potential_V: potentials.Potential
    potential_W: potentials.Potential
    n: int
    dim: int
    mode: str  # raw | projected
    step_policy: StepPolicy
    horizon: float
    observation_times: tuple
    initial_law: InitialLaw
    initial_law_b: InitialLaw | None
    seed: int
    runs: int
    output_dir: str
    output_formats: tuple

    # Runs own disjoint stream ids; nearby offsets are reserved for the
    # coupled partner's initial draw and auxiliary ensembles.
    STREAM_STRIDE = 8

    def stream_for_run(self, run: int) -> int:
        return self.STREAM_STRIDE * int(run)


def _parse_scalar(raw: str):
    s = raw.strip()
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def _parse_tree(text: str, errors: list) -> dict:
    tree: dict = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SECTIONS:
                near = difflib.get_close_matches(section, _SECTIONS, n=1)
                hint = f" (did you mean [{near[0]}]?)" if near else ""
                errors.append(f"line {lineno}: unknown section [{section}]{hint}")
                section = None
            else:
                tree.setdefault(section, {})
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        if section is None:
            errors.append(f"line {lineno}: key outside any section")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        valid = _SECTIONS[section]
        if key not in valid:
            near = difflib.get_close_matches(key, valid, n=1)
            hint = f" (did you mean {near[0]!r}?)" if near else ""
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]{hint}")
            continue
        if "," in raw:
            tree[section][key] = tuple(_parse_scalar(v) for v in raw.split(","))
        else:
            tree[section][key] = _parse_scalar(raw)
    return tree


def _build_potential(sec: dict, errors: list, where: str):
    kind = sec.get("kind", "zero")
    declared = {
        "growth_exponent_m": int(sec.get("m", 1)),
        "declared_lambda": float(sec.get("lambda", 0.0)),
        "declared_C": float(sec.get("C", 0.0)),
        "declared_A": float(sec.get("A", 0.0)),
        "declared_alpha": float(sec.get("alpha", 0.0)),
    }
    try:
        if kind == "zero":
            return potentials.zero()
        if kind == "power_law":
            return potentials.power_law(sec["p"], **declared)
        if kind == "quadratic":
            return potentials.quadratic(sec.get("kappa", 1.0), **declared)
        if kind == "uniform_plus_bump":
            return potentials.uniform_plus_bump(
                sec["kappa"], sec["amplitude"], sec["radius"], **declared
            )
        if kind == "sampled":
            slopes = sec["slopes"]
            if not isinstance(slopes, tuple):
                slopes = (slopes,)
            return potentials.sampled(slopes, sec["r_max"], **declared)
        errors.append(f"[{where}] unknown potential kind {kind!r}")
    except KeyError as exc:
        errors.append(f"[{where}] kind {kind!r} missing parameter {exc.args[0]!r}")
    except ValueError as exc:
        errors.append(f"[{where}] {exc}")
    return potentials.zero()


def _build_law(sec: dict, errors: list, where: str) -> InitialLaw:
    def vec(v):
        return tuple(float(x) for x in (v if isinstance(v, tuple) else (v,)))

    try:
        return InitialLaw(
            kind=sec.get("kind", "gaussian"),
            mean=vec(sec.get("mean", 0.0)),
            sigma=float(sec.get("sigma", 1.0)),
            half_width=float(sec.get("half_width", 1.0)),
            point_a=vec(sec.get("point_a", 0.0)),
            point_b=vec(sec.get("point_b", 1.0)),
            weight=float(sec.get("weight", 0.5)),
            path=str(sec.get("path", "")),
            center_to_zero=bool(sec.get("center_to_zero", False)),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"[{where}] {exc}")
        return InitialLaw()


def parse_config(text: str) -> SimConfig:
    """Parse and fully validate; raises ConfigError carrying every
    validation error, not just the first."""
    errors: list = []
    tree = _parse_tree(text, errors)

    pv = _build_potential(tree.get("potential_V", {"kind": "zero"}), errors, "potential_V")
    pw = _build_potential(tree.get("potential_W", {"kind": "zero"}), errors, "potential_W")

    dyn = tree.get("dynamics", {})
    n = int(dyn.get("n", 16))
    dim = int(dyn.get("dim", 1))
    mode = str(dyn.get("mode", "projected"))
    if n < 2:
        errors.append("[dynamics] n must be >= 2")
    if dim < 1:
        errors.append("[dynamics] dim must be >= 1")
    if mode not in ("raw", "projected"):
        errors.append(f"[dynamics] mode must be raw or projected, got {mode!r}")
    if mode == "projected" and not pv.is_zero:
        errors.append(
            "[dynamics] mode=projected requires potential_V kind zero "
            "(the projected system is defined only for a vanishing confinement)"
        )
    try:
        policy = StepPolicy(
            scheme=str(dyn.get("scheme", "tamed")),
            dt=float(dyn.get("dt", 0.01)),
            adaptive_drift_cap=float(dyn.get("adaptive_drift_cap", 0.5)),
            dt_min=float(dyn.get("dt_min", 1e-6)),
        )
    except ValueError as exc:
        errors.append(f"[dynamics] {exc}")
        policy = StepPolicy()

    exp = tree.get("experiment", {})
    horizon = float(exp.get("horizon", 1.0))
    if horizon <= 0:
        errors.append("[experiment] horizon must be > 0")
    if "obs_times" in exp:
        raw_times = exp["obs_times"]
        obs = tuple(float(t) for t in (raw_times if isinstance(raw_times, tuple) else (raw_times,)))
    else:
        stride = float(exp.get("obs_stride", max(horizon / 20.0, policy.dt)))
        count = int(exp.get("obs_count", int(round(horizon / stride)) + 1))
        obs = tuple(float(t) for t in np.round(np.arange(count) * stride, 12))
    if any(t < 0 or t > horizon + 1e-9 for t in obs):
        errors.append("[experiment] observation times must lie in [0, horizon]")
    if list(obs) != sorted(set(obs)):
        errors.append("[experiment] observation times must be sorted and unique")
    if "seed" not in exp:
        errors.append("[experiment] seed is required (no wall-clock default)")
    seed = int(exp.get("seed", 0))
    runs = int(exp.get("runs", 1))
    if runs < 1:
        errors.append("[experiment] runs must be >= 1")

    law = _build_law(tree.get("initial_law", {}), errors, "initial_law")
    law_b = _build_law(tree["initial_law_b"], errors, "initial_law_b") if "initial_law_b" in tree else None

    out = tree.get("output", {})
    out_dir = str(out.get("dir", "out"))
    fmts = out.get("formats", ("csv",))
    if not isinstance(fmts, tuple):
        fmts = (fmts,)
    fmts = tuple(str(f) for f in fmts)
    bad = [f for f in fmts if f not in ("csv", "jsonl", "bin")]
    if bad:
        errors.append(f"[output] unknown formats {bad}")

    if errors:
        raise ConfigError(errors)
    return SimConfig(
        potential_V=potentials.with_dim(pv, dim),
        potential_W=potentials.with_dim(pw, dim),
        n=n,
        dim=dim,
        mode=mode,
        step_policy=policy,
        horizon=horizon,
        observation_times=obs,
        initial_law=law,
        initial_law_b=law_b,
        seed=seed,
        runs=runs,
        output_dir=out_dir,
        output_formats=fmts,
    )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _potential_items(p: potentials.Potential):
    items = [("kind", p.kind)]
    for key in sorted(p.params):
        if key == "dim":
            continue
        items.append((key, p.params[key]))
    items += [
        ("m", p.growth_exponent_m),
        ("lambda", p.declared_lambda),
        ("C", p.declared_C),
        ("A", p.declared_A),
        ("alpha", p.declared_alpha),
    ]
    return items


def _law_items(law: InitialLaw):
    items = [("kind", law.kind)]
    if law.kind == "gaussian":
        items += [("mean", law.mean), ("sigma", law.sigma)]
    elif law.kind == "uniform":
        items += [("half_width", law.half_width)]
    elif law.kind == "two_point":
        items += [("point_a", law.point_a), ("point_b", law.point_b), ("weight", law.weight)]
    elif law.kind == "sample_file":
        items += [("path", law.path)]
    items.append(("center_to_zero", law.center_to_zero))
    return items


def canonical_text(cfg: SimConfig) -> str:
    """Byte-stable serialization: fixed section and key order, repr floats.
    parse_config(canonical_text(cfg)) reproduces cfg."""
    lines = []

    def section(name, items):
        lines.append(f"[{name}]")
        for k, v in items:
            lines.append(f"{k} = {_fmt(v)}")
        lines.append("")

    section("potential_V", _potential_items(cfg.potential_V))
    section("potential_W", _potential_items(cfg.potential_W))
    section(
        "dynamics",
        [
            ("n", cfg.n),
            ("dim", cfg.dim),
            ("mode", cfg.mode),
            ("scheme", cfg.step_policy.scheme),
            ("dt", cfg.step_policy.dt),
            ("adaptive_drift_cap", cfg.step_policy.adaptive_drift_cap),
            ("dt_min", cfg.step_policy.dt_min),
        ],
    )
    section("initial_law", _law_items(cfg.initial_law))
    if cfg.initial_law_b is not None:
        section("initial_law_b", _law_items(cfg.initial_law_b))
    section(
        "experiment",
        [
            ("horizon", cfg.horizon),
            ("obs_times", cfg.observation_times),
            ("seed", cfg.seed),
            ("runs", cfg.runs),
        ],
    )
    section("output", [("dir", cfg.output_dir), ("formats", cfg.output_formats)])
    return "\n".join(lines)


def config_hash(cfg: SimConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()[:12]


def validate_potentials(cfg: SimConfig, probes: int = 256, extent: float = 4.0):
    """Run the condition checkers on the declared constants; returns the
    reports and raises ConfigError when any declared condition fails."""
    reports = []
    errors = []
    for name, pot in (("potential_V", cfg.potential_V), ("potential_W", cfg.potential_W)):
        if pot.is_zero:
            continue
        for rep in potentials.check_declared(pot, probes=probes, extent=extent):
            reports.append((name, rep))
            if not rep.satisfied:
                errors.append(
                    f"[{name}] declared condition {rep.condition_name} violated "
                    f"by {rep.worst_violation:.3g} on the probe set"
                )
    if errors:
        raise ConfigError(errors)
    return reports
