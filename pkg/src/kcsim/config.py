"""Line-oriented run configuration: `[section]` headers and `key = value`
pairs, `#` comments.  Scenario sections may be named (`[scenario beams]`) and
studies repeat (`[study]` per study).

Parsing is total: every input yields either a fully validated RunConfig or a
diagnostic carrying the offending line.  Validation covers the physical
constraints (kernel bounds, alpha > 3, 0 <= sigma <= 1, CFL feasibility,
domain-covers-support) before any run starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .experiments import (
    CrossValidationStudy,
    SigmaSweepStudy,
    StabilityStudy,
    StudySpec,
)
from .grid import BumpCompact, Maxwellian, Profile, TwoBeam, required_lv
from .model import KernelSpec, SimParams, WeightSpec

SOLVERS = ("particle", "grid", "both")

_RUN_KEYS = {"scenario", "solver", "output_dir", "cadence"}
_KERNEL_KEYS = {"variant", "beta", "c"}
_PARAM_KEYS = {"d", "sigma", "dt", "t_final", "n_particles", "seed",
               "lx", "lv", "nx", "nv", "mass"}
_WEIGHT_KEYS = {"alpha"}
_SCENARIO_KEYS = {"profile", "x_center", "v_center", "x_spread", "v_spread",
                  "r0", "x_width", "v0", "v_width"}
_STUDY_KEYS = {"kind", "scenario", "t_final", "cadence", "delta", "norm",
               "sigmas", "particle_counts"}


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    solver: str
    output_dir: str
    cadence: int
    kernel: KernelSpec
    params: SimParams
    weights: WeightSpec
    profiles: dict[str, Profile]
    studies: tuple[StudySpec, ...] = field(default_factory=tuple)

    @property
    def profile(self) -> Profile:
        return self.profiles[self.scenario]


def _parse_lines(text: str):
    """Yield (line_no, kind, payload); kind is 'section' or 'pair'."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", no,
                                  column=len(line))
            inner = stripped[1:-1].strip()
            if not inner:
                raise ConfigError("empty section header", no)
            parts = inner.split(None, 1)
            name = parts[1].strip() if len(parts) > 1 else None
            yield no, "section", (parts[0].lower(), name)
        else:
            if "=" not in stripped:
                raise ConfigError(f"expected 'key = value', got {stripped!r}",
                                  no, column=raw.index(stripped[0]) + 1)
            key, _, value = stripped.partition("=")
            key, value = key.strip().lower(), value.strip()
            if not key:
                raise ConfigError("missing key before '='", no,
                                  column=raw.index("=") + 1)
            if not value:
                raise ConfigError(f"missing value for key {key!r}", no)
            yield no, "pair", (key, value)


def _want(value, conv, what, line):
    try:
        return conv(value)
    except ValueError:
        raise ConfigError(f"{what}: cannot parse {value!r}", line) from None


def _float_list(value, line):
    return tuple(_want(tok.strip(), float, "list entry", line)
                 for tok in value.split(",") if tok.strip())


def _int_list(value, line):
    return tuple(_want(tok.strip(), int, "list entry", line)
                 for tok in value.split(",") if tok.strip())


_PROFILE_BUILDERS = {
    "maxwellian": (Maxwellian,
                   {"x_center", "v_center", "x_spread", "v_spread"}),
    "bump": (BumpCompact, {"r0", "x_width"}),
    "two_beam": (TwoBeam, {"v0", "x_width", "v_width"}),
}


def _build_profile(entries: dict[str, tuple[str, int]], section_line: int) -> Profile:
    if "profile" not in entries:
        raise ConfigError("scenario section needs a 'profile' key", section_line)
    name, line = entries["profile"]
    if name not in _PROFILE_BUILDERS:
        raise ConfigError(
            f"unknown profile {name!r} (choose from {sorted(_PROFILE_BUILDERS)})", line)
    cls, allowed = _PROFILE_BUILDERS[name]
    kwargs = {}
    for key, (value, kline) in entries.items():
        if key == "profile":
            continue
        if key not in allowed:
            raise ConfigError(f"key {key!r} not valid for profile {name!r}", kline)
        kwargs[key] = _want(value, float, key, kline)
    return cls(**kwargs)


def _build_study(entries: dict[str, tuple[str, int]], section_line: int,
                 default_scenario: str) -> StudySpec:
    if "kind" not in entries:
        raise ConfigError("study section needs a 'kind' key", section_line)
    kind, line = entries["kind"]
    common = {"scenario": entries.get("scenario", (default_scenario, 0))[0]}
    if "t_final" in entries:
        common["t_final"] = _want(entries["t_final"][0], float, "t_final",
                                  entries["t_final"][1])
    if "cadence" in entries:
        common["cadence"] = _want(entries["cadence"][0], int, "cadence",
                                  entries["cadence"][1])
    try:
        if kind == "stability":
            extra = {}
            if "delta" in entries:
                extra["delta"] = _want(entries["delta"][0], float, "delta",
                                       entries["delta"][1])
            if "norm" in entries:
                extra["norm"] = entries["norm"][0]
            return StabilityStudy(**common, **extra)
        if kind == "sigma_sweep":
            extra = {}
            if "sigmas" in entries:
                extra["sigmas"] = _float_list(entries["sigmas"][0],
                                              entries["sigmas"][1])
            if "norm" in entries:
                extra["norm"] = entries["norm"][0]
            return SigmaSweepStudy(**common, **extra)
        if kind == "cross_validation":
            extra = {}
            if "particle_counts" in entries:
                extra["particle_counts"] = _int_list(
                    entries["particle_counts"][0], entries["particle_counts"][1])
            return CrossValidationStudy(**common, **extra)
    except ValueError as ex:
        raise ConfigError(str(ex), section_line) from None
    raise ConfigError(f"unknown study kind {kind!r}", line)


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration; raises ConfigError with a
    line number on any defect."""
    sections: dict[str, dict[str, tuple[str, int]]] = {
        "run": {}, "kernel": {}, "params": {}, "weights": {},
    }
    scenario_sections: dict[str, tuple[dict, int]] = {}
    study_sections: list[tuple[dict, int]] = []
    current: dict[str, tuple[str, int]] | None = None
    current_name = None
    current_line = 0

    known_keys = {
        "run": _RUN_KEYS, "kernel": _KERNEL_KEYS, "params": _PARAM_KEYS,
        "weights": _WEIGHT_KEYS, "scenario": _SCENARIO_KEYS, "study": _STUDY_KEYS,
    }

    for no, kind, payload in _parse_lines(text):
        if kind == "section":
            name, label = payload
            current_line = no
            if name in ("run", "kernel", "params", "weights"):
                if label is not None:
                    raise ConfigError(f"section [{name}] takes no label", no)
                current, current_name = sections[name], name
            elif name == "scenario":
                entries: dict[str, tuple[str, int]] = {}
                scenario_sections[label or "default"] = (entries, no)
                current, current_name = entries, "scenario"
            elif name == "study":
                entries = {}
                study_sections.append((entries, no))
                current, current_name = entries, "study"
            else:
                raise ConfigError(f"unknown section [{name}]", no)
        else:
            key, value = payload
            if current is None:
                raise ConfigError(f"key {key!r} before any [section]", no)
            if key not in known_keys[current_name]:
                raise ConfigError(
                    f"unknown key {key!r} in [{current_name}]", no)
            if key in current:
                raise ConfigError(f"duplicate key {key!r}", no)
            current[key] = (value, no)

    return _assemble(sections, scenario_sections, study_sections)


def _assemble(sections, scenario_sections, study_sections) -> RunConfig:
    run = sections["run"]
    solver = run.get("solver", ("grid", 0))[0]
    if solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {solver!r}",
                          run["solver"][1] if "solver" in run else None)
    output_dir = run.get("output_dir", ("out", 0))[0]
    cadence = (_want(run["cadence"][0], int, "cadence", run["cadence"][1])
               if "cadence" in run else 1)
    if cadence < 1:
        raise ConfigError("cadence must be >= 1", run["cadence"][1])

    if not scenario_sections:
        raise ConfigError("configuration needs at least one [scenario] section")
    profiles = {
        name: _build_profile(entries, line)
        for name, (entries, line) in scenario_sections.items()
    }
    scenario = run.get("scenario", (next(iter(profiles)), 0))[0]
    if scenario not in profiles:
        raise ConfigError(
            f"scenario {scenario!r} is not defined by any [scenario] section",
            run["scenario"][1] if "scenario" in run else None)

    kern = sections["kernel"]
    variant = kern.get("variant", ("algebraic", 0))[0]
    try:
        if variant == "constant":
            c = (_want(kern["c"][0], float, "c", kern["c"][1])
                 if "c" in kern else 1.0)
            kernel = KernelSpec.constant(c)
        elif variant == "algebraic":
            beta = (_want(kern["beta"][0], float, "beta", kern["beta"][1])
                    if "beta" in kern else 1.0)
            kernel = KernelSpec.algebraic_decay(beta)
        else:
            raise ConfigError(
                f"kernel variant must be 'constant' or 'algebraic', got {variant!r}",
                kern["variant"][1] if "variant" in kern else None)
    except ValueError as ex:
        raise ConfigError(f"kernel constraint violated: {ex}") from None

    weights_sec = sections["weights"]
    alpha = (_want(weights_sec["alpha"][0], float, "alpha", weights_sec["alpha"][1])
             if "alpha" in weights_sec else 4.0)
    try:
        weights = WeightSpec(alpha)
    except ValueError as ex:
        raise ConfigError(str(ex)) from None

    par = sections["params"]

    def pval(key, conv, default):
        if key in par:
            return _want(par[key][0], conv, key, par[key][1])
        return default

    sigma = pval("sigma", float, 0.0)
    t_final = pval("t_final", float, 1.0)
    mass = pval("mass", float, 1.0)
    nx = pval("nx", int, 64)
    nv = pval("nv", int, 64)
    lx = pval("lx", float, 4.0)
    profile = profiles[scenario]

    lv = pval("lv", float, None)
    if lv is None:
        lv = required_lv(profile, mass, t_final, sigma)

    dt = pval("dt", float, None)
    if dt is None:
        dt = _auto_dt(lx, lv, nx, nv, mass)

    try:
        params = SimParams(
            d=pval("d", int, 1),
            sigma=sigma,
            dt=dt,
            t_final=t_final,
            n_particles=pval("n_particles", int, 1000),
            seed=pval("seed", int, 0),
            lx=lx, lv=lv, nx=nx, nv=nv, mass=mass,
        )
    except ValueError as ex:
        raise ConfigError(str(ex)) from None

    studies = tuple(
        _build_study(entries, line, scenario) for entries, line in study_sections
    )
    for st in studies:
        if st.scenario not in profiles:
            raise ConfigError(
                f"study references undefined scenario {st.scenario!r}")

    cfg = RunConfig(
        scenario=scenario, solver=solver, output_dir=output_dir,
        cadence=cadence, kernel=kernel, params=params, weights=weights,
        profiles=profiles, studies=studies,
    )
    _validate_physics(cfg)
    return cfg


def _auto_dt(lx, lv, nx, nv, mass, safety: float = 0.8) -> float:
    """Largest dt meeting the split-step CFL bounds with a safety factor.

    Sub-steps run at dt/2; the drift speed is conservatively bounded by
    |L| <= M (R + |v|) <= 2 M Lv on the truncated domain.
    """
    dx = 2.0 * lx / nx
    dv = 2.0 * lv / nv
    dt_transport = 2.0 * dx / lv
    dt_drift = 2.0 * dv / (2.0 * mass * lv)
    return safety * min(dt_transport, dt_drift)


def _validate_physics(cfg: RunConfig) -> None:
    p = cfg.params
    for name, profile in cfg.profiles.items():
        try:
            profile.check_domain(p.lx, p.lv)
        except ConfigError as ex:
            raise ConfigError(f"scenario {name!r}: {ex}") from None
    if p.sigma == 0.0:
        profile = cfg.profile
        if profile.r0 is not None:
            need = profile.r0 * (1.0 + p.mass * p.t_final)
            if p.lv < need:
                raise ConfigError(
                    "velocity domain too small for the support growth bound: "
                    f"need Lv >= R0 (1 + M T) = {need:.4g}, got {p.lv}")
    # CFL feasibility at the configured dt
    dx = 2.0 * p.lx / p.nx
    dv = 2.0 * p.lv / p.nv
    if p.lv * (0.5 * p.dt) / dx > 1.0:
        raise ConfigError(
            f"transport CFL infeasible: max|v| (dt/2)/dx = "
            f"{p.lv * 0.5 * p.dt / dx:.4g} > 1")
    drift_bound = 2.0 * p.mass * p.lv
    if drift_bound * (0.5 * p.dt) / dv > 1.0:
        raise ConfigError(
            f"drift CFL infeasible: bound |L| (dt/2)/dv = "
            f"{drift_bound * 0.5 * p.dt / dv:.4g} > 1")
