"""INI run configuration.

Sections and keys (all optional except ``[model] name``)::

    [run]      seed, mode (induction | picard), max_failure_rate
    [domain]   dim, length, modes
    [model]    name, coeffs, diffusion, sigma, sigma_coeffs, jump, jump_coeffs,
               positivity_floor
    [initial]  values, perturb_mode, perturb_amplitude
    [noise]    wiener_decay, wiener_scale, intensity, intensity_params, truncation
    [solver]   level, substeps, horizon, m, m0, m1, alpha, radius, paths,
               max_sweeps, tolerance
    [output]   dir, format (csv | binary), tightness_points
    [projections] paths, seed, levels, ms, alphas
    [noise_suite] samples, seed

Lists are comma separated; ``intensity_params`` is ``key=value`` pairs
separated by commas.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .models import REACTIONS, ModelSpec
from .noise import INTENSITIES, Intensity, WienerSpec, make_intensity
from .solver import Problem, SolveConfig
from .spectral import DomainSpec, constant_field

KNOWN = {
    "run": {"seed", "mode", "max_failure_rate"},
    "domain": {"dim", "length", "modes"},
    "model": {"name", "coeffs", "diffusion", "sigma", "sigma_coeffs", "jump", "jump_coeffs",
              "positivity_floor"},
    "initial": {"values", "perturb_mode", "perturb_amplitude"},
    "noise": {"wiener_decay", "wiener_scale", "intensity", "intensity_params", "truncation"},
    "solver": {"level", "substeps", "horizon", "m", "m0", "m1", "alpha", "radius", "paths",
               "max_sweeps", "tolerance"},
    "output": {"dir", "format", "tightness_points"},
    "projections": {"paths", "seed", "levels", "ms", "alphas"},
    "noise_suite": {"samples", "seed"},
}
MAX_LEVEL = 20


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


@dataclass
class RunConfig:
    problem: Problem
    solve: SolveConfig
    seed: int = 0
    mode: str = "induction"
    max_failure_rate: float = 0.1
    out_dir: str | None = None
    fmt: str = "csv"
    tightness_points: int = 12
    raw: dict = field(default_factory=dict)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _params(text):
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, _, val = item.partition("=")
        val = val.strip()
        try:
            out[key.strip()] = float(val)
        except ValueError:
            out[key.strip()] = val
    return out


class _Reader:
    def __init__(self, parser):
        self.p = parser

    def get(self, section, key, conv, default):
        name = f"{section}.{key}"
        if not self.p.has_option(section, key):
            return default
        text = self.p.get(section, key)
        try:
            return conv(text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(name, f"cannot parse {text!r}: {exc}") from None


def read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    for section in parser.sections():
        if section not in KNOWN:
            raise ConfigError(section, "unknown section")
        for key in parser.options(section):
            if key not in KNOWN[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
    return parser


def _guard(field_name, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(field_name, str(exc)) from None


def parse_run_config(parser: configparser.ConfigParser) -> RunConfig:
    r = _Reader(parser)
    domain = _guard("domain", lambda: DomainSpec(
        dim=r.get("domain", "dim", int, 1),
        length=r.get("domain", "length", float, 1.0),
        modes=r.get("domain", "modes", int, 8),
    ))
    if not parser.has_option("model", "name"):
        raise ConfigError("model.name", "missing")
    name = parser.get("model", "name").strip()
    if name not in REACTIONS:
        raise ConfigError("model.name", f"unknown model {name!r}; choose from {sorted(REACTIONS)}")
    model = _guard("model", lambda: ModelSpec(
        reaction=name,
        coeffs=r.get("model", "coeffs", _floats, ()),
        diffusion=r.get("model", "diffusion", _floats, (1.0,)),
        sigma=r.get("model", "sigma", str.strip, "none"),
        sigma_coeffs=r.get("model", "sigma_coeffs", _floats, ()),
        jump=r.get("model", "jump", str.strip, "none"),
        jump_coeffs=r.get("model", "jump_coeffs", _floats, ()),
        positivity_floor=r.get("model", "positivity_floor", float, 1e-6),
    ))
    values = r.get("initial", "values", _floats, (0.5,))
    if len(values) == 1:
        values = values * model.n
    if len(values) != model.n:
        raise ConfigError("initial.values", f"needs {model.n} entries, got {len(values)}")
    initial = constant_field(values, domain)
    mode_idx = r.get("initial", "perturb_mode", int, 1)
    amp = r.get("initial", "perturb_amplitude", float, 0.0)
    if amp:
        if not 0 <= mode_idx < domain.total_modes:
            raise ConfigError("initial.perturb_mode", f"must lie in [0, {domain.total_modes})")
        initial[:, mode_idx] += amp

    decay = r.get("noise", "wiener_decay", float, 0.0)
    scale = r.get("noise", "wiener_scale", float, 1.0)
    wiener = _guard("noise.wiener_decay", lambda: WienerSpec.from_eigenvalues(domain.eigenvalues, decay, scale))
    intensity: Intensity | None = None
    iname = r.get("noise", "intensity", str.strip, "")
    if iname:
        if iname not in INTENSITIES:
            raise ConfigError("noise.intensity", f"unknown intensity {iname!r}; choose from {sorted(INTENSITIES)}")
        params = r.get("noise", "intensity_params", _params, {})
        intensity = _guard("noise.intensity_params", lambda: make_intensity(iname, **params))
    if model.jump != "none" and intensity is None:
        raise ConfigError("noise.intensity", "jump noise requested but no intensity given")

    level = r.get("solver", "level", int, 5)
    if not 0 <= level <= MAX_LEVEL:
        raise ConfigError("solver.level", f"must lie in [0, {MAX_LEVEL}]")
    m = r.get("solver", "m", float, 2.0)
    solve = _guard("solver", lambda: SolveConfig(
        level=level,
        substeps=r.get("solver", "substeps", int, 1),
        horizon=r.get("solver", "horizon", float, 1.0),
        m=m,
        m0=r.get("solver", "m0", float, None),
        m1=r.get("solver", "m1", float, 2 * m),
        alpha=r.get("solver", "alpha", float, 0.25),
        radius=r.get("solver", "radius", float, 10.0),
        paths=r.get("solver", "paths", int, 16),
        max_sweeps=r.get("solver", "max_sweeps", int, 8),
        tolerance=r.get("solver", "tolerance", float, 0.05),
        truncation=r.get("noise", "truncation", int, 1),
    ))
    problem = _guard("initial", lambda: Problem(model, domain, initial, wiener, intensity))

    mode = r.get("run", "mode", str.strip, "induction")
    if mode not in ("induction", "picard"):
        raise ConfigError("run.mode", f"unknown mode {mode!r}")
    fmt = r.get("output", "format", str.strip, "csv")
    if fmt not in ("csv", "binary"):
        raise ConfigError("output.format", f"unknown format {fmt!r}")
    seed = r.get("run", "seed", int, 0)
    if not 0 <= seed < 2**64:
        raise ConfigError("run.seed", "must be a 64-bit unsigned integer")
    return RunConfig(
        problem=problem,
        solve=solve,
        seed=seed,
        mode=mode,
        max_failure_rate=r.get("run", "max_failure_rate", float, 0.1),
        out_dir=r.get("output", "dir", str.strip, None),
        fmt=fmt,
        tightness_points=r.get("output", "tightness_points", int, 12),
        raw={s: dict(parser.items(s)) for s in parser.sections()},
    )


def load_run_config(path) -> RunConfig:
    return parse_run_config(read_ini(path))


@dataclass
class ProjectionSuiteConfig:
    paths: int = 1000
    seed: int = 0
    levels: tuple = tuple(range(1, 9))
    ms: tuple = (2.0, 3.0)
    alphas: tuple = (0.1, 0.25)


def load_projection_config(path) -> ProjectionSuiteConfig:
    r = _Reader(read_ini(path))
    return ProjectionSuiteConfig(
        paths=r.get("projections", "paths", int, 1000),
        seed=r.get("projections", "seed", int, 0),
        levels=r.get("projections", "levels", lambda t: tuple(int(x) for x in _floats(t)), tuple(range(1, 9))),
        ms=r.get("projections", "ms", _floats, (2.0, 3.0)),
        alphas=r.get("projections", "alphas", _floats, (0.1, 0.25)),
    )


def load_noise_suite_config(path) -> tuple[int, int]:
    r = _Reader(read_ini(path))
    return r.get("noise_suite", "samples", int, 100_000), r.get("noise_suite", "seed", int, 0)
