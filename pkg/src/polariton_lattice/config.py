"""Run configuration: a flat ``[section]`` / ``key = value`` text format.

Example::

    [run]
    mode = spectrum

    [effective]
    Vbar = 1.0
    lcoh = 0.1
    d_in_pi = 3
    gamma_over_abs_delta0 = 0.01
    chibar = 0.1

    [scan]
    eps_min = 0.5
    eps_max = 3.5
    n_points = 601

    [drive]
    alpha = 0.1

``#`` starts a comment (whole line or trailing).  Complex values are written
as ``modulus, phase`` with the phase in radians; a single number is a real
value.  Lists are comma separated.  Unknown sections or keys are errors, and
every error message carries the line number it refers to.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .coupled_modes import Grid, SolverSettings
from .errors import ConfigParseError, ConfigValidationError, InvalidOperatingPoint, ParameterError
from .params import SWEEPABLE, EffectiveParams, OpticalParams, derive_effective
from .stability import StabilityOptions

MODES = ("params", "linear", "spectrum", "shift-study", "stability")


def _real(text):
    return float(text)


def _int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _polar(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        return complex(float(parts[0]))
    if len(parts) != 2:
        raise ValueError("expected 'modulus' or 'modulus, phase'")
    mod, phase = float(parts[0]), float(parts[1])
    if mod < 0:
        raise ValueError("modulus must be >= 0")
    # exact for phase 0 so real inputs stay real
    return complex(mod, 0.0) if phase == 0 else mod * complex(math.cos(phase), math.sin(phase))


def _reals(text):
    return [float(p) for p in text.split(",") if p.strip()]


def _words(text):
    return text.replace(",", " ").split()


def _word(text):
    return text.strip()


SCHEMA = {
    "run": {"mode": _word},
    "effective": {"Vbar": _real, "lcoh": _real, "d": _real, "d_in_pi": _real,
                  "gamma_over_abs_delta0": _real, "delta0_sign": _real, "chibar": _polar},
    "optical": {"Gamma1D": _real, "Delta0": _real, "DeltaP": _real, "delta": _real, "Omega": _real,
                "n0": _real, "n1": _real, "k0": _real, "Gamma": _real, "d": _real, "d_in_pi": _real},
    "scan": {"eps_min": _real, "eps_max": _real, "n_points": _int},
    "drive": {"alpha": _polar},
    "grid": {"n_steps": _int},
    "solver": {"newton_tol": _real, "max_newton_iters": _int, "fd_step": _real, "max_halvings": _int},
    "stability": {"epsilon": _real, "branches": _words, "dt": _real, "t_end": _real,
                  "snapshot_every": _real, "norm": _word, "probe_z": _real, "conjugate": _bool,
                  "rate_tol": _real, "seed_center": _real, "seed_width": _real, "seed_amplitude": _real,
                  "dump_snapshots": _bool},
    "shift_study": {"alpha_values": _reals, "chi_values": _reals, "prominence": _real},
    "params": {"axis1": _word, "values1": _reals, "axis2": _word, "values2": _reals},
    "output": {"dir": _word},
}

REQUIRED = {
    "params": ("optical",),
    "linear": ("scan",),
    "spectrum": ("scan", "drive"),
    "shift-study": ("scan", "shift_study"),
    "stability": ("drive", "stability"),
}


@dataclass(frozen=True)
class Entry:
    value: object
    line: int


@dataclass
class RunConfig:
    mode: str
    effective: EffectiveParams | None
    optical: OpticalParams | None
    d: float
    grid: Grid | None
    solver: SolverSettings
    alpha: complex = 1.0 + 0j
    scan: tuple | None = None  # (eps_min, eps_max, n_points)
    stability: StabilityOptions = field(default_factory=StabilityOptions)
    stability_epsilon: float | None = None
    branches: tuple = ("U", "M", "L")
    seed: dict = field(default_factory=dict)  # center / width / amplitude overrides
    dump_snapshots: bool = False
    shift_alphas: tuple = ()
    shift_chis: tuple = ()
    prominence: float = 0.01
    sweep: tuple = ()  # ((name, values), ...)
    output_dir: str = "."
    text: str = ""

    @property
    def config_hash(self):
        return config_hash(self.text)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_sections(text: str) -> dict:
    """Raw ``{section: {key: Entry}}`` with typed values; section headers stored under ``__line__``."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigParseError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigParseError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise ConfigParseError(f"duplicate section [{name}]", lineno)
            current = name
            sections[name] = {"__line__": lineno}
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            raise ConfigParseError(f"key {key!r} outside of any section", lineno)
        if key not in SCHEMA[current]:
            raise ConfigParseError(f"unknown key {key!r} in section [{current}]", lineno)
        if key in sections[current]:
            raise ConfigParseError(f"duplicate key {key!r} in section [{current}]", lineno)
        if value == "":
            raise ConfigParseError(f"empty value for {key!r}", lineno)
        try:
            typed = SCHEMA[current][key](value)
        except ValueError as exc:
            raise ConfigParseError(f"bad value for {key!r}: {exc}", lineno) from None
        sections[current][key] = Entry(typed, lineno)
    return sections


def _get(section, key, default=None):
    entry = section.get(key)
    return default if entry is None else entry.value


def _need(section, name, key):
    if key not in section:
        raise ConfigValidationError(f"section [{name}] requires {key!r}", section["__line__"])
    return section[key].value


def _length(section, name):
    if "d" in section and "d_in_pi" in section:
        raise ConfigValidationError(f"give only one of 'd' and 'd_in_pi' in [{name}]", section["d_in_pi"].line)
    if "d_in_pi" in section:
        return section["d_in_pi"].value * math.pi
    return _need(section, name, "d")


def _build(line, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except (ParameterError, InvalidOperatingPoint) as exc:
        raise ConfigValidationError(str(exc), line) from None


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Parse and validate a configuration document.

    ``mode`` (from the command line) overrides a missing ``[run] mode`` and
    must agree with it when both are present.
    """
    sec = parse_sections(text)
    run = sec.get("run", {"__line__": None})
    file_mode = _get(run, "mode")
    if file_mode is not None and file_mode not in MODES:
        raise ConfigValidationError(f"mode must be one of {MODES}, got {file_mode!r}", run["mode"].line)
    if mode is not None and file_mode is not None and mode != file_mode:
        raise ConfigValidationError(f"config is for mode {file_mode!r}, not {mode!r}", run["mode"].line)
    mode = mode or file_mode
    if mode is None:
        raise ConfigValidationError("no mode given ([run] mode or command line)")
    if mode not in MODES:
        raise ConfigValidationError(f"mode must be one of {MODES}, got {mode!r}")

    has_opt, has_eff = "optical" in sec, "effective" in sec
    if has_opt and has_eff:
        raise ConfigValidationError("give exactly one of [optical] and [effective], not both",
                                    sec["effective"]["__line__"])
    if not (has_opt or has_eff):
        raise ConfigValidationError("one of [optical] or [effective] is required")
    for name in REQUIRED[mode]:
        if name not in sec:
            raise ConfigValidationError(f"mode {mode!r} requires a [{name}] section")

    optical = effective = None
    if has_opt:
        o = sec["optical"]
        d = _length(o, "optical") if ("d" in o or "d_in_pi" in o) else 3 * math.pi
        kw = {k: _need(o, "optical", k) for k in ("Gamma1D", "Delta0", "DeltaP", "delta", "Omega", "n0", "n1", "k0")}
        kw["Gamma"] = _get(o, "Gamma", 1.0)
        optical = _build(o["__line__"], OpticalParams, **kw)
        if mode != "params":
            effective = _build(o["__line__"], derive_effective, optical, d)
    else:
        e = sec["effective"]
        d = _length(e, "effective")
        effective = _build(
            e["__line__"], EffectiveParams.from_loss, _need(e, "effective", "Vbar"), _get(e, "chibar", 0j),
            _need(e, "effective", "lcoh"), d, _need(e, "effective", "gamma_over_abs_delta0"),
            _get(e, "delta0_sign", -1.0))
        if mode == "params":
            raise ConfigValidationError("params mode maps optical parameters; give an [optical] block",
                                        e["__line__"])

    cfg = RunConfig(mode=mode, effective=effective, optical=optical, d=d, grid=None,
                    solver=SolverSettings(), text=text)

    g = sec.get("grid")
    n_steps = _get(g, "n_steps", 1024) if g else 1024
    cfg.grid = _build(g["n_steps"].line if g and "n_steps" in g else None, Grid, d, n_steps)

    if "solver" in sec:
        s = sec["solver"]
        cfg.solver = _build(s["__line__"], SolverSettings, newton_tol=_get(s, "newton_tol"),
                            max_newton_iters=_get(s, "max_newton_iters", 50),
                            fd_step=_get(s, "fd_step", 1e-7), max_halvings=_get(s, "max_halvings", 8))

    if "drive" in sec:
        cfg.alpha = _need(sec["drive"], "drive", "alpha")

    if "scan" in sec:
        s = sec["scan"]
        lo, hi = _need(s, "scan", "eps_min"), _need(s, "scan", "eps_max")
        n = _need(s, "scan", "n_points")
        if n < 2:
            raise ConfigValidationError("n_points must be >= 2", s["n_points"].line)
        if hi < lo:
            raise ConfigValidationError("eps_max must be >= eps_min", s["eps_max"].line)
        cfg.scan = (lo, hi, n)

    if "stability" in sec:
        s = sec["stability"]
        opts = {k: s[k].value for k in ("dt", "t_end", "snapshot_every", "norm", "probe_z", "conjugate",
                                         "rate_tol") if k in s}
        cfg.stability = _build(s["__line__"], StabilityOptions, **opts)
        cfg.stability_epsilon = _get(s, "epsilon")
        if mode == "stability" and cfg.stability_epsilon is None:
            raise ConfigValidationError("section [stability] requires 'epsilon'", s["__line__"])
        branches = tuple(_get(s, "branches", ["U", "M", "L"]))
        bad = [b for b in branches if b not in ("U", "M", "L", "unique")]
        if bad:
            raise ConfigValidationError(f"unknown branch labels {bad}", s["branches"].line)
        cfg.branches = branches
        cfg.seed = {k[5:]: s[k].value for k in ("seed_center", "seed_width", "seed_amplitude") if k in s}
        if "seed_width" in s and not s["seed_width"].value > 0:
            raise ConfigValidationError("seed_width must be > 0", s["seed_width"].line)
        cfg.dump_snapshots = _get(s, "dump_snapshots", False)

    if "shift_study" in sec:
        s = sec["shift_study"]
        cfg.shift_alphas = tuple(_need(s, "shift_study", "alpha_values"))
        cfg.shift_chis = tuple(_need(s, "shift_study", "chi_values"))
        cfg.prominence = _get(s, "prominence", 0.01)
        if not cfg.shift_alphas or not cfg.shift_chis:
            raise ConfigValidationError("alpha_values and chi_values must be non-empty", s["__line__"])

    if "params" in sec:
        s = sec["params"]
        axes = []
        for k in ("1", "2"):
            name, values = _get(s, "axis" + k), _get(s, "values" + k)
            if (name is None) != (values is None):
                raise ConfigValidationError(f"axis{k} and values{k} go together", s["__line__"])
            if name is None:
                continue
            if name not in SWEEPABLE:
                raise ConfigValidationError(f"cannot sweep {name!r}; choose from {SWEEPABLE}", s["axis" + k].line)
            axes.append((name, tuple(values)))
        if len(axes) == 1 and "axis2" in s:
            raise ConfigValidationError("axis2 given without axis1", s["axis2"].line)
        cfg.sweep = tuple(axes)

    if "output" in sec:
        cfg.output_dir = _get(sec["output"], "dir", ".")
    return cfg
