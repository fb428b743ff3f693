"""Scenario configuration: flat ``dotted.key = value`` text files.

Blank lines and ``#`` comments are ignored.  Every key is checked against
``SCHEMA``; errors name the offending key path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

__all__ = ["SCHEMA", "MODES", "ScenarioConfig", "parse_config", "load_config", "validate"]

MODES = ("run", "convergence", "gelscan", "blowup", "mc", "mc-compare")
KERNEL_TYPES = ("constant", "product", "sum", "power", "biased", "min", "max")
INITIAL_TYPES = ("monodisperse", "geometric", "algebraic", "explicit")


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {text!r}")
    return v


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _floats(text):
    return tuple(_float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(_int(x) for x in text.split(",") if x.strip())


def _choice(options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    return parse


# key -> (parser, default); default None means unset
SCHEMA = {
    "mode": (_choice(MODES), None),
    "seed": (_int, 0),
    "jobs": (_int, 1),
    "output.dir": (str, None),
    "kernel.type": (_choice(KERNEL_TYPES), None),
    "kernel.mu": (_float, None),
    "kernel.nu": (_float, None),
    "kernel.beta": (_float, None),
    "kernel.epsilon": (_float, None),
    "kernel.classical_mode": (_bool, False),
    "ic.type": (_choice(INITIAL_TYPES), None),
    "ic.rho": (_float, None),
    "ic.kappa": (_float, None),
    "ic.q": (_float, None),
    "ic.scale": (_float, None),
    "ic.values": (_floats, None),
    "ic.m0": (_float, 1.0),
    "ic.c0": (_float, None),
    "truncation.N": (_int, None),
    "solver.t_end": (_float, 1.0),
    "solver.rtol": (_float, 1e-8),
    "solver.atol": (_float, 1e-12),
    "solver.dt_init": (_float, None),
    "solver.dt_min": (_float, None),
    "solver.dt_max": (_float, None),
    "solver.record_every": (_float, None),
    "solver.max_steps": (_int, 5_000_000),
    "solver.method": (_choice(("auto", "separable", "direct")), "auto"),
    "diagnostics.moments": (_ints, (0, 1, 2)),
    "diagnostics.tail_m": (_ints, ()),
    "diagnostics.identities": (_bool, False),
    "convergence.N_list": (_ints, None),
    "gelscan.N_list": (_ints, None),
    "gelscan.mu_list": (_floats, None),
    "gelscan.nu_list": (_floats, None),
    "gelscan.threshold_ratio": (_float, 100.0),
    "gelscan.grow": (_float, 0.20),
    "gelscan.flat": (_float, 0.05),
    "blowup.m_list": (_ints, None),
    "blowup.control": (_bool, False),
    "mc.sites": (_int, None),
    "mc.replicas": (_int, 1),
    "mc.snapshot_every": (_float, None),
}

# keys a mode cannot run without (beyond mode itself)
REQUIRED = {
    "run": ("kernel.type", "ic.type", "truncation.N"),
    "convergence": ("kernel.type", "ic.type", "convergence.N_list"),
    "gelscan": ("ic.type", "gelscan.N_list", "gelscan.mu_list"),
    "blowup": ("kernel.type", "ic.type", "truncation.N", "blowup.m_list"),
    "mc": ("kernel.type", "ic.type", "mc.sites", "mc.snapshot_every"),
    "mc-compare": ("kernel.type", "ic.type", "truncation.N", "mc.sites", "mc.snapshot_every"),
}

KERNEL_PARAMS = {
    "product": ("kernel.mu",),
    "sum": ("kernel.mu", "kernel.nu"),
    "power": ("kernel.beta",),
    "biased": ("kernel.beta", "kernel.epsilon"),
}


@dataclass
class ScenarioConfig:
    """Validated scenario settings; ``values`` holds every schema key."""

    values: dict
    source: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def mode(self):
        return self.values["mode"]

    def echo(self):
        """Explicitly set keys as text, sorted; used for reports and hashing."""
        return {k: self.source[k] for k in sorted(self.source)}


def parse_config(text, overrides=None):
    """Parse config text into raw ``{key: string}``; later overrides win."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        raw[key] = value
    for key, value in (overrides or {}).items():
        raw[key] = str(value)
    return raw


def validate(raw):
    """Check raw key/value strings against the schema and mode requirements."""
    values = {}
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
    for key, (parse, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except (ValueError, OverflowError) as exc:
                raise ConfigError(key, str(exc)) from None
        else:
            values[key] = default
    mode = values["mode"]
    if mode is None:
        raise ConfigError("mode", "missing required key")
    for key in REQUIRED[mode]:
        if values[key] is None or values[key] == ():
            raise ConfigError(key, f"missing required key for mode {mode!r}")
    ktype = values["kernel.type"]
    for key in KERNEL_PARAMS.get(ktype, ()):
        if values[key] is None:
            raise ConfigError(key, f"required by kernel.type = {ktype}")
    for key in ("solver.t_end",):
        if values[key] < 0:
            raise ConfigError(key, "must be >= 0")
    if values["truncation.N"] is not None and values["truncation.N"] < 1:
        raise ConfigError("truncation.N", "must be >= 1")
    if values["jobs"] < 1:
        raise ConfigError("jobs", "must be >= 1")
    if values["mc.replicas"] < 1:
        raise ConfigError("mc.replicas", "must be >= 1")
    return ScenarioConfig(values, dict(raw))


def load_config(path, overrides=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return validate(parse_config(text, overrides))
