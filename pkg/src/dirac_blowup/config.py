"""Flat ``key=value`` experiment configuration.

One assignment per line; blank lines and text after ``#`` are ignored.
Lists are comma separated.  Unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .model import ModelParams

SUBCOMMANDS = ("profile", "planar", "scan", "pde", "fit-rate", "verify-closed-form")
PDE_INITIAL = ("gaussian", "zero", "theorem2")


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str = "profile"
    k: int = 1
    ell: int = 1
    seed: int = 0
    rtol: float = 1e-10
    atol: float = 1e-12
    blowup_norm: float = 1e8
    endpoint_offset: float = 1e-8
    bc_tolerance: float = 1e-6
    # profile initial condition at y0
    y0: float = 0.0
    amp_u0: float = 1.0
    amp_v0: float = 1.0
    alpha0: float = 0.0
    delta0: float = -math.pi / 2
    # planar and closed-form runs
    xi0: float = 1.0
    tau_max: float = 10.0
    n_random: int = 20
    # scan grid
    amplitudes: tuple = (0.25, 0.5, 1.0, 2.0)
    n_delta: int = 8
    # pde
    initial: str = "gaussian"
    dx: float = 2.0**-11
    t_final: float = 0.5
    x_lo: float = -2.0
    x_hi: float = 2.0
    snapshot_every: int = 256
    # rate fitting
    C: float = 0.0
    window_lo: float = 0.99
    window_hi: float = 0.999999

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.k, self.ell)


_TYPES = {f.name: type(f.default) for f in fields(ExperimentConfig)}


def _convert(name: str, raw: str, line: int):
    kind = _TYPES[name]
    try:
        if kind is int:
            value = int(raw)
        elif kind is float:
            value = float(raw)
        elif kind is tuple:
            value = tuple(float(v) for v in raw.split(",") if v.strip())
        else:
            value = raw
    except ValueError:
        raise ParseError(line, f"cannot read {raw!r} as {kind.__name__} for {name}") from None
    return value


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.subcommand not in SUBCOMMANDS:
        raise ValidationError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
    try:
        cfg.params
    except ValueError as exc:
        raise ValidationError("k/ell", str(exc)) from None
    for name in ("rtol", "atol", "blowup_norm", "bc_tolerance", "xi0", "tau_max", "dx", "t_final"):
        value = getattr(cfg, name)
        if not (value > 0 and math.isfinite(value)):
            raise ValidationError(name, f"must be positive and finite, got {value}")
    if not 0.0 < cfg.endpoint_offset < 0.25:
        raise ValidationError("endpoint_offset", "must lie in (0, 0.25)")
    if not -1.0 < cfg.y0 < 1.0:
        raise ValidationError("y0", "must lie strictly inside (-1, 1)")
    if cfg.amp_u0 < 0 or cfg.amp_v0 < 0:
        raise ValidationError("amp_u0/amp_v0", "amplitudes must be nonnegative")
    if not cfg.amplitudes or any(a < 0 for a in cfg.amplitudes):
        raise ValidationError("amplitudes", "need a nonempty list of nonnegative values")
    for name in ("n_random", "n_delta"):
        if getattr(cfg, name) < 1:
            raise ValidationError(name, "must be at least 1")
    if cfg.snapshot_every < 0:
        raise ValidationError("snapshot_every", "must be nonnegative")
    if cfg.initial not in PDE_INITIAL:
        raise ValidationError("initial", f"must be one of {', '.join(PDE_INITIAL)}")
    if not cfg.x_hi > cfg.x_lo:
        raise ValidationError("x_hi", "must exceed x_lo")
    if not -1.0 < cfg.window_lo < cfg.window_hi < 1.0:
        raise ValidationError("window_lo/window_hi", "need -1 < window_lo < window_hi < 1")
    return cfg


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse and validate; keyword overrides apply before validation."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ParseError(lineno, f"unknown key {key!r}")
        if key in values:
            raise ParseError(lineno, f"duplicate key {key!r}")
        values[key] = _convert(key, value, lineno)
    cfg = replace(ExperimentConfig(), **values)
    if overrides:
        cfg = replace(cfg, **overrides)
    return validate(cfg)


def _render_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name}={_render_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def config_dict(cfg: ExperimentConfig) -> dict:
    return {f.name: _render_value(getattr(cfg, f.name)) for f in fields(cfg)}
