"""Flat ``key = value`` run configuration with strict validation.

Unknown keys, duplicates, and type mismatches are fatal and carry the line
number.  ``#`` starts a comment; blank lines are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

KINETIC_MODELS = ("neutron", "chemotaxis", "radiative")
LIMIT_MODELS = ("keller_segel", "nonlinear_diffusion")
MODELS = KINETIC_MODELS + LIMIT_MODELS
SCHEMES = ("wbap", "predict_only", "limit")


class ConfigError(ValueError):
    """Invalid run configuration."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass
class RunConfig:
    model: str = ""
    scheme: str = ""
    eps: float = 1.0
    n_cells: int = 0
    n_ordinates: int = 16
    x_min: float = 0.0
    x_max: float = 1.0
    final_time: float = 0.0
    output_dir: str = "out"
    write_f: bool = False
    seed: int = 0
    # boundaries
    boundary_left: str = ""
    boundary_right: str = ""
    inflow_left_value: float = 0.0
    inflow_right_value: float = 0.0
    inflow_left_profile: str = "isotropic"
    inflow_right_profile: str = "isotropic"
    s_left: float = 0.0
    s_right: float = 0.0
    # chemotaxis
    chi_s: float = 1.0
    delta: float = 1.0
    d_s: float = 15.0
    alpha: float = 3.0
    beta: float = 60.0
    chemo_init: str = "paper"
    # radiative
    sigma: float = 1.0
    a_rad: float = 0.01372
    c_light: float = 29.98
    c_v: float = 0.01
    rad_source: str = "paper"
    rad_init: str = "linear_temp"
    rad_t_left: float = 1.0
    rad_t_right: float = 0.5
    # neutron
    sigma_t: float = 1.0
    sigma_a: float = 0.0
    q_const: float = 0.0
    neutron_init: str = "cosine"
    # studies
    dx_list: tuple = ()
    eps_list: tuple = ()
    # steady-check tolerances (None: not checked)
    tol_drift: Optional[float] = None
    tol_flux_j: Optional[float] = None
    tol_steady_error: Optional[float] = None
    repeat_steady: bool = False


_TYPES = {
    "model": str, "scheme": str, "eps": float, "n_cells": int,
    "n_ordinates": int, "x_min": float, "x_max": float, "final_time": float,
    "output_dir": str, "write_f": bool, "seed": int,
    "boundary_left": str, "boundary_right": str,
    "inflow_left_value": float, "inflow_right_value": float,
    "inflow_left_profile": str, "inflow_right_profile": str,
    "s_left": float, "s_right": float,
    "chi_s": float, "delta": float, "d_s": float, "alpha": float,
    "beta": float, "chemo_init": str,
    "sigma": float, "a_rad": float, "c_light": float, "c_v": float,
    "rad_source": str, "rad_init": str, "rad_t_left": float,
    "rad_t_right": float,
    "sigma_t": float, "sigma_a": float, "q_const": float,
    "neutron_init": str,
    "dx_list": "float_list", "eps_list": "float_list",
    "tol_drift": float, "tol_flux_j": float, "tol_steady_error": float,
    "repeat_steady": bool,
}

_CHOICES = {
    "model": MODELS,
    "scheme": SCHEMES,
    "boundary_left": ("specular", "inflow"),
    "boundary_right": ("specular", "inflow"),
    "inflow_left_profile": ("isotropic", "forward"),
    "inflow_right_profile": ("isotropic", "forward"),
    "chemo_init": ("paper", "bumps_sum"),
    "rad_source": ("paper", "none"),
    "rad_init": ("linear_temp", "uniform", "wb_steady"),
    "neutron_init": ("cosine", "uniform"),
}

_DEFAULT_DOMAIN = {
    "chemotaxis": (-1.0, 1.0),
    "keller_segel": (-1.0, 1.0),
    "neutron": (0.0, 1.0),
    "radiative": (0.0, 1.0),
    "nonlinear_diffusion": (0.0, 1.0),
}

_DEFAULT_BOUNDARY = {
    "chemotaxis": ("specular", "specular"),
    "keller_segel": ("specular", "specular"),
    "neutron": ("specular", "specular"),
    "radiative": ("inflow", "specular"),
    "nonlinear_diffusion": ("inflow", "specular"),
}

_REQUIRED = ("model", "n_cells", "final_time")


def _convert(key: str, raw: str, line: int):
    typ = _TYPES[key]
    try:
        if typ is str:
            return raw
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ == "float_list":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(
            f"cannot parse {key!r} value {raw!r} as "
            f"{typ if isinstance(typ, str) else typ.__name__}", line
        ) from None
    raise ConfigError(f"unhandled type for key {key!r}", line)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a flat ``key = value`` configuration."""
    values: dict = {}
    seen_lines: dict = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {rawline!r}",
                              lineno)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line "
                f"{seen_lines[key]})", lineno)
        if not raw:
            raise ConfigError(f"empty value for {key!r}", lineno)
        values[key] = _convert(key, raw, lineno)
        seen_lines[key] = lineno
        if key in _CHOICES and values[key] not in _CHOICES[key]:
            raise ConfigError(
                f"{key!r} must be one of {_CHOICES[key]}, got "
                f"{values[key]!r}", lineno)

    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    model = values["model"]
    if model in KINETIC_MODELS:
        if "eps" not in values:
            raise ConfigError("missing required key 'eps' for kinetic models")
        values.setdefault("scheme", "wbap")
        if values["scheme"] == "limit":
            raise ConfigError(
                f"scheme 'limit' is not valid for kinetic model {model!r}")
        if "n_ordinates" not in values:
            raise ConfigError(
                "missing required key 'n_ordinates' for kinetic models")
    else:
        values.setdefault("scheme", "limit")
        if values["scheme"] != "limit":
            raise ConfigError(
                f"model {model!r} only supports scheme 'limit'")
    dom = _DEFAULT_DOMAIN[model]
    values.setdefault("x_min", dom[0])
    values.setdefault("x_max", dom[1])
    bnd = _DEFAULT_BOUNDARY[model]
    values.setdefault("boundary_left", bnd[0])
    values.setdefault("boundary_right", bnd[1])

    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.n_cells < 2:
        raise ConfigError(f"n_cells must be >= 2, got {cfg.n_cells}")
    if cfg.n_ordinates < 2 or cfg.n_ordinates % 2:
        raise ConfigError(
            f"n_ordinates must be a positive even count, got "
            f"{cfg.n_ordinates}")
    if cfg.final_time <= 0:
        raise ConfigError(f"final_time must be positive, got "
                          f"{cfg.final_time}")
    if not cfg.x_max > cfg.x_min:
        raise ConfigError(f"empty domain [{cfg.x_min}, {cfg.x_max}]")
    if cfg.model in KINETIC_MODELS and cfg.eps <= 0:
        raise ConfigError(f"eps must be positive, got {cfg.eps}")
    for key in ("chi_s", "delta", "d_s", "alpha", "beta", "sigma", "a_rad",
                "c_light", "c_v", "sigma_t"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"{key} must be positive")
    if cfg.sigma_a < 0:
        raise ConfigError("sigma_a must be nonnegative")
    if cfg.dx_list:
        for coarse, fine in zip(cfg.dx_list, cfg.dx_list[1:]):
            if abs(coarse / fine - 2.0) > 1e-9:
                raise ConfigError(
                    "dx_list must be a halving sequence (nested meshes)")
        span = cfg.x_max - cfg.x_min
        for dx in cfg.dx_list:
            ncells = span / dx
            if abs(ncells - round(ncells)) > 1e-9:
                raise ConfigError(
                    f"dx = {dx} does not tile the domain [{cfg.x_min}, "
                    f"{cfg.x_max}]")
    if cfg.eps_list:
        for hi, lo in zip(cfg.eps_list, cfg.eps_list[1:]):
            if not lo < hi:
                raise ConfigError("eps_list must be strictly decreasing")
        if cfg.model in KINETIC_MODELS and any(
                e <= 0 for e in cfg.eps_list):
            raise ConfigError("eps_list entries must be positive")
