"""Flat JSON configuration: every numerical parameter and fitted constant.

The packaged default.json lists the full key set; a user file may override
any subset. Unknown keys and type mismatches raise ConfigError naming the key.
"""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .biot_savart import QuadratureSpec
from .construction import ConstructionConstants, derive_constants
from .fields import InitialDataSpec, build_initial_data
from .solver import SimulationConfig


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"config key {key!r}: {msg}")
        self.key = key


def defaults():
    with resources.files("sphere_euler").joinpath("data/default.json").open() as fh:
        return json.load(fh)


def _check_type(key, value, ref):
    if ref is None:
        ok = value is None or (isinstance(value, (int, float)) and not isinstance(value, bool))
    elif isinstance(ref, bool):
        ok = isinstance(value, bool)
    elif isinstance(ref, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(ref, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(ref))
    if not ok:
        raise ConfigError(key, f"expected {type(ref).__name__ if ref is not None else 'number or null'}"
                               f", got {type(value).__name__}")
    if isinstance(value, float) and not np.isfinite(value):
        raise ConfigError(key, "must be finite")


def validate(user: dict):
    """Defaults overlaid with user values, after key and type checks."""
    if not isinstance(user, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    base = defaults()
    for k, v in user.items():
        if k not in base:
            raise ConfigError(k, "unknown key")
        _check_type(k, v, base[k])
    base.update(user)
    for k in ("n_phi", "n_theta", "kernel_points", "sweep_k_max", "flux_samples",
              "speed_eps_count", "diagnostics_every", "conj_sample_every",
              "envelope_record_every"):
        if base[k] < 1:
            raise ConfigError(k, "must be >= 1")
    for k in ("dt", "envelope_dt", "envelope_T", "epsilon0", "transition_width", "fit_pad"):
        if not base[k] > 0:
            raise ConfigError(k, "must be positive")
    return base


def load(path=None):
    if path is None:
        return defaults()
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"not valid JSON ({e})") from None
    return validate(user)


def quad_spec(cfg):
    return QuadratureSpec(cfg["n_phi"], cfg["n_theta"], cfg["cutoff"], cfg["quad_rule"],
                          cfg["taper"], cfg["gauss_order"], cfg["gauss_ratio"], cfg["gauss_depth"])


def simulation_config(cfg, **over):
    kw = dict(n_phi=cfg["n_phi"], n_theta=cfg["n_theta"], dt=cfg["dt"], t_end=cfg["t_end"],
              quad=quad_spec(cfg), rotation_omega=cfg["rotation_omega"],
              symmetry=cfg["symmetry"], diagnostics_every=cfg["diagnostics_every"],
              cfl=cfg["cfl"], snapshot_every=cfg["snapshot_every"], interp=cfg["interp"],
              time_order=cfg["time_order"])
    kw.update(over)
    return SimulationConfig(**kw)


def initial_field(cfg, kind=None, width=None):
    spec = InitialDataSpec(
        epsilon0=cfg["epsilon0"],
        transition_width=cfg["transition_width"] if width is None else width,
        kind=kind or cfg["initial_kind"], plateau_phi=cfg["plateau_phi"],
        plateau_theta=cfg["plateau_theta"],
        patch=(cfg["patch_phi0"], cfg["patch_phi1"], cfg["patch_theta0"], cfg["patch_theta1"]))
    return build_initial_data(spec, cfg["n_phi"], cfg["n_theta"], cfg["interp"])


def constants(cfg):
    """Frozen constants, or the chain derived from the fitted ones if s0 is unset."""
    if cfg["s0"] > 0:
        return ConstructionConstants(cfg["C1"], cfg["Cr"], cfg["s0"], cfg["Cprime"], cfg["rho0"],
                                     cfg["C2"], cfg["C3"], cfg["Cpp"], cfg["C_I"], cfg["C_probe"])
    return derive_constants(cfg["C1"], cfg["Cr"], cfg["C_I"], cfg["C2_measured"])


def floats(spec):
    return [float(s) for s in str(spec).split(",") if s.strip()]
