"""Empirical fits of the unnamed constants, frozen into the config fixture.

Each fit is max(floor, pad * largest observed ratio) over a stated sample
set, so refitting on the same samples is deterministic.
"""
from __future__ import annotations

import re

import numpy as np

from .biot_savart import QuadratureSpec, speed_bound_check
from .construction import derive_constants, fit_Cr
from .estimates import (approach_speed, fit_C1, lemma_sweep, speed_constant_general,
                        speed_constant_sign)
from .fields import harmonic_field, quadrant_sign_field, tanh_field
from .quadrature import GradedRule


def named_field(name):
    """quadrant_sign, harmonic or tanh_L<L> (e.g. tanh_L100)."""
    if name == "quadrant_sign":
        return quadrant_sign_field()
    if name == "harmonic":
        return harmonic_field()
    m = re.fullmatch(r"tanh_L([0-9.eE+-]+)", name)
    if m:
        return tanh_field(float(m.group(1)))
    raise ValueError(f"unknown field name {name!r}")


def field_names(spec):
    return [s.strip() for s in spec.split(",") if s.strip()]


def sweep_quad(order, ratio, depth):
    return QuadratureSpec(rule="gauss_composite", order=order, ratio=ratio, depth=depth)


def fit_lemma_C1(names, ks, q, pad=1.1):
    """(C1, max raw ratio, reports by field) for the 2^-k sweep."""
    reps = {n: lemma_sweep(named_field(n), ks, q, "Q", 1.0) for n in names}
    allr = [r for v in reps.values() for r in v]
    return fit_C1(allr, pad), max(r.ratio for r in allr), reps


def _grad_of(field):
    if field.grad_sup_box is None:
        return np.inf
    return float(field.grad_sup_box(np.pi, np.pi / 2))


def fit_speed_constants(names, eps, pad=1.1):
    """(C1', C_I): the sign-field constant and the general one over all fields."""
    c1p = -np.inf
    ci = -np.inf
    for n in names:
        f = named_field(n)
        sp = np.array([approach_speed(f, e) for e in eps])
        ci = max(ci, float(np.max(speed_constant_general(sp, eps, _grad_of(f)))))
        if n == "quadrant_sign":
            c1p = max(c1p, float(np.max(speed_constant_sign(sp, eps))))
    c1p = pad * c1p if np.isfinite(c1p) else np.nan
    return c1p, pad * ci


def fit_all(cfg):
    """All fitted constants plus the derived chain, as a flat dict."""
    names = field_names(cfg["sweep_fields"])
    q = sweep_quad(cfg["gauss_order"], cfg["gauss_ratio"], cfg["gauss_depth"])
    ks = range(1, int(cfg["sweep_k_max"]) + 1)
    C1, raw, _ = fit_lemma_C1(names, ks, q, cfg["fit_pad"])
    eps = np.geomspace(cfg["speed_eps_min"], 1.0, int(cfg["speed_eps_count"]))
    C1p, CI = fit_speed_constants(names, eps, cfg["fit_pad"])
    Cr, _, _ = fit_Cr(pad=cfg["fit_pad"], rule=GradedRule(cfg["gauss_order"], cfg["gauss_ratio"],
                                                          cfg["gauss_depth"]))
    sb = speed_bound_check(quadrant_sign_field(), QuadratureSpec(cfg["n_phi"], cfg["n_theta"]))
    C = derive_constants(C1, Cr, CI, sb["constant"])
    out = {"C1": C1, "C1_ratio_max": raw, "C1_prime": C1p, "C_I": CI, "Cr": Cr,
           "C2_measured": sb["constant"]}
    out.update({k: v for k, v in C.as_dict().items() if k not in ("C1", "Cr", "CI")})
    return out
