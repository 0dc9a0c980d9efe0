"""Semi-Lagrangian transport of vorticity on the sphere.

Each step freezes the Biot-Savart velocity, traces characteristics backwards
with RK4 in Cartesian coordinates (renormalised onto the sphere, so the
poles need no special care) and interpolates the old field at the foot
points with the limited bicubic rule.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dfield, replace
from typing import Optional

import numpy as np

from .biot_savart import GridVelocityEngine, QuadratureSpec
from .fields import (ChartGrid, VorticityField, antisymmetrize, chart_gradient, g_profile,
                     integral, lp_norm, sample_values, symmetry_residual, write_field)
from .sphere_geom import angles_of, rodrigues

DIAG_COLUMNS = ("t", "grad_sup", "l1", "l2", "linf", "gauss_res", "sym_res")


@dataclass(frozen=True)
class SimulationConfig:
    n_phi: int = 256
    n_theta: int = 128
    dt: float = 0.02
    t_end: float = 1.0
    quad: Optional[QuadratureSpec] = None
    rotation_omega: float = 0.0
    symmetry: str = "none"
    diagnostics_every: int = 1
    cfl: float = 0.5
    grad_region: Optional[str] = None
    snapshot_every: int = 0
    interp: str = "bicubic"
    time_order: int = 2     # 1: velocity frozen per step, 2: predictor-corrector

    def __post_init__(self):
        ChartGrid(self.n_phi, self.n_theta)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.diagnostics_every < 1:
            raise ValueError("diagnostics_every must be >= 1")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must be in (0, 1]")
        if self.time_order not in (1, 2):
            raise ValueError("time_order must be 1 or 2")
        if self.symmetry not in ("none", "odd_odd"):
            raise ValueError(f"unknown symmetry {self.symmetry!r}")

    @property
    def region(self):
        if self.grad_region:
            return self.grad_region
        return "upper" if self.symmetry == "odd_odd" else "sphere"

    @property
    def n_steps(self):
        return int(math.ceil(self.t_end / self.dt - 1e-9))


@dataclass
class SimulationState:
    time: float
    field: VorticityField
    diagnostics: list = dfield(default_factory=list)
    step_index: int = 0
    max_sym_res_pre: float = 0.0
    substeps: int = 0


def gauss_residual(values):
    l1 = lp_norm(values, 1)
    return abs(integral(values)) / l1 if l1 > 0 else 0.0


def diagnostics_row(t, values, region="sphere", sym_res=0.0):
    dp, dt = chart_gradient(values, region)
    return (float(t), float(np.max(np.hypot(dp, dt))), lp_norm(values, 1), lp_norm(values, 2),
            lp_norm(values, np.inf), gauss_residual(values), float(sym_res))


class Transport:
    """Velocity engine plus the characteristic tracer for one grid."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.grid = ChartGrid(config.n_phi, config.n_theta)
        q = config.quad or QuadratureSpec(config.n_phi, config.n_theta)
        self.engine = GridVelocityEngine(config.n_phi, config.n_theta, q)
        ph, th = self.grid.mesh()
        self.phi, self.theta = ph, th
        c = np.cos(th)
        self.xyz = np.stack([c * np.cos(ph), c * np.sin(ph), np.sin(th)], axis=-1).reshape(-1, 3)

    def node_velocity(self, values):
        """Cartesian Biot-Savart velocity at the nodes, shape (n_theta, n_phi, 3)."""
        return self.engine.cart_velocity(values, symmetric=self.config.symmetry == "odd_odd")

    def velocity_at(self, U, x):
        """Interpolated Cartesian velocity at unit vectors x (M, 3), plus rotation term."""
        phi, theta = angles_of(x)
        u = np.stack([sample_values(U[..., k], phi, theta, "bicubic", clip=False)
                      for k in range(3)], axis=-1)
        om = self.config.rotation_omega
        if om:
            # -Omega e3 ^ x
            u[:, 0] += om * x[:, 1]
            u[:, 1] -= om * x[:, 0]
        return u - np.sum(u * x, axis=1)[:, None] * x

    def trace_back(self, U, dt, n_sub, U1=None):
        """Foot points of the nodes after time dt.

        The velocity is U (frozen) or, with U1, linear in time from U at the
        start of the step to U1 at its end.
        """
        x = self.xyz.copy()
        h = -dt / n_sub

        def vel(p, s):
            if U1 is None:
                return self.velocity_at(U, p)
            return self.velocity_at((1 - s) * U + s * U1, p)

        def adv(p, v, a):
            y = p + a * v
            return y / np.linalg.norm(y, axis=1)[:, None]

        for i in range(n_sub):
            s0, s1 = 1 - i / n_sub, 1 - (i + 1) / n_sub
            sm = 0.5 * (s0 + s1)
            k1 = vel(x, s0)
            k2 = vel(adv(x, k1, 0.5 * h), sm)
            k3 = vel(adv(x, k2, 0.5 * h), sm)
            k4 = vel(adv(x, k3, h), s1)
            x = adv(x, k1 + 2 * k2 + 2 * k3 + k4, h / 6)
        return x

    def substeps(self, U, dt):
        vmax = float(np.max(np.linalg.norm(U, axis=-1))) + abs(self.config.rotation_omega)
        cap = self.config.cfl * min(self.grid.dphi, self.grid.dtheta)
        return max(1, int(math.ceil(dt * vmax / cap - 1e-12)))


def _fix_gauss(values, weights):
    """Remove the net integral proportionally to |w| (zeros stay zero)."""
    tot = float(np.sum(weights * values))
    a = float(np.sum(weights * np.abs(values)))
    if a == 0 or tot == 0:
        return values
    return values - (tot / a) * np.abs(values)


def _advect(tr, v, U, dt, n_sub, interp, U1=None):
    foot = tr.trace_back(U, dt, n_sub, U1)
    phi, theta = angles_of(foot)
    vals = np.asarray(sample_values(v, phi, theta, interp, clip=True)).reshape(v.shape)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("interpolation produced non-finite values")
    return vals


def _project(vals, config, tr):
    """Back onto the declared symmetry class / the Gauss constraint."""
    if config.symmetry == "odd_odd":
        return antisymmetrize(vals)
    return _fix_gauss(vals, tr.grid.weights)


def step(state: SimulationState, config: SimulationConfig, transport: Optional[Transport] = None,
         dt=None):
    """Advance one semi-Lagrangian step (substeps chosen from the CFL cap)."""
    tr = transport or Transport(config)
    dt = config.dt if dt is None else dt
    v = state.field.grid
    if not np.any(v) and config.rotation_omega == 0:
        new = state.field.with_values(v, state.time + dt)
        return SimulationState(state.time + dt, new, state.diagnostics, state.step_index + 1,
                               state.max_sym_res_pre, state.substeps)
    U = tr.node_velocity(v)
    n_sub = tr.substeps(U, dt)
    vals = _advect(tr, v, U, dt, n_sub, state.field.interp)
    if config.time_order == 2:
        U1 = tr.node_velocity(_project(vals, config, tr))
        n_sub = max(n_sub, tr.substeps(U1, dt))
        vals = _advect(tr, v, U, dt, n_sub, state.field.interp, U1)
    pre = symmetry_residual(vals) if config.symmetry == "odd_odd" else 0.0
    vals = _project(vals, config, tr)
    new = VorticityField(vals, config.symmetry, state.field.interp, state.time + dt)
    return SimulationState(state.time + dt, new, state.diagnostics, state.step_index + 1,
                           max(state.max_sym_res_pre, pre), state.substeps + n_sub)


def rotating_step(state: SimulationState, config: SimulationConfig,
                  transport: Optional[Transport] = None, dt=None):
    """Step of the absolute vorticity with velocity BS(zeta) - Omega e3 ^ x."""
    if config.rotation_omega == 0:
        raise ValueError("rotating_step needs a nonzero rotation rate")
    return step(state, config, transport, dt)


def run(config: SimulationConfig, initial: VorticityField, out_dir=None, callback=None):
    """Integrate to t_end; returns the final state with the diagnostics series."""
    if (initial.n_phi, initial.n_theta) != (config.n_phi, config.n_theta):
        raise ValueError("initial field does not match the configured grid")
    if config.symmetry == "odd_odd" and initial.symmetry != "odd_odd":
        raise ValueError("config declares odd_odd but the field does not")
    tr = Transport(config)
    st = SimulationState(0.0, initial.with_values(initial.grid, 0.0))
    st.diagnostics.append(diagnostics_row(0.0, st.field.grid, config.region))
    if callback:
        callback(st)
    n = config.n_steps
    for i in range(1, n + 1):
        dt = min(config.dt, config.t_end - st.time) if i == n else config.dt
        st = step(st, config, tr, dt)
        if i % config.diagnostics_every == 0 or i == n:
            st.diagnostics.append(diagnostics_row(st.time, st.field.grid, config.region,
                                                  st.max_sym_res_pre))
        if out_dir is not None and config.snapshot_every and i % config.snapshot_every == 0:
            write_field(st.field, f"{out_dir}/field_{i:06d}.csv")
        if callback:
            callback(st)
    return st


def write_diagnostics(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAG_COLUMNS)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


# ---------------------------------------------------------------- rotation

def absolute_vorticity(field: VorticityField, Omega):
    """zeta = w + 2 Omega sin(theta) (use -Omega to go back)."""
    if Omega == 0:
        return field
    th = field.chart.theta[:, None]
    vals = field.grid + 2 * Omega * np.sin(th)
    # the planetary term is even in phi, so odd_odd is lost
    return VorticityField(vals, "none", field.interp, field.time)


def shift_longitude(values, shift, interp="bicubic"):
    """Samples of the field at (phi + shift, theta) on the same grid."""
    ch = ChartGrid(values.shape[1], values.shape[0])
    ph, th = ch.mesh()
    return np.asarray(sample_values(values, ph + shift, th, interp, clip=False)).reshape(values.shape)


@dataclass
class ConjugacyReport:
    times: list
    discrepancy: list
    grad_rotating: list
    grad_plain: list

    @property
    def max_discrepancy(self):
        return max(self.discrepancy) if self.discrepancy else 0.0

    @property
    def max_grad_gap(self):
        return max((abs(a - b) / max(b, 1e-300) for a, b in
                    zip(self.grad_rotating, self.grad_plain)), default=0.0)


def conjugacy_check(initial: VorticityField, Omega, t_end, config: SimulationConfig,
                    sample_every=5):
    """Run the plain and rotating problems from the same zeta and compare
    zeta_Omega(phi, theta, t) with zeta(phi + Omega t, theta, t)."""
    cfg0 = replace(config, rotation_omega=0.0, t_end=t_end)
    cfgW = replace(config, rotation_omega=Omega, t_end=t_end)
    tr0, trW = Transport(cfg0), Transport(cfgW)
    if config.symmetry == "none":
        initial = VorticityField(initial.grid, "none", initial.interp)
    a = SimulationState(0.0, initial)
    b = SimulationState(0.0, initial)
    rep = ConjugacyReport([], [], [], [])
    n = cfg0.n_steps
    for i in range(1, n + 1):
        dt = min(config.dt, t_end - a.time) if i == n else config.dt
        a = step(a, cfg0, tr0, dt)
        b = step(b, cfgW, trW, dt) if Omega else a
        if i % sample_every == 0 or i == n:
            ref = shift_longitude(a.field.grid, Omega * a.time)
            scale = max(float(np.max(np.abs(a.field.grid))), 1e-300)
            rep.times.append(a.time)
            rep.discrepancy.append(float(np.max(np.abs(b.field.grid - ref))) / scale)
            reg = cfg0.region
            rep.grad_plain.append(_grad_sup(a.field.grid, reg))
            rep.grad_rotating.append(_grad_sup(b.field.grid, reg))
    return rep


def _grad_sup(values, region):
    dp, dt = chart_gradient(values, region)
    return float(np.max(np.hypot(dp, dt)))


# ---------------------------------------------------------------- trapping diagnostics

def level_set_left_boundary(field: VorticityField, theta_max, level=1.0, tol=1e-12):
    """Smallest positive phi node with w >= level - tol among rows 0 < theta <= theta_max."""
    ch = field.chart
    ph, th = ch.mesh()
    m = (ph > 0) & (th > 0) & (th <= theta_max) & (field.grid >= level - tol)
    return float(np.min(ph[m])) if np.any(m) else np.inf


def band_height(eps0, n_theta):
    """Rows used for the left-boundary diagnostic: theta in (0, max(g(eps0), dtheta)]."""
    return max(float(g_profile(eps0)), np.pi / n_theta)


def trace_trajectory(transport: Transport, U, phi0, theta0, dt, n):
    """Forward trajectory of one particle under a frozen node velocity (for identity checks)."""
    c = np.cos(theta0)
    x = np.array([[c * np.cos(phi0), c * np.sin(phi0), np.sin(theta0)]])
    out = [x[0].copy()]

    def adv(p, v, a):
        y = p + a * v
        return y / np.linalg.norm(y, axis=1)[:, None]

    for _ in range(n):
        k1 = transport.velocity_at(U, x)
        k2 = transport.velocity_at(U, adv(x, k1, 0.5 * dt))
        k3 = transport.velocity_at(U, adv(x, k2, 0.5 * dt))
        k4 = transport.velocity_at(U, adv(x, k3, dt))
        x = adv(x, k1 + 2 * k2 + 2 * k3 + k4, dt / 6)
        out.append(x[0].copy())
    return np.array(out)


def rotate_field_z(field: VorticityField, angle):
    """Field composed with the rotation about e3 (a longitude shift)."""
    return field.with_values(shift_longitude(field.grid, angle, field.interp))


__all__ = ["SimulationConfig", "SimulationState", "Transport", "step", "run", "rotating_step",
           "absolute_vorticity", "conjugacy_check", "write_diagnostics", "diagnostics_row",
           "level_set_left_boundary", "band_height", "trace_trajectory", "rodrigues",
           "rotate_field_z", "DIAG_COLUMNS"]
