"""Velocity from vorticity on the unit sphere.

u(x) = (1/2pi) * integral of (x ^ y) / |x - y|^2 * w(y) dsigma(y)

Grid fields use the midpoint rule on the chart with the kernel switched off
smoothly inside the chordal ball |x - y| < delta (weight eta(c) rises from 0 at
c = delta to 1 at c = delta + taper*delta) plus the first-order correction for
the removed ball, (I/2) x ^ grad w(x) with I = int c (1 - c^2/4)(1 - eta) dc.
Closed-form fields use composite Gauss rules graded at the singular point.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import quad

from . import kernels
from .fields import (AnalyticField, ChartGrid, VorticityField, chart_gradient, integral,
                     lp_norm, sample_values, surface_gradient_cart)
from .sphere_geom import (SpherePoint, TangentVelocity, frames, from_angles, tangent_velocity,
                       unit_vectors, wrap_phi)
from .kernels import smoothstep
from .quadrature import GradedRule, graded_breaks, integrate_tensor

GAUSS_TOL = 1e-6
RULES = ("midpoint", "gauss_composite")


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature settings.

    For grid fields n_phi/n_theta are taken from the field itself. delta is the
    chordal cutoff (None: two chart-cell diagonals); a delta below one cell
    diagonal is rejected. order/ratio/depth configure the graded Gauss rule.
    """
    n_phi: int = 256
    n_theta: int = 128
    singularity_cutoff: Optional[float] = None
    rule: str = "midpoint"
    taper: float = 1.0
    order: int = 10
    ratio: float = 0.25
    depth: float = 1e-4

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.taper <= 0:
            raise ValueError("taper must be positive")
        if self.rule == "midpoint" and self.singularity_cutoff is not None:
            check_cutoff(self.singularity_cutoff, self.n_phi, self.n_theta)

    def cutoff_for(self, n_phi, n_theta):
        diag = ChartGrid(n_phi, n_theta).diagonal
        if self.singularity_cutoff is None:
            return 2.0 * diag
        return check_cutoff(self.singularity_cutoff, n_phi, n_theta)

    @property
    def graded(self):
        return GradedRule(order=self.order, ratio=self.ratio, depth=self.depth)


def check_cutoff(delta, n_phi, n_theta):
    diag = ChartGrid(n_phi, n_theta).diagonal
    if delta < diag * (1 - 1e-12):
        raise ValueError(f"cutoff delta={delta:.3g} below one cell diagonal ({diag:.3g})")
    return float(delta)


@dataclass(frozen=True)
class GreensKernel:
    kind: str = "sphere"

    def __post_init__(self):
        if self.kind not in ("sphere", "hemisphere"):
            raise ValueError(f"unknown kernel {self.kind!r}")

    def value(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        d = np.linalg.norm(x - y, axis=-1)
        if self.kind == "sphere":
            return np.log(d) / (2 * np.pi)
        yb = y * np.array([1.0, 1.0, -1.0])
        return np.log(d / np.linalg.norm(x - yb, axis=-1)) / (2 * np.pi)


# ---------------------------------------------------------------- ball moments

@lru_cache(maxsize=64)
def ball_moments(delta, taper=1.0):
    """(I, J): I = int c(1-c^2/4)(1-eta) dc, J = int c ln(c) (1-eta) dc."""
    w = taper * delta
    hi = delta + w
    eta = lambda c: smoothstep((c - delta) / w)  # noqa: E731
    I = quad(lambda c: c * (1 - c * c / 4) * (1 - eta(c)), 0, hi, points=[delta],
             epsabs=0, epsrel=1e-13, limit=200)[0]
    J = quad(lambda c: c * np.log(c) * (1 - eta(c)) if c > 0 else 0.0, 0, hi,
             points=[delta], epsabs=0, epsrel=1e-12, limit=200)[0]
    return I, J


@lru_cache(maxsize=64)
def ball_cap(delta, taper=1.0):
    """int (1-eta) dc: bounds |removed part| / sup|w|, since |x^y| / |x-y|^2 <= 1/c."""
    w = taper * delta
    return quad(lambda c: 1 - smoothstep((c - delta) / w), 0, delta + w, points=[delta],
                epsabs=0, epsrel=1e-13)[0]


def _cap_vectors(v, cap, axis=-1):
    """Scale vectors down to length <= cap (the correction cannot exceed the removed part)."""
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v * np.minimum(1.0, cap / np.maximum(n, 1e-300))


def taper_weight(c, delta, taper=1.0):
    return smoothstep((np.asarray(c) - delta) / (taper * delta))


# ---------------------------------------------------------------- helpers

def _as_points(p):
    if isinstance(p, SpherePoint):
        return np.array([p.phi]), np.array([p.theta])
    phi, theta = p
    return np.atleast_1d(np.asarray(phi, float)), np.atleast_1d(np.asarray(theta, float))


def gauss_residual(field):
    """|int w dsigma| relative to the L1 norm (0 for the zero field)."""
    l1 = lp_norm(field, 1)
    return abs(integral(field)) / l1 if l1 > 0 else 0.0


def _grid_values(field, q: QuadratureSpec):
    if isinstance(field, VorticityField):
        return field.grid
    if isinstance(field, AnalyticField):
        return field.sample_grid(q.n_phi, q.n_theta).grid
    raise TypeError(f"unsupported field type {type(field).__name__}")


def _use_graded(field, q):
    if q.rule == "gauss_composite":
        if not isinstance(field, AnalyticField):
            raise ValueError("gauss_composite needs a closed-form field")
        return True
    return False


# ---------------------------------------------------------------- midpoint, full sphere

def midpoint_velocity_cart(values, xyz, q: QuadratureSpec):
    """Cartesian velocity at points xyz (M, 3) from grid samples (n_theta, n_phi)."""
    values = np.asarray(values, float)
    nt, npf = values.shape
    ch = ChartGrid(npf, nt)
    delta = q.cutoff_for(npf, nt)
    src = ch.xyz().reshape(-1, 3)
    swo = (ch.weights * values).ravel()
    keep = swo != 0
    xyz = np.atleast_2d(np.asarray(xyz, float))
    u = kernels.direct_velocity(xyz, src[keep], swo[keep], delta, q.taper * delta)
    return u + ball_correction_cart(values, xyz, delta, q.taper)


def ball_correction_cart(values, xyz, delta, taper=1.0):
    """(I/2) x ^ grad w(x) for the part of the integral removed by the taper."""
    xyz = np.atleast_2d(np.asarray(xyz, float))
    I, _ = ball_moments(delta, taper)
    if not I or not np.any(values):
        return np.zeros_like(xyz)
    G = surface_gradient_cart(values)
    phi, theta = np.arctan2(xyz[:, 1], xyz[:, 0]), np.arcsin(np.clip(xyz[:, 2], -1, 1))
    g = np.stack([np.atleast_1d(sample_values(G[..., k], phi, theta, "bicubic", clip=False))
                  for k in range(3)], axis=-1)
    g -= np.sum(g * xyz, axis=1)[:, None] * xyz
    cap = ball_cap(delta, taper) * float(np.max(np.abs(values)))
    return _cap_vectors(0.5 * I * np.cross(xyz, g), cap)


def velocity_full_many(field, phi, theta, q: Optional[QuadratureSpec] = None):
    """Vectorised velocity: returns (cart (M,3), u_phi (M,), u_theta (M,))."""
    q = q or QuadratureSpec()
    phi, theta = np.atleast_1d(phi).astype(float), np.atleast_1d(theta).astype(float)
    xyz = unit_vectors(phi, theta)
    if _use_graded(field, q):
        cart = np.array([_graded_full_cart(field, a, b, q) for a, b in zip(phi, theta)])
    else:
        cart = midpoint_velocity_cart(_grid_values(field, q), xyz, q)
    cart = cart - np.sum(cart * xyz, axis=1)[:, None] * xyz
    e_phi, e_theta = frames(phi, theta)
    up = np.sum(cart * e_phi, axis=1)
    ut = np.sum(cart * e_theta, axis=1)
    pole = np.abs(np.abs(theta) - np.pi / 2) < 1e-12
    up[pole] = np.nan
    ut[pole] = np.nan
    return cart, up, ut


def velocity_full(field, p: SpherePoint, q: Optional[QuadratureSpec] = None) -> TangentVelocity:
    q = q or QuadratureSpec()
    xyz = p.xyz[None, :]
    if _use_graded(field, q):
        cart = _graded_full_cart(field, p.phi, p.theta, q)
        warn = False
    else:
        values = _grid_values(field, q)
        cart = midpoint_velocity_cart(values, xyz, q)[0]
        warn = gauss_residual(values) > GAUSS_TOL
    return tangent_velocity(p, cart, gauss_warning=warn)


def _graded_full_cart(field: AnalyticField, phi, theta, q: QuadratureSpec):
    rule = q.graded
    x = unit_vectors(phi, theta)
    lo, hi = phi - np.pi, phi + np.pi
    cphi = [phi]
    for b in field.breaks_phi:
        for k in (-1, 0, 1):
            cphi.append(b + 2 * np.pi * k)
    cphi += [np.pi, -np.pi, np.pi + 2 * np.pi * (phi > 0)]
    cth = [theta, -np.pi / 2, np.pi / 2, *field.breaks_theta]
    floor = rule.depth * max(min(np.pi / 2 - abs(theta), 1.0), 1e-6)
    bp = graded_breaks(lo, hi, cphi, rule, floor=floor)
    bt = graded_breaks(-np.pi / 2, np.pi / 2, cth, rule, floor=floor)

    def f(P, T):
        y = unit_vectors(P, T)
        c2 = (4 * np.sin(0.5 * (T - theta)) ** 2
              + 4 * np.cos(T) * np.cos(theta) * np.sin(0.5 * (P - phi)) ** 2)
        w = field(wrap_phi(P), T) * np.cos(T) / np.maximum(c2, 1e-300)
        return (np.cross(x[None, :], y) * w[:, None]).T

    return integrate_tensor(f, bp, bt, rule.order) / (2 * np.pi)


# ---------------------------------------------------------------- quarter-sphere reduction

def _quarter_kernels(phi, theta, P, T):
    """Verbatim odd-odd kernels for a single target; returns (A_phi, A_theta).

    u_phi = sin(phi)/pi * int A_phi w dsigma, u_theta = 2 tan(theta)/pi * int A_theta w dsigma
    over the quarter y2 > 0, y3 > 0. Squared distances use stable half-angle forms.
    """
    ct, st = np.cos(theta), np.sin(theta)
    cT, sT = np.cos(T), np.sin(T)
    y2 = cT * np.sin(P)
    y3 = sT
    cc = 4 * ct * cT
    s_m = np.sin(0.5 * (P - phi)) ** 2
    s_p = np.sin(0.5 * (P + phi)) ** 2
    h_m = 4 * np.sin(0.5 * (theta - T)) ** 2
    h_p = 4 * np.sin(0.5 * (theta + T)) ** 2
    D = h_m + cc * s_m          # |x - y|^2
    Dt = h_m + cc * s_p         # |x - y~|^2
    Db = h_p + cc * s_m         # |x - y_bar|^2
    Dtb = h_p + cc * s_p        # |x - y~_bar|^2
    x3_m_y3 = 2 * np.cos(0.5 * (theta + T)) * np.sin(0.5 * (theta - T))
    with np.errstate(divide="ignore", invalid="ignore"):
        A_phi = 2 * y2 * x3_m_y3 / (D * Dt) - 2 * y2 * (st + y3) / (Db * Dtb)
        A_th = (y3 * ct * cT * np.sin(P - phi) / (D * Db)
                + y3 * ct * cT * np.sin(P + phi) / (Dt * Dtb))
    return A_phi, A_th


def _self_frame(phi, theta, P, T):
    """Frame components of (1/2pi)(x ^ z)/|x - z|^2 for z at (P, T); also |x - z|."""
    c2 = (4 * np.sin(0.5 * (T - theta)) ** 2
          + 4 * np.cos(T) * np.cos(theta) * np.sin(0.5 * (P - phi)) ** 2)
    dp = P - phi
    with np.errstate(divide="ignore", invalid="ignore"):
        kp = (np.sin(theta) * np.cos(T) * np.cos(dp) - np.cos(theta) * np.sin(T)) / c2
        kt = np.cos(T) * np.sin(dp) / c2
    return kp / (2 * np.pi), kt / (2 * np.pi), np.sqrt(c2)


def _require_oddodd(field):
    sym = getattr(field, "symmetry", None)
    if sym != "odd_odd":
        raise ValueError(f"quarter-sphere formulas need an odd_odd field (got {sym!r})")


def quarter_brackets(field, phi, theta, q: Optional[QuadratureSpec] = None):
    """(S_phi, S_theta) with u_phi = sin(phi) S_phi / pi and u_theta = 2 tan(theta) S_theta / pi.

    Returned separately so that callers can normalise without dividing by
    small prefactors.
    """
    q = q or QuadratureSpec()
    _require_oddodd(field)
    if _use_graded(field, q):
        return _graded_quarter(field, phi, theta, q)
    return _midpoint_quarter(_grid_values(field, q), phi, theta, q)


def _midpoint_quarter(values, phi, theta, q):
    values = np.asarray(values, float)
    nt, npf = values.shape
    ch = ChartGrid(npf, nt)
    delta = q.cutoff_for(npf, nt)
    PH, TH = ch.mesh()
    m = (PH > 0) & (TH > 0)
    P, T = PH[m], TH[m]
    wo = (ch.weights * values)[m]
    A_phi, A_th = _quarter_kernels(phi, theta, P, T)
    # near-singular images: replace the combined kernel by tapered direct images
    reach = delta * (1 + q.taper)
    images = ((P, T, 1.0), (-P, T, -1.0), (P, -T, -1.0), (-P, -T, 1.0))
    near = np.zeros(P.shape, bool)
    comps = []
    for Pi, Ti, s in images:
        kp, kt, c = _self_frame(phi, theta, Pi, Ti)
        near |= c < reach
        comps.append((kp, kt, c, s))
    sp, tp = np.sin(phi), np.tan(theta)
    S_phi = np.sum(np.where(near, 0.0, A_phi) * wo)
    S_th = np.sum(np.where(near, 0.0, A_th) * wo)
    # tapered direct images give frame components of u directly
    u_near_p = 0.0
    u_near_t = 0.0
    for kp, kt, c, s in comps:
        eta = taper_weight(c[near], delta, q.taper)
        u_near_p += s * np.sum(np.nan_to_num(eta * kp[near]) * wo[near])
        u_near_t += s * np.sum(np.nan_to_num(eta * kt[near]) * wo[near])
    # ball correction from the full-chart gradient
    corr = ball_correction_cart(values, unit_vectors(phi, theta), delta, q.taper)[0]
    e_phi, e_theta = frames(phi, theta)
    u_near_p += corr @ e_phi
    u_near_t += corr @ e_theta
    # fold the near/correction part into the bracket normalisation
    S_phi = S_phi + (np.pi * u_near_p / sp if sp != 0 else 0.0)
    S_th = S_th + (np.pi * u_near_t / (2 * tp) if tp != 0 else 0.0)
    return float(S_phi), float(S_th)


def _graded_quarter(field: AnalyticField, phi, theta, q):
    rule = q.graded
    ap, at = abs(phi), abs(theta)
    scales = [s for s in (ap, at) if s > 0]
    floor = rule.depth * min(scales + [1.0])
    bp = graded_breaks(0.0, np.pi, [0.0, ap, np.pi, *field.breaks_phi], rule, floor=floor)
    bt = graded_breaks(0.0, np.pi / 2, [0.0, at, np.pi / 2, *field.breaks_theta], rule,
                       floor=floor)

    def f(P, T):
        A_phi, A_th = _quarter_kernels(phi, theta, P, T)
        w = field(P, T) * np.cos(T)
        return np.stack([A_phi * w, A_th * w])

    S = integrate_tensor(f, bp, bt, rule.order)
    return float(S[0]), float(S[1])


def velocity_oddodd(field, p: SpherePoint, q: Optional[QuadratureSpec] = None) -> TangentVelocity:
    """Velocity from the quarter-sphere integrals (odd-odd fields only)."""
    q = q or QuadratureSpec()
    _require_oddodd(field)
    if p.at_pole:
        raise ValueError("quarter-sphere formulas are not defined at the poles")
    S_phi, S_th = quarter_brackets(field, p.phi, p.theta, q)
    up = np.sin(p.phi) * S_phi / np.pi
    ut = 2 * np.tan(p.theta) * S_th / np.pi
    e_phi, e_theta = frames(p.phi, p.theta)
    return TangentVelocity(float(up), float(ut), up * e_phi + ut * e_theta, 0.0, False)


def velocity_pole_component(field, pole=1, q: Optional[QuadratureSpec] = None,
                            check_symmetry=True):
    """x2-component of the velocity at the north (pole=1) or south (pole=-1) pole."""
    q = q or QuadratureSpec()
    if check_symmetry:
        _require_oddodd(field)
    theta = np.pi / 2 * np.sign(pole)
    if _use_graded(field, q):
        return float(_graded_full_cart(field, 0.0, theta, q)[1])
    xyz = np.array([[0.0, 0.0, float(np.sign(pole))]])
    return float(midpoint_velocity_cart(_grid_values(field, q), xyz, q)[0, 1])


# ---------------------------------------------------------------- stream function

def stream_function(field, p: SpherePoint, kernel: GreensKernel = GreensKernel(),
                    q: Optional[QuadratureSpec] = None):
    """G w (x) = int G(x, y) w(y) dsigma by the tapered midpoint rule.

    The hemisphere kernel is evaluated as the sphere kernel applied to the
    theta-odd extension of w, which equals int_{upper} G_+(x, y) w(y) dsigma.
    """
    q = q or QuadratureSpec()
    values = np.asarray(_grid_values(field, q), float)
    nt, npf = values.shape
    ch = ChartGrid(npf, nt)
    if kernel.kind == "hemisphere":
        lower = ch.theta < 0
        if np.any(values[lower] != 0):
            raise ValueError("hemisphere kernel needs w supported in the upper hemisphere")
        values = values - values[::-1, :]
    delta = q.cutoff_for(npf, nt)
    src = ch.xyz().reshape(-1, 3)
    x = p.xyz
    c = np.linalg.norm(src - x[None, :], axis=1)
    eta = taper_weight(c, delta, q.taper)
    with np.errstate(divide="ignore"):
        lg = np.where(eta > 0, np.log(np.maximum(c, 1e-300)), 0.0)
    s = np.sum(eta * lg * (ch.weights * values).ravel()) / (2 * np.pi)
    _, J = ball_moments(delta, q.taper)
    w_here = sample_values(values, p.phi, p.theta, "bicubic", clip=False)
    return float(s + J * w_here)


# ---------------------------------------------------------------- grid engine

class GridVelocityEngine:
    """Velocity at every node of a chart grid by a longitude correlation.

    In frame components the kernel depends only on (theta_j, theta_j', phi' - phi),
    so each output row is a sum over source rows of 1D circular correlations,
    done with rfft. This is the same tapered midpoint sum as the direct rule.
    """

    def __init__(self, n_phi, n_theta, q: Optional[QuadratureSpec] = None,
                 cache_bytes=4e8):
        self.grid = ChartGrid(n_phi, n_theta)
        self.q = q or QuadratureSpec(n_phi, n_theta)
        self.delta = self.q.cutoff_for(n_phi, n_theta)
        self.I, self.J = ball_moments(self.delta, self.q.taper)
        self.cap = ball_cap(self.delta, self.q.taper)
        nf = n_phi // 2 + 1
        self._cache = None
        if 2 * 16 * n_theta * n_theta * nf <= cache_bytes:
            self._cache = self._kernel_hat(np.arange(n_theta))

    def _kernel_hat(self, rows):
        ch = self.grid
        th = ch.theta
        dp = ch.dphi * np.arange(ch.n_phi)
        out_p = np.empty((len(rows), ch.n_theta, ch.n_phi // 2 + 1), complex)
        out_t = np.empty_like(out_p)
        cT = np.cos(th)[:, None]
        sT = np.sin(th)[:, None]
        cosd, sind = np.cos(dp)[None, :], np.sin(dp)[None, :]
        s2 = np.sin(0.5 * dp)[None, :] ** 2
        for r, j in enumerate(rows):
            t = th[j]
            c2 = 4 * np.sin(0.5 * (th[:, None] - t)) ** 2 + 4 * np.cos(t) * cT * s2
            c = np.sqrt(c2)
            eta = taper_weight(c, self.delta, self.q.taper)
            f = eta / np.maximum(c2, 1e-300) / (2 * np.pi)
            kp = f * (np.sin(t) * cT * cosd - np.cos(t) * sT)
            kt = f * cT * sind
            out_p[r] = np.conj(np.fft.rfft(kp, axis=1))
            out_t[r] = np.conj(np.fft.rfft(kt, axis=1))
        return out_p, out_t

    def frame_velocity(self, values, symmetric=False, block=16):
        """(u_phi, u_theta) at all nodes; symmetric=True fills the south from the north."""
        values = np.asarray(values, float)
        ch = self.grid
        nt, npf = ch.n_theta, ch.n_phi
        A = np.fft.rfft(ch.row_weights[:, None] * values, axis=1)
        rows = np.arange(nt // 2, nt) if symmetric else np.arange(nt)
        Up = np.zeros((nt, npf))
        Ut = np.zeros((nt, npf))
        for a in range(0, len(rows), block):
            rr = rows[a:a + block]
            if self._cache is not None:
                kp, kt = self._cache[0][rr], self._cache[1][rr]
            else:
                kp, kt = self._kernel_hat(rr)
            Up[rr] = np.fft.irfft(np.einsum("jpk,pk->jk", kp, A), n=npf, axis=1)
            Ut[rr] = np.fft.irfft(np.einsum("jpk,pk->jk", kt, A), n=npf, axis=1)
        if symmetric:
            h = nt // 2
            Up[:h] = Up[nt - 1:h - 1:-1]
            Ut[:h] = -Ut[nt - 1:h - 1:-1]
        if self.I:
            gp, gt = chart_gradient(values)
            corr = np.stack([-0.5 * self.I * gt, 0.5 * self.I * gp / np.cos(ch.theta)[:, None]])
            corr = _cap_vectors(corr, self.cap * float(np.max(np.abs(values))), axis=0)
            Up += corr[0]
            Ut += corr[1]
        return Up, Ut

    def cart_velocity(self, values, symmetric=False):
        Up, Ut = self.frame_velocity(values, symmetric)
        ph, th = self.grid.mesh()
        e_phi, e_theta = frames(ph, th)
        return Up[..., None] * e_phi + Ut[..., None] * e_theta


def grid_velocity(field: VorticityField, q: Optional[QuadratureSpec] = None):
    eng = GridVelocityEngine(field.n_phi, field.n_theta, q)
    return eng.frame_velocity(field.grid, symmetric=field.symmetry == "odd_odd")


# ---------------------------------------------------------------- speed bound

def speed_bound_check(field, q: Optional[QuadratureSpec] = None):
    """max |u| over the nodes and the constant C with |u| <= C ||w||_inf."""
    q = q or QuadratureSpec()
    values = _grid_values(field, q)
    sup = float(np.max(np.abs(values))) if np.size(values) else 0.0
    if sup > 1 + 1e-12:
        raise ValueError("speed bound check expects ||w||_inf <= 1")
    nt, npf = values.shape
    eng = GridVelocityEngine(npf, nt, q)
    Up, Ut = eng.frame_velocity(values)
    vmax = float(np.max(np.hypot(Up, Ut)))
    return {"max_speed": vmax, "constant": vmax / sup if sup > 0 else 0.0,
            "sup_norm": sup}


def velocity_snapshot_rows(field, phi, theta, q=None):
    """Rows (phi, theta, u_phi, u_theta, residual) for the snapshot CSV."""
    q = q or QuadratureSpec()
    phi = np.atleast_1d(phi).astype(float)
    theta = np.atleast_1d(theta).astype(float)
    rows = []
    for a, b in zip(phi, theta):
        v = velocity_full(field, from_angles(a, b), q)
        rows.append((a, b, v.u_phi, v.u_theta, v.residual))
    return rows
