"""Leading-term / remainder decomposition of the odd-odd velocity near x0 = (1, 0, 0),
approach speeds of point pairs, and the double-exponential majorant.

Normalisation: u_phi = sin(phi) (-L + B_phi) and u_theta = tan(theta) (x1 L + B_theta),
where L = (4/pi) int_Q y2 y3 / |y - x0|^4 w dsigma over Q(3phi/2, 3theta/2) (or the
polar region Qtilde(r)).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .biot_savart import QuadratureSpec, quarter_brackets, velocity_full_many
from .fields import EE1, AnalyticField, ChartGrid, VorticityField, g_profile
from .quadrature import GradedRule, graded_breaks, integrate_tensor, panel_nodes

KINDS = ("Q", "Qtilde", "Q2", "Q3", "Q3p", "Q4", "Qt2", "Qt3", "Qt3p", "Qt4",
         "D_s", "Omega_eps", "scaled")
HALF_PI = np.pi / 2


# ---------------------------------------------------------------- kernels near x0

def x0_kernel(P, T):
    """y2 y3 / |y - x0|^4 times the area factor cos(theta')."""
    c = np.cos(T)
    d2 = 4 * np.sin(0.5 * T) ** 2 + 4 * c * np.sin(0.5 * P) ** 2
    return c * c * np.sin(P) * np.sin(T) / (d2 * d2)


def x0_kernel_polar(r, psi):
    """x0_kernel * r^2 at (phi', theta') = r (cos psi, sin psi); finite as r -> 0."""
    P, T = r * np.cos(psi), r * np.sin(psi)
    sc = lambda x: np.sinc(x / np.pi)  # noqa: E731
    c = np.cos(T)
    q = sc(0.5 * T) ** 2 * np.sin(psi) ** 2 + c * sc(0.5 * P) ** 2 * np.cos(psi) ** 2
    return c * c * sc(P) * sc(T) * np.cos(psi) * np.sin(psi) / (q * q)


def flat_kernel_polar(psi):
    """phi' theta' / (phi'^2 + theta'^2)^2 times r^2."""
    return np.cos(psi) * np.sin(psi)


# ---------------------------------------------------------------- regions

def psi_max(log_r):
    """Opening angle of Omega_0 at radius r: the graph theta' = g(phi') meets the ray.

    Solves tan(psi) = ln(e^e - 1 - ln r - ln cos psi) by fixed point in t = tan(psi)
    (the map is a contraction); valid for r < 1/e.
    """
    lr = np.asarray(log_r, float)
    a = EE1 - lr
    t = np.log(a)
    for _ in range(60):
        t_new = np.log(a + 0.5 * np.log1p(t * t))
        if np.all(np.abs(t_new - t) <= 1e-15 * t_new):
            t = t_new
            break
        t = t_new
    return np.arctan(t)


@dataclass(frozen=True)
class RegionSpec:
    """Chart subsets of the quarter [0, pi] x [0, pi/2].

    Q: params (k1, k2). Qtilde: (r,). Q2..Qt4: (phi, theta) of the target point.
    D_s: (s,). Omega_eps: (eps,). scale multiplies the region by alpha;
    RegionSpec('scaled', (alpha, kind, *params)) is accepted as a shorthand.
    Membership predicates are exact comparisons; the Q2/Q3 and Qt2/Qt3 edges
    are assigned to one side so that the pieces partition the quarter.
    """
    kind: str
    params: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "scaled":
            alpha, kind, *rest = self.params
            object.__setattr__(self, "kind", kind)
            object.__setattr__(self, "params", tuple(rest))
            object.__setattr__(self, "scale", float(alpha) * self.scale)
        if self.kind not in KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must be in (0, 1]")

    def contains(self, phi, theta):
        a = self.scale
        P = np.asarray(phi, float) / a
        T = np.asarray(theta, float) / a
        quarter = (P > 0) & (P < np.pi) & (T > 0) & (T < HALF_PI)
        if self.kind in ("D_s", "Omega_eps"):
            return quarter & _curved_member(self.kind, self.params[0], P, T)
        if self.kind == "Qtilde":
            return quarter & (P * P + T * T > self.params[0] ** 2)
        (pl, ph), (tl, th) = self.box()
        return quarter & (P > pl) & (P <= ph) & (T > tl) & (T <= th)

    def box(self):
        """Half-open box (lo, hi] in each coordinate for the rectangular kinds."""
        k = self.kind
        if k == "Q":
            k1, k2 = self.params
            return (k1, np.pi), (k2, HALF_PI)
        phi, theta = self.params
        a, b = 1.5 * phi, 1.5 * theta
        if k == "Q2":
            return (0.0, a), (0.0, HALF_PI)
        if k == "Q3":
            return (a, np.pi), (0.0, b)
        if k == "Q4":   # only nonempty when phi < theta
            return (a, max(a, b)), (0.0, b)
        if k == "Q3p":
            return (max(a, b), np.pi), (0.0, b)
        if k == "Qt2":
            return (0.0, np.pi), (0.0, b)
        if k == "Qt3":
            return (0.0, a), (b, HALF_PI)
        if k == "Qt4":  # only nonempty when theta < phi
            return (0.0, a), (b, max(a, b))
        if k == "Qt3p":
            return (0.0, a), (max(a, b), HALF_PI)
        raise ValueError(f"{k} is not rectangular")


def _curved_member(kind, par, P, T):
    with np.errstate(divide="ignore", invalid="ignore"):
        under = T < g_profile(np.clip(P, 1e-300, None))
    base = (P < np.exp(-1)) & (T < 1) & under
    if kind == "Omega_eps":
        return base & (P > par)
    s = par
    rs2 = s * s + g_profile(s) ** 2
    r2 = P * P + T * T
    return base & (r2 > rs2) & (r2 < np.exp(-2))


def scaled(region: RegionSpec, alpha) -> RegionSpec:
    return RegionSpec(region.kind, region.params, region.scale * alpha)


def region_integral(region: RegionSpec, f, rule: GradedRule = GradedRule(), centers=()):
    """int over the region of f(phi', theta') dphi' dtheta' (f includes any cos factor).

    For D_s the integrand is passed in polar form: f(r, psi) must already
    include the factor r^2 (see x0_kernel_polar) and the integral is taken
    in (ln r, psi).
    """
    a = region.scale
    k = region.kind
    g = (lambda P, T: a * a * f(a * P, a * T))  # noqa: E731
    if k == "D_s":
        # polar integrands carry r^2, so scaling only moves the evaluation radius
        return _polar_ds(region.params[0], lambda r, psi: f(a * r, psi), rule)
    if k == "Omega_eps":
        return _omega_eps(region.params[0], g, rule)
    if k == "Qtilde":
        return _polar_outside(region.params[0], g, rule)
    (pl, ph), (tl, th) = region.box()
    if ph <= pl or th <= tl:
        return 0.0
    cp = [pl, ph, 0.0, *[c for c in centers if c is not None]]
    ct = [tl, th, 0.0]
    sc = [v for v in (pl, ph, tl, th) if v > 0]
    floor = rule.depth * min(sc + [1.0])
    bp = graded_breaks(pl, ph, cp, rule, floor=floor)
    bt = graded_breaks(tl, th, ct, rule, floor=floor)
    return float(integrate_tensor(g, bp, bt, rule.order))


def _polar_outside(r0, f, rule):
    """Quarter-chart rectangle minus the disk of radius r0, in polar coordinates."""
    split = np.arctan2(HALF_PI, np.pi)
    total = 0.0
    for lo, hi in ((0.0, split), (split, HALF_PI)):
        bpsi = graded_breaks(lo, hi, [lo, hi], rule)
        psi, wpsi = panel_nodes(bpsi, rule.order)
        R = np.minimum(np.pi / np.cos(psi), HALF_PI / np.maximum(np.sin(psi), 1e-300))
        for p, wp, Rp in zip(psi, wpsi, R):
            if Rp <= r0:
                continue
            # integrate in ln r: dphi dtheta = r^2 d(ln r) dpsi
            u, wu = panel_nodes(graded_breaks(np.log(r0), np.log(Rp),
                                              [np.log(r0)], rule), rule.order)
            r = np.exp(u)
            total += wp * np.sum(wu * r * r * f(r * np.cos(p), r * np.sin(p)))
    return total


def _omega_eps(eps, f, rule):
    """Omega_eps = {eps < phi' < 1/e, 0 < theta' < g(phi')} via theta' = g(phi') tau."""
    bp = graded_breaks(eps, np.exp(-1), [eps], rule)
    bt = graded_breaks(0.0, 1.0, [0.0, 1.0], rule)

    def h(P, tau):
        gp = np.minimum(g_profile(P), 1.0)
        return f(P, gp * tau) * gp

    return float(integrate_tensor(h, bp, bt, rule.order))


def _polar_ds(s, f, rule):
    """D_s in (ln r, psi): r from sqrt(s^2 + g(s)^2) to 1/e, psi in (0, psi_max(r))."""
    ls = np.log(s)
    lr0 = ls + 0.5 * np.log1p(np.log(EE1 + abs(ls)) ** 2)
    bl = graded_breaks(lr0, -1.0, [lr0, -1.0], rule)
    lr, wl = panel_nodes(bl, rule.order)
    tau, wt = panel_nodes(graded_breaks(0.0, 1.0, [0.0, 1.0], rule), rule.order)
    pm = psi_max(lr)
    total = 0.0
    for a in range(0, len(lr), 64):
        L = lr[a:a + 64, None]
        PM = pm[a:a + 64, None]
        psi = PM * tau[None, :]
        vals = f(np.exp(L), psi) * PM
        total += float(np.sum(wl[a:a + 64, None] * wt[None, :] * vals))
    return total


# ---------------------------------------------------------------- leading term

def _check_point(phi, theta):
    if phi == 0 and theta == 0:
        raise ValueError("the decomposition is not defined at (0, 0)")
    if not (0 <= phi <= 1 and 0 <= theta <= 1):
        raise ValueError("(phi, theta) must lie in [0, 1]^2")


def _field_fn(field):
    if isinstance(field, AnalyticField):
        return field.func
    if isinstance(field, VorticityField):
        from .fields import sample_values
        return lambda P, T: sample_values(field.grid, P, T, field.interp)
    if callable(field):
        return field
    raise TypeError(f"unsupported field type {type(field).__name__}")


def leading_term(field, phi, theta, which="Q", rule: Optional[GradedRule] = None):
    """L = (4/pi) int y2 y3 / |y - x0|^4 w dsigma over Q(3phi/2, 3theta/2) or Qtilde(r)."""
    _check_point(phi, theta)
    rule = rule or GradedRule()
    if isinstance(field, VorticityField):
        return _leading_grid(field, phi, theta, which)
    w = _field_fn(field)
    if which == "Q":
        region = RegionSpec("Q", (1.5 * phi, 1.5 * theta))
    elif which == "Qtilde":
        region = RegionSpec("Qtilde", (np.hypot(phi, theta),))
    else:
        raise ValueError(f"unknown leading region {which!r}")
    return 4 / np.pi * region_integral(region, lambda P, T: x0_kernel(P, T) * w(P, T), rule)


def _leading_grid(field, phi, theta, which):
    ch: ChartGrid = field.chart
    P, T = ch.mesh()
    if which == "Q":
        m = RegionSpec("Q", (1.5 * phi, 1.5 * theta)).contains(P, T)
    else:
        m = RegionSpec("Qtilde", (np.hypot(phi, theta),)).contains(P, T)
    vals = x0_kernel(P[m], T[m]) / np.cos(T[m]) * (ch.weights * field.grid)[m]
    return 4 / np.pi * float(np.sum(vals))


def ds_integral(s, method="sphere", alpha=1.0, field=None, rule: Optional[GradedRule] = None):
    """(4/pi) int over alpha D_s of the x0 kernel (sphere) or its flat model (flat)."""
    rule = rule or GradedRule()
    w = _field_fn(field) if field is not None else None
    if method == "sphere":
        def f(r, psi):
            v = x0_kernel_polar(r, psi)
            return v if w is None else v * w(r * np.cos(psi), r * np.sin(psi))
    elif method == "flat":
        def f(r, psi):
            v = flat_kernel_polar(psi)
            return v if w is None else v * w(r * np.cos(psi), r * np.sin(psi))
    elif method == "difference":
        def f(r, psi):
            return x0_kernel_polar(r, psi) - flat_kernel_polar(psi)
    else:
        raise ValueError(f"unknown method {method!r}")
    return 4 / np.pi * region_integral(RegionSpec("D_s", (s,), alpha), f, rule)


# ---------------------------------------------------------------- remainders

@dataclass(frozen=True)
class EstimateReport:
    phi: float
    theta: float
    component: str
    leading: float
    remainder: float
    bound: float
    ratio: float
    passed: bool
    C1: float = 1.0


def _grad_box(field, a, b):
    fn = getattr(field, "grad_sup_box", None)
    if fn is None:
        return np.inf
    return float(fn(a, b))


def log_factor(phi, theta, sup, grad, component):
    """1 + min{ln(1 + theta/phi), (M / ||w||) theta} (phi component; mirrored for theta)."""
    a, b = (phi, theta) if component == "phi" else (theta, phi)
    lg = np.inf if a == 0 else np.log1p(b / a)
    mt = np.inf if not np.isfinite(grad) else grad / sup * b
    if grad == 0 or b == 0:
        mt = 0.0
    return 1.0 + min(lg, mt)


def remainder_B(field, phi, theta, component="phi", q: Optional[QuadratureSpec] = None,
                which="Q", C1=1.0, leading=None, brackets=None):
    """Remainder of the decomposition at (phi, theta); report with the C1 bound."""
    _check_point(phi, theta)
    q = q or QuadratureSpec(rule="gauss_composite")
    sup = getattr(field, "sup_norm", None)
    if sup is None:
        sup = float(np.max(np.abs(field.grid)))
    if not sup > 0:
        raise ValueError("remainder bound needs ||w||_inf > 0")
    if component not in ("phi", "theta"):
        raise ValueError(f"unknown component {component!r}")
    if leading is None:
        leading = leading_term(field, phi, theta, which, q.graded)
    if brackets is None:
        brackets = quarter_brackets(field, phi, theta, q)
    S_phi, S_th = brackets
    if component == "phi":
        lead = -leading
        nv = S_phi / np.pi
        box = 1.5 * theta
    else:
        lead = np.cos(theta) * np.cos(phi) * leading
        nv = 2 * S_th / np.pi
        box = 1.5 * phi
    B = nv - lead
    grad = _grad_box(field, box, box) if isinstance(field, AnalyticField) else np.inf
    fac = log_factor(phi, theta, sup, grad, component)
    bound = C1 * sup * fac
    return EstimateReport(phi, theta, component, lead, B, bound, abs(B) / (sup * fac),
                          bool(abs(B) <= bound), C1)


def lemma_sweep(field, ks=range(1, 21), q: Optional[QuadratureSpec] = None, which="Q", C1=1.0):
    """Reports for both components at (phi, theta) in {2^-k}^2."""
    q = q or QuadratureSpec(rule="gauss_composite")
    out = []
    for i in ks:
        for j in ks:
            phi, theta = 2.0 ** -i, 2.0 ** -j
            lead = leading_term(field, phi, theta, which, q.graded)
            br = quarter_brackets(field, phi, theta, q)
            for comp in ("phi", "theta"):
                out.append(remainder_B(field, phi, theta, comp, q, which, C1, lead, br))
    return out


def fit_C1(reports, pad=1.1):
    """C1 = max(1, pad * max ratio)."""
    return max(1.0, pad * max(r.ratio for r in reports))


def rebound(reports, C1):
    """Re-evaluate bounds and pass flags with a fitted constant."""
    out = []
    for r in reports:
        b = r.bound * C1 / r.C1
        out.append(EstimateReport(r.phi, r.theta, r.component, r.leading, r.remainder,
                                  b, r.ratio, bool(abs(r.remainder) <= b), C1))
    return out


def write_report_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phi", "theta", "leading", "remainder", "bound", "pass"])
        for r in reports:
            w.writerow([repr(float(r.phi)), repr(float(r.theta)), repr(float(r.leading)),
                        repr(float(r.remainder)), repr(float(r.bound)),
                        "true" if r.passed else "false"])


# ---------------------------------------------------------------- approach speed

def approach_speed(field, eps, q: Optional[QuadratureSpec] = None):
    """u_phi(-eps, 0) - u_phi(eps, 0): closing speed of the pair (cos eps, -+sin eps, 0)."""
    if not 0 < eps <= 1:
        raise ValueError("eps must be in (0, 1]")
    if isinstance(field, VorticityField):
        q = q or QuadratureSpec()
        _, up, _ = velocity_full_many(field, np.array([-eps, eps]), np.zeros(2), q)
        return float(up[0] - up[1])
    q = q or QuadratureSpec(rule="gauss_composite")
    rule = q.graded
    w = _field_fn(field)
    bphi = tuple(getattr(field, "breaks_phi", ()))
    btheta = tuple(getattr(field, "breaks_theta", ()))
    floor = rule.depth * eps
    bp = graded_breaks(-np.pi, np.pi, [-eps, 0.0, eps, *bphi], rule, floor=floor)
    bt = graded_breaks(-HALF_PI, HALF_PI, [0.0, -HALF_PI, HALF_PI, *btheta], rule, floor=floor)

    def f(P, T):
        c = np.cos(T)
        h = 4 * np.sin(0.5 * T) ** 2
        d1 = h + 4 * c * np.sin(0.5 * (P + eps)) ** 2
        d2 = h + 4 * c * np.sin(0.5 * (P - eps)) ** 2
        return c * np.sin(P) * np.sin(T) * w(P, T) * c / (d1 * d2)

    return 2 * np.sin(eps) / np.pi * float(integrate_tensor(f, bp, bt, rule.order))


def speed_constant_sign(speeds, eps):
    """C1' implied by one (eps, speed) sample: pi speed / (4 eps) - ln(1/eps)."""
    return np.pi * np.asarray(speeds) / (4 * np.asarray(eps)) - np.log(1 / np.asarray(eps))


def speed_constant_general(speeds, eps, grad):
    """C_I implied by one sample: pi speed / (4 eps) - ln min{1/eps, max(grad, 1)}."""
    eps = np.asarray(eps, float)
    m = np.minimum(1 / eps, max(grad, 1.0))
    return np.pi * np.asarray(speeds) / (4 * eps) - np.log(m)


# ---------------------------------------------------------------- majorant

def log_log_upper_envelope(grad0, t, C_I, I=4 * np.pi):
    """ln ln of the majorant (finite for all t)."""
    if grad0 < 0 or np.any(np.asarray(t) < 0):
        raise ValueError("need grad0 >= 0 and t >= 0")
    if not 0 < I <= 4 * np.pi:
        raise ValueError("I must be in (0, 4 pi]")
    m = max(np.log(grad0), 1.0) if grad0 > 0 else 1.0
    a = 2 * np.asarray(t, float) / np.pi
    return a + C_I * (-np.expm1(-a)) + np.log(m)


def upper_envelope(grad0, I, t, C_I):
    """exp(exp(2t/pi + C_I (1 - e^{-2t/pi})) max{ln grad0, 1}); inf once it overflows."""
    ll = log_log_upper_envelope(grad0, t, C_I, I)
    with np.errstate(over="ignore"):
        return np.exp(np.exp(ll))
