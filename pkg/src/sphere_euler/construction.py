"""Profile functions, the trapped-domain constants and the (alpha, eps) envelope system.

Large |ln s| is handled through mu = ln(-lambda), lambda = ln r: the flat-chart
integral over D_s is F = (e^{mu_s} - 1)/2 - D(mu_s) with
D(mu) = int_0^mu cos^2(psi_max) e^m / 2 dm, tabulated once as D e^{-mu}.
Everything downstream works with k = ln|ln eps| and ln(alpha), so nothing
underflows even when eps and alpha are far below the double range.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dfield
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import estimates
from .biot_savart import QuadratureSpec, quarter_brackets
from .fields import EE1
from .quadrature import GradedRule, gauss_legendre

COS1 = math.cos(1.0)
COS_E = math.cos(math.exp(-1))
S_MAX = math.exp(-4)
LOG_S_MIN = math.log(1e-300)
MU_MAX = 700.0


# ---------------------------------------------------------------- g, g', f

def _check_s(s, hi=math.exp(-1)):
    s = np.asarray(s, float)
    if np.any(s <= 0) or np.any(s > hi * (1 + 1e-15)):
        raise ValueError(f"s must lie in (0, {hi:.6g}]")
    return s


def g_eval(s):
    s = _check_s(s)
    return s * np.log(EE1 + np.abs(np.log(s)))


def gprime_eval(s):
    s = _check_s(s)
    a = EE1 - np.log(s)
    return np.log(a) - 1 / a


def f_eval(s):
    s = _check_s(s)
    return 2 + np.log(np.log(EE1 + np.abs(np.log(s))))


def f_of_L(L):
    """f in terms of L = |ln s|."""
    return 2 + np.log(np.log(EE1 + L))


# ---------------------------------------------------------------- flat-chart h

def _tan_psi_mu(mu):
    """tan(psi_max) at lambda = -e^mu (fixed point, contraction)."""
    mu = np.asarray(mu, float)
    # ln(E + e^mu + c) = mu + log1p((E + c) e^{-mu})
    em = np.exp(-mu)
    t = mu + np.log1p(EE1 * em)
    for _ in range(60):
        t_new = mu + np.log1p((EE1 + 0.5 * np.log1p(t * t)) * em)
        if np.all(np.abs(t_new - t) <= 1e-15 * np.abs(t_new)):
            return t_new
        t = t_new
    return t


@lru_cache(maxsize=1)
def _deficit_table(n_panels=1400, order=12):
    """Spline of D(mu) e^{-mu} on [0, MU_MAX]."""
    x, w = gauss_legendre(order)
    edges = np.linspace(0.0, MU_MAX, n_panels + 1)
    vals = np.zeros(n_panels + 1)
    # D(mu_{i+1}) e^{-mu_{i+1}} = D(mu_i) e^{-mu_i} e^{-h} + int_panel cos^2/2 e^{m - mu_{i+1}}
    for i in range(n_panels):
        a, b = edges[i], edges[i + 1]
        m = a + 0.5 * (b - a) * (x + 1)
        t = _tan_psi_mu(m)
        inc = np.sum(0.5 * (b - a) * w * 0.5 / (1 + t * t) * np.exp(m - b))
        vals[i + 1] = vals[i] * math.exp(-(b - a)) + inc
    return CubicSpline(edges, vals)


def log_r_start(L):
    """ln sqrt(s^2 + g(s)^2) for L = |ln s|."""
    return -L + 0.5 * np.log1p(np.log(EE1 + L) ** 2)


def flat_integral_L(L):
    """F(L) = int over D_s of phi' theta' / (phi'^2 + theta'^2)^2 (s = e^{-L}), any L >= 4."""
    L = np.asarray(L, float)
    lam = -log_r_start(L)            # = -lambda_s > 1
    mu = np.log(lam)
    if np.any(mu > MU_MAX):
        raise ValueError("|ln s| beyond the tabulated range")
    dhat = _deficit_table()(mu)
    return lam * (0.5 * (1 - 1 / lam) - dhat)


def h_of_L(L):
    """Flat-chart h as a function of L = |ln s|: (4/pi) F / L."""
    L = np.asarray(L, float)
    return 4 / np.pi * flat_integral_L(L) / L


def h_eval(s, method="flat_chart", rule: Optional[GradedRule] = None):
    """h(s) = (4/pi) int_{D_s} kernel / |ln s| for s in (0, e^-4]."""
    s = _check_s(s, S_MAX)
    L = np.abs(np.log(s))
    if method == "flat_chart":
        return h_of_L(L)
    if method == "sphere_quadrature":
        sv = np.atleast_1d(s)
        out = np.array([estimates.ds_integral(float(x), "sphere", rule=rule) for x in sv])
        out = out / np.abs(np.log(sv))
        return out.reshape(np.shape(s)) if np.ndim(s) else float(out[0])
    raise ValueError(f"unknown method {method!r}")


def h_eval_direct(s, rule: Optional[GradedRule] = None):
    """Flat h by direct polar quadrature (independent of the deficit table)."""
    return estimates.ds_integral(float(s), "flat", rule=rule) / abs(math.log(s))


# ---------------------------------------------------------------- constants

@dataclass(frozen=True)
class ConstructionConstants:
    C1: float
    Cr: float
    s0: float
    Cprime: float
    rho0: float
    C2: float
    C3: float
    Cpp: float
    CI: float
    C_probe: float = 0.0

    @property
    def K(self):
        """3C'/(rho0 cos 1) + C3: the linear decay rate of alpha."""
        return 3 * self.Cprime / (self.rho0 * COS1) + self.C3

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def s0_condition(L, C1, Cr):
    """h(s)|ln s| - C1 f(s)/(cos1 cos e^-1) - Cr at L = |ln s|."""
    return 4 / np.pi * flat_integral_L(L) - C1 / (COS1 * COS_E) * f_of_L(L) - Cr


def find_s0(C1, Cr, n=4000):
    """Largest grid s <= e^-4 with the condition holding on the whole grid below it."""
    Ls = np.linspace(4.0, -LOG_S_MIN, n)         # ascending L = descending s
    ok = s0_condition(Ls, C1, Cr) >= 0
    if not ok[-1]:
        raise ValueError("no s0 satisfies the condition down to 1e-300")
    bad = np.nonzero(~ok)[0]
    i = 0 if bad.size == 0 else bad[-1] + 1
    return math.exp(-Ls[i])


def cprime_fn(s, C1):
    g = g_eval(s)
    return g * C1 / (s * COS1) * (1 + np.log((s + g) / s))


def rho_fn(s):
    return g_eval(s) / gprime_eval(s) - s


def rho0_closed(s0):
    a = EE1 - math.log(s0)
    return s0 / (a * math.log(a) - 1)


def probe_speed_bound(alpha, C_I):
    """|u_phi(alpha/e, s)| <= 2(|ln(2 alpha/e)| + C_I) alpha / (pi e)."""
    return 2 * (abs(math.log(2 * alpha / math.e)) + C_I) * alpha / (math.pi * math.e)


def probe_constant(C_I, eps_grid=(1e-2, 1e-4, 1e-8), n_alpha=200):
    """Bound on the left-edge mismatch between the alpha equation and the edge speed."""
    best = 0.0
    for a in np.linspace(1.0 / n_alpha, 1.0, n_alpha):
        V = probe_speed_bound(a, C_I)
        for eps in eps_grid:
            b0 = math.sin(a * math.sin(eps)) / (a * eps)
            b1 = b0 / math.cos(a * float(g_eval(eps)))
            m = max(max(abs(1 / math.cos(a) - b), abs(1 - b)) for b in (b0, b1))
            best = max(best, V * m / math.sin(a / math.e))
    return best


def derive_constants(C1_fit, Cr_fit, C_I=1.0, C2_measured=0.0, n_grid=4000):
    """s0, C', rho0 and the chain C2 -> C3 -> C'' from the fitted constants."""
    C1, Cr = float(C1_fit), float(Cr_fit)
    s0 = find_s0(C1, Cr, n_grid)
    Cp = float(cprime_fn(s0, C1))
    rho0 = rho0_closed(s0)
    C2 = 1.1 * max(3 * C1 + Cr, C2_measured)
    C3 = 2 * C2 / COS1
    Cprobe = probe_constant(C_I)
    Cpp = (2 * C1 + C2) / COS1 + 3 * Cp / (rho0 * COS1) + C3 + Cprobe
    return ConstructionConstants(C1, Cr, s0, Cp, float(rho0), float(C2), float(C3), float(Cpp),
                                 float(C_I), float(Cprobe))


def fit_Cr(n=60, pad=1.1, rule: Optional[GradedRule] = None):
    """pad * max over a log grid of s of |sphere - flat| D_s integrals."""
    Ls = np.linspace(4.0, -LOG_S_MIN, n)
    diffs = [abs(estimates.ds_integral(math.exp(-L), "difference", rule=rule)) for L in Ls]
    return pad * max(diffs), Ls, np.array(diffs)


# ---------------------------------------------------------------- envelope ODE

@dataclass(frozen=True)
class EnvelopeState:
    """(t, alpha, eps) carried as (t, ln alpha, k = ln|ln eps|)."""
    t: float
    log_alpha: float
    k: float

    @property
    def alpha(self):
        return math.exp(self.log_alpha)

    @property
    def eps(self):
        return math.exp(-math.exp(self.k)) if self.k < 700 else 0.0

    @property
    def log_eps(self):
        return -math.exp(self.k)


def k_rate(k, C: ConstructionConstants):
    """k' = [(sin eps/eps) h|ln eps| - (C1/cos1) ln ln(e^e - 1 + |ln eps|) - (C''+1)] / |ln eps|."""
    L = np.exp(k)
    eps = np.exp(-L)
    sinc = np.sinc(eps / np.pi)
    A = sinc * 4 / np.pi * flat_integral_L(L) - C.C1 / COS1 * np.log(np.log(EE1 + L)) - (C.Cpp + 1)
    return A / L


def bound_probe(C_I):
    """Probe returning -V(alpha)/(cos(alpha) sin(alpha/e)) computed in log form."""
    def probe(log_alpha, t):
        a = math.exp(log_alpha)
        x = a / math.e
        ratio = 1.0 if x < 1e-8 else x / math.sin(x)
        lnterm = abs(log_alpha + math.log(2) - 1)
        return -2 * (lnterm + C_I) / (math.pi * math.cos(a)) * ratio
    return probe


def zero_probe(log_alpha, t):
    return 0.0


def envelope_rhs(y, t, C: ConstructionConstants, probe: Callable):
    la, k = y
    return np.array([-C.K + probe(la, t), float(k_rate(k, C))])


def envelope_step(state: EnvelopeState, dt, C: ConstructionConstants, probe: Callable):
    """One RK4 step of (ln alpha, k). probe(log_alpha, t) returns the normalised
    left-edge speed inf_s u_phi(alpha/e, s) / (cos s sin(alpha/e))."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k_min = math.log(-math.log(C.s0)) - 1e-12
    if state.k < k_min:
        raise ValueError("eps outside (0, s0]")
    y = np.array([state.log_alpha, state.k])
    t = state.t
    k1 = envelope_rhs(y, t, C, probe)
    k2 = envelope_rhs(y + 0.5 * dt * k1, t + 0.5 * dt, C, probe)
    k3 = envelope_rhs(y + 0.5 * dt * k2, t + 0.5 * dt, C, probe)
    k4 = envelope_rhs(y + dt * k3, t + dt, C, probe)
    y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("envelope state is not finite")
    if y[1] < k_min:
        raise ValueError("eps left (0, s0]")
    return EnvelopeState(t + dt, float(y[0]), float(y[1]))


def initial_k(C: ConstructionConstants, dk=0.01, k_max=None):
    """First point of the k-grid (step dk from k(s0)) where k' > 0, i.e. eps'(0) < 0."""
    k0 = math.log(-math.log(C.s0))
    k_max = k_max or math.log(math.exp(MU_MAX) / 2)
    n = int((k_max - k0) / dk)
    ks = k0 + dk * np.arange(n)
    r = k_rate(ks, C)
    idx = np.nonzero(r > 0)[0]
    if idx.size == 0:
        raise ValueError("no eps(0) with eps'(0) < 0 in range")
    return float(ks[idx[0]])


@dataclass
class EnvelopeRun:
    states: list
    kprime: list
    constants: ConstructionConstants
    dt: float

    @property
    def t(self):
        return np.array([s.t for s in self.states])

    @property
    def k(self):
        return np.array([s.k for s in self.states])

    def final_slope(self):
        """Least-squares slope of k over the final half of the run."""
        t, k = self.t, self.k
        m = t >= 0.5 * t[-1]
        return float(np.polyfit(t[m], k[m], 1)[0])


def run_envelope(C: ConstructionConstants, T=500.0, dt=1e-2, probe: Optional[Callable] = None,
                 k0=None, record_every=1):
    probe = probe or bound_probe(C.CI)
    k0 = initial_k(C) if k0 is None else k0
    st = EnvelopeState(0.0, 0.0, k0)
    states, kp = [st], [float(k_rate(k0, C))]
    n = int(round(T / dt))
    for i in range(1, n + 1):
        st = envelope_step(st, dt, C, probe)
        if i % record_every == 0 or i == n:
            states.append(st)
            kp.append(float(k_rate(st.k, C)))
    return EnvelopeRun(states, kp, C, dt)


def step_halving_check(C: ConstructionConstants, T=500.0, dt=1e-2):
    """|k(T) at dt - k(T) at dt/2|."""
    a = run_envelope(C, T, dt, record_every=10 ** 9).k[-1]
    b = run_envelope(C, T, dt / 2, record_every=10 ** 9).k[-1]
    return abs(a - b)


def fmt_from_log(ln_x):
    """Decimal string of exp(ln_x) that stays exact below the double range."""
    if ln_x > -700:
        return repr(math.exp(ln_x))
    l10 = ln_x / math.log(10)
    e = math.floor(l10)
    m = 10 ** (l10 - e)
    return f"{m:.15f}e{e:d}"


def write_envelope_csv(run: EnvelopeRun, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "alpha", "eps", "k", "kprime"])
        for st, kp in zip(run.states, run.kprime):
            w.writerow([repr(round(st.t, 10)), fmt_from_log(st.log_alpha),
                        fmt_from_log(st.log_eps), repr(st.k), repr(kp)])


# ---------------------------------------------------------------- boundary flux checks

@dataclass
class FluxReport:
    v1_margin: float
    v2_margin: float
    v3_margin: float
    details: dict = dfield(default_factory=dict)

    @property
    def v1_pass(self):
        return self.v1_margin >= -1e-6

    @property
    def v2_pass(self):
        return self.v2_margin > 0

    @property
    def v3_pass(self):
        return self.v3_margin >= 0

    @property
    def passed(self):
        return self.v1_pass and self.v2_pass and self.v3_pass


def _uphi_utheta(field, phi, theta, q):
    S_phi, S_th = quarter_brackets(field, phi, theta, q)
    return math.sin(phi) * S_phi / math.pi, 2 * math.tan(theta) * S_th / math.pi


def boundary_flux_check(field, eps, alpha, C: ConstructionConstants,
                        q: Optional[QuadratureSpec] = None, n=8, s_hi=None):
    """Sign conditions on the three boundary pieces of alpha Omega_eps.

    v1: -u_phi >= 0 and u_theta >= 0 at (alpha s, alpha g(s)), s in [eps, s0];
    v2: C' alpha s - u_phi > 0 and u_theta + C' alpha s > 0 for s in [s0, 1/e);
    v3: right-hand side minus left-hand side of the left-edge inequality.
    Margins are the worst values over the samples.
    """
    q = q or QuadratureSpec(rule="gauss_composite")
    s0 = C.s0 if s_hi is None else s_hi
    if not 0 < eps <= s0:
        raise ValueError("need 0 < eps <= s0")
    det = {"v1": [], "v2": [], "v3": {}}
    ss = np.geomspace(eps, s0, n) if eps < s0 else np.array([eps])
    v1 = np.inf
    for s in ss:
        up, ut = _uphi_utheta(field, alpha * s, alpha * float(g_eval(s)), q)
        m = min(-up, ut)
        det["v1"].append((float(s), up, ut))
        v1 = min(v1, m)
    v2 = np.inf
    for s in np.geomspace(C.s0, math.exp(-1) * (1 - 1e-9), n):
        up, ut = _uphi_utheta(field, alpha * s, alpha * float(g_eval(s)), q)
        m = min(C.Cprime * alpha * s - up, ut + C.Cprime * alpha * s)
        det["v2"].append((float(s), up, ut))
        v2 = min(v2, m)
    ge = float(g_eval(eps))
    lhs = -np.inf
    for s in np.linspace(0, alpha * ge, n)[1:]:
        up, _ = _uphi_utheta(field, alpha * eps, s, q)
        lhs = max(lhs, up / math.sin(alpha * eps))
    inf_r = np.inf
    for s in np.linspace(0, alpha, n)[1:]:
        up, _ = _uphi_utheta(field, alpha / math.e, s, q)
        inf_r = min(inf_r, up)
    L = abs(math.log(eps))
    rhs = (-float(h_of_L(L)) * L + C.C1 * float(f_of_L(L)) + C.C2
           + inf_r / math.sin(alpha / math.e))
    det["v3"] = {"lhs": lhs, "rhs": rhs}
    return FluxReport(float(v1), float(v2), float(rhs - lhs), det)
