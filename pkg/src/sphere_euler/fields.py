"""Vorticity fields on the (phi, theta) chart: grids, sampling, symmetry, norms, initial data."""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .kernels import smoothstep

SYMMETRIES = ("none", "odd_odd")
INTERPS = ("bilinear", "bicubic")
PAD = 3
EE1 = np.e ** np.e - 1.0


@dataclass(frozen=True)
class ChartGrid:
    """phi_i = -pi + i dphi (i < n_phi); theta_j = -pi/2 + (j + 1/2) dtheta (cell centred)."""
    n_phi: int
    n_theta: int

    def __post_init__(self):
        if self.n_phi < 4 or self.n_theta < 4:
            raise ValueError("grid needs n_phi, n_theta >= 4")
        if self.n_phi % 2:
            raise ValueError("n_phi must be even (pole reflection maps phi -> phi + pi)")

    @property
    def dphi(self):
        return 2 * np.pi / self.n_phi

    @property
    def dtheta(self):
        return np.pi / self.n_theta

    @property
    def phi(self):
        return -np.pi + self.dphi * np.arange(self.n_phi)

    @property
    def theta(self):
        return -np.pi / 2 + self.dtheta * (np.arange(self.n_theta) + 0.5)

    @property
    def row_weights(self):
        """Exact cell areas per row (independent of phi)."""
        return 2 * np.cos(self.theta) * np.sin(self.dtheta / 2) * self.dphi

    @property
    def weights(self):
        return np.repeat(self.row_weights[:, None], self.n_phi, axis=1)

    @property
    def diagonal(self):
        return float(np.hypot(self.dphi, self.dtheta))

    def mesh(self):
        """(PHI, THETA) arrays of shape (n_theta, n_phi)."""
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return ph, th

    def xyz(self):
        from .sphere_geom import unit_vectors
        ph, th = self.mesh()
        return unit_vectors(ph, th)


def mirror_phi_index(n_phi):
    """Index map i -> index of -phi_i."""
    return (-np.arange(n_phi)) % n_phi


def antisymmetrize(values):
    """Projection onto the odd-odd class: odd in phi and in theta (exact on nodes)."""
    v = np.asarray(values, dtype=float)
    ip = mirror_phi_index(v.shape[1])
    vp = v[:, ip]
    return 0.25 * (v - vp - v[::-1, :] + vp[::-1, :])


def symmetry_residual(values):
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(v - antisymmetrize(v)))) if v.size else 0.0


@dataclass(frozen=True)
class VorticityField:
    """Samples of the chart vorticity, array shape (n_theta, n_phi)."""
    grid: np.ndarray
    symmetry: str = "none"
    interp: str = "bicubic"
    time: float = 0.0

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        if g.ndim != 2:
            raise ValueError("grid must be a 2D array (n_theta, n_phi)")
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"unknown symmetry {self.symmetry!r}")
        if self.interp not in INTERPS:
            raise ValueError(f"unknown interp {self.interp!r}")
        ChartGrid(g.shape[1], g.shape[0])
        if self.symmetry == "odd_odd":
            if g.shape[0] % 2:
                raise ValueError("odd_odd needs even n_theta")
            g = antisymmetrize(g)
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    @property
    def n_phi(self):
        return self.grid.shape[1]

    @property
    def n_theta(self):
        return self.grid.shape[0]

    @property
    def chart(self) -> ChartGrid:
        return ChartGrid(self.n_phi, self.n_theta)

    def with_values(self, values, time=None):
        return VorticityField(values, self.symmetry, self.interp,
                              self.time if time is None else time)


def from_function(func, n_phi, n_theta, symmetry="none", interp="bicubic", time=0.0):
    ch = ChartGrid(n_phi, n_theta)
    ph, th = ch.mesh()
    return VorticityField(np.asarray(func(ph, th), dtype=float) * np.ones_like(ph),
                          symmetry, interp, time)


def zeros(n_phi, n_theta, symmetry="none"):
    return VorticityField(np.zeros((n_theta, n_phi)), symmetry)


# ---------------------------------------------------------------- sampling

def padded(values, pad=PAD):
    """Pad periodically in phi and by pole reflection in theta.

    Past a pole, (phi, pi/2 + s) is the point (phi + pi, pi/2 - s).
    """
    v = np.asarray(values, dtype=float)
    nt, npf = v.shape
    half = npf // 2
    top = np.roll(v[::-1][:pad], half, axis=1)        # rows n-1, n-2, ...
    bot = np.roll(v[:pad][::-1], half, axis=1)        # rows ..., 1, 0
    rows = np.concatenate([bot, v, top], axis=0)
    return np.concatenate([rows[:, -pad:], rows, rows[:, :pad]], axis=1)


def fractional_indices(n_phi, n_theta, phi, theta, pad=PAD):
    from .sphere_geom import wrap_phi
    dphi = 2 * np.pi / n_phi
    dth = np.pi / n_theta
    u = (np.asarray(wrap_phi(phi)) + np.pi) / dphi + pad
    v = (np.asarray(theta, dtype=float) + np.pi / 2) / dth - 0.5 + pad
    return np.atleast_1d(u).astype(float), np.atleast_1d(v).astype(float)


def sample_values(values, phi, theta, interp="bicubic", clip=True):
    values = np.asarray(values, dtype=float)
    nt, npf = values.shape
    shape = np.broadcast(np.asarray(phi), np.asarray(theta)).shape
    ph = np.broadcast_to(phi, shape).ravel()
    th = np.broadcast_to(theta, shape).ravel()
    u, v = fractional_indices(npf, nt, ph, th)
    out = kernels.sample_padded(padded(values), u, v, interp == "bicubic", clip)
    return out.reshape(shape) if shape else float(out[0])


def sample(field: VorticityField, phi, theta):
    """Interpolated value; reproduces nodes exactly (limited bicubic or bilinear)."""
    return sample_values(field.grid, phi, theta, field.interp)


# ---------------------------------------------------------------- derivatives, norms

def chart_gradient(values, region="sphere"):
    """Centred differences of the chart field; one-sided at region edges.

    region='sphere' differences across the poles through the reflected ghost
    rows; region='upper' restricts to theta > 0 with one-sided differences at
    the equator row and ghost rows at the north pole.
    """
    v = np.asarray(values, dtype=float)
    nt, npf = v.shape
    dphi = 2 * np.pi / npf
    dth = np.pi / nt
    dp = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * dphi)
    P = padded(v, 1)[:, 1:-1]
    dt = (P[2:] - P[:-2]) / (2 * dth)
    if region == "upper":
        h = nt // 2
        dp, dt = dp[h:], dt[h:].copy()
        u = v[h:]
        dt[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * dth)
    elif region != "sphere":
        raise ValueError(f"unknown region {region!r}")
    return dp, dt


def grad_sup_norm(field, region="sphere"):
    """max over nodes of |(d_phi w, d_theta w)| of the chart function."""
    values = field.grid if isinstance(field, VorticityField) else np.asarray(field)
    if min(values.shape) < 4:
        raise ValueError("grad_sup_norm needs n_phi, n_theta >= 4")
    dp, dt = chart_gradient(values, region)
    return float(np.max(np.hypot(dp, dt)))


def surface_gradient_cart(values):
    """Cartesian surface gradient (d_phi w / cos(theta)) e_phi + d_theta w e_theta at nodes."""
    from .sphere_geom import frames
    v = np.asarray(values, dtype=float)
    ch = ChartGrid(v.shape[1], v.shape[0])
    dp, dt = chart_gradient(v)
    ph, th = ch.mesh()
    e_phi, e_theta = frames(ph, th)
    return (dp / np.cos(th))[..., None] * e_phi + dt[..., None] * e_theta


def integral(field):
    values = field.grid if isinstance(field, VorticityField) else np.asarray(field)
    ch = ChartGrid(values.shape[1], values.shape[0])
    return float(np.sum(ch.row_weights[:, None] * values))


def lp_norm(field, p):
    values = field.grid if isinstance(field, VorticityField) else np.asarray(field)
    if p == np.inf:
        return float(np.max(np.abs(values))) if values.size else 0.0
    if p < 1:
        raise ValueError("p must be in [1, inf]")
    ch = ChartGrid(values.shape[1], values.shape[0])
    return float(np.sum(ch.row_weights[:, None] * np.abs(values) ** p) ** (1.0 / p))


def quadrant_integral_abs(field):
    """Integral of |w| over the open quadrant phi in (0, pi), theta in (0, pi/2)."""
    ch = field.chart
    ph, th = ch.mesh()
    m = (ph > 0) & (th > 0)
    return float(np.sum((ch.weights * np.abs(field.grid))[m]))


# ---------------------------------------------------------------- analytic fields

@dataclass(frozen=True)
class AnalyticField:
    """Closed-form vorticity used by the adaptive (graded Gauss) quadrature.

    breaks_* list chart lines where the function is not smooth, so panels can
    be aligned with them. grad_sup_box(a, b) returns the sup of the chart
    gradient on [0, a] x [0, b] (inf if the function jumps there).
    """
    func: Callable
    symmetry: str = "none"
    sup_norm: float = 1.0
    breaks_phi: Sequence[float] = ()
    breaks_theta: Sequence[float] = ()
    grad_sup_box: Optional[Callable] = None
    name: str = "custom"

    def __call__(self, phi, theta):
        return self.func(phi, theta)

    def sample_grid(self, n_phi, n_theta, interp="bicubic"):
        return from_function(self.func, n_phi, n_theta, self.symmetry, interp)


def quadrant_sign_field():
    """w~ = sgn(phi) sgn(theta): the maximal odd-odd field (|w| = 1 a.e.)."""
    return AnalyticField(lambda p, t: np.sign(p) * np.sign(t), "odd_odd", 1.0,
                         (0.0,), (0.0,), lambda a, b: np.inf, "quadrant_sign")


def tanh_field(L):
    """w = tanh(L y2) tanh(L y3): smooth odd-odd field with gradient scale L."""
    def f(p, t):
        ct = np.cos(t)
        return np.tanh(L * ct * np.sin(p)) * np.tanh(L * np.sin(t))

    def dphi(p, t):
        ct = np.cos(t)
        return L * ct * np.cos(p) / np.cosh(L * ct * np.sin(p)) ** 2 * np.tanh(L * np.sin(t))

    def dtheta(p, t):
        ct, st = np.cos(t), np.sin(t)
        a = -L * st * np.sin(p) / np.cosh(L * ct * np.sin(p)) ** 2 * np.tanh(L * st)
        b = np.tanh(L * ct * np.sin(p)) * L * ct / np.cosh(L * st) ** 2
        return a + b

    def box(a, b):
        pa = np.linspace(0, a, 257)
        tb = np.linspace(0, b, 257)
        P, T = np.meshgrid(pa, tb, indexing="ij")
        return float(np.max(np.hypot(dphi(P, T), dtheta(P, T))))

    sup = 1.0  # upper bound; actual sup is tanh(L/sqrt2)^2 < 1
    return AnalyticField(f, "odd_odd", sup, (), (), box, f"tanh_L{L:g}")


def harmonic_field():
    """w = 2 y2 y3, a degree-2 spherical harmonic (odd-odd, sup 1)."""
    def f(p, t):
        return 2 * np.cos(t) * np.sin(p) * np.sin(t)

    def box(a, b):
        pa = np.linspace(0, a, 257)
        tb = np.linspace(0, b, 257)
        P, T = np.meshgrid(pa, tb, indexing="ij")
        g1 = 2 * np.cos(T) * np.cos(P) * np.sin(T)
        g2 = 2 * np.sin(P) * np.cos(2 * T)
        return float(np.max(np.hypot(g1, g2)))

    return AnalyticField(f, "odd_odd", 1.0, (), (), box, "harmonic_y2y3")


# ---------------------------------------------------------------- initial data

def g_profile(s):
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = s * np.log(EE1 + np.abs(np.log(s)))
    return np.where(s > 0, out, 0.0)


def in_omega_eps(phi, theta, eps, alpha=1.0):
    """Exact membership in alpha * Omega_eps (chart coordinates)."""
    p = np.asarray(phi, dtype=float) / alpha
    t = np.asarray(theta, dtype=float) / alpha
    inside = (p > eps) & (p < np.exp(-1.0)) & (t > 0) & (t < 1)
    gp = g_profile(np.clip(p, 1e-300, None))
    return inside & (t < gp)


@dataclass(frozen=True)
class InitialDataSpec:
    epsilon0: float
    transition_width: float = 0.1
    kind: str = "sandwiched_bump"
    plateau_phi: float = 1.0
    plateau_theta: float = 1.0
    s0: Optional[float] = None
    patch: tuple = (0.3, 1.5, 0.2, 1.0)
    func: Optional[Callable] = dc_field(default=None, compare=False)


def _quadrant_profile(spec, ph, th):
    w = spec.transition_width
    a, b = spec.plateau_phi, spec.plateau_theta
    eps = spec.epsilon0
    return (smoothstep(ph / eps) * (1 - smoothstep((ph - a) / w))
            * (1 - smoothstep((th - b) / w)))


def _patch_profile(spec, ph, th):
    p0, p1, t0, t1 = spec.patch
    w = spec.transition_width
    return (smoothstep((ph - p0) / w) * (1 - smoothstep((ph - p1) / w))
            * smoothstep((th - t0) / w) * (1 - smoothstep((th - t1) / w)))


def build_initial_data(spec: InitialDataSpec, n_phi, n_theta, interp="bicubic"):
    """Odd-odd initial vorticity from its quadrant profile."""
    if spec.kind == "sandwiched_bump":
        w = spec.transition_width
        if not spec.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")
        if spec.s0 is not None and spec.epsilon0 > spec.s0 * (1 + 1e-12):
            raise ValueError(f"epsilon0={spec.epsilon0!r} exceeds s0={spec.s0!r}")
        if w <= 0:
            raise ValueError("transition_width must be positive")
        if spec.plateau_phi < np.exp(-1.0) or spec.plateau_theta < 1.0:
            raise ValueError("plateau must contain Omega_eps (phi up to 1/e, theta up to 1)")
        if spec.plateau_phi + w >= np.pi or spec.plateau_theta + w >= np.pi / 2:
            raise ValueError("transition_width too large: bump leaves the quadrant")
        if spec.epsilon0 >= spec.plateau_phi:
            raise ValueError("epsilon0 must be below the plateau extent")
        prof = _quadrant_profile
    elif spec.kind == "patch_sign":
        p0, p1, t0, t1 = spec.patch
        w = spec.transition_width
        if not (0 < p0 and p1 + w < np.pi and 0 < t0 and t1 + w < np.pi / 2 and p0 + w < p1
                and t0 + w < t1):
            raise ValueError("patch does not fit in the quadrant")
        prof = _patch_profile
    elif spec.kind == "custom":
        if spec.func is None:
            raise ValueError("custom initial data needs func")
        prof = lambda _s, p, t: spec.func(p, t)  # noqa: E731
    else:
        raise ValueError(f"unknown initial data kind {spec.kind!r}")
    ch = ChartGrid(n_phi, n_theta)
    ph, th = ch.mesh()
    q = prof(spec, np.abs(ph), np.abs(th))
    vals = np.sign(ph) * np.sign(th) * q
    return VorticityField(vals, "odd_odd", interp)


def check_sandwich(field: VorticityField, eps, alpha=1.0, tol=1e-12):
    """Check X_{alpha Omega_eps} <= w X_Q <= X_Q on the nodes of the open quadrant."""
    ph, th = field.chart.mesh()
    q = (ph > 0) & (th > 0)
    w = field.grid
    inner = in_omega_eps(ph, th, eps, alpha)
    ok_low = np.all(w[inner] >= 1 - tol)
    ok_range = np.all((w[q] >= -tol) & (w[q] <= 1 + tol))
    return bool(ok_low and ok_range)


# ---------------------------------------------------------------- I/O

def _fmt(x):
    return repr(float(x))


def write_field(field: VorticityField, path, time=None):
    """CSV 'phi,theta,omega' (theta-outer) plus JSON sidecar with the grid metadata."""
    ch = field.chart
    phi, th = ch.phi, ch.theta
    lines = ["phi,theta,omega"]
    for j in range(ch.n_theta):
        tj = _fmt(th[j])
        row = field.grid[j]
        lines.extend(f"{_fmt(phi[i])},{tj},{_fmt(row[i])}" for i in range(ch.n_phi))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    meta = {"n_phi": ch.n_phi, "n_theta": ch.n_theta, "symmetry": field.symmetry,
            "time": float(field.time if time is None else time)}
    with open(str(path) + ".json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def read_field(path, interp="bicubic"):
    with open(str(path) + ".json") as f:
        meta = json.load(f)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    vals = data[:, 2].reshape(meta["n_theta"], meta["n_phi"])
    return VorticityField(vals, meta["symmetry"], interp, meta["time"])
