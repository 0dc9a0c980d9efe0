"""Points, chords, tangent frames, reflections and rotations on the unit sphere.

Chart: x = (cos(theta) cos(phi), cos(theta) sin(phi), sin(theta)) with
phi in [-pi, pi) and theta in [-pi/2, pi/2].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-12


def wrap_phi(phi):
    """Map longitudes into [-pi, pi)."""
    w = np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi
    # mod can round up to exactly pi for inputs a hair below -pi
    w = np.where(w >= np.pi, w - 2 * np.pi, w)
    return w if np.ndim(w) else float(w)


def unit_vectors(phi, theta):
    """Cartesian unit vectors for arrays of chart coordinates, shape (..., 3)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    ct = np.cos(theta)
    return np.stack([ct * np.cos(phi), ct * np.sin(phi), np.sin(theta)], axis=-1)


def angles_of(x):
    """Chart coordinates (phi, theta) of unit vectors with shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    theta = np.arctan2(x[..., 2], np.hypot(x[..., 0], x[..., 1]))
    phi = wrap_phi(np.arctan2(x[..., 1], x[..., 0]))
    return phi, theta


def frames(phi, theta):
    """Vectorised (e_phi, e_theta) at chart coordinates, each of shape (..., 3)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sp, cp = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    e_theta = np.stack([-st * cp, -st * sp, ct], axis=-1)
    return e_phi, e_theta


def chord_angles(phi1, theta1, phi2, theta2):
    """|x - y| from chart coordinates, haversine form (no cancellation at short range)."""
    a = np.sin(0.5 * (np.asarray(theta1) - theta2)) ** 2
    b = np.cos(theta1) * np.cos(theta2) * np.sin(0.5 * (np.asarray(phi1) - phi2)) ** 2
    return 2.0 * np.sqrt(a + b)


@dataclass(frozen=True)
class SpherePoint:
    x1: float
    x2: float
    x3: float
    phi: float
    theta: float

    @property
    def xyz(self):
        return np.array([self.x1, self.x2, self.x3])

    @property
    def at_pole(self):
        # phi is kept but carries no information here
        return abs(abs(self.theta) - np.pi / 2) <= TOL

    def __post_init__(self):
        n = self.x1 ** 2 + self.x2 ** 2 + self.x3 ** 2
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"not a unit vector (|x|^2 = {n!r})")


def from_angles(phi, theta):
    if not -np.pi / 2 - TOL <= theta <= np.pi / 2 + TOL:
        raise ValueError(f"theta={theta!r} outside [-pi/2, pi/2]")
    theta = float(np.clip(theta, -np.pi / 2, np.pi / 2))
    phi = wrap_phi(phi)
    x = unit_vectors(phi, theta)
    return SpherePoint(float(x[0]), float(x[1]), float(x[2]), phi, theta)


def from_cartesian(x):
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    phi, theta = angles_of(x)
    return SpherePoint(float(x[0]), float(x[1]), float(x[2]), float(phi), float(theta))


def to_angles(p: SpherePoint):
    return p.phi, p.theta


def chord(p: SpherePoint, q: SpherePoint):
    return float(np.linalg.norm(p.xyz - q.xyz))


@dataclass(frozen=True)
class TangentFrame:
    e_phi: np.ndarray
    e_theta: np.ndarray


def tangent_frame(p: SpherePoint) -> TangentFrame:
    if p.at_pole:
        raise ValueError("tangent frame is undefined at a pole")
    e_phi, e_theta = frames(p.phi, p.theta)
    return TangentFrame(e_phi, e_theta)


@dataclass(frozen=True)
class TangentVelocity:
    """Velocity at a point. u_phi/u_theta are nan at the poles; cart is always set.

    residual is the normal component removed by the tangent projection.
    """
    u_phi: float
    u_theta: float
    cart: np.ndarray
    residual: float = 0.0
    gauss_warning: bool = False


def tangent_velocity(p: SpherePoint, cart, gauss_warning=False) -> TangentVelocity:
    cart = np.asarray(cart, dtype=float)
    x = p.xyz
    resid = float(cart @ x)
    cart = cart - resid * x
    if p.at_pole:
        return TangentVelocity(np.nan, np.nan, cart, abs(resid), gauss_warning)
    fr = tangent_frame(p)
    return TangentVelocity(float(cart @ fr.e_phi), float(cart @ fr.e_theta), cart,
                           abs(resid), gauss_warning)


def reflect_tilde(p: SpherePoint) -> SpherePoint:
    """(x1, x2, x3) -> (x1, -x2, x3), i.e. phi -> -phi."""
    return SpherePoint(p.x1, -p.x2, p.x3, wrap_phi(-p.phi), p.theta)


def reflect_bar(p: SpherePoint) -> SpherePoint:
    """(x1, x2, x3) -> (x1, x2, -x3), i.e. theta -> -theta."""
    return SpherePoint(p.x1, p.x2, -p.x3, p.phi, -p.theta)


def rodrigues(v, axis, angle):
    v = np.asarray(v, dtype=float)
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(k, v) * s + k * (k @ v) * (1 - c)


def rotate_z(p: SpherePoint, alpha) -> SpherePoint:
    """Rotation by alpha about e3: (phi, theta) -> (phi + alpha, theta)."""
    c, s = np.cos(alpha), np.sin(alpha)
    x1 = c * p.x1 - s * p.x2
    x2 = s * p.x1 + c * p.x2
    return SpherePoint(x1, x2, p.x3, wrap_phi(p.phi + alpha), p.theta)


def chart_equivalence_window(n=200_000, seed=0, box=1.0):
    """Sampled range of chord / chart distance for points in [-box, box]^2.

    The two metrics are equivalent on the box; the constants are not given
    analytically, so they are measured.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(-box, box, size=(n, 4))
    d = np.hypot(a[:, 0] - a[:, 2], a[:, 1] - a[:, 3])
    keep = d > 1e-9
    c = chord_angles(a[keep, 0], a[keep, 1], a[keep, 2], a[keep, 3])
    r = c / d[keep]
    return float(r.min()), float(r.max())


def wedge_chord_ratio(n=100_000, seed=0):
    """max |x ^ y| / |x - y| over random unit pairs (should not exceed 1)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    y = rng.normal(size=(n, 3))
    x /= np.linalg.norm(x, axis=1)[:, None]
    y /= np.linalg.norm(y, axis=1)[:, None]
    w = np.linalg.norm(np.cross(x, y), axis=1)
    c = np.linalg.norm(x - y, axis=1)
    return float(np.max(w / c))
