import numpy as np
import pytest
from hypothesis import given, strategies as st

from sphere_euler.sphere_geom import (angles_of, chart_equivalence_window, chord, chord_angles,
                                      from_angles, from_cartesian, reflect_bar, reflect_tilde,
                                      rodrigues, rotate_z, tangent_frame, tangent_velocity,
                                      unit_vectors, wedge_chord_ratio, wrap_phi)

phis = st.floats(-10, 10, allow_nan=False)
thetas = st.floats(-np.pi / 2, np.pi / 2, allow_nan=False)


def test_wrap_phi_range():
    assert wrap_phi(np.pi) == -np.pi
    assert wrap_phi(-np.pi) == -np.pi
    assert wrap_phi(3 * np.pi / 2) == pytest.approx(-np.pi / 2)


@given(phis, thetas)
def test_round_trip(p, t):
    q = from_angles(p, t)
    assert np.linalg.norm(q.xyz) == pytest.approx(1.0, abs=1e-14)
    r = from_cartesian(q.xyz)
    assert np.linalg.norm(r.xyz - q.xyz) < 1e-14
    if abs(t) < np.pi / 2 - 1e-6:
        assert abs(wrap_phi(r.phi - q.phi)) < 1e-12


def test_bad_theta():
    with pytest.raises(ValueError):
        from_angles(0.0, 2.0)


@given(phis, thetas, phis, thetas)
def test_chord_forms_agree(p1, t1, p2, t2):
    a, b = from_angles(p1, t1), from_angles(p2, t2)
    assert chord_angles(p1, t1, p2, t2) == pytest.approx(chord(a, b), abs=1e-12)


def test_chord_short_range_no_cancellation():
    # |x - y| ~ 2 sin(h/2) for tiny separations along a meridian
    h = 1e-12
    assert chord_angles(0.3, 0.2, 0.3, 0.2 + h) == pytest.approx(h, rel=1e-10)


def test_pole_and_antipode():
    n, s = from_angles(0, np.pi / 2), from_angles(1.0, -np.pi / 2)
    assert chord(n, s) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        tangent_frame(n)


@given(st.floats(-3, 3), st.floats(-1.5, 1.5))
def test_frame_orthonormal(p, t):
    f = tangent_frame(from_angles(p, t))
    x = unit_vectors(p, t)
    M = np.stack([f.e_phi, f.e_theta, x])
    assert np.allclose(M @ M.T, np.eye(3), atol=1e-13)
    # right-handed: e_phi ^ e_theta = x
    assert np.allclose(np.cross(f.e_phi, f.e_theta), x, atol=1e-13)


@given(phis, thetas)
def test_reflections_are_involutions(p, t):
    q = from_angles(p, t)
    for R in (reflect_tilde, reflect_bar):
        r = R(R(q))
        assert np.allclose(r.xyz, q.xyz)
    assert reflect_tilde(q).x2 == -q.x2
    assert reflect_bar(q).x3 == -q.x3


@given(phis, thetas, st.floats(-7, 7))
def test_rotate_z_matches_rodrigues(p, t, a):
    q = from_angles(p, t)
    r = rotate_z(q, a)
    assert np.allclose(r.xyz, rodrigues(q.xyz, [0, 0, 1], a), atol=1e-13)
    assert chord(r, rotate_z(from_angles(p + 0.1, t), a)) == pytest.approx(
        chord(q, from_angles(p + 0.1, t)), abs=1e-12)


def test_tangent_velocity_projects():
    p = from_angles(0.4, 0.3)
    v = tangent_velocity(p, p.xyz * 2 + np.array([0, 0, 1.0]))
    assert v.residual == pytest.approx(2 + p.x3)
    assert abs(v.cart @ p.xyz) < 1e-14
    pole = tangent_velocity(from_angles(0, np.pi / 2), [1.0, 0, 0])
    assert np.isnan(pole.u_phi) and pole.cart[0] == 1.0


def test_metric_equivalence_and_wedge_bound():
    lo, hi = chart_equivalence_window(20_000)
    assert 0.5 < lo <= hi <= 1.0 + 1e-12
    assert wedge_chord_ratio(20_000) <= 1.0


def test_angles_of_vectorised():
    ph = np.linspace(-3, 3, 7)
    th = np.linspace(-1.5, 1.5, 7)
    p2, t2 = angles_of(unit_vectors(ph, th))
    assert np.allclose(p2, ph) and np.allclose(t2, th)
