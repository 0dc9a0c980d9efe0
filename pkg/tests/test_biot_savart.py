import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphere_euler.biot_savart import (GreensKernel, GridVelocityEngine, QuadratureSpec,
                                      ball_cap, ball_moments, check_cutoff, grid_velocity,
                                      quarter_brackets, speed_bound_check, stream_function,
                                      velocity_full, velocity_full_many, velocity_oddodd,
                                      velocity_pole_component)
from sphere_euler.fields import (InitialDataSpec, VorticityField, build_initial_data,
                                 from_function, harmonic_field, quadrant_sign_field, tanh_field)
from sphere_euler.sphere_geom import frames, from_angles, unit_vectors


def rel_l2(U, V, w):
    return np.sqrt(np.sum(w * np.sum((U - V) ** 2, -1)) / np.sum(w * np.sum(V ** 2, -1)))


def harmonic_velocity(ph, th):
    """Degree-2 oracle: w = 2 y2 y3 has stream function w / 6, u = x ^ grad(w) / 6."""
    e_phi, e_theta = frames(ph, th)
    gp = 2 * np.cos(ph) * np.sin(th)
    gt = 2 * np.sin(ph) * np.cos(2 * th)
    G = gp[..., None] * e_phi + gt[..., None] * e_theta
    return np.cross(unit_vectors(ph, th), G) / 6


def test_rigid_rotation_oracle_converges():
    # brute-force check of the sign: w = 2 y3 gives u = -e3 ^ x under this law
    errs = []
    for n in (64, 128):
        f = from_function(lambda p, t: 2 * np.sin(t), 2 * n, n)
        U = GridVelocityEngine(2 * n, n).cart_velocity(f.grid)
        x = f.chart.xyz()
        errs.append(rel_l2(U, -np.cross([0, 0, 1.0], x), f.chart.weights))
    assert errs[1] < errs[0] / 3
    assert errs[1] < 1e-3


def test_harmonic_oracle():
    h = harmonic_field()
    g = h.sample_grid(128, 64)
    U = GridVelocityEngine(128, 64).cart_velocity(g.grid, symmetric=True)
    ph, th = g.chart.mesh()
    assert rel_l2(U, harmonic_velocity(ph, th), g.chart.weights) < 1e-3


def test_graded_rule_on_analytic_field():
    q = QuadratureSpec(rule="gauss_composite")
    h = harmonic_field()
    for p, t in [(0.7, 0.4), (-2.0, -0.9)]:
        cart, _, _ = velocity_full_many(h, np.array([p]), np.array([t]), q)
        assert np.max(np.abs(cart[0] - harmonic_velocity(p, t))) < 1e-10


def test_fft_engine_matches_direct_sum():
    f = build_initial_data(InitialDataSpec(epsilon0=0.1), 64, 32)
    Up, Ut = grid_velocity(f)
    ph, th = f.chart.mesh()
    sel = (slice(3, None, 7), slice(None, None, 5))
    _, up, ut = velocity_full_many(f, ph[sel].ravel(), th[sel].ravel())
    assert np.max(np.abs(up - Up[sel].ravel())) < 1e-12
    assert np.max(np.abs(ut - Ut[sel].ravel())) < 1e-12


def test_symmetric_engine_matches_full():
    g = tanh_field(5.0).sample_grid(64, 32)
    eng = GridVelocityEngine(64, 32)
    a = eng.frame_velocity(g.grid, symmetric=True)
    b = eng.frame_velocity(g.grid)
    assert np.max(np.abs(a[0] - b[0])) < 1e-13 and np.max(np.abs(a[1] - b[1])) < 1e-13


@settings(max_examples=15)
@given(st.floats(0.05, 3.0), st.floats(0.05, 1.5))
def test_quarter_formula_matches_full(p, t):
    g = build_initial_data(InitialDataSpec(epsilon0=0.1), 64, 32)
    pt = from_angles(p, t)
    a, b = velocity_full(g, pt), velocity_oddodd(g, pt)
    assert abs(a.u_phi - b.u_phi) < 1e-12
    assert abs(a.u_theta - b.u_theta) < 1e-12


def test_quarter_brackets_graded_vs_refined():
    s = quadrant_sign_field()
    q1 = QuadratureSpec(rule="gauss_composite")
    q2 = QuadratureSpec(rule="gauss_composite", order=14, ratio=0.15, depth=1e-5)
    for p, t in [(2.0 ** -20, 0.5), (2.0 ** -5, 2.0 ** -12)]:
        a, b = quarter_brackets(s, p, t, q1), quarter_brackets(s, p, t, q2)
        assert np.allclose(a, b, rtol=1e-8)


def test_vanishing_identities():
    g = build_initial_data(InitialDataSpec(epsilon0=0.1), 64, 32)
    for s in (-1.2, 0.3, 1.0):
        assert abs(velocity_full(g, from_angles(0.0, s)).u_phi) < 1e-13
        assert abs(velocity_full(g, from_angles(2 * s, 0.0)).u_theta) < 1e-13
    assert abs(velocity_pole_component(g, 1)) < 1e-13
    with pytest.raises(ValueError):
        velocity_oddodd(from_function(lambda p, t: t, 16, 8), from_angles(0.3, 0.3))


def test_cutoff_validation():
    with pytest.raises(ValueError):
        check_cutoff(1e-4, 64, 32)
    with pytest.raises(ValueError):
        QuadratureSpec(64, 32, singularity_cutoff=1e-4)
    with pytest.raises(ValueError):
        QuadratureSpec(rule="simpson")


def test_ball_moments_small_delta_limit():
    # with a hard cut I = delta^2/2 - delta^4/16; the taper adds a fixed multiple of delta^2
    d = 1e-3
    I, J = ball_moments(d, 1.0)
    I2, _ = ball_moments(2 * d, 1.0)
    assert I2 / I == pytest.approx(4.0, rel=1e-5)
    assert J < 0
    assert ball_cap(2 * d) == pytest.approx(2 * ball_cap(d), rel=1e-10)


def test_stream_function_oracle():
    # G(2 y3) = -y3 (degree-1 harmonic, G = (1/2pi) ln|x - y|)
    f = from_function(lambda p, t: 2 * np.sin(t), 128, 64)
    for p, t in [(0.3, 0.7), (-2.0, -0.2)]:
        assert stream_function(f, from_angles(p, t)) == pytest.approx(-np.sin(t), abs=2e-3)


def test_hemisphere_kernel():
    k = GreensKernel("hemisphere")
    x = unit_vectors(0.2, 0.0)
    y = unit_vectors(1.0, 0.4)
    assert k.value(x, y) == pytest.approx(0.0, abs=1e-14)  # vanishes on the equator
    f = from_function(lambda p, t: np.where(t > 0, np.sin(2 * t), 0.0), 64, 32)
    assert stream_function(f, from_angles(0.4, 0.0), k) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        stream_function(from_function(lambda p, t: t, 64, 32), from_angles(0.1, 0.2), k)


@settings(max_examples=10)
@given(st.integers(0, 2 ** 32 - 1))
def test_speed_bound(seed):
    # |u| <= (1/2pi) int |w| / |x - y| <= 2 sup|w| on the unit sphere
    v = np.random.default_rng(seed).uniform(-1, 1, (32, 64))
    f = VorticityField(v)
    assert speed_bound_check(f)["constant"] <= 2.0


def test_speed_bound_discontinuous_field():
    assert speed_bound_check(quadrant_sign_field())["constant"] < 1.0
