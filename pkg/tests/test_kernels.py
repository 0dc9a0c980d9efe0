import numpy as np
import pytest
from hypothesis import given, strategies as st

from sphere_euler import _kernels_py, kernels
from sphere_euler.fields import ChartGrid, PAD, fractional_indices, padded
from sphere_euler.quadrature import GradedRule, graded_breaks, integrate_tensor

compiled = pytest.importorskip("sphere_euler._kernels")


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "numpy")


def test_direct_velocity_backends_agree(rng):
    ch = ChartGrid(32, 16)
    src = ch.xyz().reshape(-1, 3)
    w = rng.standard_normal(len(src)) * ch.weights.ravel()
    tx = rng.standard_normal((50, 3))
    tx /= np.linalg.norm(tx, axis=1)[:, None]
    d = 2 * ch.diagonal
    a = _kernels_py.direct_velocity(tx, src, w, d, d)
    b = compiled.direct_velocity(tx, src, w, d, d)
    assert np.max(np.abs(a - b)) < 1e-14


@given(st.booleans(), st.booleans())
def test_sampling_backends_agree(cubic, clip):
    r = np.random.default_rng(7)
    v = r.standard_normal((16, 32))
    ph = r.uniform(-np.pi, np.pi, 500)
    th = r.uniform(-np.pi / 2, np.pi / 2, 500)
    u, w = fractional_indices(32, 16, ph, th, PAD)
    P = padded(v)
    a = _kernels_py.sample_padded(P, u, w, int(cubic), int(clip))
    b = compiled.sample_padded(P, u, w, int(cubic), int(clip))
    assert np.max(np.abs(a - b)) < 1e-14


def test_smoothstep():
    s = kernels.smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert s[0] == 0 and s[1] == 0 and s[3] == 1 and s[4] == 1
    assert s[2] == pytest.approx(0.5)


def test_graded_breaks_sorted_and_dedup():
    r = GradedRule()
    b = graded_breaks(0.0, 1.0, [0.0, 1e-15, 0.5, 1.0], r)
    assert b[0] == 0.0 and b[-1] == 1.0
    assert np.all(np.diff(b) > 0)


def test_graded_rule_integrates_log_singularity():
    # int_0^1 int_0^1 -ln(x^2 + y^2) / 2 dx dy = 3/2 - pi/4 - ln(2)/2
    r = GradedRule(order=10, ratio=0.2, depth=1e-6)
    b = graded_breaks(0.0, 1.0, [0.0], r)
    val = integrate_tensor(lambda X, Y: -0.5 * np.log(X * X + Y * Y), b, b, r.order)
    assert val == pytest.approx(1.5 - np.pi / 4 - 0.5 * np.log(2), abs=1e-9)
