import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from sphere_euler.biot_savart import QuadratureSpec
from sphere_euler.config import defaults
from sphere_euler.estimates import (EstimateReport, RegionSpec, approach_speed, ds_integral,
                                    fit_C1, leading_term, lemma_sweep, log_log_upper_envelope,
                                    psi_max, rebound, remainder_B, scaled, speed_constant_sign,
                                    upper_envelope, write_report_csv)
from sphere_euler.fields import (AnalyticField, EE1, harmonic_field, quadrant_sign_field,
                                 tanh_field)

ZERO = AnalyticField(lambda p, t: 0.0 * p, "odd_odd", 0.0, name="zero")
ONE = AnalyticField(lambda p, t: np.ones_like(p), "odd_odd", 1.0, name="one_on_quarter")


def flat_h_oracle(s):
    """Independent oracle: (4/pi) int_{D_s} phi theta / r^4 = (4/pi) int sin^2(psi_max) / (2r) dr.

    psi_max by bracketing root solve of tan(psi) = ln(e^e - 1 - ln(r cos psi)).
    """
    def pm(lr):
        return brentq(lambda p: np.tan(p) - np.log(EE1 - lr - np.log(np.cos(p))), 0.0,
                      np.pi / 2 - 1e-15, xtol=1e-15)

    ls = np.log(s)
    lr0 = ls + 0.5 * np.log(1 + np.log(EE1 - ls) ** 2)
    val = quad(lambda lr: 0.5 * np.sin(pm(lr)) ** 2, lr0, -1.0, epsabs=0, epsrel=1e-11,
               limit=400)[0]
    return 4 / np.pi * val / abs(ls)


def test_psi_max_matches_root_solve():
    for lr in (-2.0, -10.0, -300.0):
        root = brentq(lambda p: np.tan(p) - np.log(EE1 - lr - np.log(np.cos(p))), 0, 1.57)
        assert psi_max(lr) == pytest.approx(root, abs=1e-13)


@pytest.mark.parametrize("s,frozen", [(1e-4, 0.435651), (1e-6, 0.482080), (1e-12, 0.533583)])
def test_flat_ds_against_oracle(s, frozen):
    h = ds_integral(s, "flat") / abs(np.log(s))
    assert h == pytest.approx(flat_h_oracle(s), rel=1e-8)
    assert h == pytest.approx(frozen, abs=1e-6)


def test_ds_scale_invariance():
    ref = ds_integral(1e-6, "flat")
    for a in (0.5, 0.125):
        assert ds_integral(1e-6, "flat", alpha=a) == pytest.approx(ref, rel=1e-12)


def test_sphere_minus_flat_bounded():
    d = [ds_integral(s, "difference") for s in (1e-3, 1e-6, 1e-12)]
    assert max(abs(x) for x in d) < 0.02


def test_region_partition():
    # quarter = Q(3phi/2, 3theta/2) + Q2 + Q3 and Q3 = Q4 + Q3p, on exact rational samples
    g = np.arange(1, 400) / 400.0
    P, T = np.meshgrid(g * np.pi, g * np.pi / 2, indexing="ij")
    for phi, theta in [(0.1, 0.3), (0.3, 0.1), (0.2, 0.2)]:
        Q = RegionSpec("Q", (1.5 * phi, 1.5 * theta)).contains(P, T)
        parts = {k: RegionSpec(k, (phi, theta)).contains(P, T)
                 for k in ("Q2", "Q3", "Q4", "Q3p", "Qt2", "Qt3", "Qt4", "Qt3p")}
        total = Q.astype(int) + parts["Q2"] + parts["Q3"]
        assert np.all(total == 1)
        assert np.array_equal(parts["Q3"], parts["Q4"] | parts["Q3p"])
        assert not np.any(parts["Q4"] & parts["Q3p"])
        assert np.all(Q.astype(int) + parts["Qt2"] + parts["Qt3"] == 1)
        assert np.array_equal(parts["Qt3"], parts["Qt4"] | parts["Qt3p"])


def test_region_validation():
    with pytest.raises(ValueError):
        RegionSpec("Q9")
    with pytest.raises(ValueError):
        RegionSpec("Q", (0.1, 0.1), 2.0)
    r = RegionSpec("scaled", (0.5, "Omega_eps", 0.01))
    assert r.kind == "Omega_eps" and r.scale == 0.5
    assert scaled(r, 0.5).scale == 0.25


def test_leading_term_basic():
    assert leading_term(ZERO, 0.1, 0.1) == 0.0
    with pytest.raises(ValueError):
        leading_term(ONE, 0.0, 0.0)
    # Q vs Qtilde differ by a bounded amount over a log sweep
    sg = quadrant_sign_field()
    diffs = [leading_term(sg, 2.0 ** -i, 2.0 ** -j) - leading_term(sg, 2.0 ** -i, 2.0 ** -j,
                                                                   "Qtilde")
             for i in (2, 8, 16) for j in (2, 8, 16)]
    assert max(abs(d) for d in diffs) < 3.0


def test_remainder_zero_field_errors():
    with pytest.raises(ValueError):
        remainder_B(ZERO, 0.1, 0.1)


def test_remainder_diagonal_bounded():
    sg = quadrant_sign_field()
    for k in (3, 10, 18):
        x = 2.0 ** -k
        for comp in ("phi", "theta"):
            r = remainder_B(sg, x, x, comp)
            assert np.isfinite(r.bound) and r.passed


def test_sweep_fit_and_rebound(tmp_path):
    reps = lemma_sweep(harmonic_field(), range(1, 4))
    assert len(reps) == 18
    C1 = fit_C1(reps)
    assert C1 >= 1.0
    rb = rebound(reps, 2.0)
    assert all(r.passed for r in rb) and all(r.C1 == 2.0 for r in rb)
    path = tmp_path / "rep.csv"
    write_report_csv(rb, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "phi,theta,leading,remainder,bound,pass"
    assert lines[1].endswith(",true")


def test_report_pass_flag():
    r = EstimateReport(0.1, 0.1, "phi", 1.0, 2.0, 1.0, 2.0, False)
    assert not r.passed and rebound([r], 4.0)[0].passed


def test_approach_speed_sign_field_rate():
    sg = quadrant_sign_field()
    assert approach_speed(ZERO, 0.1) == 0.0
    for e in (1e-3, 1e-5):
        sp = approach_speed(sg, e)
        assert sp > 0
        # C1' converges to ln 2
        assert speed_constant_sign(sp, e) == pytest.approx(np.log(2), abs=2e-3)
    with pytest.raises(ValueError):
        approach_speed(sg, 0.0)


@settings(max_examples=8)
@given(st.floats(1e-4, 1.0))
def test_approach_speed_odd_in_field(e):
    t = tanh_field(20.0)
    neg = AnalyticField(lambda p, th: -t(p, th), "odd_odd", 1.0, name="neg")
    assert approach_speed(neg, e) == pytest.approx(-approach_speed(t, e), rel=1e-12, abs=1e-15)


def test_approach_speed_lipschitz_bound():
    # speed <= ((4/pi) ln(1/min{1/L, 1}) + C) eps with C the fitted C_I scale
    for L in (10.0, 100.0):
        t = tanh_field(L)
        for e in np.geomspace(1e-6, 1e-1, 6):
            assert approach_speed(t, e) <= (4 / np.pi * np.log(L) + 3.0) * e


def test_grid_field_path():
    g = harmonic_field().sample_grid(128, 64)
    a = approach_speed(g, 0.3, QuadratureSpec(128, 64))
    b = approach_speed(harmonic_field(), 0.3)
    assert a == pytest.approx(b, rel=1e-3)


def test_upper_envelope_properties():
    assert upper_envelope(10.0, 4 * np.pi, 0.0, 2.0) == pytest.approx(10.0)
    assert upper_envelope(1.0, 4 * np.pi, 0.0, 2.0) == pytest.approx(np.e)
    t = np.linspace(0, 20, 200)
    for C in (0.0, 1.0, 3.0):
        v = log_log_upper_envelope(10.0, t, C)
        assert np.all(np.diff(v) > 0)
    assert np.isinf(upper_envelope(10.0, 4 * np.pi, 1e3, 1.0))
    with pytest.raises(ValueError):
        upper_envelope(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        upper_envelope(1.0, 20.0, 1.0, 1.0)


def test_upper_envelope_rate_converges():
    # ln ln env / t - 2/pi = (C_I (1 - e^{-2t/pi}) + ln ln g0) / t -> 0 like 1/t
    C = defaults()["C_I"]
    gaps = [log_log_upper_envelope(10.0, t, C) / t - 2 / np.pi for t in (50, 100, 200, 1e4)]
    assert all(a > b > 0 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] / (2 / np.pi) < 5e-4


@pytest.mark.xfail(strict=True, reason="relative gap at t=50 is (C_I + lnln g0)/(2t/pi) ~ 9.5%, "
                                       "needs C_I + ln ln g0 <= 0.64 for 2%")
def test_upper_envelope_rate_two_percent():
    C = defaults()["C_I"]
    for t in (50, 100, 200):
        assert log_log_upper_envelope(10.0, t, C) / t == pytest.approx(2 / np.pi, rel=0.02)
