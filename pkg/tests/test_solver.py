import numpy as np
import pytest

from sphere_euler.biot_savart import GridVelocityEngine
from sphere_euler.fields import (InitialDataSpec, VorticityField, build_initial_data,
                                 from_function, sample_values, zeros)
from sphere_euler.solver import (DIAG_COLUMNS, SimulationConfig, SimulationState, Transport,
                                 absolute_vorticity, band_height, conjugacy_check,
                                 level_set_left_boundary, rotating_step, run, shift_longitude,
                                 step, trace_trajectory, write_diagnostics)
from sphere_euler.sphere_geom import angles_of, frames


def patch(n, width=0.5):
    spec = InitialDataSpec(epsilon0=0.05, kind="patch_sign", transition_width=width)
    return build_initial_data(spec, n, n // 2)


def test_config_validation():
    for bad in (dict(dt=0.0), dict(t_end=-1.0), dict(cfl=2.0), dict(symmetry="even"),
                dict(diagnostics_every=0), dict(time_order=3), dict(n_phi=33)):
        with pytest.raises(ValueError):
            SimulationConfig(**{**dict(n_phi=32, n_theta=16), **bad})
    assert SimulationConfig(32, 16, symmetry="odd_odd").region == "upper"
    assert SimulationConfig(32, 16, dt=0.3, t_end=1.0).n_steps == 4


def test_rigid_rotation_is_steady():
    f = from_function(lambda p, t: 2 * np.sin(t), 64, 32)
    cfg = SimulationConfig(64, 32, dt=0.05, t_end=5.0, diagnostics_every=20)
    st = run(cfg, f)
    assert st.step_index == 100
    # zonal field carried along latitude circles: the drift must stay inside the
    # error of a single interpolation at a half-cell offset
    ph, th = f.chart.mesh()
    h = 0.5 * np.pi / 32
    budget = np.max(np.abs(sample_values(f.grid, ph, th + h) - 2 * np.sin(th + h)))
    assert np.max(np.abs(st.field.grid - f.grid)) < budget


def test_zero_field_unchanged():
    z = zeros(32, 16)
    st = run(SimulationConfig(32, 16, dt=0.1, t_end=0.3), z)
    assert not np.any(st.field.grid)
    assert all(all(v == 0 for v in row[1:]) for row in st.diagnostics)


def test_odd_odd_symmetry_and_conservation():
    f = build_initial_data(InitialDataSpec(epsilon0=0.05), 64, 32)
    st = run(SimulationConfig(64, 32, dt=0.05, t_end=0.5, symmetry="odd_odd"), f)
    d = np.array(st.diagnostics)
    assert st.max_sym_res_pre <= 1e-4
    assert np.max(np.abs(d[:, 4] - d[0, 4])) <= 0.01 * d[0, 4]
    assert np.max(d[:, 5]) <= 1e-6
    # enforced symmetry holds exactly after each step
    g = st.field.grid
    assert np.max(np.abs(g + g[:, (-np.arange(64)) % 64])) < 1e-14
    assert np.max(np.abs(g + g[::-1])) < 1e-14


def test_run_rejects_mismatch():
    with pytest.raises(ValueError):
        run(SimulationConfig(64, 32), zeros(32, 16))
    with pytest.raises(ValueError):
        run(SimulationConfig(32, 16, symmetry="odd_odd"), zeros(32, 16))


def test_self_convergence_order():
    p = np.linspace(-3, 3, 37)
    t = np.linspace(-1.4, 1.4, 29)
    P, T = np.meshgrid(p, t)
    out = {}
    for n in (32, 64, 128):
        st = run(SimulationConfig(n, n // 2, dt=0.1, t_end=0.5, symmetry="odd_odd"), patch(n))
        out[n] = sample_values(st.field.grid, P, T, clip=False)
    e1 = np.max(np.abs(out[32] - out[64]))
    e2 = np.max(np.abs(out[64] - out[128]))
    assert np.log2(e1 / e2) >= 1.0


def test_none_symmetry_gauss_fix():
    rng = np.random.default_rng(3)
    v = rng.standard_normal((16, 32))
    v -= np.sum(v * np.cos(np.linspace(-1, 1, 16))[:, None]) / 1e9
    f = VorticityField(v)
    st = step(SimulationState(0.0, f), SimulationConfig(32, 16, dt=0.05))
    assert abs(np.sum(st.field.grid * Transport(SimulationConfig(32, 16)).grid.weights)) < 1e-12


def test_absolute_vorticity():
    f = build_initial_data(InitialDataSpec(epsilon0=0.1), 32, 16)
    assert absolute_vorticity(f, 0.0) is f
    z = absolute_vorticity(zeros(32, 16), 1.0)
    th = z.chart.theta
    assert np.allclose(z.grid, 2 * np.sin(th)[:, None] * np.ones((16, 32)), atol=0, rtol=0)
    back = absolute_vorticity(absolute_vorticity(f, 0.7), -0.7)
    assert np.max(np.abs(back.grid - f.grid)) < 1e-15


def test_rotating_step_requires_rotation_and_keeps_zonal():
    z = from_function(lambda p, t: np.sin(t) + 0.3 * np.sin(3 * t), 64, 32)
    with pytest.raises(ValueError):
        rotating_step(SimulationState(0.0, z), SimulationConfig(64, 32))
    cfg = SimulationConfig(64, 32, dt=0.1, rotation_omega=0.5)
    st = SimulationState(0.0, z)
    for _ in range(5):
        st = rotating_step(st, cfg)
    assert np.max(np.abs(st.field.grid - z.grid)) < 1e-3


def test_conjugacy_zero_rotation_exact():
    rep = conjugacy_check(patch(32), 0.0, 0.3, SimulationConfig(32, 16, dt=0.1))
    assert rep.max_discrepancy < 1e-14 and rep.max_grad_gap == 0.0


def test_shift_longitude_by_grid_step_is_roll():
    f = patch(32)
    dphi = 2 * np.pi / 32
    assert np.allclose(shift_longitude(f.grid, 3 * dphi), np.roll(f.grid, -3, axis=1),
                       atol=1e-14)


def test_trajectory_speed_identities():
    # phi' = u_phi / cos(theta), theta' = u_theta along the traced characteristic
    f = patch(64)
    cfg = SimulationConfig(64, 32)
    tr = Transport(cfg)
    U = tr.node_velocity(f.grid)
    dt = 1e-3
    xs = trace_trajectory(tr, U, 0.8, 0.5, dt, 2)
    ph, th = angles_of(xs)
    u = tr.velocity_at(U, xs[1:2])[0]
    e_phi, e_theta = frames(ph[1], th[1])
    up, ut = u @ e_phi, u @ e_theta
    dphi = (ph[2] - ph[0]) / (2 * dt)
    dth = (th[2] - th[0]) / (2 * dt)
    assert dphi == pytest.approx(up / np.cos(th[1]), rel=1e-3)
    assert dth == pytest.approx(ut, rel=1e-3)


def test_feet_stay_on_sphere_and_cfl():
    f = build_initial_data(InitialDataSpec(epsilon0=0.05), 32, 16)
    cfg = SimulationConfig(32, 16, dt=0.5)
    tr = Transport(cfg)
    U = tr.node_velocity(f.grid)
    n = tr.substeps(U, 0.5)
    vmax = np.max(np.linalg.norm(U, axis=-1))
    assert 0.5 * vmax / n <= 0.5 * min(tr.grid.dphi, tr.grid.dtheta) + 1e-15
    x = tr.trace_back(U, 0.5, n)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0)
    _, th = angles_of(x)
    assert np.all(np.abs(th) <= np.pi / 2)


def test_level_set_boundary_and_band():
    f = build_initial_data(InitialDataSpec(epsilon0=0.05), 128, 64)
    lb = level_set_left_boundary(f, band_height(0.05, 64))
    # first node with w = 1 to machine precision sits within a cell of eps0
    assert 0.05 - 2 * np.pi / 128 <= lb < 0.2
    assert level_set_left_boundary(zeros(32, 16), 0.5) == np.inf


def test_diagnostics_csv(tmp_path):
    st = run(SimulationConfig(32, 16, dt=0.1, t_end=0.2), patch(32))
    path = tmp_path / "d.csv"
    write_diagnostics(st.diagnostics, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(DIAG_COLUMNS) and len(lines) == 4


def test_transport_uses_engine_velocity():
    f = patch(32)
    a = GridVelocityEngine(32, 16).cart_velocity(f.grid)
    b = Transport(SimulationConfig(32, 16)).node_velocity(f.grid)
    assert np.allclose(a, b, rtol=0, atol=1e-15)
