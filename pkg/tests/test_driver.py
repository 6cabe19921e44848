"""Coupled stepper and run orchestration checks."""

import math

import numpy as np
import pytest

from csns import diagnostics, driver, fluid, io, oracle, particles
from csns.domain import BoxSpec, InitSpec, KernelSpec, OutputSpec, SimConfig

BOX2 = BoxSpec(d=2, L=2.0 * math.pi, N=16)


def coupled_config(outdir, **overrides):
    base = dict(
        box=BOX2, dt=1e-3, t_end=0.05,
        kernel=KernelSpec(kind="inverse_power", beta=2.0),
        particle_count=40,
        init_profile=InitSpec(fluid="broadband",
                              fluid_params={"xi_cut": 2.5, "u_rms": 0.3},
                              particles="gaussian"),
        seed=3,
        output=OutputSpec(dir=str(outdir), series="series.csv",
                          series_every_steps=4))
    base.update(overrides)
    return SimConfig(**base)


def random_coupled_state(cfg):
    state = driver.initial_state(cfg)
    driver.ensure_moments(state, cfg.kernel, cfg.box)
    return state


def test_initial_state_is_seeded(tmp_path):
    cfg = coupled_config(tmp_path)
    s1 = driver.initial_state(cfg)
    s2 = driver.initial_state(cfg)
    assert np.array_equal(s1.u.c, s2.u.c)
    assert np.array_equal(s1.ens.X, s2.ens.X)
    s3 = driver.initial_state(coupled_config(tmp_path, seed=4))
    assert not np.array_equal(s3.ens.X, s1.ens.X)


def test_flocked_state_is_a_fixed_point(tmp_path):
    vel = [0.4, -0.1]
    cfg = coupled_config(
        tmp_path, particle_count=30,
        kernel=KernelSpec(kind="inverse_power", beta=2.0),
        init_profile=InitSpec(fluid="uniform",
                              fluid_params={"velocity": vel},
                              particles="flocked",
                              particle_params={"velocity": vel}))
    state = driver.initial_state(cfg)
    e0 = diagnostics.energy(state)[0]
    for _ in range(20):
        state = driver.coupled_step(state, cfg, cfg.dt)
    assert np.max(np.abs(state.ens.V - np.asarray(vel))) < 1e-12
    u = state.u.values()
    assert np.max(np.abs(u[0] - vel[0])) < 1e-12
    assert np.max(np.abs(u[1] - vel[1])) < 1e-12
    assert diagnostics.energy(state)[0] == pytest.approx(e0, abs=1e-12)


def test_no_particles_matches_pure_fluid_stepper(tmp_path):
    cfg = coupled_config(tmp_path, particle_count=0)
    state = driver.initial_state(cfg)
    c_ref = state.u.c.copy()
    for _ in range(10):
        c_ref = fluid.ns_step(c_ref, cfg.box, cfg.viscosity, cfg.dt)
    for _ in range(10):
        state = driver.coupled_step(state, cfg, cfg.dt)
    assert np.array_equal(state.u.c, c_ref)


def advance_copy(state, cfg, dt, steps):
    cur = driver.SimState(state.t, state.step_index, state.u,
                          particles.ParticleEnsemble(state.ens.X.copy(),
                                                     state.ens.V.copy(),
                                                     state.ens.w),
                          None)
    for _ in range(steps):
        cur = driver.coupled_step(cur, cfg, dt)
    return cur


def coupled_difference(a, b):
    return (np.max(np.abs(a.u.c - b.u.c))
            + np.max(np.abs(a.ens.V - b.ens.V))
            + np.max(np.abs(a.ens.X - b.ens.X)))


def test_coupled_step_is_second_order(tmp_path):
    cfg = coupled_config(tmp_path, particle_count=60, seed=9)
    state = driver.initial_state(cfg)
    dt = 4e-3
    coarse = advance_copy(state, cfg, dt, 8)
    mid = advance_copy(state, cfg, dt / 2, 16)
    fine = advance_copy(state, cfg, dt / 4, 32)
    order = math.log2(coupled_difference(coarse, mid)
                      / coupled_difference(mid, fine))
    assert order == pytest.approx(2.0, abs=0.2)


def test_total_momentum_conserved_through_coupling(tmp_path):
    cfg = coupled_config(tmp_path, particle_count=80, seed=5)
    state = driver.initial_state(cfg)
    p0 = driver.total_momentum(state)
    for _ in range(50):
        state = driver.coupled_step(state, cfg, cfg.dt)
    drift = np.max(np.abs(driver.total_momentum(state) - p0))
    assert drift < 1e-13


def test_small_amplitude_flow_follows_heat_decay(tmp_path):
    cfg = coupled_config(
        tmp_path, particle_count=0, viscosity=1.0,
        init_profile=InitSpec(fluid="broadband",
                              fluid_params={"xi_cut": 3.5, "u_rms": 1e-9}))
    state = driver.initial_state(cfg)
    c0 = state.u.c.copy()
    steps = 50
    for _ in range(steps):
        state = driver.coupled_step(state, cfg, cfg.dt)
    ref, _ = oracle.heat_decay_reference(c0, cfg.box, steps * cfg.dt,
                                         cfg.viscosity)
    grid = __import__("csns.domain", fromlist=["wavenumbers"]) \
        .wavenumbers(cfg.box)
    exact = c0 * np.exp(-cfg.viscosity * grid.xi_sq * steps * cfg.dt)
    err = np.max(np.abs(state.u.c - exact)) / np.max(np.abs(c0))
    assert err < 1e-7


def test_adaptive_dt_value():
    u = np.zeros((2,) + BOX2.shape)
    u[0] = 2.0
    state = driver.SimState(0.0, 0, fluid.VelocityField.from_values(BOX2, u),
                            particles.ParticleEnsemble(np.zeros((0, 2)),
                                                       np.zeros((0, 2)),
                                                       np.zeros(0)))
    got = driver.adaptive_dt(state, 0.5, BOX2)
    assert got == pytest.approx(0.5 * BOX2.dx / 2.0)
    state.u = fluid.VelocityField.from_values(BOX2, np.zeros((2,) + BOX2.shape))
    assert driver.adaptive_dt(state, 0.5, BOX2) == pytest.approx(0.5)


def test_run_zero_time_emits_initial_row(tmp_path):
    cfg = coupled_config(tmp_path, t_end=0.0)
    res = driver.run(cfg)
    data = io.read_timeseries(res.series_path)
    assert data.shape == ()
    assert float(data["t"]) == 0.0
    assert res.n_steps == 0 and not res.interrupted


def test_run_emits_final_row_off_cadence(tmp_path):
    cfg = coupled_config(tmp_path, t_end=0.013,
                         output=OutputSpec(dir=str(tmp_path),
                                           series="series.csv",
                                           series_every_steps=5))
    res = driver.run(cfg)
    data = io.read_timeseries(res.series_path)
    assert data["t"].tolist() == pytest.approx([0.0, 0.005, 0.010, 0.013])


def test_run_adaptive_reaches_t_end(tmp_path):
    cfg = coupled_config(tmp_path, adaptive=True, t_end=0.02)
    res = driver.run(cfg)
    assert res.state.t == pytest.approx(0.02, abs=1e-12)
    data = io.read_timeseries(res.series_path)
    assert float(np.atleast_1d(data["t"])[-1]) == pytest.approx(0.02)


def test_run_writes_snapshots_and_checkpoints(tmp_path):
    cfg = coupled_config(tmp_path,
                         output=OutputSpec(dir=str(tmp_path),
                                           series="series.csv",
                                           series_every_steps=10,
                                           snapshot_every_steps=25,
                                           checkpoint_every_steps=25))
    res = driver.run(cfg)
    assert [p.name for p in res.snapshot_paths] == ["snapshot_00000025.csns",
                                                    "snapshot_00000050.csns"]
    snap = io.read_snapshot(res.snapshot_paths[0])
    assert snap["t"] == pytest.approx(0.025)
    assert snap["X"].shape == (40, 2)
    assert len(res.checkpoint_paths) == 2


def test_interrupted_resume_is_byte_identical(tmp_path):
    full = coupled_config(tmp_path / "full")
    r_full = driver.run(full)
    split = coupled_config(tmp_path / "split")
    r_split = driver.run(split, stop_after_steps=23)
    assert r_split.interrupted
    assert r_split.checkpoint_paths
    r_resumed = driver.resume_run(r_split.checkpoint_paths[-1])
    assert not r_resumed.interrupted
    assert (tmp_path / "full" / "series.csv").read_bytes() \
        == (tmp_path / "split" / "series.csv").read_bytes()
    assert np.array_equal(r_full.state.u.c, r_resumed.state.u.c)
    assert np.array_equal(r_full.state.ens.X, r_resumed.state.ens.X)
    assert np.array_equal(r_full.state.ens.V, r_resumed.state.ens.V)


def test_resume_from_stale_checkpoint_rewrites_tail(tmp_path):
    cfg = coupled_config(tmp_path, output=OutputSpec(
        dir=str(tmp_path), series="series.csv", series_every_steps=4,
        checkpoint_every_steps=20))
    r_full = driver.run(cfg)
    assert not r_full.interrupted
    finished = (tmp_path / "series.csv").read_bytes()
    # the completed file has rows past the checkpoint; they must be dropped
    r_again = driver.resume_run(r_full.checkpoint_paths[0])
    assert (tmp_path / "series.csv").read_bytes() == finished
    assert np.array_equal(r_full.state.u.c, r_again.state.u.c)
    assert np.array_equal(r_full.state.ens.V, r_again.state.ens.V)


def test_blowup_raises_and_keeps_partial_series(tmp_path):
    cfg = coupled_config(
        tmp_path, dt=0.5, t_end=40.0, particle_count=0, viscosity=1e-4,
        init_profile=InitSpec(fluid="broadband",
                              fluid_params={"xi_cut": 4.5, "u_rms": 20.0}),
        output=OutputSpec(dir=str(tmp_path), series="series.csv",
                          series_every_steps=1))
    with np.errstate(all="ignore"), pytest.raises(driver.SimulationUnstable,
                                                  match="nonfinite energy"):
        driver.run(cfg)
    assert (tmp_path / "series.csv").exists()


def test_run_series_passes_verification(tmp_path):
    cfg = coupled_config(tmp_path, t_end=0.1, particle_count=60)
    res = driver.run(cfg)
    checks = diagnostics.verify_timeseries(io.read_timeseries(res.series_path))
    assert all(c.passed for c in checks), \
        [(c.name, c.detail) for c in checks if not c.passed]
    assert res.max_energy_step_increase <= 1e-10
