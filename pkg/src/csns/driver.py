"""Time integration of the coupled system.

One integrating-factor Heun step advances the fluid modes and the particle
characteristics together: the predictor stage sees the time-t drag force and
moment fields, the corrector stage the predicted ones, so the pair converges
at second order and reduces bit-for-bit to the pure fluid stepper when no
particles are present.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics, fluid, initial, io, particles
from .domain import wavenumbers


class SimulationUnstable(RuntimeError):
    pass


@dataclass(eq=False)
class SimState:
    t: float
    step_index: int
    u: fluid.VelocityField
    ens: particles.ParticleEnsemble
    moments: particles.MomentFields = None


def ensure_moments(state, kernel, box):
    """Fill the deposited and smoothed moment fields if they are stale."""
    if state.moments is None:
        state.moments = particles.convolve_kernel(
            particles.deposit_moments(state.ens, box), kernel, box)
    return state.moments


def total_momentum(state):
    box = state.u.box
    return fluid.fluid_momentum(state.u.c, box) \
        + particles.particle_momentum(state.ens)


def coupled_step(state, cfg, dt):
    """Advance fluid and particles by one shared Heun step."""
    box = cfg.box
    grid = wavenumbers(box)
    c0 = state.u.c
    ens = state.ens
    n = ens.n
    couple = cfg.coupling_enabled and n > 0

    # one stencil per stage serves the deposit and every field read
    st0 = particles.cic_stencil(ens.X, box) if n else None
    if state.moments is None:
        state.moments = particles.convolve_kernel(
            particles.deposit_moments(ens, box, st0), cfg.kernel, box)

    g0 = fluid.nonlinear_term(c0, box)
    if couple or n:
        u0 = state.u.values()
    if couple:
        h0 = fluid.leray_project(fluid.forward_transform(
            particles.drag_field(state.moments, u0, box), box), box)
        g0 = g0 + h0

    if n:
        rx0, rv0 = particles.stage_rates(ens.X, ens.V, state.moments, u0,
                                         box, st0)
        star = particles.ParticleEnsemble(
            particles.wrap_positions(ens.X + dt * rx0, box),
            ens.V + dt * rv0, ens.w)
        st1 = particles.cic_stencil(star.X, box)
        m_star = particles.convolve_kernel(
            particles.deposit_moments(star, box, st1), cfg.kernel, box)
    stash = {}

    def g_of(c_star):
        g = fluid.nonlinear_term(c_star, box)
        if couple or n:
            u_star = fluid.inverse_transform(c_star, box)
        if couple:
            h_star = fluid.leray_project(fluid.forward_transform(
                particles.drag_field(m_star, u_star, box), box), box)
            g = g + h_star
        if n:
            stash["rates"] = particles.stage_rates(star.X, star.V, m_star,
                                                   u_star, box, st1)
        return g

    c1 = fluid.if_heun(c0, dt, cfg.viscosity, grid, g0, g_of)

    if n:
        rx1, rv1 = stash["rates"]
        new_ens = particles.ParticleEnsemble(
            particles.wrap_positions(ens.X + 0.5 * dt * (rx0 + rx1), box),
            ens.V + 0.5 * dt * (rv0 + rv1), ens.w)
    else:
        new_ens = ens
    return SimState(state.t + dt, state.step_index + 1,
                    fluid.VelocityField(box, c1), new_ens)


def adaptive_dt(state, cfl, box):
    """Advective CFL bound, capped at one."""
    u_inf = fluid.max_speed(state.u.values())
    return cfl * min(box.dx / max(u_inf, 1e-12), 1.0)


def initial_state(cfg):
    """Sample the configured initial data; fluid and particles get
    independent streams spawned from the run seed."""
    fluid_seed, particle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    c = initial.fluid_initial(cfg.init_profile, cfg.box, fluid_seed)
    ens = particles.sample_initial(cfg.init_profile, cfg.particle_count,
                                   cfg.r0, cfg.box, particle_seed)
    state = SimState(0.0, 0, fluid.VelocityField(cfg.box, c), ens)
    ensure_moments(state, cfg.kernel, cfg.box)
    return state


@dataclass(eq=False)
class RunResult:
    state: SimState
    series_path: Path
    snapshot_paths: list
    checkpoint_paths: list
    e0: float
    n_steps: int
    max_energy_step_increase: float
    interrupted: bool


def run(cfg, stop_after_steps=None):
    """Integrate from the configured initial data to t_end.

    Writes the diagnostics series (and any snapshots/checkpoints) under the
    output directory.  stop_after_steps ends the segment early with a forced
    checkpoint, leaving the series resumable.
    """
    outdir = Path(cfg.output.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    state = initial_state(cfg)
    rho_sup = float(np.max(state.moments.rho)) if state.ens.n else 0.0
    c_sq = 3.0 * (1.0 + rho_sup)
    recorder = diagnostics.SeriesRecorder(cfg.viscosity, c_sq)
    writer = io.TimeseriesWriter(outdir / cfg.output.series,
                                 diagnostics.csv_columns(cfg.box.d), c_sq)
    writer.add_row(recorder.record(state))
    return _advance(cfg, state, recorder, writer, stop_after_steps)


def resume_run(checkpoint_path, stop_after_steps=None):
    """Continue a checkpointed run; the finished series is byte-identical
    to the one an uninterrupted run would have produced."""
    saved = io.read_checkpoint(checkpoint_path)
    cfg = saved["cfg"]
    state = SimState(saved["t"], saved["step_index"],
                     fluid.VelocityField(cfg.box, saved["c"]),
                     particles.ParticleEnsemble(saved["X"], saved["V"],
                                                saved["w"]))
    ensure_moments(state, cfg.kernel, cfg.box)
    recorder = diagnostics.SeriesRecorder.from_state_dict(
        saved["recorder_state"])
    outdir = Path(cfg.output.dir)
    writer = io.TimeseriesWriter.restore(outdir / cfg.output.series,
                                         diagnostics.csv_columns(cfg.box.d),
                                         saved["writer_state"])
    return _advance(cfg, state, recorder, writer, stop_after_steps)


def _advance(cfg, state, recorder, writer, stop_after_steps):
    outdir = Path(cfg.output.dir)
    out = cfg.output
    snapshots = []
    checkpoints = []
    e0 = recorder.ledger.e0
    prev_e = diagnostics.energy(state)[0]
    max_rise = 0.0
    n_steps = 0
    t_tol = 1e-12 * max(1.0, abs(cfg.t_end))

    def checkpoint_now():
        path = outdir / f"checkpoint_{state.step_index:08d}.npz"
        io.write_checkpoint(path, cfg, state, recorder.state_dict(),
                            writer.state_dict())
        checkpoints.append(path)
        return path

    while state.t < cfg.t_end - t_tol:
        dt = cfg.dt
        if cfg.adaptive:
            dt = min(dt, adaptive_dt(state, cfg.cfl, cfg.box))
        dt = min(dt, cfg.t_end - state.t)
        state = coupled_step(state, cfg, dt)
        n_steps += 1

        e_now = diagnostics.energy(state)[0]
        if not np.isfinite(e_now):
            writer.suspend()
            where = f" (last checkpoint {checkpoints[-1]})" if checkpoints \
                else ""
            raise SimulationUnstable(
                f"nonfinite energy at t = {state.t:.6g}, "
                f"step {state.step_index}; partial series kept at "
                f"{writer.path}{where}")
        max_rise = max(max_rise, e_now - prev_e)
        prev_e = e_now

        final = state.t >= cfg.t_end - t_tol
        cadence = out.series_every_steps > 0 \
            and state.step_index % out.series_every_steps == 0
        if cadence or final:
            ensure_moments(state, cfg.kernel, cfg.box)
            writer.add_row(recorder.record(state))
        if out.snapshot_every_steps > 0 \
                and state.step_index % out.snapshot_every_steps == 0:
            path = outdir / f"snapshot_{state.step_index:08d}.csns"
            ensure_moments(state, cfg.kernel, cfg.box)
            io.write_snapshot(path, cfg.box, state.t, state.u.values(),
                              state.ens.X, state.ens.V, state.ens.w)
            snapshots.append(path)
        if out.checkpoint_every_steps > 0 \
                and state.step_index % out.checkpoint_every_steps == 0:
            checkpoint_now()
        if stop_after_steps is not None and n_steps >= stop_after_steps \
                and state.t < cfg.t_end - t_tol:
            if not checkpoints or not checkpoints[-1].name.endswith(
                    f"{state.step_index:08d}.npz"):
                checkpoint_now()
            writer.suspend()
            return RunResult(state, writer.path, snapshots, checkpoints,
                             e0, n_steps, max_rise, interrupted=True)

    writer.close()
    return RunResult(state, writer.path, snapshots, checkpoints,
                     e0, n_steps, max_rise, interrupted=False)
