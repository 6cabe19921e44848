"""Output-step functionals: energies, dissipation channels, the running
energy ledger, inequality residuals, and the decay-exponent fitter.

Everything is a pure function of state snapshots or of the recorded series,
so a failing check names exactly one violated estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fluid, particles

TW_EXPONENT = 17.0 / 16.0


def csv_columns(d):
    """Diagnostic record schema, in column order."""
    cols = ["t", "E", "E_fluid", "E_kinetic", "grad_rate", "drag_rate",
            "align_rate", "ledger_residual", "R", "b_inf", "u_inf",
            "rho_l1", "rho_l2", "rho_linf", "momentum_x", "momentum_y"]
    if d == 3:
        cols.append("momentum_z")
    cols += ["lowfreq_energy", "fs_residual", "alignment_gap", "tw_drag_cum"]
    return cols


def energy(state):
    """(E, E_fluid, E_kinetic)."""
    e_fluid = fluid.kinetic_energy(state.u.c, state.u.box)
    ens = state.ens
    e_kin = 0.5 * float(np.sum(ens.w * np.sum(ens.V * ens.V, axis=1))) \
        if ens.n else 0.0
    return e_fluid + e_kin, e_fluid, e_kin


def dissipation_terms(state, nu=1.0, u_phys=None):
    """(grad_rate, drag_rate, align_rate) for the energy balance.

    The drag channel interpolates |u|^2 separately from u, which is exactly
    the rate the semi-discrete system dissipates through the exchange term;
    it dominates the plain gap by the stencil's Jensen defect.  align_rate is
    the raw double sum (the ledger halves it).
    """
    box = state.u.box
    grad = fluid.dissipation_rate(state.u.c, box, nu)
    ens = state.ens
    if ens.n == 0:
        return grad, 0.0, 0.0
    if u_phys is None:
        u_phys = state.u.values()
    m = state.moments
    u_at = particles.interpolate_velocity(u_phys, ens.X, box)
    usq_at = particles.interpolate(np.sum(u_phys * u_phys, axis=0), ens.X, box)
    vsq = np.sum(ens.V * ens.V, axis=1)
    drag = float(np.sum(ens.w * (usq_at - 2.0 * np.sum(u_at * ens.V, axis=1)
                                 + vsq)))
    a_at = particles.interpolate(m.a, ens.X, box)
    b_at = particles.interpolate(m.b, ens.X, box).T
    ce_at = particles.interpolate(m.c_e, ens.X, box)
    align = float(np.sum(ens.w * (a_at * vsq
                                  - 2.0 * np.sum(b_at * ens.V, axis=1)
                                  + ce_at)))
    return grad, drag, align


def alignment_gap(state, u_phys=None):
    """Relative kinetic energy sum w_i |V_i - u(X_i)|^2."""
    ens = state.ens
    if ens.n == 0:
        return 0.0
    if u_phys is None:
        u_phys = state.u.values()
    u_at = particles.interpolate_velocity(u_phys, ens.X, state.u.box)
    diff = ens.V - u_at
    return float(np.sum(ens.w * np.sum(diff * diff, axis=1)))


def b_field_sup(m):
    """Grid sup of |b| (euclidean norm over components)."""
    return float(np.sqrt(np.max(np.sum(m.b * m.b, axis=0))))


@dataclass
class EnergyLedger:
    """Running balance: E(t) plus time-integrated dissipation channels vs E0.

    Channel integrals use the trapezoid rule at the output cadence.  The
    alignment channel stores the raw double sum; the balance halves it.
    """

    e0: float
    e: float
    t: float
    cum_grad: float = 0.0
    cum_drag: float = 0.0
    cum_align: float = 0.0
    last_grad: float = 0.0
    last_drag: float = 0.0
    last_align: float = 0.0

    @classmethod
    def start(cls, e0, t, grad, drag, align):
        return cls(e0=e0, e=e0, t=t,
                   last_grad=grad, last_drag=drag, last_align=align)

    def advance(self, t, e, grad, drag, align):
        h = t - self.t
        self.cum_grad += 0.5 * h * (self.last_grad + grad)
        self.cum_drag += 0.5 * h * (self.last_drag + drag)
        self.cum_align += 0.5 * h * (self.last_align + align)
        self.t = t
        self.e = e
        self.last_grad, self.last_drag, self.last_align = grad, drag, align

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("e0", "e", "t", "cum_grad", "cum_drag", "cum_align",
                 "last_grad", "last_drag", "last_align")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def energy_identity_residual(ledger):
    """E(t) + cum_grad + cum_drag + cum_align/2 - E0; zero for the continuum."""
    return ledger.e + ledger.cum_grad + ledger.cum_drag \
        + 0.5 * ledger.cum_align - ledger.e0


def lagrange_derivative(ts, fs, at):
    """Derivative of the quadratic through three (t, f) samples, at `at`.

    Handles non-uniform spacing; centered when `at` is the middle sample,
    one-sided at the ends.
    """
    t0, t1, t2 = ts
    f0, f1, f2 = fs
    return (f0 * (2 * at - t1 - t2) / ((t0 - t1) * (t0 - t2))
            + f1 * (2 * at - t0 - t2) / ((t1 - t0) * (t1 - t2))
            + f2 * (2 * at - t0 - t1) / ((t2 - t0) * (t2 - t1)))


def splitting_radius(t, c_sq):
    """Shrinking frequency-splitting radius sqrt(c^2/(t + c^2))."""
    return math.sqrt(c_sq / (t + c_sq))


def fs_residual(t, e, dedt, lowfreq, c_sq):
    """Residual of the frequency-splitting inequality.

    RHS minus LHS of  dE/dt + 3E/(t+c^2) <= c^2/(t+c^2) * lowfreq(r(t));
    nonnegative when the decay inequality holds at this instant.
    """
    denom = t + c_sq
    return c_sq / denom * lowfreq - dedt - 3.0 * e / denom


def time_weighted_drag(t, drag_rate):
    """Cumulative trapezoid of (1+t)^{17/16} * drag_rate; starts at zero."""
    t = np.asarray(t, dtype=float)
    g = (1.0 + t) ** TW_EXPONENT * np.asarray(drag_rate, dtype=float)
    if t.size == 0:
        return np.zeros(0)
    inc = 0.5 * np.diff(t) * (g[1:] + g[:-1])
    return np.concatenate([[0.0], np.cumsum(inc)])


def r_bound_check(t, r, b_inf, u_inf, e_kinetic):
    """Margins of the two a priori bounds along a series.

    Returns (r_margin, b_margin): the worst slack of
    R(t) <= R(0) + integral of (||b||_inf + ||u||_inf), and of
    ||b||_inf <= sqrt(2 E_kinetic).
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    b_inf = np.asarray(b_inf, dtype=float)
    u_inf = np.asarray(u_inf, dtype=float)
    g = b_inf + u_inf
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (g[1:] + g[:-1]))])
    r_margin = float(np.min(r[0] + cum - r))
    b_margin = float(np.min(np.sqrt(2.0 * np.asarray(e_kinetic, float)) - b_inf))
    return r_margin, b_margin


@dataclass(frozen=True)
class DecayFit:
    t_min: float
    t_max: float
    slope: float
    intercept: float
    r_squared: float
    n_samples: int
    warnings: tuple


def fit_decay_exponent(t, e, t_min, t_max, box_length=None, nu=1.0):
    """Least-squares slope of log E against log(1+t) on a window.

    Raises on windows with fewer than 10 samples or nonpositive energies.
    Warns when the window leaves the spectral-gap validity range
    t <= (L/4)^2/nu, or spans less than a factor 5 in time.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    sel = (t >= t_min) & (t <= t_max)
    n = int(np.sum(sel))
    if n < 10:
        raise ValueError(
            f"decay window [{t_min}, {t_max}] holds {n} samples; need >= 10")
    ts, es = t[sel], e[sel]
    if np.any(es <= 0.0):
        raise ValueError("nonpositive energies in decay window")
    x = np.log1p(ts)
    y = np.log(es)
    a = np.vstack([x, np.ones_like(x)]).T
    coeff, *_ = np.linalg.lstsq(a, y, rcond=None)
    slope, intercept = float(coeff[0]), float(coeff[1])
    ss_res = float(np.sum((y - a @ coeff) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    warns = []
    if box_length is not None:
        t_valid = (box_length / 4.0) ** 2 / nu
        if t_max > t_valid:
            warns.append(f"window end {t_max:g} exceeds the box validity "
                         f"time {t_valid:g}; decay turns exponential there")
    if t_max < 5.0 * t_min:
        warns.append("window spans less than a factor 5 in time; "
                     "the fitted exponent is poorly constrained")
    return DecayFit(float(t_min), float(t_max), slope, intercept,
                    r_squared, n, tuple(warns))


class SeriesRecorder:
    """Builds one diagnostics row per output step.

    Owns the energy ledger and the weighted-drag accumulator, so rows carry
    running integrals consistent with the output cadence.  fs_residual is
    left NaN here; the series writer fills it once neighbouring rows exist.
    """

    def __init__(self, nu, c_sq):
        self.nu = nu
        self.c_sq = c_sq
        self.ledger = None
        self.tw_cum = 0.0
        self._tw_last = None

    def record(self, state):
        box = state.u.box
        u_phys = state.u.values()
        e, e_fluid, e_kin = energy(state)
        grad, drag, align = dissipation_terms(state, self.nu, u_phys=u_phys)
        if self.ledger is None:
            self.ledger = EnergyLedger.start(e, state.t, grad, drag, align)
        else:
            self.ledger.advance(state.t, e, grad, drag, align)

        tw_g = (1.0 + state.t) ** TW_EXPONENT * drag
        if self._tw_last is not None:
            t_prev, g_prev = self._tw_last
            self.tw_cum += 0.5 * (state.t - t_prev) * (g_prev + tw_g)
        self._tw_last = (state.t, tw_g)

        m = state.moments
        rho_l1, rho_l2, rho_linf = particles.density_lp_norms(m.rho, box)
        mom = fluid.fluid_momentum(state.u.c, box) \
            + particles.particle_momentum(state.ens)
        r = splitting_radius(state.t, self.c_sq)
        row = {
            "t": state.t,
            "E": e,
            "E_fluid": e_fluid,
            "E_kinetic": e_kin,
            "grad_rate": grad,
            "drag_rate": drag,
            "align_rate": align,
            "ledger_residual": energy_identity_residual(self.ledger),
            "R": particles.v_support_radius(state.ens),
            "b_inf": b_field_sup(m),
            "u_inf": fluid.max_speed(u_phys),
            "rho_l1": rho_l1,
            "rho_l2": rho_l2,
            "rho_linf": rho_linf,
            "momentum_x": mom[0],
            "momentum_y": mom[1],
            "lowfreq_energy": fluid.low_freq_energy(state.u.c, box, r),
            "fs_residual": float("nan"),
            "alignment_gap": alignment_gap(state, u_phys=u_phys),
            "tw_drag_cum": self.tw_cum,
        }
        if box.d == 3:
            row["momentum_z"] = mom[2]
        return row

    def state_dict(self):
        return {
            "nu": self.nu,
            "c_sq": self.c_sq,
            "ledger": None if self.ledger is None else self.ledger.to_dict(),
            "tw_cum": self.tw_cum,
            "tw_last": list(self._tw_last) if self._tw_last else None,
        }

    @classmethod
    def from_state_dict(cls, d):
        rec = cls(d["nu"], d["c_sq"])
        if d["ledger"] is not None:
            rec.ledger = EnergyLedger.from_dict(d["ledger"])
        rec.tw_cum = d["tw_cum"]
        rec._tw_last = tuple(d["tw_last"]) if d["tw_last"] else None
        return rec


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _col(data, name):
    return np.atleast_1d(np.asarray(data[name], dtype=float))


def verify_timeseries(data):
    """Run every per-series invariant on a recorded diagnostics table.

    `data` is a structured array with the csv_columns fields.  Returns a list
    of CheckResult; all-pass means every conservation law, sign condition,
    and inequality residual held along the run.
    """
    checks = []
    t = _col(data, "t")
    e = _col(data, "E")
    e0 = e[0]
    scale = max(1.0, abs(e0))

    mass = _col(data, "rho_l1")
    spread = float(np.max(mass) - np.min(mass))
    # deposition preserves mass exactly; only bincount summation order varies
    checks.append(CheckResult(
        "mass_constant", spread <= 1e-13 * max(1.0, float(np.max(mass))),
        f"L1 density spread {spread:.3e}"))

    rise = float(np.max(np.diff(e))) if e.size > 1 else 0.0
    checks.append(CheckResult(
        "energy_monotone", rise <= 1e-10,
        f"largest energy increase between records {rise:.3e}"))

    worst_rate = min(float(np.min(_col(data, name)))
                     for name in ("grad_rate", "drag_rate", "align_rate"))
    checks.append(CheckResult(
        "rates_nonnegative", worst_rate >= -1e-12 * scale,
        f"most negative dissipation rate {worst_rate:.3e}"))

    res = float(np.max(np.abs(_col(data, "ledger_residual"))))
    bound = 1e-2 * scale if e0 > 0 else 1e-12
    checks.append(CheckResult(
        "ledger_residual", res <= bound,
        f"max |residual| {res:.3e} vs bound {bound:.3e}"))

    fs = _col(data, "fs_residual")
    have = np.isfinite(fs)
    fs_margin = float(np.min(fs[have] + 1e-4 * e[have])) if np.any(have) else 0.0
    checks.append(CheckResult(
        "fourier_splitting", fs_margin >= 0.0,
        f"worst residual margin {fs_margin:.3e}"))

    b_inf = _col(data, "b_inf")
    e_kin = _col(data, "E_kinetic")
    r_margin, b_margin = r_bound_check(t, _col(data, "R"), b_inf,
                                       _col(data, "u_inf"), e_kin)
    checks.append(CheckResult(
        "support_radius_bound", r_margin >= -1e-3,
        f"worst margin {r_margin:.3e}"))
    checks.append(CheckResult(
        "momentum_field_sup", b_margin >= -1e-10,
        f"worst sqrt(2 E_kin) - ||b||_inf margin {b_margin:.3e}"))

    names = ["momentum_x", "momentum_y"]
    if "momentum_z" in (data.dtype.names or ()):
        names.append("momentum_z")
    drift = max(float(np.max(np.abs(_col(data, nm) - _col(data, nm)[0])))
                for nm in names)
    checks.append(CheckResult(
        "momentum_constant", drift <= 1e-9,
        f"max component drift {drift:.3e}"))

    tw = _col(data, "tw_drag_cum")
    tw_drop = float(np.min(np.diff(tw))) if tw.size > 1 else 0.0
    checks.append(CheckResult(
        "weighted_drag_monotone", tw_drop >= -1e-12,
        f"most negative increment {tw_drop:.3e}"))

    rho0 = _col(data, "rho_linf")[0]
    rhs = 2.0 * (1.0 + rho0) * (2.0 * _col(data, "E_fluid")
                                + _col(data, "alignment_gap"))
    eq_margin = float(np.min(rhs - e))
    checks.append(CheckResult(
        "energy_equivalence", eq_margin >= -1e-9 * scale,
        f"worst 2(1+rho0)(||u||^2 + gap) - E margin {eq_margin:.3e}"))

    return checks
