"""Named initial fluid fields, built directly in spectral form."""

from __future__ import annotations

import math

import numpy as np

from . import fluid
from .domain import wavenumbers


def broadband_field(box, xi_cut, u_rms, seed):
    """Solenoidal field with equal energy on every mode of 0 < |xi| <= xi_cut.

    Seeded white noise fixes phases and polarizations; the moduli are then
    flattened so the shell spectrum mimics whole-space data that is merely
    integrable at low frequency, and the total is rescaled to the exact rms.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    grid = wavenumbers(box)
    noise = rng.standard_normal((box.d,) + box.shape)
    c = fluid.leray_project(fluid.forward_transform(noise, box), box)
    ball = (grid.xi_sq > 0) & (grid.xi_sq <= xi_cut * xi_cut)
    mag = np.sqrt(np.sum(c.real**2 + c.imag**2, axis=0))
    safe = np.where(mag > 0, mag, 1.0)
    c = np.where(ball & (mag > 0), c / safe, 0.0)
    current = fluid.spectral_l2sq(c, box)
    if current == 0.0:
        raise ValueError("no spectral modes inside |xi| <= xi_cut")
    return c * math.sqrt(u_rms * u_rms * box.volume / current)


def fluid_initial(init, box, seed):
    """Spectral initial velocity for a named profile."""
    params = init.fluid_params
    if init.fluid == "zero":
        return np.zeros((box.d,) + box.spectral_shape, dtype=complex)
    if init.fluid == "uniform":
        c = np.zeros((box.d,) + box.spectral_shape, dtype=complex)
        c[(slice(None),) + (0,) * box.d] = np.asarray(params["velocity"], float)
        return c
    if init.fluid == "taylor_green":
        amp = params.get("amplitude", 1.0)
        x = np.arange(box.N) * box.dx
        xx, yy = np.meshgrid(x, x, indexing="ij")
        u = np.stack([amp * np.cos(xx) * np.sin(yy),
                      -amp * np.sin(xx) * np.cos(yy)])
        return fluid.forward_transform(u, box)
    if init.fluid == "broadband":
        return broadband_field(box, params["xi_cut"], params["u_rms"], seed)
    raise ValueError(f"unknown fluid profile {init.fluid!r}")
