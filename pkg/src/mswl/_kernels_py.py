"""Pure-numpy stepping kernels.

These are the reference implementations of the hot loops; `mswl._kernels_cy`
mirrors them exactly and `mswl.kernels` picks whichever is available at
import time.  Keep the two in sync: the parity test compares them node by
node.

Update rule for all steppers (leapfrog with Rayleigh damping sigma):

    (u+ - 2u + u-)/dt^2 = Lap u - pot*u + src - sigma*(u+ - u-)/(2dt)

solved explicitly for u+.  Boundary nodes are homogeneous Dirichlet; the
rho = 0 row of the axisymmetric stepper is the regularized axis where the
transverse Laplacian of a smooth axisymmetric field equals 4(u1 - u0)/drho^2.
"""

import numpy as np

__all__ = ["axisym_step", "cart1d_step", "cart3d_step", "uniform_table_eval"]


def axisym_step(u_prev, u, pot, src, sigma, dx, dr, dt, out):
    """One leapfrog step on an (x1, rho) grid, rho_j = j*dr."""
    nr = u.shape[1]
    idx2 = 1.0 / (dx * dx)
    idr2 = 1.0 / (dr * dr)
    lap = np.zeros_like(u)
    lap[1:-1, :] = (u[2:, :] - 2.0 * u[1:-1, :] + u[:-2, :]) * idx2
    j = np.arange(1, nr - 1)
    lap[:, 1:-1] += (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) * idr2 \
        + (u[:, 2:] - u[:, :-2]) * (idr2 / (2.0 * j))
    lap[:, 0] += 4.0 * (u[:, 1] - u[:, 0]) * idr2
    half = 0.5 * dt * sigma
    num = 2.0 * u - (1.0 - half) * u_prev + (dt * dt) * (lap - pot * u + src)
    out[:] = num / (1.0 + half)
    out[0, :] = 0.0
    out[-1, :] = 0.0
    out[:, -1] = 0.0
    return out


def cart1d_step(u_prev, u, pot, src, sigma, dx, dt, out):
    """One leapfrog step on a 1d interval with Dirichlet ends."""
    idx2 = 1.0 / (dx * dx)
    lap = np.zeros_like(u)
    lap[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) * idx2
    half = 0.5 * dt * sigma
    num = 2.0 * u - (1.0 - half) * u_prev + (dt * dt) * (lap - pot * u + src)
    out[:] = num / (1.0 + half)
    out[0] = 0.0
    out[-1] = 0.0
    return out


def cart3d_step(u_prev, u, pot, src, sigma, dx, dt, out):
    """One leapfrog step on a cubic grid (numpy only, for small cross-checks)."""
    idx2 = 1.0 / (dx * dx)
    lap = np.zeros_like(u)
    c = u[1:-1, 1:-1, 1:-1]
    lap[1:-1, 1:-1, 1:-1] = (
        u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1]
        + u[1:-1, 2:, 1:-1] + u[1:-1, :-2, 1:-1]
        + u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2]
        - 6.0 * c
    ) * idx2
    half = 0.5 * dt * sigma
    num = 2.0 * u - (1.0 - half) * u_prev + (dt * dt) * (lap - pot * u + src)
    out[:] = num / (1.0 + half)
    out[0, :, :] = out[-1, :, :] = 0.0
    out[:, 0, :] = out[:, -1, :] = 0.0
    out[:, :, 0] = out[:, :, -1] = 0.0
    return out


def uniform_table_eval(ftab, dr_tab, gamma, xc, x1, rho, out):
    """Evaluate a radial table at sqrt(gamma^2 (x1-xc)^2 + rho^2).

    ftab holds samples on the uniform radial grid k*dr_tab; evaluation is
    linear interpolation, clamped to ftab[-1] beyond the table.
    """
    xs = gamma * (x1[:, None] - xc)
    r = np.sqrt(xs * xs + rho[None, :] ** 2)
    pos = r * (1.0 / dr_tab)
    idx = np.minimum(pos.astype(np.int64), ftab.size - 2)
    frac = np.minimum(pos - idx, 1.0)
    out[:] = ftab[idx] * (1.0 - frac) + ftab[idx + 1] * frac
    return out
