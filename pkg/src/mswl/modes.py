"""Bound states of the linearized operators and unstable-mode shooting.

A soliton whose linearization -lap + V + 5W^4 has a negative eigenvalue
-lambda^2 carries the mode w with growth e^{lambda t}; a perturbation h
decomposes as h = a(t) w + b(tau) m_v + r with the traveler's mode m
pulled back through its Lorentz frame and tau its comoving time.  The
bounded branch is selected by the scattering stability condition

    a(t0) + adot(t0)/lambda + (1/lambda) int_{t0} e^{-lambda (s-t0)} N ds = 0

(exponentials rebased to t0, the unique choice whose N = 0 case is the
pure decaying branch).  The shooting loop enforces the condition on the
step-by-step discrete recursion of the solver rather than its continuum
limit: the projection a^n = <l, u^n> onto a left eigenvector l of the
stepping stencil obeys exactly

    a^{n+1} - 2 a^n + a^{n-1} = dt^2 (lambda_d^2 a^n + N^n),

so the growing component is cancelled to roundoff, not to O(dt^2).  The
traveler's b condition is applied wholly in the comoving frame on slab
samples of the stored run; its quadrature lives on interpolated frames
and is accurate to the storage cadence rather than the step.

Mode amplitudes must sit well inside the sponge: the recursion above
ignores the damping layer, which is valid while the eigenfunctions are
exponentially small there (Agmon decay at rate >= 0.8 lambda).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.sparse.linalg import eigsh

from .evolution import (IterationTrace, SolverConfig, WaveState,
                        duhamel_iterate, iterate_to_fixed_point,
                        pair_potentials, s_norm)
from .fields import cell_volumes, tabulate_field
from .interaction import build_terms
from .norms import mixed_norm

__all__ = [
    "BoundState", "ModeTrack", "StableVelocity", "GridModes",
    "ShootingResult", "NoBoundState", "PullbackSlabTooNarrow",
    "TailNotControlled", "ManifoldShootFailed", "soliton_linearization",
    "bound_state", "bound_states", "project_modes",
    "stable_initial_velocity", "grid_unstable_modes", "ModeRecorder",
    "discrete_shot_velocity", "shooting_iteration",
]


class NoBoundState(RuntimeError):
    """The linearized operator has no negative eigenvalue."""


class PullbackSlabTooNarrow(RuntimeError):
    """The stored run cannot cover one full comoving slice."""


class TailNotControlled(RuntimeError):
    """The driving series does not decay, so the condition integral
    cannot be truncated."""


class ManifoldShootFailed(RuntimeError):
    """Velocity updates stopped contracting."""

    def __init__(self, message, ratios=()):
        super().__init__(message)
        self.ratios = tuple(ratios)


def soliton_linearization(V, state):
    """Radial potential V + 5 Q^4 of the linearization about a state."""

    def q_of_r(r):
        return V.eval(r) + 5.0 * state.interp(r) ** 4

    return q_of_r


@dataclass(frozen=True)
class BoundState:
    """Radial eigenfunction of -lap + V_lin at eigenvalue -lam^2 < 0.

    `values` holds w(r) on `grid` (r = 0 included), normalized to unit
    L^2 norm in the 4 pi r^2 measure.  `decay_rate` is the fitted Agmon
    exponent of the outer tail and `residual` the discrete L^2 residual
    of the eigenvalue equation.
    """

    grid: np.ndarray
    values: np.ndarray
    lam: float
    decay_rate: float
    residual: float

    @property
    def eigenvalue(self) -> float:
        return -self.lam ** 2

    def interp(self, r):
        return np.interp(r, self.grid, self.values, right=0.0)

    def validate(self, tol_norm: float = 1.0e-8,
                 tol_residual: float = 1.0e-6) -> None:
        norm = 4.0 * np.pi * np.trapezoid(
            self.values ** 2 * self.grid ** 2, self.grid)
        if abs(norm - 1.0) > tol_norm:
            raise ValueError(f"bound state norm off by {norm - 1.0:.3g}")
        if self.residual > tol_residual:
            raise ValueError(f"bound state residual {self.residual:.3g}")
        if self.decay_rate < 0.8 * self.lam:
            raise ValueError("bound state decay below the Agmon rate")


def _potential_callable(V_lin):
    return V_lin.eval if hasattr(V_lin, "eval") else V_lin


def _radial_eigensystem(V_lin, r_max, n):
    dr = r_max / n
    r = dr * np.arange(1, n)
    q = _potential_callable(V_lin)(r)
    d = 2.0 / dr ** 2 + q
    e = np.full(n - 2, -1.0 / dr ** 2)
    return r, dr, d, e


def _inverse_iterate(d, e, theta):
    """Eigenvector of the tridiagonal (d, e) nearest theta."""
    n = d.size
    shift = theta + max(abs(theta), 1.0) * 1.0e-9
    ab = np.zeros((3, n))
    ab[0, 1:] = e
    ab[1, :] = d - shift
    ab[2, :-1] = e
    rng = np.random.default_rng(12345)
    phi = rng.standard_normal(n)
    phi /= np.linalg.norm(phi)
    for _ in range(3):
        phi = solve_banded((1, 1), ab, phi)
        phi /= np.linalg.norm(phi)
    theta = float(phi @ (d * phi) + 2.0 * phi[1:] @ (e * phi[:-1]))
    return phi, theta


def _build_bound_state(r, dr, d, e, theta):
    phi, theta = _inverse_iterate(d, e, theta)
    if phi[np.argmax(np.abs(phi))] < 0.0:
        phi = -phi
    # unit L^2 in the 4 pi r^2 measure: w = phi / r, int w^2 4 pi r^2 dr
    phi /= math.sqrt(4.0 * np.pi * dr) * np.linalg.norm(phi)
    res_vec = d * phi - theta * phi
    res_vec[:-1] += e * phi[1:]
    res_vec[1:] += e * phi[:-1]
    residual = math.sqrt(4.0 * np.pi * dr) * float(np.linalg.norm(res_vec))
    lam = math.sqrt(-theta)
    w = phi / r
    # Agmon fit on the outer half of the resolved support: beyond
    # 1e-12 of peak the eigenvector is solver noise, and the last few
    # percent of the grid feel the Dirichlet wall
    w_abs = np.abs(w)
    floor = 1.0e-12 * float(w_abs.max())
    sig = np.nonzero(w_abs > floor)[0]
    r_out = r[sig[-1]]
    mask = (r > 0.5 * r_out) & (r < min(0.97 * r[-1], r_out)) & (w_abs > floor)
    if mask.sum() < 8:
        raise ValueError("bound-state tail unresolved on this grid")
    slope = np.polyfit(r[mask], np.log(np.abs(w[mask])), 1)[0]
    grid = np.concatenate(([0.0], r))
    values = np.concatenate(([phi[0] / r[0]], w))
    return BoundState(grid=grid, values=values, lam=lam,
                      decay_rate=float(-slope), residual=residual)


def bound_state(V_lin, r_max: float = 60.0, n: int = 6000) -> BoundState:
    """Deepest s-wave eigenpair of -lap + V_lin by inverse iteration.

    The half-line substitution phi = r u reduces the radial operator to
    a symmetric tridiagonal matrix; the bottom eigenvalue seeds a
    shifted inverse iteration that converges in a few solves.  Raises
    "no bound state" when the bottom of the spectrum is nonnegative.
    """
    r, dr, d, e = _radial_eigensystem(V_lin, r_max, n)
    theta = float(eigh_tridiagonal(d, e, select="i",
                                   select_range=(0, 0),
                                   eigvals_only=True)[0])
    if theta >= -1.0e-12:
        raise NoBoundState("no bound state")
    return _build_bound_state(r, dr, d, e, theta)


def bound_states(V_lin, r_max: float = 60.0, n: int = 6000) -> list:
    """All s-wave bound states, deepest first; empty list if none."""
    r, dr, d, e = _radial_eigensystem(V_lin, r_max, n)
    lo = min(0.0, float((d - 2.0 / dr ** 2).min())) - 1.0
    thetas = eigh_tridiagonal(d, e, select="v",
                              select_range=(lo, -1.0e-12),
                              eigvals_only=True)
    return [_build_bound_state(r, dr, d, e, float(t)) for t in thetas]


def _fitted_rate(times, a, adot, lam):
    """Growth exponent of the mode envelope sqrt(a^2 + (adot/lam)^2).

    The envelope is smooth for both oscillatory and exponential tracks,
    so a log-linear fit over the trailing 60% of the window reads off
    the rate without chasing zero crossings.
    """
    env = np.sqrt(np.asarray(a) ** 2 + (np.asarray(adot) / lam) ** 2)
    lo = int(0.4 * len(env))
    t, env = np.asarray(times)[lo:], env[lo:]
    floor = 1.0e-14 * max(float(env.max()), 1.0e-300)
    keep = env > floor
    if keep.sum() < 3:
        return 0.0
    return float(np.polyfit(t[keep], np.log(env[keep]), 1)[0])


@dataclass
class ModeTrack:
    """Sampled mode history: amplitude, velocity, driving, fitted rate."""

    times: np.ndarray
    a: np.ndarray
    adot: np.ndarray
    driving: np.ndarray
    rate: float
    label: str = "a"
    remainder: float = float("nan")

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.a) == len(self.adot) == len(self.driving) == n):
            raise ValueError("mode track lengths are inconsistent")
        if not np.isfinite(self.rate):
            raise ValueError("fitted rate is not finite")

    def save_csv(self, path, provenance: str = None) -> None:
        with open(path, "w") as fh:
            if provenance:
                fh.write(f"# {provenance}\n")
            fh.write("t,a,adot,N\n")
            for row in zip(self.times, self.a, self.adot, self.driving):
                fh.write("%.17g,%.17g,%.17g,%.17g\n" % row)


def _second_difference_driving(times, a, lam):
    """Empirical N = a'' - lambda^2 a from stored samples (diagnostic)."""
    a = np.asarray(a)
    N = np.zeros_like(a)
    if a.size >= 3:
        dt = times[1] - times[0]
        N[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / dt ** 2 - lam ** 2 * a[1:-1]
        N[0], N[-1] = N[1], N[-2]
    return N


def _slab_sample(h, frame, tau):
    """Lab frames interpolated along the tilted slice t = tau/gamma + v x1.

    Returns (u, du/dtau, comoving radius) on the (x1, rho) grid, with the
    comoving time derivative assembled from gamma (dt + v dx1) applied to
    the stored fields.
    """
    v, gamma = frame.speed, frame.gamma
    x1, rho = h.axes
    t_cols = tau / gamma + v * x1
    ts = h.times
    k = np.clip(np.searchsorted(ts, t_cols) - 1, 0, ts.size - 2)
    w = (t_cols - ts[k]) / (ts[k + 1] - ts[k])
    w = np.clip(w, 0.0, 1.0)[:, None]
    cols = np.arange(x1.size)
    u = (1.0 - w) * h.u[k, cols, :] + w * h.u[k + 1, cols, :]
    ut = (1.0 - w) * h.dtu[k, cols, :] + w * h.dtu[k + 1, cols, :]
    # d/dx1 along the slab equals (dx1 + v dt) of the field, so the
    # comoving derivative gamma (dt + v dx1) u = ut/gamma + gamma v B
    B = np.gradient(u, x1, axis=0)
    du_dtau = ut / gamma + gamma * v * B
    x1p = x1 / gamma - v * tau
    r_com = np.hypot(x1p[:, None], rho[None, :])
    return u, du_dtau, r_com


def _slab_window(h, frame, reach):
    """Valid comoving-time interval covered by the stored run."""
    v, gamma = frame.speed, frame.gamma
    x1 = h.axes[0]
    t_lo, t_hi = float(h.times[0]), float(h.times[-1])
    tau_lo = t_lo / gamma + abs(v) * reach
    tau_hi = t_hi / gamma - abs(v) * reach
    # the needed columns gamma (v tau +- reach) must exist on the grid
    if v > 0.0:
        tau_lo = max(tau_lo, (x1[0] / gamma + reach) / v)
        tau_hi = min(tau_hi, (x1[-1] / gamma - reach) / v)
    elif v < 0.0:
        tau_lo = max(tau_lo, (x1[-1] / gamma - reach) / v)
        tau_hi = min(tau_hi, (x1[0] / gamma + reach) / v)
    return tau_lo, tau_hi


def _mode_reach(m: BoundState) -> float:
    """Radius beyond which the mode weighs less than 1e-6 of peak.

    Slab columns past this radius may fall outside the stored window
    and get clamped to the nearest frame; the projection weight there
    caps the resulting bias well below the slab quadrature error.
    """
    peak = float(np.abs(m.values).max())
    above = np.nonzero(np.abs(m.values) > 1.0e-6 * peak)[0]
    return float(m.grid[above[-1]]) if above.size else float(m.grid[-1])


def project_modes(h, w: BoundState, m: BoundState, frame,
                  tol: float = 1.0e-6):
    """Mode histories (a(t), b(tau)) of a stored axisymmetric run.

    a(t) is the lab-frame quadrature of h against w at each stored time;
    b(tau) is read on the tilted slab at fixed comoving time, normalized
    in the comoving frame.  The driving column holds the empirical
    second-difference residual of each mode ODE.  The remainder
    r = h - a w - b m_v is reported through its own bound-state
    components at the middle of the overlap window; for separated
    solitons these stay below the cross-term overlap scale.
    """
    if h.layout != "axisym":
        raise ValueError("mode projection runs on the axisymmetric layout")
    x1, rho = h.axes
    vols = cell_volumes(h.layout, h.axes)
    r_lab = np.hypot(x1[:, None], rho[None, :])
    wg = w.interp(r_lab)
    w_norm = float(np.sum(vols * wg * wg))

    a = np.array([float(np.sum(vols * uk * wg)) for uk in h.u]) / w_norm
    adot = np.array([float(np.sum(vols * gk * wg)) for gk in h.dtu]) / w_norm
    Na = _second_difference_driving(h.times, a, w.lam)

    track_b = _b_track(h, m, frame)
    taus, b = track_b.times, track_b.a
    gamma = frame.gamma

    # remainder components at the middle of the common window
    t_mid = 0.5 * (h.times[0] + h.times[-1])
    tau_mid = gamma * (t_mid - frame.speed ** 2 * t_mid)
    tau_mid = min(max(tau_mid, taus[0]), taus[-1])
    u_mid, _ = h.values_at(t_mid)
    a_mid = float(np.interp(t_mid, h.times, a))
    b_mid = float(np.interp(tau_mid, taus, b))
    x1p = gamma * (x1 - frame.speed * t_mid)
    mv_lab = m.interp(np.hypot(x1p[:, None], rho[None, :]))
    rem = u_mid - a_mid * wg - b_mid * mv_lab
    rem_a = abs(float(np.sum(vols * rem * wg)) / w_norm)
    rem_b = abs(float(np.sum(vols * rem * mv_lab))
                / max(float(np.sum(vols * mv_lab ** 2)), 1.0e-300))

    track_a = ModeTrack(h.times.copy(), a, adot, Na,
                        _fitted_rate(h.times, a, adot, w.lam),
                        label="a", remainder=rem_a)
    track_b.remainder = rem_b
    return track_a, track_b


@dataclass(frozen=True)
class StableVelocity:
    """Initial mode velocity selected by the stability condition."""

    adot0: float
    tail_bound: float
    decay_rate: float

    def __float__(self):
        return self.adot0


def stable_initial_velocity(a0: float, times, N, lam: float) -> StableVelocity:
    """adot(t0) = -lam a(t0) - int_{t0}^{T} e^{-lam (s-t0)} N(s) ds.

    The quadrature runs over the supplied samples; the truncated tail
    beyond T is bounded by the fitted exponential decay of N and the
    bound is attached to the result.  A driving series that does not
    decay raises "tail not controlled".
    """
    times = np.asarray(times, dtype=float)
    N = np.asarray(N, dtype=float)
    if times.ndim != 1 or times.shape != N.shape or times.size < 3:
        raise ValueError("driving series must sample at least three times")
    t0 = times[0]
    integral = float(simpson(np.exp(-lam * (times - t0)) * N, x=times))

    half = times >= 0.5 * (t0 + times[-1])
    tail, t_tail = np.abs(N[half]), times[half]
    peak = float(tail.max()) if tail.size else 0.0
    global_peak = float(np.abs(N).max())
    if peak == 0.0:
        tail_bound, decay = 0.0, float("inf")
    else:
        keep = tail > 1.0e-14 * peak
        if keep.sum() < 3:
            tail_bound, decay = 0.0, float("inf")
        else:
            slope, intercept = np.polyfit(t_tail[keep], np.log(tail[keep]), 1)
            decay = -float(slope)
            if decay <= 1.0e-12:
                # a series sitting at its numerical floor has decayed;
                # anything else is genuinely uncontrolled
                if peak < 1.0e-6 * global_peak:
                    decay = float("inf")
                    tail_bound = (peak * math.exp(-lam * (times[-1] - t0))
                                  / lam)
                else:
                    raise TailNotControlled("tail not controlled")
            else:
                envelope_T = math.exp(intercept + slope * times[-1])
                envelope_T = max(envelope_T, abs(float(N[-1])))
                tail_bound = (envelope_T
                              * math.exp(-lam * (times[-1] - t0))
                              / (lam + decay))
    return StableVelocity(adot0=-lam * a0 - integral,
                          tail_bound=tail_bound, decay_rate=decay)


@dataclass(frozen=True)
class GridModes:
    """Unstable eigenpairs of the static stepping stencil lap - pot0.

    `right` rows reproduce the growing shapes on the grid; `left` rows
    are the exact projection functionals of the discrete recursion,
    normalized to <left_d, right_d> = 1.  Both vanish on the Dirichlet
    rows.
    """

    lambdas: tuple
    right: np.ndarray
    left: np.ndarray
    shape: tuple

    @property
    def count(self) -> int:
        return len(self.lambdas)

    @property
    def flat_left(self) -> np.ndarray:
        return self.left.reshape(self.count, self.shape[0] * self.shape[1])

    def project(self, u) -> np.ndarray:
        return self.flat_left @ np.asarray(u).ravel()


def _axisym_interior_matrix(pot0, cfg: SolverConfig):
    """Sparse lap - pot0 on the evolved nodes, mirroring the kernel.

    Evolved nodes are i = 1..nx-2 for all j = 0..nr-2; the x1 edges and
    the outer rho row are pinned to zero.  The rho part is the central
    difference plus the (1/rho) first difference with the regularized
    axis row, which is exactly self-adjoint under the weight
    m_j = (1/8, 1, 2, 3, ...).
    """
    dx, dr = cfg.spacings
    nx, nr = pot0.shape
    ni, nj = nx - 2, nr - 1
    idx2, idr2 = 1.0 / dx ** 2, 1.0 / dr ** 2

    def flat(i, j):
        return i * nj + j

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for ii in range(ni):
        for j in range(nj):
            k = flat(ii, j)
            diag = -2.0 * idx2 - float(pot0[ii + 1, j])
            if ii > 0:
                add(k, flat(ii - 1, j), idx2)
            if ii < ni - 1:
                add(k, flat(ii + 1, j), idx2)
            if j == 0:
                diag += -4.0 * idr2
                add(k, flat(ii, 1), 4.0 * idr2)
            else:
                diag += -2.0 * idr2
                add(k, flat(ii, j - 1), idr2 * (1.0 - 0.5 / j))
                if j < nj - 1:
                    add(k, flat(ii, j + 1), idr2 * (1.0 + 0.5 / j))
            add(k, k, diag)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(ni * nj, ni * nj))
    m = np.tile(np.concatenate(([0.125], np.arange(1, nj, dtype=float))), ni)
    return A, m


def grid_unstable_modes(pot0, cfg: SolverConfig, k_max: int = 8,
                        threshold: float = 1.0e-10) -> GridModes:
    """All growing modes of the discrete wave stencil for pot0.

    The symmetrized operator M^{1/2} (lap - pot0) M^{-1/2} is solved for
    its largest eigenvalues; the positive ones are the squared growth
    rates lambda_d^2.  Left and right eigenvectors come from the same
    symmetric eigenvector, so the projection recursion is exact to the
    eigensolver's residual.
    """
    pot0 = np.asarray(pot0, dtype=float)
    nx, nr = pot0.shape
    if float(pot0.min()) >= 0.0:
        # lap is negative definite and -pot0 <= 0: nothing can grow
        return GridModes((), np.zeros((0, nx, nr)), np.zeros((0, nx, nr)),
                         (nx, nr))
    A, m = _axisym_interior_matrix(pot0, cfg)
    n = A.shape[0]
    sq = np.sqrt(m)
    S = sp.diags(sq) @ A @ sp.diags(1.0 / sq)
    S = 0.5 * (S + S.T)
    k = min(k_max, n - 2)
    vals, vecs = eigsh(S, k=k, which="LA", tol=0)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > threshold
    vals, vecs = vals[keep], vecs[:, keep]

    lambdas, right, left = [], [], []
    for lam2, y in zip(vals, vecs.T):
        w_int = y / sq
        l_int = y * sq
        scale = float(l_int @ w_int)
        l_int /= scale
        peak = np.argmax(np.abs(w_int))
        if w_int[peak] < 0.0:
            w_int, l_int = -w_int, -l_int
        W = np.zeros((nx, nr))
        L = np.zeros((nx, nr))
        W[1:-1, :-1] = w_int.reshape(nx - 2, nr - 1)
        L[1:-1, :-1] = l_int.reshape(nx - 2, nr - 1)
        lambdas.append(float(math.sqrt(lam2)))
        right.append(W)
        left.append(L)
    if lambdas:
        return GridModes(tuple(lambdas), np.array(right), np.array(left),
                         (nx, nr))
    return GridModes((), np.zeros((0, nx, nr)), np.zeros((0, nx, nr)),
                     (nx, nr))


class ModeRecorder:
    """Per-step mode history harvested through the solver observer.

    Records a_d^n = <l_d, u^n> and the full driving
    N_d^n = <l_d, src^n - (pot^n - pot0) u^n> at every step, which is
    exactly the inhomogeneity of the discrete mode recursion.
    """

    def __init__(self, modes: GridModes, pot0):
        self.modes = modes
        self.pot0 = np.asarray(pot0)
        self.L = modes.flat_left
        self.times, self.amps, self.driving = [], [], []

    def observer(self, n, t, u, pot, src):
        self.times.append(t)
        self.amps.append(self.L @ u.ravel())
        extra = src - (pot - self.pot0) * u
        self.driving.append(self.L @ extra.ravel())

    def series(self):
        return (np.array(self.times), np.array(self.amps),
                np.array(self.driving))

    def reset(self):
        self.times, self.amps, self.driving = [], [], []


def discrete_shot_velocity(a0: float, N, dt: float, lam: float):
    """Initial velocity cancelling the growing root of the recursion.

    With companion roots rho+- of rho^2 - (2 + dt^2 lam^2) rho + 1 = 0
    and the solver's half-step ghost start, the growing component
    vanishes exactly when

      dt adot0 = (rho- - 1 - dt^2 lam^2 / 2) a0 - dt^2 N^0 / 2
                 - dt^2 sum_{k>=1} rho-^k N^k.

    Returns (adot0, truncation bound for the discarded k > n tail).
    """
    N = np.asarray(N, dtype=float)
    z = (dt * lam) ** 2
    rho_minus = 1.0 + 0.5 * z - dt * lam * math.sqrt(1.0 + 0.25 * z)
    k = np.arange(1, N.size)
    tail_sum = float(np.sum(rho_minus ** k * N[1:]))
    adot0 = ((rho_minus - 1.0 - 0.5 * z) * a0
             - 0.5 * dt * dt * N[0] - dt * dt * tail_sum) / dt
    cut = (abs(float(N[-1])) * rho_minus ** N.size * rho_minus
           / (1.0 - rho_minus)) * dt
    return adot0, cut


class _TermsWithExtra:
    """Interaction terms with an injected driving source or with the
    iterate feedback stripped (toy and linear problems)."""

    def __init__(self, terms, extra=None, linear=False):
        self._terms = terms
        self._extra = extra
        self._linear = linear

    def __getattr__(self, name):
        return getattr(self._terms, name)

    def iteration_source(self, h, x1, rho, t):
        if self._linear:
            base = self._terms.source(x1, rho, t)
        else:
            base = self._terms.iteration_source(h, x1, rho, t)
        if self._extra is not None:
            base = base + self._extra(x1, rho, t)
        return base


@dataclass(frozen=True)
class ShootingResult:
    """Converged shooting run: trace, final velocities, diagnostics."""

    trace: IterationTrace
    adot0: tuple
    bdot0: tuple
    lambdas: tuple
    mus: tuple
    mode_rates: tuple
    velocity_history: tuple
    tail_bounds: tuple
    final: object = field(repr=False, default=None)
    recorder: object = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "mus": list(self.mus),
            "adot0": list(self.adot0),
            "bdot0": list(self.bdot0),
            "mode_rates": list(self.mode_rates),
            "velocity_updates": [list(v) for v in self.velocity_history],
            "tail_bounds": list(self.tail_bounds),
            "s_components": list(self.trace.s_components),
            "diff_norms": list(self.trace.diff_norms),
            "eta": self.trace.eta,
            "converged": self.trace.converged,
        }

    def save_summary(self, path, provenance: str = None) -> None:
        doc = self.summary()
        if provenance:
            doc["provenance"] = provenance
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _traveler_bound_states(pair, r_max, n):
    rest = pair.w2.rest_profile

    def q_of_r(r):
        return pair.v2.eval(r) + 5.0 * rest.interp(r) ** 4

    try:
        return bound_states(q_of_r, r_max=r_max, n=n)
    except NoBoundState:
        return []


def _comoving_mode_fields(pair, m: BoundState, cfg: SolverConfig):
    """m_v and its comoving x1' derivative on the grid at t = cfg.t0."""
    x1, rho = cfg.axes()
    gamma, v = pair.frame.gamma, pair.speed
    x1p = gamma * (x1 - v * cfg.t0)
    r_com = np.hypot(x1p[:, None], rho[None, :])
    mv = m.interp(r_com)
    dm = np.gradient(m.values, m.grid)
    safe = np.maximum(r_com, 1.0e-30)
    d1m = np.interp(r_com, m.grid, dm, right=0.0) * (x1p[:, None] / safe)
    return mv, d1m


def shooting_iteration(pair, data: WaveState, cfg: SolverConfig, *,
                       terms=None, extra_source=None, linear: bool = False,
                       max_iters: int = 10, tol: float = 1.0e-4,
                       epsilon: float = 0.05, r_eig: float = 60.0,
                       n_eig: int = 6000,
                       contraction_tol: float = 1.0e-3) -> ShootingResult:
    """Iterated Duhamel solve with the stability condition enforced.

    The free data are a_d(t0) = <l_d, u0> per static growing mode and
    the comoving b(tau0) per traveling mode; the mode velocities in
    data.dtu are replaced each round by the condition applied to the
    previous round's recorded driving (a side: exact discrete recursion;
    b side: comoving continuum quadrature on the stored slab).
    Convergence requires both the iterate S-difference and the velocity
    updates below tol, each measured relative to the current iterate's
    own size; diverging updates raise "manifold shoot failed" with the
    ratio history.  With no growing mode anywhere the call degenerates
    to iterate_to_fixed_point.

    `extra_source` injects an additional driving term (x1, rho, t);
    `linear` drops the iterate feedback from the source so the run
    solves the bare linearized equation (constant-coefficient test
    problems).  Growing iterates feed their own quintic back into the
    next source, so nonlinear shooting needs data small enough that
    even the preliminary run stays in the contraction regime.
    """
    if cfg.layout != "axisym":
        raise ValueError("the shooting loop runs on the axisymmetric layout")
    if terms is None:
        terms = build_terms(pair)
    if extra_source is not None or linear:
        terms = _TermsWithExtra(terms, extra_source, linear)

    axes = cfg.axes()
    x1, rho = axes
    vols = cell_volumes(cfg.layout, axes)
    static_pot, _ = pair_potentials(pair)
    r_lab = np.hypot(x1[:, None], rho[None, :])
    pot0 = static_pot(r_lab)

    modes = grid_unstable_modes(pot0, cfg)
    trav_modes = _traveler_bound_states(pair, r_eig, n_eig)

    if modes.count == 0 and not trav_modes:
        trace, final = iterate_to_fixed_point(
            pair, terms, data, cfg, max_iters=max_iters,
            tol=contraction_tol, epsilon=epsilon, return_field=True)
        return ShootingResult(trace=trace, adot0=(), bdot0=(),
                              lambdas=(), mus=(), mode_rates=(),
                              velocity_history=(), tail_bounds=(),
                              final=final, recorder=None)

    u0 = np.array(data.u, dtype=float)
    a0 = modes.project(u0)
    g_perp = np.array(data.dtu, dtype=float)
    for d in range(modes.count):
        g_perp -= float(modes.left[d].ravel() @ g_perp.ravel()) * modes.right[d]

    mus = tuple(m.lam for m in trav_modes)
    mv_fields, d1m_fields, b0 = [], [], []
    gamma, v = pair.frame.gamma, pair.speed
    tau0 = cfg.t0 / gamma
    for m in trav_modes:
        mv, d1m = _comoving_mode_fields(pair, m, cfg)
        beta = float(np.sum(vols * mv * mv))
        b0.append(float(np.sum(vols * u0 * mv)) / beta)
        c = float(np.sum(vols * g_perp * mv)) / beta
        g_perp -= c * mv
        mv_fields.append(mv)
        d1m_fields.append(d1m)
    b0 = np.array(b0)

    adot = np.array([-modes.lambdas[d] * a0[d] for d in range(modes.count)])
    bdot = np.array([-mus[j] * b0[j] for j in range(len(trav_modes))])

    recorder = ModeRecorder(modes, pot0)

    def assemble_data():
        g = g_perp.copy()
        for d in range(modes.count):
            g += adot[d] * modes.right[d]
        for j, m in enumerate(trav_modes):
            g += gamma * bdot[j] * mv_fields[j] \
                - gamma * v * b0[j] * d1m_fields[j]
        return WaveState(u0, g, cfg.t0)

    def b_update(run, feedback):
        # the slab window opens at tau_lo >= tau0, so the condition is
        # enforced at the first covered slice: the measured shooting
        # defect q = bdot(tau_lo) - required there pulls the free
        # bdot(tau0) back through the linear transfer e^{-mu gap}.
        # The driving is the projected source of this very run (its
        # feedback iterate sampled on the same slab), not a second
        # difference of the track, so growing components cannot bleed
        # into the quadrature.
        def slab_src(tau, u_slab):
            t_cols = (tau / gamma + v * x1)[:, None]
            if feedback is None:
                h_now = 0.0
            else:
                h_now = _slab_sample(feedback, pair.frame, tau)[0]
            return terms.iteration_source(h_now, x1[:, None],
                                          rho[None, :], t_cols)

        out = np.empty(len(trav_modes))
        for j, m in enumerate(trav_modes):
            track = _b_track(run, m, pair.frame,
                             driving=lambda tau, u: slab_src(tau, u)
                             - pot0 * u)
            cond = stable_initial_velocity(float(track.a[0]), track.times,
                                           track.driving, m.lam)
            defect = float(track.adot[0]) - cond.adot0
            gap = track.times[0] - tau0
            out[j] = bdot[j] - math.exp(-m.lam * gap) * defect
        return out

    eta_times = np.linspace(cfg.t0, cfg.horizon, 65)
    eta = mixed_norm(tabulate_field(terms.a, axes, eta_times), 1.25, 2.5)

    reports, diffs, ratios = [], [], []
    vel_history, tails = [], []
    prev_run = None
    h = None
    converged = False
    for it in range(max_iters + 1):
        recorder.reset()
        state = assemble_data()
        # runs 0 and 1 solve against the bare interaction source.  Run 0
        # cannot know the driving before it happens, so it grows along the
        # unstable modes; feeding that iterate's quintic back in would
        # overflow.  Run 1 carries the corrected velocities and is bounded,
        # and from run 2 on every stored iterate is a safe feedback field.
        feedback = prev_run if it >= 2 else None
        new_h = duhamel_iterate(feedback, pair, terms, state, cfg,
                                observer=recorder.observer)
        if h is None:
            diffs.append(s_norm(new_h, pair.speed, epsilon))
        else:
            diffs.append(s_norm(new_h - h, pair.speed, epsilon))
        reports.append(s_norm(new_h, pair.speed, epsilon))
        if len(diffs) >= 2:
            quot = diffs[-1] / diffs[-2] if diffs[-2] > 0.0 else 0.0
            ratios.append(max(quot, 1.0e-16))

        times, amps, driving = recorder.series()
        dt = times[1] - times[0]
        new_adot = np.empty(modes.count)
        step_tails = []
        for d in range(modes.count):
            new_adot[d], cut = discrete_shot_velocity(
                a0[d], driving[:, d], dt, modes.lambdas[d])
            step_tails.append(cut)
        new_bdot = (b_update(new_h, feedback) if trav_modes
                    else np.empty(0))

        update = 0.0
        if modes.count:
            update = max(update, float(np.max(np.abs(new_adot - adot))))
        if trav_modes:
            update = max(update, float(np.max(np.abs(new_bdot - bdot))))
        vel_history.append((*new_adot.tolist(), *new_bdot.tolist()))
        tails = step_tails
        adot, bdot = new_adot, new_bdot

        if len(vel_history) >= 4:
            v_updates = [max(abs(a - b) for a, b in zip(x, y))
                         for x, y in zip(vel_history[1:], vel_history[:-1])]
            if len(v_updates) >= 3 and all(
                    u2 > u1 for u1, u2 in zip(v_updates[-3:-1],
                                              v_updates[-2:])):
                raise ManifoldShootFailed("manifold shoot failed",
                                          ratios=v_updates)

        prev_run, h = new_h, new_h
        # both tolerances are relative: the S-difference against the
        # iterate's own size (velocity dithering is amplified by
        # e^{lambda T} in the field), the update against the velocities
        scale_s = 1.0 + reports[-1]
        scale_v = 1.0 + max((abs(x) for x in vel_history[-1]), default=0.0)
        if it >= 1 and diffs[-1] < tol * scale_s and update < tol * scale_v:
            converged = True
            break

    times, amps, driving = recorder.series()
    rates = tuple(
        _fitted_rate(times, amps[:, d], np.gradient(amps[:, d], times),
                     modes.lambdas[d])
        for d in range(modes.count))
    trace = IterationTrace(s_components=tuple(reports),
                           diff_norms=tuple(diffs), ratios=tuple(ratios),
                           eta=float(eta), decay_slope=float("nan"),
                           converged=converged)
    return ShootingResult(trace=trace, adot0=tuple(adot.tolist()),
                          bdot0=tuple(bdot.tolist()),
                          lambdas=modes.lambdas, mus=mus,
                          mode_rates=rates,
                          velocity_history=tuple(vel_history),
                          tail_bounds=tuple(tails),
                          final=h, recorder=recorder)


def _b_track(run, m: BoundState, frame, driving=None) -> ModeTrack:
    """Comoving mode history of one traveling bound state.

    With `driving` (a callable (tau, u_slab) -> lab field) the N column
    holds the comoving projection <m, driving> / <m, m>, the exact
    inhomogeneity of the mode ODE; otherwise it falls back to the
    empirical second difference of the track, which is a diagnostic
    only since cadence error of any growing component pollutes it.
    """
    x1, rho = run.axes
    vols = cell_volumes(run.layout, run.axes)
    reach = _mode_reach(m)
    gamma = frame.gamma
    if abs(frame.speed) < 1.0e-12:
        taus = run.times.copy()
    else:
        tau_lo, tau_hi = _slab_window(run, frame, reach)
        cadence = max((run.times[-1] - run.times[0]) / max(run.nt - 1, 1),
                      1.0e-9)
        n_tau = int((tau_hi - tau_lo) / (cadence / gamma)) + 1
        if tau_hi <= tau_lo or n_tau < 3:
            raise PullbackSlabTooNarrow("pullback slab too narrow")
        taus = np.linspace(tau_lo, tau_hi, n_tau)
    b = np.empty(taus.size)
    bdot = np.empty(taus.size)
    N = np.zeros(taus.size)
    for i, tau in enumerate(taus):
        u, du, r_com = _slab_sample(run, frame, tau)
        mv = m.interp(r_com)
        beta = float(np.sum(vols * mv * mv)) / gamma
        b[i] = float(np.sum(vols * u * mv)) / gamma / beta
        bdot[i] = float(np.sum(vols * du * mv)) / gamma / beta
        if driving is not None:
            N[i] = float(np.sum(vols * mv * driving(tau, u))) / gamma / beta
    if driving is None:
        N = _second_difference_driving(taus, b, m.lam)
    return ModeTrack(taus, b, bdot, N, _fitted_rate(taus, b, bdot, m.lam),
                     label="b")
