"""Radial static states of -Delta u + V u + u^5 = 0.

Solves the radial profile equation

    u'' + (2/r) u' = V(r) u + u^5,    u(0) = alpha, u'(0) = 0,

by adaptive shooting, classifies the outcome (zero crossing, blow-up, or
survival to the grid edge), locates sign-definite ground states by bisection
over alpha, evaluates the energy functional

    J(u) = int ( |grad u|^2 / 2 + V u^2 / 2 + u^6 / 6 ) dx,

and studies the linearized operator -Delta + V + 5 u^4 sector by sector,
including the zero-resonance indicator used by the stability flag.

Decaying profiles carry a 1/r far-field tail, u(r) ~ c/r; the coefficient c
is fitted over the outer radii and the profile evaluates past the grid edge
through that tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal

from .potentials import RadialPotential, zero_potential

__all__ = [
    "StaticState",
    "LinearizationSpectrum",
    "ShootDiverged",
    "TailNotResolved",
    "UnresolvedSpectrum",
    "default_grid",
    "shoot_outcome",
    "solve_radial_static",
    "zero_state",
    "energy_J",
    "find_ground_state",
    "has_crossed_outcome",
    "linearization_spectrum",
    "far_field_coefficient",
    "save_state",
]

# Start of the outward integration; below this radius the series expansion
# u = alpha + (V(0) alpha + alpha^5) r^2 / 6 is accurate to O(r^4).
_R_SERIES = 1.0e-3


class ShootDiverged(RuntimeError):
    """The shooting solution left the amplitude bound before the grid edge."""

    def __init__(self, radius):
        super().__init__(f"shoot diverged at r = {radius:.6g}")
        self.radius = radius


class TailNotResolved(RuntimeError):
    """The outer window of r*u(r) does not flatten to a constant."""


class UnresolvedSpectrum(RuntimeError):
    """Negative eigenvalues moved by more than the refinement tolerance."""


def default_grid(r_max: float = 200.0, n: int = 20000, grading: float = 8.0):
    """Radial grid on [0, r_max], exponentially refined toward the origin.

    The node spacing grows smoothly by the factor exp(grading/n) per cell, so
    the innermost cells resolve the well core while the outer cells track the
    slowly varying 1/r tail.
    """
    s = np.linspace(0.0, 1.0, n + 1)
    return r_max * np.expm1(grading * s) / np.expm1(grading)


@dataclass
class StaticState:
    """A radial profile with its far-field coefficient and energy."""

    grid: np.ndarray
    values: np.ndarray
    far_field_c: float
    energy: float
    shoot_alpha: float
    du: np.ndarray = None
    residual: np.ndarray = None
    tag: str = ""

    def __call__(self, r):
        return self.interp(r)

    def interp(self, r):
        """Evaluate the profile, using the c/r tail beyond the grid edge."""
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.grid, self.values)
        r_max = self.grid[-1]
        outside = r > r_max
        if np.any(outside):
            out = np.where(outside, self.far_field_c / np.maximum(r, r_max), out)
        return out

    def interp_du(self, r):
        """Evaluate u', using the -c/r^2 tail beyond the grid edge."""
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.grid, self.du)
        r_max = self.grid[-1]
        outside = r > r_max
        if np.any(outside):
            out = np.where(outside, -self.far_field_c / np.maximum(r, r_max) ** 2, out)
        return out

    @property
    def max_residual(self) -> float:
        if self.residual is None:
            return 0.0
        return float(np.max(np.abs(self.residual)))


@dataclass
class LinearizationSpectrum:
    """Negative spectrum of -Delta + V + 5 u^4 over low angular sectors."""

    negative_eigenvalues: list
    per_angular_sector: dict
    zero_resonance_indicator: float
    is_stable: bool
    resonance_threshold: float = 1.0e-4
    sector_eigenvalues: dict = field(default_factory=dict)


def _rhs(V):
    def rhs(r, y):
        u, du = y
        return (du, V.eval(r) * u + u**5 - 2.0 * du / r)

    return rhs


def _series_start(V, alpha, r0=_R_SERIES):
    curv = V.at_origin() * alpha + alpha**5
    return np.array([alpha + curv * r0**2 / 6.0, curv * r0 / 3.0])


def shoot_outcome(V: RadialPotential, alpha: float, r_max: float = 200.0,
                  amp_bound: float = None, rtol: float = 1.0e-10):
    """Classify the shooting solution from u(0) = alpha.

    Returns (outcome, r_stop) with outcome one of "crossed" (u hit zero),
    "blowup" (|u| left the amplitude bound), or "flat" (survived to r_max).
    The classification drives the ground-state bisection and gives a
    trapping test that does not consult any eigensolver.
    """
    if alpha == 0.0:
        return "flat", r_max
    if amp_bound is None:
        amp_bound = 5.0 * (1.0 + abs(alpha))
    sign = np.sign(alpha)

    def crossed(r, y):
        return y[0]

    crossed.terminal = True
    crossed.direction = -sign

    def blown(r, y):
        return abs(y[0]) - amp_bound

    blown.terminal = True
    blown.direction = 1.0

    sol = solve_ivp(_rhs(V), (_R_SERIES, r_max), _series_start(V, alpha),
                    method="RK45", rtol=rtol, atol=1.0e-12,
                    events=(crossed, blown))
    if sol.t_events[1].size:
        return "blowup", float(sol.t_events[1][0])
    if sol.t_events[0].size:
        return "crossed", float(sol.t_events[0][0])
    return "flat", r_max


def _fd_residual(grid, u, du, V):
    """Scaled ODE residual at interior nodes by nonuniform differences.

    The second derivative uses the three-point formula on the graded grid;
    the result is normalized by the local size of the equation's terms, so
    the reported residual is dimensionless.
    """
    r = grid[1:-1]
    hm = np.diff(grid)[:-1]
    hp = np.diff(grid)[1:]
    d2 = 2.0 * (hm * u[2:] - (hp + hm) * u[1:-1] + hp * u[:-2]) / (hp * hm * (hp + hm))
    lhs = d2 + 2.0 * du[1:-1] / r
    rhs = V.eval(r) * u[1:-1] + u[1:-1] ** 5
    scale = 1.0 + np.abs(rhs) + np.abs(d2)
    res = np.zeros_like(u)
    res[1:-1] = (lhs - rhs) / scale
    return res


def solve_radial_static(V: RadialPotential, alpha: float, grid=None,
                        rtol: float = 1.0e-12) -> StaticState:
    """Integrate the profile equation outward and package the result.

    Raises ShootDiverged when the solution leaves the amplitude bound before
    the grid edge.  The far-field coefficient is fitted over the last decade
    of radii; states that never flatten keep the raw fit value, and callers
    that need a certified tail should go through far_field_coefficient.
    """
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, dtype=float)
    r_max = grid[-1]

    if alpha == 0.0:
        z = np.zeros_like(grid)
        return StaticState(grid, z, 0.0, 0.0, 0.0, du=z.copy(),
                           residual=z.copy(), tag="zero")

    amp_bound = 5.0 * (1.0 + abs(alpha))

    def blown(r, y):
        return abs(y[0]) - amp_bound

    blown.terminal = True
    blown.direction = 1.0

    sol = solve_ivp(_rhs(V), (_R_SERIES, r_max), _series_start(V, alpha),
                    method="DOP853", rtol=rtol, atol=1.0e-14,
                    dense_output=True, events=(blown,))
    if sol.t_events[0].size:
        raise ShootDiverged(float(sol.t_events[0][0]))

    inner = grid < _R_SERIES
    y = sol.sol(np.where(inner, _R_SERIES, grid))
    u, du = y[0], y[1]
    curv = V.at_origin() * alpha + alpha**5
    u[inner] = alpha + curv * grid[inner] ** 2 / 6.0
    du[inner] = curv * grid[inner] / 3.0

    residual = _fd_residual(grid, u, du, V)
    state = StaticState(grid, u, 0.0, 0.0, float(alpha), du=du,
                        residual=residual)
    c, _ = _fit_far_field(state)
    state.far_field_c = c
    state.energy = energy_J(state, V)
    return state


def zero_state(grid=None) -> StaticState:
    if grid is None:
        grid = default_grid()
    z = np.zeros_like(grid)
    return StaticState(grid, z, 0.0, 0.0, 0.0, du=z.copy(), residual=z.copy(),
                       tag="zero")


def energy_J(state: StaticState, V: RadialPotential) -> float:
    """J(u) by radial quadrature with the 4 pi r^2 measure.

    Adds the analytic gradient tail 2 pi c^2 / r_max contributed by the
    1/r continuation beyond the grid edge.
    """
    r = state.grid
    u = state.values
    du = state.du
    if du is None:
        du = np.gradient(u, r)
    dens = 0.5 * du**2 + 0.5 * V.eval(r) * u**2 + u**6 / 6.0
    J = float(np.trapezoid(dens * 4.0 * np.pi * r**2, r))
    J += 2.0 * np.pi * state.far_field_c**2 / r[-1]
    return J


def has_crossed_outcome(V: RadialPotential, alphas=None, r_max: float = 60.0) -> bool:
    """Trapping probe by shooting alone: does any small alpha cross zero?

    For attractive wells with a negative eigenvalue the linearized solution
    oscillates, so small positive alpha gives a "crossed" outcome; without
    trapping no crossing occurs at any amplitude.  Used as the
    eigensolver-independent side of the ground-state dichotomy.
    """
    if alphas is None:
        alphas = np.array([1.0e-3, 1.0e-2, 0.1, 0.5, 1.0, 2.0])
    for a in alphas:
        outcome, _ = shoot_outcome(V, float(a), r_max=r_max)
        if outcome == "crossed":
            return True
    return False


def _branch_classify(V, alpha, nodes, r_probe, rtol=1.0e-10):
    """Which side of the nodes-node decaying branch does this alpha sit on?

    The shooting trajectory's interior zero count decreases with alpha one
    separatrix at a time, so the k-node profile is the boundary between
    trajectories with at least k+1 crossings ("low") and at most k
    ("high").  Crossings are counted up to blow-up or r_probe; a
    trajectory still on the k-th sign branch at r_probe is split by the
    slope of r*u.  An exactly decaying profile has (r*u)' = -c^5/(3 r^3)
    < 0 at large r, so the bisection limit overshoots the true branch
    only by that curvature scale, far below the tail-fit tolerance.
    """
    amp_bound = 5.0 * (1.0 + abs(alpha))

    def crossed(r, y):
        return y[0]

    crossed.terminal = nodes + 1
    crossed.direction = 0.0

    def blown(r, y):
        return abs(y[0]) - amp_bound

    blown.terminal = True
    blown.direction = 1.0

    sol = solve_ivp(_rhs(V), (_R_SERIES, r_probe), _series_start(V, alpha),
                    method="DOP853", rtol=rtol, atol=1.0e-13,
                    events=(crossed, blown))
    count = sol.t_events[0].size
    if count > nodes:
        return "low"
    if sol.t_events[1].size or count < nodes:
        return "high"
    branch = np.sign(alpha) * (1.0 if nodes % 2 == 0 else -1.0)
    u, du = sol.y[0, -1], sol.y[1, -1]
    w_slope = u + r_probe * du
    return "high" if branch * w_slope >= 0.0 else "low"


def find_ground_state(V: RadialPotential, grid=None,
                      alpha_tol: float = 1.0e-15) -> StaticState:
    """Sign-definite static state with J < 0, or the zero state.

    The trapping precheck runs the linearized spectrum at u = 0; with no
    negative eigenvalue the zero state is returned tagged "no trapping".
    Otherwise alpha is bisected on the branch classifier until the bracket
    collapses to rounding and the limit is integrated out as the profile.
    """
    if grid is None:
        grid = default_grid()
    base = zero_state(grid)
    spec = linearization_spectrum(base, V)
    if not spec.negative_eigenvalues:
        base.tag = "no trapping"
        return base

    r_probe = 0.75 * float(grid[-1])
    lo = 1.0e-3
    while _branch_classify(V, lo, 0, r_probe) != "low":
        lo *= 0.1
        if lo < 1.0e-12:
            raise RuntimeError("no undershooting alpha found despite trapping")
    hi = max(1.0, 2.0 * lo)
    while _branch_classify(V, hi, 0, r_probe) != "high":
        hi *= 2.0
        if hi > 1.0e6:
            raise RuntimeError("no overshooting alpha found while bracketing")

    while hi - lo > alpha_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _branch_classify(V, mid, 0, r_probe) == "high":
            hi = mid
        else:
            lo = mid

    state = solve_radial_static(V, lo, grid=grid)
    state.tag = "ground"
    return state


def _profile_node_count(state: StaticState) -> int:
    """Interior sign changes of the profile, ignoring roundoff-scale values."""
    u = state.values
    peak = float(np.max(np.abs(u)))
    if peak == 0.0:
        return 0
    s = np.sign(u[np.abs(u) > 1.0e-12 * peak])
    return int(np.count_nonzero(s[1:] * s[:-1] < 0.0))


def find_excited_state(V: RadialPotential, nodes: int = 1, grid=None,
                       alpha_tol: float = 1.0e-15) -> StaticState:
    """Sign-changing static state with the requested interior zero count.

    At small alpha the trajectory inherits one zero per trapped s-wave
    level; past the curvature wall alpha_c = |V(0)|^(1/4) the origin
    curvature alpha V(0) + alpha^5 turns positive and no decaying branch
    starts.  Every unit drop of the zero count in between is a decaying
    profile, so the k-node state is bracketed by scanning alpha up to the
    wall and bisected with the branch classifier.  Requires k+1 trapped
    s-wave levels: the k-node state is the zero-eigenvalue k-th s-level
    of -lap + V + u^4, which the quintic term has shifted up from below.
    """
    if nodes < 1:
        raise ValueError("nodes must be at least 1; the 0-node state is the ground state")
    if grid is None:
        grid = default_grid()
    spec = linearization_spectrum(zero_state(grid), V, sectors=(0,))
    s_levels = spec.sector_eigenvalues[0]
    if len(s_levels) < nodes + 1:
        raise ValueError(
            f"potential traps {len(s_levels)} s-wave level(s); "
            f"a {nodes}-node state needs {nodes + 1}")

    origin = V.at_origin()
    if origin < 0.0:
        alphas = np.geomspace(1.0e-3 * abs(origin) ** 0.25,
                              0.999 * abs(origin) ** 0.25, 32)
    else:
        alphas = np.geomspace(1.0e-3, 1.0e3, 32)
    r_probe = 0.75 * float(grid[-1])
    lo = hi = None
    for a in alphas:
        if _branch_classify(V, float(a), nodes, r_probe) == "low":
            lo = float(a)
        elif lo is not None:
            hi = float(a)
            break
    if lo is None or hi is None:
        raise ValueError(f"no {nodes}-node separatrix bracketed "
                         f"below the curvature wall")

    while hi - lo > alpha_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _branch_classify(V, mid, nodes, r_probe) == "high":
            hi = mid
        else:
            lo = mid

    state = solve_radial_static(V, lo, grid=grid)
    found = _profile_node_count(state)
    if found != nodes:
        raise ValueError(f"bisection landed on a {found}-node profile, "
                         f"wanted {nodes}")
    state.tag = f"excited-{nodes}"
    return state


def static_state_census(V: RadialPotential, grid=None,
                        alpha_tol: float = 1.0e-15) -> list:
    """All decaying shooting solutions of the well, excited states first.

    One profile per trapped s-wave level: the k-node state for each
    k >= 1 down to the sign-definite ground state, ordered by increasing
    alpha.  A well with no trapped level yields just the zero state
    tagged "no trapping".
    """
    if grid is None:
        grid = default_grid()
    spec = linearization_spectrum(zero_state(grid), V, sectors=(0,))
    n_levels = len(spec.sector_eigenvalues[0])
    states = [find_excited_state(V, nodes=k, grid=grid, alpha_tol=alpha_tol)
              for k in range(n_levels - 1, 0, -1)]
    states.append(find_ground_state(V, grid=grid, alpha_tol=alpha_tol))
    return states


def _radial_sector_negatives(q_of_r, ell, r_eig, n_eig):
    """Negative eigenvalues of -w'' + (ell(ell+1)/r^2 + q) w, w(0)=w(R)=0."""
    dr = r_eig / n_eig
    r = dr * np.arange(1, n_eig)
    q = q_of_r(r) + ell * (ell + 1) / r**2
    d = 2.0 / dr**2 + q
    e = np.full(n_eig - 2, -1.0 / dr**2)
    lo = min(0.0, float(q.min())) - 1.0
    vals = eigh_tridiagonal(d, e, select="v", select_range=(lo, -1.0e-12),
                            eigvals_only=True)
    return [float(v) for v in vals]


def _zero_resonance_indicator(q_of_r, r_res=150.0, rtol=1.0e-10):
    """Growing-component coefficient of the zero-energy radial solution.

    Integrates psi'' + (2/r) psi' = q psi with psi(0) = 1.  At large radii
    psi = A + B/r; the indicator is |A| normalized by the solution's peak,
    so a zero resonance (bounded, non-decaying-to-zero psi with A = 0)
    drives the indicator below the threshold.
    """

    def rhs(r, y):
        psi, dpsi = y
        return (dpsi, q_of_r(np.array([r]))[0] * psi - 2.0 * dpsi / r)

    q0 = q_of_r(np.array([_R_SERIES]))[0]
    y0 = np.array([1.0 + q0 * _R_SERIES**2 / 6.0, q0 * _R_SERIES / 3.0])
    sol = solve_ivp(rhs, (_R_SERIES, r_res), y0, method="DOP853",
                    rtol=rtol, atol=1.0e-12, dense_output=True)
    psi_R, dpsi_R = sol.y[0, -1], sol.y[1, -1]
    A = psi_R + r_res * dpsi_R
    samples = sol.sol(np.linspace(1.0, r_res, 512))[0]
    peak = max(np.max(np.abs(samples)), 1.0)
    return float(abs(A) / peak)


def linearization_spectrum(state: StaticState, V: RadialPotential,
                           r_eig: float = 60.0, n_eig: int = 6000,
                           sectors=(0, 1, 2),
                           refine_tol: float = 0.05) -> LinearizationSpectrum:
    """Negative spectrum and resonance indicator of -Delta + V + 5 u^4.

    Each angular sector ell is reduced to the half-line operator on w = r u
    and solved as a symmetric tridiagonal eigenproblem on a uniform grid.
    The computation repeats at doubled resolution; eigenvalues that move by
    more than refine_tol (or change count) raise "unresolved spectrum".
    """

    def q_of_r(r):
        u = state.interp(r)
        return V.eval(r) + 5.0 * u**4

    sector_vals = {}
    for ell in sectors:
        coarse = _radial_sector_negatives(q_of_r, ell, r_eig, n_eig)
        fine = _radial_sector_negatives(q_of_r, ell, r_eig, 2 * n_eig)
        if len(coarse) != len(fine):
            raise UnresolvedSpectrum("unresolved spectrum")
        for a, b in zip(coarse, fine):
            if abs(a - b) > refine_tol * abs(b):
                raise UnresolvedSpectrum("unresolved spectrum")
        sector_vals[ell] = fine

    negatives = sorted(v for vals in sector_vals.values() for v in vals)
    indicator = _zero_resonance_indicator(q_of_r, r_res=min(150.0, 0.75 * state.grid[-1] + 37.5))
    threshold = 1.0e-4
    stable = (not negatives) and indicator >= threshold
    return LinearizationSpectrum(
        negative_eigenvalues=negatives,
        per_angular_sector={ell: len(vals) for ell, vals in sector_vals.items()},
        zero_resonance_indicator=indicator,
        is_stable=stable,
        resonance_threshold=threshold,
        sector_eigenvalues=sector_vals,
    )


def _fit_far_field(state: StaticState, window=(0.1, 1.0)):
    r_max = state.grid[-1]
    mask = (state.grid >= window[0] * r_max) & (state.grid <= window[1] * r_max)
    ru = state.grid[mask] * state.values[mask]
    c = float(np.mean(ru))
    dev = float(np.sqrt(np.mean((ru - c) ** 2)))
    rel = dev / abs(c) if c != 0.0 else dev
    return c, rel


def far_field_coefficient(state: StaticState, window=(0.1, 1.0),
                          full_output: bool = False):
    """Fit r*u(r) to a constant over the outer window.

    The window is given as fractions of the grid edge; the default covers
    the last decade of radii.  A relative fit residual above 5% raises
    "tail not resolved".
    """
    c, rel = _fit_far_field(state, window)
    if c == 0.0 and rel == 0.0:
        return (0.0, 0.0) if full_output else 0.0
    if rel > 0.05:
        raise TailNotResolved(f"tail not resolved: fit residual {rel:.3g}")
    return (c, rel) if full_output else c


def save_state(state: StaticState, path, V: RadialPotential = None,
               spectrum: LinearizationSpectrum = None, provenance: str = None):
    """CSV of (r, u, residual) preceded by a JSON header comment line."""
    header = {
        "alpha": state.shoot_alpha,
        "c": state.far_field_c,
        "J": state.energy,
        "tag": state.tag,
    }
    if spectrum is not None:
        header["is_stable"] = spectrum.is_stable
        header["negative_eigenvalues"] = spectrum.negative_eigenvalues
        header["zero_resonance_indicator"] = spectrum.zero_resonance_indicator
    res = state.residual if state.residual is not None else np.zeros_like(state.grid)
    with open(path, "w") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write("# " + json.dumps(header) + "\n")
        fh.write("r,u,residual\n")
        for r, u, s in zip(state.grid, state.values, res):
            fh.write(f"{r:.12g},{u:.17g},{s:.6g}\n")
