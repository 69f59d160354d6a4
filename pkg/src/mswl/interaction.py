"""Exact quintic algebra of the two-soliton perturbation equation.

Splitting u = W1(x) + W2(x - vt) + h and expanding the quintic term
produces fixed polynomial coefficients in the two profile values: the
sources F1, F2, F, the linear-in-h field a, and the h-power groups
N = M1 h^2 + M2 h^3 + M3 h^4.  This module holds those polynomials
exactly and lazily, as closures over the profile evaluators, so grids
of any shape can consume them.  A brute-force residual of the grouping
identity keeps every coefficient honest against the raw binomial
expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import SpacetimeField
from .lorentz import BoostedProfile, LorentzFrame, _as_velocity_vector

__all__ = [
    "SolitonPair",
    "InteractionTerms",
    "EnvelopeReport",
    "build_terms",
    "quintic_identity_residual",
    "residual_identity",
    "swapped_pair",
    "envelope_check",
    "coefficient_snapshot",
]

# Grouped coefficients of (W1+W2+h)^5 - W1^5 - W2^5, by h-power: the
# quintic sources, the linear-in-h cross field a, then the h^2 group
# (whose four pieces are estimated separately), h^3 and h^4.
SOURCE_COEFFS = (5.0, 10.0, 10.0, 5.0)
A_COEFFS = (20.0, 30.0, 20.0)
M1_COEFFS = (10.0, 30.0, 30.0, 10.0)
M3_COEFFS = (5.0, 5.0)

# Binomial middle coefficient of the h^3 group, 10(W1+W2)^2 expanded.
M2_MIDDLE_BINOMIAL = 20.0
# Alternate readings reachable through build_terms: the literal printed
# value and the other plausible transcription.  Only the binomial value
# satisfies the grouping identity.
M2_MIDDLE_PRINTED = 3.0
M2_MIDDLE_ALTERNATE = 30.0


@dataclass(frozen=True)
class SolitonPair:
    """A stationary soliton and a traveling one, with their wells.

    w1 is a radial profile centered at the origin (anything with the
    interp/max_residual interface of a static state); w2 is a boosted
    profile riding its frame; v1, v2 are the radial wells trapping them,
    v2 in the traveler's rest frame.
    """

    w1: object
    w2: BoostedProfile
    v1: object
    v2: object

    @property
    def frame(self) -> LorentzFrame:
        return self.w2.frame

    @property
    def speed(self) -> float:
        return self.w2.frame.speed

    def axial_coords(self, x):
        """Split lab points into (x1, rho) about the motion axis."""
        x = np.asarray(x, dtype=float)
        xt = x @ self.frame.rotation.T
        return xt[..., 0], np.hypot(xt[..., 1], xt[..., 2])

    def radii(self, x1, rho, t):
        """Distance to each center: (|x|, comoving radius of the traveler)."""
        x1 = np.asarray(x1, dtype=float)
        rho = np.asarray(rho, dtype=float)
        g = self.frame.gamma
        s = self.frame.speed
        r1 = np.hypot(x1, rho)
        r2 = np.sqrt((g * (x1 - s * t)) ** 2 + rho**2)
        return r1, r2

    def profile_values(self, x1, rho, t):
        """(W1, W2) sampled on axisymmetric lab coordinates."""
        r1, r2 = self.radii(x1, rho, t)
        return self.w1.interp(r1), self.w2.rest_profile.interp(r2)

    def equation_residuals(self):
        return (self.w1.max_residual, self.w2.rest_profile.max_residual)

    def validate(self, tol: float = 1.0e-5) -> None:
        worst = max(self.equation_residuals())
        if worst > tol:
            raise ValueError(
                f"profile violates its elliptic equation: {worst:.3e} > {tol:.3e}")


@dataclass(frozen=True)
class InteractionTerms:
    """Lazy coefficient fields of the perturbation equation.

    Every method is a pure function of the profile values at the
    requested points; instances are immutable and safe to share across
    threads.  Coordinates are axisymmetric lab coordinates (x1, rho, t)
    with the motion along x1, broadcast together.
    """

    pair: SolitonPair
    m2_middle: float = M2_MIDDLE_BINOMIAL

    def _w(self, x1, rho, t):
        return self.pair.profile_values(x1, rho, t)

    def a(self, x1, rho, t):
        """Linear coefficient 20W1^3W2 + 30W1^2W2^2 + 20W1W2^3."""
        w1, w2 = self._w(x1, rho, t)
        return 20.0 * w1**3 * w2 + 30.0 * w1**2 * w2**2 + 20.0 * w1 * w2**3

    def f1(self, x1, rho, t):
        """Source 5W1^4W2 + V1W2, localized at the stationary center."""
        w1, w2 = self._w(x1, rho, t)
        r1, _ = self.pair.radii(x1, rho, t)
        return 5.0 * w1**4 * w2 + self.pair.v1.eval(r1) * w2

    def f2(self, x1, rho, t):
        """Source 5W1W2^4 + W1V2, riding with the traveler."""
        w1, w2 = self._w(x1, rho, t)
        _, r2 = self.pair.radii(x1, rho, t)
        return 5.0 * w1 * w2**4 + w1 * self.pair.v2.eval(r2)

    def f(self, x1, rho, t):
        """Balanced cross source 10W1^3W2^2 + 10W1^2W2^3."""
        w1, w2 = self._w(x1, rho, t)
        return 10.0 * w1**3 * w2**2 + 10.0 * w1**2 * w2**3

    def source(self, x1, rho, t):
        """F1 + F2 + F in one pass over the profiles."""
        w1, w2 = self._w(x1, rho, t)
        r1, r2 = self.pair.radii(x1, rho, t)
        quintic = (5.0 * w1**4 * w2 + 10.0 * w1**3 * w2**2
                   + 10.0 * w1**2 * w2**3 + 5.0 * w1 * w2**4)
        return quintic + self.pair.v1.eval(r1) * w2 + w1 * self.pair.v2.eval(r2)

    def m1_groups(self, x1, rho, t):
        """The four h^2 coefficients (10W1^3, 30W1^2W2, 30W1W2^2, 10W2^3)."""
        w1, w2 = self._w(x1, rho, t)
        return (10.0 * w1**3, 30.0 * w1**2 * w2,
                30.0 * w1 * w2**2, 10.0 * w2**3)

    def m1(self, x1, rho, t):
        g1, g2, g3, g4 = self.m1_groups(x1, rho, t)
        return g1 + g2 + g3 + g4

    def m2(self, x1, rho, t):
        w1, w2 = self._w(x1, rho, t)
        return 10.0 * w1**2 + self.m2_middle * w1 * w2 + 10.0 * w2**2

    def m3(self, x1, rho, t):
        w1, w2 = self._w(x1, rho, t)
        return 5.0 * w1 + 5.0 * w2

    def n_parts(self, h, x1, rho, t):
        """(M1 h^2, M2 h^3, M3 h^4) with one profile evaluation."""
        w1, w2 = self._w(x1, rho, t)
        h = np.asarray(h, dtype=float)
        m1 = (10.0 * w1**3 + 30.0 * w1**2 * w2
              + 30.0 * w1 * w2**2 + 10.0 * w2**3)
        m2 = 10.0 * w1**2 + self.m2_middle * w1 * w2 + 10.0 * w2**2
        m3 = 5.0 * w1 + 5.0 * w2
        return m1 * h**2, m2 * h**3, m3 * h**4

    def n(self, h, x1, rho, t):
        """N(h) = M1 h^2 + M2 h^3 + M3 h^4 (the pure h^5 is excluded)."""
        p2, p3, p4 = self.n_parts(h, x1, rho, t)
        return p2 + p3 + p4

    def linearized_potential(self, x1, rho, t):
        """(V1 + 5W1^4) + (V2 + 5W2^4), the wave-operator potential for h."""
        w1, w2 = self._w(x1, rho, t)
        r1, r2 = self.pair.radii(x1, rho, t)
        return (self.pair.v1.eval(r1) + 5.0 * w1**4
                + self.pair.v2.eval(r2) + 5.0 * w2**4)

    def iteration_source(self, h, x1, rho, t):
        """Fixed-point right side F1 + F2 + F + N(h) - a h - h^5."""
        w1, w2 = self._w(x1, rho, t)
        r1, r2 = self.pair.radii(x1, rho, t)
        h = np.asarray(h, dtype=float)
        src = (5.0 * w1**4 * w2 + 10.0 * w1**3 * w2**2
               + 10.0 * w1**2 * w2**3 + 5.0 * w1 * w2**4
               + self.pair.v1.eval(r1) * w2 + w1 * self.pair.v2.eval(r2))
        a = 20.0 * w1**3 * w2 + 30.0 * w1**2 * w2**2 + 20.0 * w1 * w2**3
        m1 = (10.0 * w1**3 + 30.0 * w1**2 * w2
              + 30.0 * w1 * w2**2 + 10.0 * w2**3)
        m2 = 10.0 * w1**2 + self.m2_middle * w1 * w2 + 10.0 * w2**2
        m3 = 5.0 * w1 + 5.0 * w2
        return src + m1 * h**2 + m2 * h**3 + m3 * h**4 - a * h - h**5


def build_terms(pair: SolitonPair, strict_paper: bool = False,
                m2_middle: float = None) -> InteractionTerms:
    """Assemble the lazy coefficient closures for a validated pair.

    strict_paper selects the literal cubic middle coefficient 3 instead
    of the binomial 20; m2_middle overrides both (e.g. 30, the other
    plausible transcription).  Only the binomial default satisfies the
    grouping identity checked by quintic_identity_residual.
    """
    pair.validate()
    middle = M2_MIDDLE_PRINTED if strict_paper else M2_MIDDLE_BINOMIAL
    if m2_middle is not None:
        middle = float(m2_middle)
    return InteractionTerms(pair=pair, m2_middle=middle)


def quintic_identity_residual(w1, w2, h, m2_middle: float = M2_MIDDLE_BINOMIAL):
    """Elementwise deviation of the grouping identity at raw values.

    Compares (W1+W2+h)^5 - W1^5 - W2^5 against the grouped right side
    sources + (a + 5W1^4 + 5W2^4) h + M1 h^2 + M2 h^3 + M3 h^4 + h^5.
    With the binomial middle coefficient the deviation is floating error
    only; with the printed 3 it equals |17 W1 W2 h^3|.
    """
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    h = np.asarray(h, dtype=float)
    lhs = (w1 + w2 + h) ** 5 - w1**5 - w2**5
    sources = (5.0 * w1**4 * w2 + 10.0 * w1**3 * w2**2
               + 10.0 * w1**2 * w2**3 + 5.0 * w1 * w2**4)
    linear = (20.0 * w1**3 * w2 + 30.0 * w1**2 * w2**2 + 20.0 * w1 * w2**3
              + 5.0 * w1**4 + 5.0 * w2**4) * h
    m1 = (10.0 * w1**3 + 30.0 * w1**2 * w2
          + 30.0 * w1 * w2**2 + 10.0 * w2**3) * h**2
    m2 = (10.0 * w1**2 + m2_middle * w1 * w2 + 10.0 * w2**2) * h**3
    m3 = (5.0 * w1 + 5.0 * w2) * h**4
    return np.abs(lhs - (sources + linear + m1 + m2 + m3 + h**5))


def residual_identity(pair: SolitonPair, h_sample, x, t) -> float:
    """Deviation of the grouping identity at one lab event.

    h_sample is a scalar or a callable of (x, t).  The binomial middle
    coefficient is always used here; the deviation is returned in
    absolute terms.
    """
    x = np.asarray(x, dtype=float)
    x1, rho = pair.axial_coords(x)
    w1, w2 = pair.profile_values(x1, rho, t)
    h = h_sample(x, t) if callable(h_sample) else h_sample
    if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))
            and np.all(np.isfinite(h))):
        raise ValueError("sample values must be finite")
    return float(np.max(quintic_identity_residual(w1, w2, h)))


def swapped_pair(pair: SolitonPair) -> SolitonPair:
    """Exchange the roles: the traveler comes to rest, the other rides.

    Evaluated through the comoving frame change and the x1 mirror this
    maps F1 <-> F2 and fixes a and F pointwise, because every
    coefficient is a polynomial in the two profile values and the swap
    exchanges exactly those values.
    """
    lifted = BoostedProfile(rest_profile=pair.w1, frame=pair.frame)
    return SolitonPair(w1=pair.w2.rest_profile, w2=lifted,
                       v1=pair.v2, v2=pair.v1)


@dataclass(frozen=True)
class EnvelopeReport:
    """Smallest admissible envelope constants over a sampled grid.

    c1 bounds |F1| against <x>^-4 <x - vt>^-1 and c2 bounds |F2| against
    the swapped exponents; at zero velocity both envelopes collapse to
    <x>^-5.  where1/where2 give the (x1, rho, t) attaining each constant
    and offenders lists points whose ratio exceeded the configured cap.
    """

    c1: float
    c2: float
    where1: tuple
    where2: tuple
    degenerate: bool
    cap: float
    offenders: tuple

    @property
    def passed(self) -> bool:
        return len(self.offenders) == 0


def _argmax_where(ratio, x1, rho, t):
    k = int(np.argmax(ratio))
    idx = np.unravel_index(k, ratio.shape)
    return (float(x1[idx]), float(rho[idx]), float(t[idx]))


def envelope_check(terms: InteractionTerms, v=None, radius_grid=None,
                   time_grid=None, cap: float = np.inf) -> EnvelopeReport:
    """Measure the source envelopes on an axis/transverse sample grid.

    Samples x1 over both signs of radius_grid, rho over radius_grid and
    time over time_grid, then reports the smallest C with
    |F1| <= C <x>^-4 <x - vt>^-1 and |F2| <= C with swapped exponents on
    those points.  Passing v cross-checks the pair's frame velocity.
    """
    pair = terms.pair
    s = pair.speed
    if v is not None:
        vs = float(np.linalg.norm(_as_velocity_vector(v)))
        if not np.isclose(vs, s, rtol=0.0, atol=1.0e-12):
            raise ValueError(f"velocity {vs} does not match the pair's {s}")
    if radius_grid is None:
        radius_grid = np.linspace(0.0, 40.0, 81)
    if time_grid is None:
        time_grid = np.linspace(0.0, 20.0, 11)
    radius_grid = np.asarray(radius_grid, dtype=float)
    time_grid = np.asarray(time_grid, dtype=float)

    x1_samples = np.unique(np.concatenate([-radius_grid, radius_grid]))
    rho_samples = np.unique(np.concatenate([[0.0], np.abs(radius_grid)]))
    x1 = x1_samples[:, None, None]
    rho = rho_samples[None, :, None]
    t = time_grid[None, None, :]
    x1, rho, t = np.broadcast_arrays(x1, rho, t)

    bra1 = np.sqrt(1.0 + x1**2 + rho**2)
    bra2 = np.sqrt(1.0 + (x1 - s * t) ** 2 + rho**2)
    degenerate = s == 0.0
    if degenerate:
        env1 = bra1**-5
        env2 = env1
    else:
        env1 = bra1**-4 * bra2**-1
        env2 = bra1**-1 * bra2**-4

    ratio1 = np.abs(terms.f1(x1, rho, t)) / env1
    ratio2 = np.abs(terms.f2(x1, rho, t)) / env2
    c1 = float(ratio1.max())
    c2 = float(ratio2.max())

    offenders = []
    for name, ratio in (("f1", ratio1), ("f2", ratio2)):
        bad = np.argwhere(ratio > cap)
        for idx in map(tuple, bad):
            offenders.append((name, float(x1[idx]), float(rho[idx]),
                              float(t[idx]), float(ratio[idx])))
    return EnvelopeReport(c1=c1, c2=c2,
                          where1=_argmax_where(ratio1, x1, rho, t),
                          where2=_argmax_where(ratio2, x1, rho, t),
                          degenerate=bool(degenerate), cap=float(cap),
                          offenders=tuple(offenders))


def coefficient_snapshot(terms: InteractionTerms, name: str,
                         x1_axis, rho_axis, times) -> SpacetimeField:
    """Tabulate one coefficient on an axisymmetric grid for inspection.

    The result is an ordinary spacetime field (dt slot zero), so the
    binary snapshot writer accepts it; that writer requires uniform
    axes.  name is one of a, f1, f2, f, source, m1, m2, m3.
    """
    funcs = {"a": terms.a, "f1": terms.f1, "f2": terms.f2, "f": terms.f,
             "source": terms.source, "m1": terms.m1, "m2": terms.m2,
             "m3": terms.m3}
    if name not in funcs:
        raise ValueError(f"unknown coefficient {name!r}; "
                         f"choose from {sorted(funcs)}")
    fn = funcs[name]
    x1_axis = np.asarray(x1_axis, dtype=float)
    rho_axis = np.asarray(rho_axis, dtype=float)
    times = np.asarray(times, dtype=float)
    u = np.empty((times.size, x1_axis.size, rho_axis.size))
    for k, tk in enumerate(times):
        u[k] = fn(x1_axis[:, None], rho_axis[None, :], tk)
    dtu = np.zeros_like(u)
    meta = {"coefficient": name, "speed": terms.pair.speed,
            "m2_middle": terms.m2_middle}
    return SpacetimeField("axisym", (x1_axis, rho_axis), times, u, dtu, meta)
