"""Spacetime norms for perturbation fields.

Evaluates the mixed Strichartz norms, the endpoint reversed Strichartz
trace (static and along moving rays), weighted L^2 norms, Lorentz-space
L^{p,1} quasi-norms by decreasing rearrangement, the composite I / D /
D1 / D2 norms built from them, and a full S-space report.  All
evaluations are quadratures over the stored grid of a spacetime field;
nothing here proves estimates, it only measures them on concrete runs.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fields import (SpacetimeField, cell_volumes, line_weights,
                     tabulate_field, transverse_areas)
from .lorentz import _as_velocity_vector

__all__ = [
    "DEFAULT_EPSILON",
    "NormReport",
    "strichartz_pairs",
    "mixed_norm",
    "reversed_strichartz",
    "weighted_L2",
    "weighted_L2_trace",
    "lorentz_quasinorm",
    "composite_norms",
    "s_report",
    "write_trace_csv",
]

# The estimates only need some epsilon > 0; keeping it small preserves
# the decay-exponent budget 6 - 2 - 2*eps - 1 > 2 with room to spare.
DEFAULT_EPSILON = 0.05


def strichartz_pairs():
    """The admissible (p, q) with 1/2 = 1/p + 3/q used throughout."""
    return [(3, 18), (4, 12), (5, 10)]


def _axis_speed(v, layout) -> float:
    """Signed speed along x1; transverse motion breaks the layouts here."""
    if v is None:
        return 0.0
    vec = _as_velocity_vector(v)
    if layout in ("axisym", "cart1d") and (vec[1] != 0.0 or vec[2] != 0.0):
        raise ValueError("center velocity must point along x1 for this layout")
    return float(vec[0])


def _radius_sq(field_: SpacetimeField, x1_offset: float = 0.0):
    """|x|^2 per spatial cell, optionally with the x1 origin shifted."""
    axes = field_.axes
    if field_.layout == "axisym":
        return (axes[0][:, None] - x1_offset) ** 2 + axes[1][None, :] ** 2
    if field_.layout == "cart1d":
        return (axes[0] - x1_offset) ** 2
    x, y, z = axes
    return ((x[:, None, None] - x1_offset) ** 2
            + y[None, :, None] ** 2 + z[None, None, :] ** 2)


def mixed_norm(field_: SpacetimeField, p: float, q: float) -> float:
    """The L^p_t L^q_x norm by quadrature on the stored grid."""
    if p < 1.0 or q < 1.0:
        raise ValueError("exponents must be at least 1")
    if field_.nt == 0:
        raise ValueError("empty time window")
    absu = np.abs(field_.u)
    space_axes = tuple(range(1, absu.ndim))
    if np.isinf(q):
        inner = absu.max(axis=space_axes)
    else:
        vol = field_.volumes()
        inner = np.sum(vol * absu**q, axis=space_axes) ** (1.0 / q)
    if np.isinf(p):
        return float(inner.max())
    tw = field_.time_weights()
    return float(np.sum(tw * inner**p) ** (1.0 / p))


def _shifted(field_: SpacetimeField, speed: float) -> SpacetimeField:
    if speed == 0.0:
        return field_
    out, coverage = field_.shifted(speed)
    if coverage < 1.0:
        warnings.warn(f"ray clipped: coverage {coverage:.3f}", RuntimeWarning,
                      stacklevel=3)
    return out


def reversed_strichartz(field_: SpacetimeField, moving_velocity=None) -> float:
    """sup over space of the time-L^2 trace, optionally along x + vt rays.

    Rays leaving the stored domain contribute their inside part only and
    trigger a "ray clipped" warning carrying the coverage fraction.
    """
    if field_.nt == 0:
        raise ValueError("empty time window")
    speed = _axis_speed(moving_velocity, field_.layout)
    shifted = _shifted(field_, speed)
    tw = field_.time_weights()
    traces = np.tensordot(tw, shifted.u**2, axes=(0, 0))
    return float(np.sqrt(traces.max()))


def _as_field(source, axes, times, layout):
    if isinstance(source, SpacetimeField):
        return source
    if axes is None or times is None:
        raise ValueError("a source closure needs axes and times to sample on")
    return tabulate_field(source, axes, times, layout=layout)


def weighted_L2_trace(source, epsilon: float = DEFAULT_EPSILON,
                      center_velocity=None, weight_exponent: float = None,
                      axes=None, times=None, layout: str = "axisym"):
    """Per-time integrand of the squared weighted norm.

    Returns (times, trace) with trace[k] = int <x - vt>^(2 sigma) |H|^2 dx
    at t_k, sigma defaulting to 1/2 + epsilon.  The weight center moves
    at center_velocity when given.  source may be a spacetime field or a
    closure fn(x1, rho, t) sampled on the supplied axes and times.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    field_ = _as_field(source, axes, times, layout)
    sigma = 0.5 + epsilon if weight_exponent is None else float(weight_exponent)
    speed = _axis_speed(center_velocity, field_.layout)
    vol = field_.volumes()
    out = np.empty(field_.nt)
    for k, tk in enumerate(field_.times):
        w2 = (1.0 + _radius_sq(field_, x1_offset=speed * tk)) ** sigma
        out[k] = float(np.sum(vol * w2 * field_.u[k] ** 2))
    return field_.times, out


def weighted_L2(source, epsilon: float = DEFAULT_EPSILON, center_velocity=None,
                weight_exponent: float = None, axes=None, times=None,
                layout: str = "axisym") -> float:
    """The spacetime L^2 norm of <x - vt>^sigma H, sigma = 1/2 + epsilon."""
    times_, trace = weighted_L2_trace(source, epsilon, center_velocity,
                                      weight_exponent, axes, times, layout)
    if times_.size == 0:
        raise ValueError("empty time window")
    tw = line_weights(times_)
    return float(np.sqrt(np.sum(tw * trace)))


def lorentz_quasinorm(values, p: float, weights=None) -> float:
    """L^{p,1} quasi-norm by decreasing rearrangement over weighted cells.

    values are samples of |g| (signs are dropped) and weights their
    measures (unit cells when omitted).  The discretization sums
    p (mu_k^{1/p} - mu_{k-1}^{1/p}) g*_k over the rearrangement, which is
    exact for indicators: an indicator of measure m gives p m^{1/p}.
    """
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    v = np.abs(np.asarray(values, dtype=float)).ravel()
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.broadcast_to(np.asarray(weights, dtype=float),
                            np.asarray(values).shape).ravel()
    order = np.argsort(-v, kind="stable")
    v = v[order]
    mu = np.cumsum(w[order]) ** (1.0 / p)
    steps = np.diff(np.concatenate(([0.0], mu)))
    return float(p * np.sum(steps * v))


def _time_collapse(field_: SpacetimeField, kind: str):
    """Inner time norm per spatial cell: kind in {l1, l2, linf}."""
    absu = np.abs(field_.u)
    if kind == "linf":
        return absu.max(axis=0)
    tw = field_.time_weights()
    if kind == "l1":
        return np.tensordot(tw, absu, axes=(0, 0))
    return np.sqrt(np.tensordot(tw, absu**2, axes=(0, 0)))


def _iterated_l1_l21(field_: SpacetimeField, spatial):
    """L^1 over x1 of the transverse L^{2,1} quasi-norm of a spatial array."""
    x1 = field_.axes[0]
    areas = transverse_areas(field_.layout, field_.axes)
    per_slice = np.array([lorentz_quasinorm(spatial[i], 2.0, areas)
                          for i in range(x1.size)])
    return float(np.sum(line_weights(x1) * per_slice))


def _l321(field_: SpacetimeField, spatial):
    return lorentz_quasinorm(spatial, 1.5,
                             cell_volumes(field_.layout, field_.axes))


def composite_norms(G: SpacetimeField, which: str,
                    epsilon: float = DEFAULT_EPSILON) -> float:
    """The composite interaction norms.

    I   = max of the <x>^{1/2+eps}-weighted L^2_{t,x} norm and the
          L^1_{x1} L^{2,1}_transverse L^2_t and L^{3/2,1}_x L^2_t norms;
    D   = the same two iterated norms of <x>^{-3} G with an L^inf_t
          inner norm (the damped local-decay pair);
    D1  = L^{3/2,1}_x L^1_t, L^1_{x1} L^{2,1} L^1_t and L^2_{t,x} of G;
    D2  = D1 with the L^1_t inner norms replaced by L^inf_t.
    """
    key = which.strip().upper()
    if key == "I":
        trace = _time_collapse(G, "l2")
        return max(weighted_L2(G, epsilon),
                   _iterated_l1_l21(G, trace), _l321(G, trace))
    if key == "D":
        damped = _time_collapse(G, "linf") * (1.0 + _radius_sq(G)) ** -1.5
        return max(_iterated_l1_l21(G, damped), _l321(G, damped))
    if key in ("D1", "D2"):
        inner = _time_collapse(G, "l1" if key == "D1" else "linf")
        return max(_l321(G, inner), _iterated_l1_l21(G, inner),
                   mixed_norm(G, 2, 2))
    raise ValueError(f"unknown composite norm {which!r}")


@dataclass
class NormReport:
    """Every component of the S-space bookkeeping for one field."""

    strichartz: dict
    energy: float
    reversed: float
    reversed_moving: float
    weighted: float
    i_norm: float
    d_norm: float
    d_moving: float
    d1_norm: float
    d2_norm: float
    epsilon: float = DEFAULT_EPSILON
    window: tuple = (0.0, 0.0)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "strichartz": {f"{p},{q}": v for (p, q), v in self.strichartz.items()},
            "energy": self.energy,
            "reversed": self.reversed,
            "reversed_moving": self.reversed_moving,
            "weighted": self.weighted,
            "I": self.i_norm,
            "D": self.d_norm,
            "D_moving": self.d_moving,
            "D1": self.d1_norm,
            "D2": self.d2_norm,
            "epsilon": self.epsilon,
            "window": list(self.window),
            "meta": self.meta,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def values(self):
        out = list(self.strichartz.values())
        out += [self.energy, self.reversed, self.reversed_moving,
                self.weighted, self.i_norm, self.d_norm, self.d_moving,
                self.d1_norm, self.d2_norm]
        return out


def report_from_json(text: str) -> NormReport:
    raw = json.loads(text)
    stri = {tuple(int(s) for s in key.split(",")): val
            for key, val in raw["strichartz"].items()}
    return NormReport(strichartz=stri, energy=raw["energy"],
                      reversed=raw["reversed"],
                      reversed_moving=raw["reversed_moving"],
                      weighted=raw["weighted"], i_norm=raw["I"],
                      d_norm=raw["D"], d_moving=raw["D_moving"],
                      d1_norm=raw["D1"], d2_norm=raw["D2"],
                      epsilon=raw["epsilon"], window=tuple(raw["window"]),
                      meta=raw.get("meta", {}))


def s_report(h: SpacetimeField, v, epsilon: float = DEFAULT_EPSILON) -> NormReport:
    """Measure every S-space component of a perturbation field.

    Fills the Strichartz map, the energy sup over the window, the static
    and moving reversed traces, the weighted L^2 norm, and the I / D /
    D1 / D2 composites, including the D norm of the shifted field
    h^S(x, t) = h(x + vt, t).
    """
    speed = _axis_speed(v, h.layout)
    stri = {pq: mixed_norm(h, *pq) for pq in strichartz_pairs()}
    energy = float(h.energy_series().max()) if h.nt else 0.0
    shifted = _shifted(h, speed)
    return NormReport(
        strichartz=stri,
        energy=energy,
        reversed=reversed_strichartz(h),
        reversed_moving=reversed_strichartz(shifted),
        weighted=weighted_L2(h, epsilon),
        i_norm=composite_norms(h, "I", epsilon),
        d_norm=composite_norms(h, "D", epsilon),
        d_moving=composite_norms(shifted, "D", epsilon),
        d1_norm=composite_norms(h, "D1", epsilon),
        d2_norm=composite_norms(h, "D2", epsilon),
        epsilon=epsilon,
        window=(float(h.times[0]), float(h.times[-1])) if h.nt else (0.0, 0.0),
        meta=dict(h.meta),
    )


def write_trace_csv(path, times, values, label: str = "value") -> None:
    """Write a per-time trace as two CSV columns (t, label)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise ValueError("trace columns differ in length")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"t,{label}\n")
        for t, val in zip(times, values):
            fh.write(f"{t:.17g},{val:.17g}\n")
