"""Radial potential wells.

All built-in families decay faster than any power, so the standing decay
requirement |V(r)| <= C (1+r)^(-beta) with beta > 3 is satisfied with room;
`check_decay` verifies it on samples for user-supplied potentials too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "RadialPotential",
    "gaussian_well",
    "poschl_teller_well",
    "compact_bump_well",
    "zero_potential",
    "check_decay",
]


@dataclass(frozen=True)
class RadialPotential:
    """A radial potential V(r) with a declared decay exponent.

    eval accepts scalar or array radii.  decay_exponent is the largest beta
    the caller claims for |V(r)| <= C (1+r)^(-beta); the built-in wells use
    np.inf.  cutoff_radius bounds the region where V is treated as nonzero
    by grid builders.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    decay_exponent: float
    cutoff_radius: float
    label: str = "custom"

    def __call__(self, r):
        return self.eval(np.asarray(r, dtype=float))

    def at_origin(self) -> float:
        v0 = float(self(0.0))
        if not np.isfinite(v0):
            raise ValueError("potential must be finite at r = 0")
        return v0


def gaussian_well(depth: float, width: float = 1.0) -> RadialPotential:
    """V(r) = -depth * exp(-(r/width)^2)."""
    def f(r):
        return -depth * np.exp(-((r / width) ** 2))
    return RadialPotential(f, np.inf, 8.0 * width, f"gaussian(depth={depth},width={width})")


def poschl_teller_well(depth: float, width: float = 1.0) -> RadialPotential:
    """V(r) = -depth / cosh(r/width)^2."""
    def f(r):
        return -depth / np.cosh(r / width) ** 2
    return RadialPotential(f, np.inf, 20.0 * width, f"poschl-teller(depth={depth},width={width})")


def compact_bump_well(depth: float, width: float = 1.0) -> RadialPotential:
    """Smooth compactly supported well, V = -depth*exp(1 - 1/(1-(r/width)^2))."""
    def f(r):
        r = np.asarray(r, dtype=float)
        s = np.clip(r / width, 0.0, None)
        out = np.zeros_like(s)
        inside = s < 1.0
        si = s[inside]
        out[inside] = -depth * np.exp(1.0 - 1.0 / (1.0 - si * si))
        return out
    return RadialPotential(f, np.inf, width, f"bump(depth={depth},width={width})")


def zero_potential() -> RadialPotential:
    def f(r):
        return np.zeros_like(np.asarray(r, dtype=float))
    return RadialPotential(f, np.inf, 1.0, "zero")


def check_decay(V: RadialPotential, beta: float = 3.0, r_probe: float = 50.0) -> bool:
    """Sample |V(r)| (1+r)^beta on [r_probe, 8 r_probe] and require decay.

    Returns True when the weighted samples fall off monotonically enough that
    the standing assumption beta > 3 is credible; raises on a clear violation.
    """
    r = np.geomspace(r_probe, 8.0 * r_probe, 25)
    w = np.abs(V(r)) * (1.0 + r) ** beta
    scale = max(np.max(np.abs(V(np.linspace(0.0, 2.0, 9)))), 1e-300)
    if w[-1] > 1e-3 * scale and w[-1] > 0.5 * w[0]:
        raise ValueError(
            f"potential {V.label} does not decay like (1+r)^-{beta}: "
            f"weighted tail {w[-1]:.3e} vs head {w[0]:.3e}"
        )
    return True
