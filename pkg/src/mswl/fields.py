"""Sampled spacetime fields and their quadrature weights.

A SpacetimeField holds u and its time derivative on a space x time grid in
one of three layouts:

    "axisym"  axes (x1, rho), fields of shape (nt, n1, nr); the physical
              domain is the cylinder rho <= rho_max revolved around x1,
    "cart1d"  axes (x,), a line segment (used by solver-order tests),
    "cart3d"  axes (x, y, z), a small box for cross-checks.

Spatial integrals use midpoint cell weights clamped at the grid edges, so
the weights of every layout sum exactly to the domain measure.  Snapshots
serialize to a little-endian binary format: per frame a header with the
magic "MSWL", a format version, the layout tag, dims, spacings, origins,
and the frame time, followed by u and dt_u as float64 row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SpacetimeField", "save_field", "load_field", "cell_volumes",
           "transverse_areas", "line_weights"]

_MAGIC = b"MSWL"
_VERSION = 1
_LAYOUT_TAGS = {"axisym": 0, "cart1d": 1, "cart3d": 2}
_TAG_LAYOUTS = {v: k for k, v in _LAYOUT_TAGS.items()}


def line_weights(x):
    """Cell widths on a monotone axis, midpoint edges clamped to the ends."""
    x = np.asarray(x, dtype=float)
    if x.size == 1:
        return np.array([1.0])
    edges = np.concatenate(([x[0]], 0.5 * (x[1:] + x[:-1]), [x[-1]]))
    return np.diff(edges)


def annulus_areas(rho):
    """Transverse annulus areas for an axisymmetric radius axis."""
    rho = np.asarray(rho, dtype=float)
    edges = np.concatenate(([rho[0]], 0.5 * (rho[1:] + rho[:-1]), [rho[-1]]))
    return np.pi * (edges[1:] ** 2 - edges[:-1] ** 2)


def transverse_areas(layout, axes):
    """Weights for integrating over the plane transverse to x1."""
    if layout == "axisym":
        return annulus_areas(axes[1])
    if layout == "cart3d":
        return np.outer(line_weights(axes[1]), line_weights(axes[2]))
    if layout == "cart1d":
        return np.array(1.0)
    raise ValueError(f"unknown layout {layout!r}")


def cell_volumes(layout, axes):
    """Spatial quadrature weights; they sum to the exact domain measure."""
    if layout == "axisym":
        return np.outer(line_weights(axes[0]), annulus_areas(axes[1]))
    if layout == "cart1d":
        return line_weights(axes[0])
    if layout == "cart3d":
        wx, wy, wz = (line_weights(a) for a in axes)
        return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]
    raise ValueError(f"unknown layout {layout!r}")


@dataclass
class SpacetimeField:
    """u and dt_u sampled on a fixed spatial grid at stored times."""

    layout: str
    axes: tuple
    times: np.ndarray
    u: np.ndarray
    dtu: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.layout not in _LAYOUT_TAGS:
            raise ValueError(f"unknown layout {self.layout!r}")
        self.times = np.asarray(self.times, dtype=float)
        expected = (self.times.size,) + tuple(a.size for a in self.axes)
        if self.u.shape != expected or self.dtu.shape != expected:
            raise ValueError("field shape does not match axes and times")

    @property
    def nt(self) -> int:
        return self.times.size

    @property
    def spacings(self):
        return tuple(float(a[1] - a[0]) if a.size > 1 else 1.0 for a in self.axes)

    def volumes(self):
        return cell_volumes(self.layout, self.axes)

    def time_weights(self):
        return line_weights(self.times)

    def frame(self, k: int):
        return self.u[k], self.dtu[k]

    def values_at(self, t: float):
        """Linear interpolation of (u, dt_u) between stored frames."""
        ts = self.times
        if t <= ts[0]:
            return self.u[0], self.dtu[0]
        if t >= ts[-1]:
            return self.u[-1], self.dtu[-1]
        k = int(np.searchsorted(ts, t) - 1)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return ((1.0 - w) * self.u[k] + w * self.u[k + 1],
                (1.0 - w) * self.dtu[k] + w * self.dtu[k + 1])

    def gradient_sq(self, k: int):
        """|grad u|^2 of frame k by centered differences."""
        uk = self.u[k]
        total = np.zeros_like(uk)
        for ax, coords in enumerate(self.axes):
            if coords.size > 1:
                total += np.gradient(uk, coords, axis=ax) ** 2
        return total

    def energy_series(self):
        """sqrt( int |grad u|^2 + (dt u)^2 dx ) per stored frame."""
        vol = self.volumes()
        out = np.empty(self.nt)
        for k in range(self.nt):
            dens = self.gradient_sq(k) + self.dtu[k] ** 2
            out[k] = np.sqrt(float(np.sum(dens * vol)))
        return out

    def window(self, t0=None, t1=None) -> "SpacetimeField":
        """Restrict to stored times in [t0, t1]."""
        mask = np.ones(self.nt, dtype=bool)
        if t0 is not None:
            mask &= self.times >= t0 - 1.0e-12
        if t1 is not None:
            mask &= self.times <= t1 + 1.0e-12
        return SpacetimeField(self.layout, self.axes, self.times[mask],
                              self.u[mask], self.dtu[mask], dict(self.meta))

    def __sub__(self, other: "SpacetimeField") -> "SpacetimeField":
        if self.layout != other.layout or self.u.shape != other.u.shape:
            raise ValueError("field grids do not match")
        return SpacetimeField(self.layout, self.axes, self.times,
                              self.u - other.u, self.dtu - other.dtu,
                              dict(self.meta))

    def shifted(self, speed: float):
        """The moving-frame samples G^S(x, t) = G(x1 + speed*t, x_perp, t).

        Shifts every frame along x1 with linear interpolation and zero fill
        outside the stored domain; returns (field, coverage) where coverage
        is the worst-case fraction of cells whose shifted source point lay
        inside the domain.
        """
        x1 = self.axes[0]
        if x1.size < 2:
            return SpacetimeField(self.layout, self.axes, self.times,
                                  self.u.copy(), self.dtu.copy(),
                                  dict(self.meta)), 1.0
        dx = x1[1] - x1[0]
        u = np.empty_like(self.u)
        dtu = np.empty_like(self.dtu)
        coverage = 1.0
        for k, t in enumerate(self.times):
            src = x1 + speed * t
            inside = (src >= x1[0]) & (src <= x1[-1])
            coverage = min(coverage, float(np.mean(inside)))
            pos = np.clip((src - x1[0]) / dx, 0.0, x1.size - 1.0)
            i0 = np.minimum(pos.astype(int), x1.size - 2)
            w = (pos - i0)[:, None]
            mask = inside.astype(float)[:, None]
            for dst, arr in ((u, self.u), (dtu, self.dtu)):
                shaped = arr[k].reshape(x1.size, -1)
                vals = (1.0 - w) * shaped[i0] + w * shaped[i0 + 1]
                dst[k] = (mask * vals).reshape(arr[k].shape)
        out = SpacetimeField(self.layout, self.axes, self.times, u, dtu,
                             dict(self.meta))
        return out, coverage


def tabulate_field(fn, axes, times, layout="axisym") -> SpacetimeField:
    """Sample a closure fn(x1, rho, t) into a field with a zero dt slot."""
    if layout != "axisym":
        raise ValueError("tabulate_field supports the axisym layout only")
    x1 = np.asarray(axes[0], dtype=float)
    rho = np.asarray(axes[1], dtype=float)
    times = np.asarray(times, dtype=float)
    u = np.empty((times.size, x1.size, rho.size))
    for k, tk in enumerate(times):
        u[k] = fn(x1[:, None], rho[None, :], tk)
    return SpacetimeField(layout, (x1, rho), times, u, np.zeros_like(u), {})


def _uniform_spacing(a, name):
    if a.size < 2:
        return 1.0
    d = np.diff(a)
    if not np.allclose(d, d[0], rtol=1.0e-9, atol=1.0e-12):
        raise ValueError(f"axis {name} is not uniform; snapshot format "
                         "requires uniform grids")
    return float(d[0])


def save_field(field_: SpacetimeField, path):
    """Write all stored frames consecutively in the binary snapshot format."""
    dims = [a.size for a in field_.axes]
    spacings = [_uniform_spacing(a, i) for i, a in enumerate(field_.axes)]
    origins = [float(a[0]) for a in field_.axes]
    tag = _LAYOUT_TAGS[field_.layout]
    with open(path, "wb") as fh:
        for k in range(field_.nt):
            fh.write(_MAGIC)
            fh.write(struct.pack("<III", _VERSION, tag, len(dims)))
            fh.write(struct.pack(f"<{len(dims)}I", *dims))
            fh.write(struct.pack(f"<{len(dims)}d", *spacings))
            fh.write(struct.pack(f"<{len(dims)}d", *origins))
            fh.write(struct.pack("<d", float(field_.times[k])))
            fh.write(np.ascontiguousarray(field_.u[k], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(field_.dtu[k], dtype="<f8").tobytes())


def load_field(path) -> SpacetimeField:
    """Read consecutive snapshot frames back into a SpacetimeField."""
    times, us, dtus = [], [], []
    layout = axes = None
    with open(path, "rb") as fh:
        while True:
            magic = fh.read(4)
            if not magic:
                break
            if magic != _MAGIC:
                raise ValueError("bad snapshot magic")
            version, tag, ndim = struct.unpack("<III", fh.read(12))
            if version != _VERSION:
                raise ValueError(f"unsupported snapshot version {version}")
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            spacings = struct.unpack(f"<{ndim}d", fh.read(8 * ndim))
            origins = struct.unpack(f"<{ndim}d", fh.read(8 * ndim))
            (t,) = struct.unpack("<d", fh.read(8))
            count = int(np.prod(dims))
            u = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(dims)
            dtu = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(dims)
            this_layout = _TAG_LAYOUTS[tag]
            this_axes = tuple(origins[i] + spacings[i] * np.arange(dims[i])
                              for i in range(ndim))
            if layout is None:
                layout, axes = this_layout, this_axes
            times.append(t)
            us.append(u.copy())
            dtus.append(dtu.copy())
    if layout is None:
        raise ValueError("empty snapshot file")
    return SpacetimeField(layout, axes, np.array(times), np.stack(us),
                          np.stack(dtus))
