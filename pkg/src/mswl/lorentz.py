"""Lorentz kinematics: frames, contracted potentials, boosted profiles.

A frame packages the data attached to a subluminal velocity v: the factor
gamma = 1/sqrt(1 - |v|^2), the rotation taking v to the x1 axis, the 4x4
boost matrix along x1 (signature convention eta = diag(-1, 1, 1, 1)), and
the spatial contraction m_v = diag(sqrt(1 - |v|^2), 1, 1).

A traveling soliton is assembled from a radial rest profile W solved in the
soliton's own frame: in lab coordinates it reads

    W_lab(x, t) = W( sqrt(gamma^2 (x1~ - |v| t)^2 + x2~^2 + x3~^2) ),

with x~ = rotation @ x, and the same boosted-radius evaluation applies to
the traveler's potential, so the pair translates rigidly by construction.
The literal comoving contraction of a lab-frame radial potential,
x -> V(m_v x), is kept as contract_potential; its level sets are prolate
with axis ratio gamma.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fields import SpacetimeField

__all__ = ["Velocity", "LorentzFrame", "BoostedProfile", "make_frame",
           "contract_potential", "lab_profile", "lab_profile_dt",
           "boosted_radius", "pullback_field", "frame_to_json",
           "frame_from_json", "SlabTooNarrow", "MINKOWSKI"]

MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])


class SlabTooNarrow(RuntimeError):
    """The stored lab slab cannot cover the requested comoving window."""


@dataclass(frozen=True)
class Velocity:
    """A strictly subluminal velocity in units of the light speed."""

    components: tuple

    def __post_init__(self):
        v = np.asarray(self.components, dtype=float)
        if v.shape != (3,):
            raise ValueError("velocity needs three components")
        if np.linalg.norm(v) >= 1.0:
            raise ValueError("superluminal velocity")
        object.__setattr__(self, "components", tuple(v))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.components))


def _as_velocity_vector(v):
    if isinstance(v, Velocity):
        return np.asarray(v.components, dtype=float)
    if np.isscalar(v):
        return np.array([float(v), 0.0, 0.0])
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError("velocity needs three components")
    return v


def _rotation_to_axis(v):
    """Proper rotation taking the unit vector along v to e1."""
    speed = np.linalg.norm(v)
    if speed == 0.0:
        return np.eye(3)
    vhat = v / speed
    c = vhat[0]
    if c > 1.0 - 1.0e-14:
        return np.eye(3)
    if c < -1.0 + 1.0e-14:
        return np.diag([-1.0, -1.0, 1.0])
    w = np.cross(vhat, [1.0, 0.0, 0.0])
    K = np.array([[0.0, -w[2], w[1]],
                  [w[2], 0.0, -w[0]],
                  [-w[1], w[0], 0.0]])
    return np.eye(3) + K + K @ K / (1.0 + c)


@dataclass(frozen=True)
class LorentzFrame:
    velocity: np.ndarray
    gamma: float
    rotation: np.ndarray
    boost: np.ndarray
    contraction: np.ndarray

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def to_comoving(self, t, x):
        """Map lab events (t, x) to comoving (t', x')."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        xt = x @ self.rotation.T
        ev = np.concatenate([t[..., None], xt], axis=-1)
        out = ev @ self.boost.T
        return out[..., 0], out[..., 1:]

    def from_comoving(self, tp, xp):
        """Inverse map: comoving events back to lab coordinates."""
        tp = np.asarray(tp, dtype=float)
        xp = np.asarray(xp, dtype=float)
        inv = _boost_matrix(-self.speed, self.gamma)
        ev = np.concatenate([tp[..., None], xp], axis=-1)
        out = ev @ inv.T
        return out[..., 0], out[..., 1:] @ self.rotation


def _boost_matrix(speed, gamma):
    L = np.eye(4)
    L[0, 0] = L[1, 1] = gamma
    L[0, 1] = L[1, 0] = -speed * gamma
    return L


def make_frame(v) -> LorentzFrame:
    """Build the kinematic data for a velocity (scalar means v * e1)."""
    vec = _as_velocity_vector(v)
    speed = float(np.linalg.norm(vec))
    if speed >= 1.0:
        raise ValueError("superluminal velocity")
    gamma = 1.0 / np.sqrt((1.0 - speed) * (1.0 + speed))
    rotation = _rotation_to_axis(vec)
    boost = _boost_matrix(speed, gamma)
    contraction = np.diag([np.sqrt((1.0 - speed) * (1.0 + speed)), 1.0, 1.0])
    return LorentzFrame(velocity=vec, gamma=float(gamma), rotation=rotation,
                        boost=boost, contraction=contraction)


def contract_potential(V, frame: LorentzFrame):
    """The comoving contraction x -> V(m_v rho_v x) of a radial potential.

    Level sets are prolate spheroids stretched along the motion by the
    factor gamma.
    """
    m = frame.contraction @ frame.rotation

    def contracted(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x @ m.T, axis=-1)
        return V.eval(r)

    return contracted


def boosted_radius(frame: LorentzFrame, x, t):
    """Comoving radius of lab points for a traveler along the frame."""
    x = np.asarray(x, dtype=float)
    xt = x @ frame.rotation.T
    s = frame.speed
    g = frame.gamma
    return np.sqrt((g * (xt[..., 0] - s * t)) ** 2
                   + xt[..., 1] ** 2 + xt[..., 2] ** 2)


@dataclass(frozen=True)
class BoostedProfile:
    """A radial rest profile riding along a Lorentz frame."""

    rest_profile: object
    frame: LorentzFrame

    def __call__(self, x, t):
        return lab_profile(self, x, t)

    def dt(self, x, t):
        return lab_profile_dt(self, x, t)

    def axial(self, x1, rho, t):
        """Evaluate on axisymmetric lab coordinates (motion along e1)."""
        g = self.frame.gamma
        s = self.frame.speed
        r = np.sqrt((g * (x1 - s * t)) ** 2 + rho**2)
        return self.rest_profile.interp(r)

    def axial_dt(self, x1, rho, t):
        g = self.frame.gamma
        s = self.frame.speed
        xi = g * (x1 - s * t)
        r = np.sqrt(xi**2 + rho**2)
        du = self.rest_profile.interp_du(r)
        return -s * g * xi * du / np.maximum(r, 1.0e-30)


def lab_profile(p: BoostedProfile, x, t):
    """The traveling soliton sampled at lab points x and time t."""
    return p.rest_profile.interp(boosted_radius(p.frame, x, t))


def lab_profile_dt(p: BoostedProfile, x, t):
    """Lab-frame time derivative of the traveling soliton."""
    x = np.asarray(x, dtype=float)
    xt = x @ p.frame.rotation.T
    s = p.frame.speed
    g = p.frame.gamma
    xi = g * (xt[..., 0] - s * t)
    r = np.sqrt(xi**2 + xt[..., 1] ** 2 + xt[..., 2] ** 2)
    du = p.rest_profile.interp_du(r)
    return -s * g * xi * du / np.maximum(r, 1.0e-30)


def pullback_field(field: SpacetimeField, frame: LorentzFrame,
                   inverse: bool = False, x_window=None, nt_out=None,
                   order: int = 3) -> SpacetimeField:
    """Resample an axisymmetric slab in the frame moving along x1.

    Forward (inverse=False): the input is a lab slab and the output is the
    comoving view u'(x', t') = u(gamma (x1' + s t'), rho, gamma (t' + s x1'))
    together with dt' u' = gamma (s dx1 u + dt u).  With inverse=True the
    input is treated as comoving and the lab view is produced; that is the
    same resampling with the velocity sign flipped.

    The output time window is the largest interval that keeps every sample
    inside the stored slab for all x1' in the window; an empty interval
    raises "slab too narrow".
    """
    if field.layout != "axisym":
        raise ValueError("pullback is defined for axisymmetric slabs")
    s = -frame.speed if inverse else frame.speed
    g = frame.gamma
    x1, rho = field.axes
    if x_window is not None:
        keep = (x1 >= x_window[0]) & (x1 <= x_window[1])
        if not np.any(keep):
            raise ValueError("x_window excludes every grid node")
        x1_out = x1[keep]
    else:
        x1_out = x1
    # inset by the spline stencil width so no sample touches the zero padding
    dt_stored = field.times[1] - field.times[0] if field.nt > 1 else 0.0
    margin = (order + 1) * dt_stored
    t_lo, t_hi = field.times[0] + margin, field.times[-1] - margin
    # gamma (t' + s x1') must lie in [t_lo, t_hi] for all output x1'
    tp_lo = t_lo / g - min(s * x1_out[0], s * x1_out[-1])
    tp_hi = t_hi / g - max(s * x1_out[0], s * x1_out[-1])
    if tp_hi <= tp_lo:
        raise SlabTooNarrow(
            f"slab too narrow: comoving window [{tp_lo:.3g}, {tp_hi:.3g}] "
            "is empty")
    if nt_out is None:
        dt_lab = field.times[1] - field.times[0] if field.nt > 1 else 1.0
        nt_out = max(2, min(4 * field.nt, int((tp_hi - tp_lo) / (dt_lab / g)) + 1))
    t_out = np.linspace(tp_lo, tp_hi, nt_out)

    dx = x1[1] - x1[0]
    dt = field.times[1] - field.times[0] if field.nt > 1 else 1.0
    ux = np.gradient(field.u, x1, axis=1)

    tp, xp = np.meshgrid(t_out, x1_out, indexing="ij")
    t_lab = g * (tp + s * xp)
    x_lab = g * (xp + s * tp)
    it = (t_lab - field.times[0]) / dt
    ix = (x_lab - x1[0]) / dx

    nt, n1 = t_out.size, x1_out.size
    shape = (nt, n1, rho.size)
    coords = np.empty((3, nt, n1, rho.size))
    coords[0] = it[:, :, None]
    coords[1] = ix[:, :, None]
    coords[2] = np.arange(rho.size)[None, None, :]

    u_out = ndimage.map_coordinates(field.u, coords.reshape(3, -1),
                                    order=order, mode="constant",
                                    cval=0.0).reshape(shape)
    ut_s = ndimage.map_coordinates(field.dtu, coords.reshape(3, -1),
                                   order=min(order, 1), mode="constant",
                                   cval=0.0).reshape(shape)
    ux_s = ndimage.map_coordinates(ux, coords.reshape(3, -1),
                                   order=min(order, 1), mode="constant",
                                   cval=0.0).reshape(shape)
    dtu_out = g * (s * ux_s + ut_s)

    meta = dict(field.meta)
    meta["pullback_speed"] = s
    return SpacetimeField("axisym", (x1_out, rho), t_out, u_out, dtu_out, meta)


def frame_to_json(frame: LorentzFrame) -> str:
    return json.dumps({
        "v": list(frame.velocity),
        "gamma": frame.gamma,
        "rotation": [float(a) for a in frame.rotation.ravel()],
        "boost": [float(a) for a in frame.boost.ravel()],
    })


def frame_from_json(text: str) -> LorentzFrame:
    data = json.loads(text)
    frame = make_frame(data["v"])
    stored = np.array(data["boost"]).reshape(4, 4)
    if not np.allclose(stored, frame.boost, atol=1.0e-12):
        raise ValueError("stored boost matrix is inconsistent with v")
    return frame
