"""Frames, boosts, contraction geometry, and slab pullbacks."""

import numpy as np
import pytest

from mswl import elliptic as el
from mswl import lorentz as lz
from mswl.fields import SpacetimeField
from mswl.potentials import gaussian_well


def synthetic_profile(r_max=60.0, n=6001):
    """A smooth decaying profile; rigidity checks are pure kinematics."""
    grid = np.linspace(0.0, r_max, n)
    values = 1.0 / (1.0 + grid**2)
    du = -2.0 * grid / (1.0 + grid**2) ** 2
    return el.StaticState(grid, values, 0.0, 0.0, 1.0, du=du)


def traveling_slab(profile, frame, nx=257, nr=97, nt=129):
    x1 = np.linspace(-8.0, 24.0, nx)
    rho = np.linspace(0.0, 12.0, nr)
    times = np.linspace(0.0, 16.0, nt)
    prof = lz.BoostedProfile(profile, frame)
    X, R = np.meshgrid(x1, rho, indexing="ij")
    u = np.stack([prof.axial(X, R, t) for t in times])
    dtu = np.stack([prof.axial_dt(X, R, t) for t in times])
    return SpacetimeField("axisym", (x1, rho), times, u, dtu)


def test_gamma_values():
    assert lz.make_frame(0.6).gamma == 1.25
    assert lz.make_frame(0.0).gamma == 1.0
    assert lz.make_frame(0.8).gamma == pytest.approx(5.0 / 3.0, rel=1e-15)


def test_superluminal_rejected():
    for bad in (1.2, 1.0, [0.8, 0.8, 0.0]):
        with pytest.raises(ValueError, match="superluminal velocity"):
            lz.make_frame(bad)
    with pytest.raises(ValueError, match="superluminal velocity"):
        lz.Velocity((1.0, 0.0, 0.0))


def test_metric_identity_random_velocities():
    rng = np.random.default_rng(42)
    for _ in range(100):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        v = direction * rng.uniform(0.0, 0.95)
        L = lz.make_frame(v).boost
        residual = L.T @ lz.MINKOWSKI @ L - lz.MINKOWSKI
        assert np.max(np.abs(residual)) < 1.0e-12


def test_rotation_maps_velocity_to_axis():
    rng = np.random.default_rng(7)
    for _ in range(25):
        v = rng.normal(size=3)
        v *= rng.uniform(0.1, 0.9) / np.linalg.norm(v)
        R = lz.make_frame(v).rotation
        np.testing.assert_allclose(R @ (v / np.linalg.norm(v)),
                                   [1.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(lz.make_frame(0.5).rotation, np.eye(3))
    R_back = lz.make_frame([-0.5, 0.0, 0.0]).rotation
    np.testing.assert_allclose(R_back @ [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                               atol=1e-12)


def test_event_roundtrip():
    rng = np.random.default_rng(3)
    frame = lz.make_frame([0.3, 0.4, 0.1])
    t = rng.normal(size=9)
    x = rng.normal(size=(9, 3))
    tp, xp = frame.to_comoving(t, x)
    t2, x2 = frame.from_comoving(tp, xp)
    np.testing.assert_allclose(t2, t, atol=1e-12)
    np.testing.assert_allclose(x2, x, atol=1e-12)


def test_contracted_level_sets_are_prolate():
    V = gaussian_well(5.0, 1.0)
    frame = lz.make_frame(0.6)
    contracted = lz.contract_potential(V, frame)
    R0 = 1.3
    along = contracted(np.array([frame.gamma * R0, 0.0, 0.0]))
    across = contracted(np.array([0.0, R0, 0.0]))
    assert along == pytest.approx(across, rel=1e-12)
    assert frame.gamma == 1.25


def test_lab_profile_point_values():
    grid = np.linspace(0.0, 100.0, 10001)
    rest = el.StaticState(grid, 1.0 / (1.0 + grid), 0.0, 0.0, 1.0,
                          du=-1.0 / (1.0 + grid) ** 2)
    frame = lz.make_frame(0.5)
    prof = lz.BoostedProfile(rest, frame)
    # on the soliton center the comoving radius is zero
    assert lz.lab_profile(prof, np.array([1.0, 0.0, 0.0]), 2.0) == \
        pytest.approx(1.0, abs=1e-10)
    # off center: radius gamma |x1 - v t|
    g = frame.gamma
    r = g * (3.0 - 1.0)
    assert lz.lab_profile(prof, np.array([3.0, 0.0, 0.0]), 2.0) == \
        pytest.approx(1.0 / (1.0 + r), rel=1e-6)


def test_lab_profile_off_axis_velocity():
    grid = np.linspace(0.0, 50.0, 5001)
    rest = el.StaticState(grid, np.exp(-grid**2), 0.0, 0.0, 1.0,
                          du=-2.0 * grid * np.exp(-grid**2))
    v = np.array([0.3, 0.4, 0.0])
    prof = lz.BoostedProfile(rest, lz.make_frame(v))
    t = 3.7
    assert lz.lab_profile(prof, v * t, t) == pytest.approx(1.0, abs=1e-9)


def test_rigid_traveler_pullback_is_static():
    frame = lz.make_frame(0.5)
    profile = synthetic_profile()
    slab = traveling_slab(profile, frame)
    com = lz.pullback_field(slab, frame, x_window=(-5.0, 5.0))
    base = com.u[com.nt // 2]
    scale = np.max(np.abs(base))
    worst = max(np.max(np.abs(com.u[k] - base)) for k in range(com.nt))
    assert worst / scale < 1.0e-4
    # and the comoving snapshot is the rest profile itself
    Xc, Rc = np.meshgrid(com.axes[0], com.axes[1], indexing="ij")
    exact = profile.interp(np.sqrt(Xc**2 + Rc**2))
    assert np.max(np.abs(base - exact)) / scale < 1.0e-4


def test_pullback_inverse_recovers_lab_samples():
    # localized profile: the inverse resample reaches comoving points
    # outside the stored window, where zero fill must be harmless
    frame = lz.make_frame(0.4)
    grid = np.linspace(0.0, 60.0, 6001)
    profile = el.StaticState(grid, np.exp(-grid**2 / 2.0), 0.0, 0.0, 1.0,
                             du=-grid * np.exp(-grid**2 / 2.0))
    slab = traveling_slab(profile, frame)
    com = lz.pullback_field(slab, frame, x_window=(-5.0, 5.0))
    back = lz.pullback_field(com, frame, inverse=True, x_window=(-2.0, 2.0))
    prof = lz.BoostedProfile(profile, frame)
    Xb, Rb = np.meshgrid(back.axes[0], back.axes[1], indexing="ij")
    worst = 0.0
    for k, t in enumerate(back.times):
        exact = prof.axial(Xb, Rb, t)
        worst = max(worst, np.max(np.abs(back.u[k] - exact)))
    assert worst / np.max(np.abs(back.u)) < 1.0e-3


def test_slab_too_narrow():
    frame = lz.make_frame(0.9)
    x1 = np.linspace(-30.0, 30.0, 61)
    rho = np.linspace(0.0, 5.0, 6)
    times = np.linspace(0.0, 1.0, 5)
    zeros = np.zeros((5, 61, 6))
    thin = SpacetimeField("axisym", (x1, rho), times, zeros, zeros.copy())
    with pytest.raises(lz.SlabTooNarrow, match="slab too narrow"):
        lz.pullback_field(thin, frame)


def test_frame_json_roundtrip():
    frame = lz.make_frame([0.2, -0.3, 0.1])
    text = lz.frame_to_json(frame)
    back = lz.frame_from_json(text)
    np.testing.assert_allclose(back.velocity, frame.velocity, atol=1e-15)
    assert back.gamma == pytest.approx(frame.gamma, rel=1e-15)
    np.testing.assert_allclose(back.boost, frame.boost, atol=1e-15)
