"""Field container: quadrature weights, shifts, snapshot round trips."""

import numpy as np
import pytest

from mswl import fields as fl


def make_axisym(nx=33, nr=17, nt=9, x_span=(-4.0, 4.0), r_max=3.0, t_max=2.0):
    x1 = np.linspace(*x_span, nx)
    rho = np.linspace(0.0, r_max, nr)
    times = np.linspace(0.0, t_max, nt)
    X, R = np.meshgrid(x1, rho, indexing="ij")
    u = np.stack([np.exp(-(X - 0.3 * t) ** 2 - R**2) for t in times])
    dtu = np.stack([0.6 * (X - 0.3 * t) * np.exp(-(X - 0.3 * t) ** 2 - R**2)
                    for t in times])
    return fl.SpacetimeField("axisym", (x1, rho), times, u, dtu)


def test_axisym_volumes_sum_to_cylinder():
    f = make_axisym()
    total = f.volumes().sum()
    assert total == pytest.approx(8.0 * np.pi * 3.0**2, rel=1e-12)


def test_cart_volumes_sum_to_measure():
    x = np.linspace(0.0, 2.0, 11)
    y = np.linspace(-1.0, 1.0, 7)
    z = np.linspace(0.0, 0.5, 5)
    assert fl.cell_volumes("cart1d", (x,)).sum() == pytest.approx(2.0)
    assert fl.cell_volumes("cart3d", (x, y, z)).sum() == pytest.approx(2.0 * 2.0 * 0.5)


def test_transverse_areas_axisym():
    rho = np.linspace(0.0, 3.0, 17)
    areas = fl.transverse_areas("axisym", (None, rho))
    assert areas.sum() == pytest.approx(np.pi * 9.0, rel=1e-12)
    assert np.all(areas > 0.0)


def test_time_weights_sum_to_duration():
    f = make_axisym(t_max=2.0)
    assert f.time_weights().sum() == pytest.approx(2.0)


def test_values_at_interpolates():
    f = make_axisym()
    t = 0.5 * (f.times[3] + f.times[4])
    u_mid, _ = f.values_at(t)
    np.testing.assert_allclose(u_mid, 0.5 * (f.u[3] + f.u[4]))
    u_lo, _ = f.values_at(-5.0)
    np.testing.assert_allclose(u_lo, f.u[0])


def test_energy_series_on_known_field():
    # u = x1 * exp(-rho^2) frozen in time: energy integrand is analytic
    x1 = np.linspace(-1.0, 1.0, 401)
    rho = np.linspace(0.0, 6.0, 601)
    X, R = np.meshgrid(x1, rho, indexing="ij")
    u = X * np.exp(-(R**2))
    f = fl.SpacetimeField("axisym", (x1, rho), np.array([0.0]),
                          u[None], np.zeros_like(u)[None])
    # grad u = (e^{-r^2}, -2 x r e^{-r^2}); with int e^{-2r^2} 2 pi r dr
    # = pi/2 and int 4 r^2 e^{-2r^2} 2 pi r dr = pi, the squared norm is
    # 2 * pi/2 + (2/3) * pi = 5 pi / 3.
    expected = np.sqrt(5.0 * np.pi / 3.0)
    assert f.energy_series()[0] == pytest.approx(expected, rel=2e-4)


def test_shifted_moves_frames():
    f = make_axisym(nx=201, x_span=(-10.0, 10.0), nt=5, t_max=4.0)
    moved, coverage = f.shifted(0.5)
    # frame at t: original bump centered at 0.3 t, sampled at x + 0.5 t
    k = 4
    t = f.times[k]
    x1 = f.axes[0]
    expect = np.exp(-(x1 + 0.5 * t - 0.3 * t) ** 2)
    inside = (x1 + 0.5 * t) <= x1[-1]
    np.testing.assert_allclose(moved.u[k][inside, 0], expect[inside], atol=2e-3)
    assert np.all(moved.u[k][~inside, 0] == 0.0)
    assert 0.0 < coverage < 1.0


def test_snapshot_roundtrip(tmp_path):
    f = make_axisym()
    path = tmp_path / "slab.mswl"
    fl.save_field(f, path)
    g = fl.load_field(path)
    assert g.layout == f.layout
    np.testing.assert_allclose(g.times, f.times, atol=1e-15)
    for a, b in zip(g.axes, f.axes):
        np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_array_equal(g.u, f.u)
    np.testing.assert_array_equal(g.dtu, f.dtu)


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "junk.mswl"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError, match="magic"):
        fl.load_field(path)


def test_window_and_subtract():
    f = make_axisym(nt=9, t_max=2.0)
    w = f.window(t0=0.5, t1=1.5)
    assert w.times[0] >= 0.5 and w.times[-1] <= 1.5
    diff = f - f
    assert np.all(diff.u == 0.0) and np.all(diff.dtu == 0.0)


def test_shape_mismatch_rejected():
    x1 = np.linspace(0, 1, 4)
    rho = np.linspace(0, 1, 3)
    with pytest.raises(ValueError, match="shape"):
        fl.SpacetimeField("axisym", (x1, rho), np.array([0.0]),
                          np.zeros((1, 4, 2)), np.zeros((1, 4, 2)))
