"""Tests for the exact quintic interaction algebra."""

import numpy as np
import pytest

from mswl.elliptic import StaticState, find_ground_state, zero_state
from mswl.fields import load_field, save_field
from mswl.interaction import (
    A_COEFFS,
    M1_COEFFS,
    M2_MIDDLE_BINOMIAL,
    M2_MIDDLE_PRINTED,
    M3_COEFFS,
    SOURCE_COEFFS,
    SolitonPair,
    build_terms,
    coefficient_snapshot,
    envelope_check,
    quintic_identity_residual,
    residual_identity,
    swapped_pair,
)
from mswl.lorentz import BoostedProfile, make_frame
from mswl.potentials import compact_bump_well, gaussian_well, zero_potential


def tabulated_state(fn, r_max=400.0, n=8001):
    """Wrap a radial function as a static-state-shaped profile."""
    grid = np.linspace(0.0, r_max, n)
    vals = np.asarray(fn(grid), dtype=float)
    du = np.gradient(vals, grid)
    return StaticState(grid=grid, values=vals,
                       far_field_c=float(vals[-1] * r_max), energy=0.0,
                       shoot_alpha=float(vals[0]), du=du)


def constant_pair(p, q, speed=0.5):
    """Two constant profiles with zero wells (algebra probes only)."""
    w1 = tabulated_state(lambda r: np.full_like(r, p), r_max=1.0e6, n=3)
    w2 = tabulated_state(lambda r: np.full_like(r, q), r_max=1.0e6, n=3)
    return SolitonPair(w1=w1, w2=BoostedProfile(w2, make_frame(speed)),
                       v1=zero_potential(), v2=zero_potential())


@pytest.fixture(scope="module")
def ground_pair():
    v1 = gaussian_well(depth=20.0)
    v2 = gaussian_well(depth=12.0)
    w1 = find_ground_state(v1)
    w2 = find_ground_state(v2)
    return SolitonPair(w1=w1, w2=BoostedProfile(w2, make_frame(0.6)),
                       v1=v1, v2=v2)


def test_identity_checksum_241():
    # (1+1+1)^5 - 1 - 1 = 241 and the grouping reproduces it exactly
    assert 3.0**5 - 2.0 == 241.0
    assert quintic_identity_residual(1.0, 1.0, 1.0) == 0.0


def test_identity_random_triples():
    rng = np.random.default_rng(20260816)
    w1, w2, h = rng.uniform(-2.0, 2.0, size=(3, 10_000))
    dev = quintic_identity_residual(w1, w2, h)
    scale = 1.0 + np.abs((w1 + w2 + h) ** 5 - w1**5 - w2**5)
    assert np.max(dev / scale) < 1.0e-12


def test_printed_middle_coefficient_violates_identity():
    dev = quintic_identity_residual(1.0, 1.0, 1.0, m2_middle=M2_MIDDLE_PRINTED)
    assert dev == pytest.approx(M2_MIDDLE_BINOMIAL - M2_MIDDLE_PRINTED)
    rng = np.random.default_rng(7)
    w1, w2, h = rng.uniform(0.5, 2.0, size=(3, 100))
    dev = quintic_identity_residual(w1, w2, h, m2_middle=M2_MIDDLE_PRINTED)
    assert np.allclose(dev, 17.0 * np.abs(w1 * w2 * h**3), rtol=1.0e-10)


def extract_coefficients(samples, monomials):
    """Least-squares read-back of polynomial coefficients."""
    pts, vals = samples
    design = np.column_stack([m(*pts) for m in monomials])
    coeffs, *_ = np.linalg.lstsq(design, vals, rcond=None)
    return coeffs


def test_group_coefficients_reproduced():
    # measure every grouped coefficient from the closures themselves,
    # using constant profiles so the profile values are knowns
    rng = np.random.default_rng(3)
    pq = rng.uniform(0.5, 2.0, size=(12, 2))
    x1, rho, t = 1.0, 2.0, 0.3

    def sample(method, *extra):
        vals = []
        for p, q in pq:
            terms = build_terms(constant_pair(p, q))
            vals.append(getattr(terms, method)(*extra, x1, rho, t))
        return (pq[:, 0], pq[:, 1]), np.asarray(vals, dtype=float)

    a_hat = extract_coefficients(sample("a"), [
        lambda p, q: p**3 * q, lambda p, q: p**2 * q**2, lambda p, q: p * q**3])
    assert np.allclose(a_hat, A_COEFFS, atol=1.0e-9)

    src_hat = extract_coefficients(sample("source"), [
        lambda p, q: p**4 * q, lambda p, q: p**3 * q**2,
        lambda p, q: p**2 * q**3, lambda p, q: p * q**4])
    assert np.allclose(src_hat, SOURCE_COEFFS, atol=1.0e-9)

    m1_hat = extract_coefficients(sample("m1"), [
        lambda p, q: p**3, lambda p, q: p**2 * q,
        lambda p, q: p * q**2, lambda p, q: q**3])
    assert np.allclose(m1_hat, M1_COEFFS, atol=1.0e-9)

    m2_hat = extract_coefficients(sample("m2"), [
        lambda p, q: p**2, lambda p, q: p * q, lambda p, q: q**2])
    assert np.allclose(m2_hat, (10.0, M2_MIDDLE_BINOMIAL, 10.0), atol=1.0e-9)

    m3_hat = extract_coefficients(sample("m3"), [
        lambda p, q: p, lambda p, q: q])
    assert np.allclose(m3_hat, M3_COEFFS, atol=1.0e-9)


def test_m1_groups_split():
    terms = build_terms(constant_pair(2.0, 3.0))
    g = terms.m1_groups(0.0, 1.0, 0.0)
    assert g[0] == pytest.approx(10.0 * 8.0)
    assert g[1] == pytest.approx(30.0 * 4.0 * 3.0)
    assert g[2] == pytest.approx(30.0 * 2.0 * 9.0)
    assert g[3] == pytest.approx(10.0 * 27.0)
    assert sum(g) == pytest.approx(terms.m1(0.0, 1.0, 0.0))


def test_strict_paper_and_override_modes(ground_pair):
    strict = build_terms(ground_pair, strict_paper=True)
    assert strict.m2_middle == M2_MIDDLE_PRINTED
    other = build_terms(ground_pair, m2_middle=30.0)
    assert other.m2_middle == 30.0
    default = build_terms(ground_pair)
    assert default.m2_middle == M2_MIDDLE_BINOMIAL
    # the strict mode changes only the cubic group
    h = 0.7
    x1, rho, t = 0.8, 0.4, 1.5
    w1, w2 = ground_pair.profile_values(x1, rho, t)
    gap = default.n(h, x1, rho, t) - strict.n(h, x1, rho, t)
    assert gap == pytest.approx(17.0 * w1 * w2 * h**3, rel=1.0e-12)


def test_single_soliton_reduction():
    # W2 = 0 kills the cross terms and leaves the one-soliton powers
    w1 = tabulated_state(lambda r: 1.0 / (1.0 + r))
    pair = SolitonPair(w1=w1, w2=BoostedProfile(zero_state(), make_frame(0.5)),
                       v1=gaussian_well(4.0), v2=zero_potential())
    terms = build_terms(pair)
    x1 = np.array([0.0, 1.0, -3.0])
    rho = np.array([0.5, 0.0, 2.0])
    t = 1.2
    for coeff in (terms.a, terms.f1, terms.f2, terms.f):
        assert np.all(coeff(x1, rho, t) == 0.0)
    h = np.array([0.3, -1.0, 2.0])
    w = w1.interp(np.hypot(x1, rho))
    expected = 10.0 * w**3 * h**2 + 10.0 * w**2 * h**3 + 5.0 * w * h**4
    assert np.allclose(terms.n(h, x1, rho, t), expected, rtol=1.0e-13)


def test_both_profiles_zero():
    pair = SolitonPair(w1=zero_state(), w2=BoostedProfile(zero_state(), make_frame(0.3)),
                       v1=zero_potential(), v2=zero_potential())
    terms = build_terms(pair)
    x1, rho, t = 1.0, 1.0, 2.0
    assert terms.a(x1, rho, t) == 0.0
    assert terms.source(x1, rho, t) == 0.0
    assert terms.n(0.8, x1, rho, t) == 0.0


def test_a_matches_binomial_difference(ground_pair):
    rng = np.random.default_rng(11)
    terms = build_terms(ground_pair)
    x1 = rng.uniform(-6.0, 6.0, size=200)
    rho = rng.uniform(0.0, 6.0, size=200)
    t = rng.uniform(0.0, 4.0, size=200)
    w1, w2 = ground_pair.profile_values(x1, rho, t)
    expected = 5.0 * (w1 + w2) ** 4 - 5.0 * w1**4 - 5.0 * w2**4
    got = terms.a(x1, rho, t)
    scale = 1.0 + np.abs(expected)
    assert np.max(np.abs(got - expected) / scale) < 1.0e-12


def test_residual_identity_on_real_pair(ground_pair):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-5.0, 5.0, size=3)
        t = rng.uniform(0.0, 5.0)
        h = rng.uniform(-2.0, 2.0)
        worst = max(worst, residual_identity(ground_pair, h, x, t))
    assert worst < 1.0e-12
    # zero perturbation: identity is between the pure source groupings
    assert residual_identity(ground_pair, 0.0, np.array([1.0, 0.0, 0.0]), 0.5) < 1.0e-14
    # callable samples work too
    dev = residual_identity(ground_pair, lambda x, t: 0.25 * t, np.ones(3), 2.0)
    assert dev < 1.0e-13


def test_residual_identity_rejects_nonfinite(ground_pair):
    with pytest.raises(ValueError, match="finite"):
        residual_identity(ground_pair, np.inf, np.zeros(3), 0.0)


def test_equation_consistency_with_potentials(ground_pair):
    # plugging u = W1 + W2 + h into quintic + potential terms must match
    # source + (linearized potential + a) h + N(h) + h^5 identically
    rng = np.random.default_rng(13)
    terms = build_terms(ground_pair)
    x1 = rng.uniform(-4.0, 4.0, size=300)
    rho = rng.uniform(0.0, 4.0, size=300)
    t = rng.uniform(0.0, 3.0, size=300)
    h = rng.uniform(-1.5, 1.5, size=300)

    g = ground_pair.frame.gamma
    s = ground_pair.frame.speed
    r1 = np.hypot(x1, rho)
    r2 = np.sqrt((g * (x1 - s * t)) ** 2 + rho**2)
    w1 = ground_pair.w1.interp(r1)
    w2 = ground_pair.w2.rest_profile.interp(r2)
    v1 = ground_pair.v1.eval(r1)
    v2 = ground_pair.v2.eval(r2)
    u = w1 + w2 + h
    lhs = (u**5 + (v1 + v2) * u
           - (w1**5 + v1 * w1) - (w2**5 + v2 * w2))

    rhs = (terms.source(x1, rho, t)
           + (terms.linearized_potential(x1, rho, t) + terms.a(x1, rho, t)) * h
           + terms.n(h, x1, rho, t) + h**5)
    scale = 1.0 + np.abs(lhs)
    assert np.max(np.abs(lhs - rhs) / scale) < 1.0e-12


def test_iteration_source_grouping(ground_pair):
    terms = build_terms(ground_pair)
    rng = np.random.default_rng(17)
    x1 = rng.uniform(-4.0, 4.0, size=50)
    rho = rng.uniform(0.0, 4.0, size=50)
    t = 1.1
    h = rng.uniform(-1.0, 1.0, size=50)
    expected = (terms.source(x1, rho, t) + terms.n(h, x1, rho, t)
                - terms.a(x1, rho, t) * h - h**5)
    assert np.allclose(terms.iteration_source(h, x1, rho, t), expected,
                       rtol=1.0e-12, atol=1.0e-14)


def test_homogeneity_of_n_parts(ground_pair):
    terms = build_terms(ground_pair)
    x1 = np.linspace(-3.0, 3.0, 7)
    rho = np.linspace(0.0, 2.0, 7)
    t = 0.9
    h = np.linspace(-1.0, 1.0, 7)
    p2, p3, p4 = terms.n_parts(h, x1, rho, t)
    q2, q3, q4 = terms.n_parts(2.0 * h, x1, rho, t)
    # doubling h scales the groups by exactly 4, 8, 16
    assert np.array_equal(q2, 4.0 * p2)
    assert np.array_equal(q3, 8.0 * p3)
    assert np.array_equal(q4, 16.0 * p4)


def test_swap_symmetry(ground_pair):
    # exchanging the roles swaps F1 <-> F2 and fixes a and F once the
    # event is mapped to the comoving frame and mirrored in x1
    terms = build_terms(ground_pair)
    swapped = build_terms(swapped_pair(ground_pair))
    frame = ground_pair.frame
    rng = np.random.default_rng(23)
    for _ in range(40):
        x1, t = rng.uniform(-5.0, 5.0), rng.uniform(0.0, 4.0)
        rho = rng.uniform(0.0, 5.0)
        tp, xp = frame.to_comoving(t, np.array([x1, rho, 0.0]))
        x1m, rhom = -xp[0], np.hypot(xp[1], xp[2])
        assert terms.f2(x1, rho, t) == pytest.approx(
            swapped.f1(x1m, rhom, tp), rel=1.0e-9, abs=1.0e-13)
        assert terms.f1(x1, rho, t) == pytest.approx(
            swapped.f2(x1m, rhom, tp), rel=1.0e-9, abs=1.0e-13)
        assert terms.a(x1, rho, t) == pytest.approx(
            swapped.a(x1m, rhom, tp), rel=1.0e-9, abs=1.0e-13)
        assert terms.f(x1, rho, t) == pytest.approx(
            swapped.f(x1m, rhom, tp), rel=1.0e-9, abs=1.0e-13)


def test_axial_coords_off_axis_velocity():
    w = tabulated_state(lambda r: np.exp(-r))
    pair = SolitonPair(w1=w, w2=BoostedProfile(w, make_frame([0.3, 0.4, 0.0])),
                       v1=zero_potential(), v2=zero_potential())
    # a point on the motion axis has zero transverse radius
    x1, rho = pair.axial_coords(np.array([0.6, 0.8, 0.0]))
    assert x1 == pytest.approx(1.0)
    assert rho == pytest.approx(0.0, abs=1.0e-12)


def test_envelope_synthetic_profiles():
    # the classic example: W1 = 1/<x>, W2 the boosted analogue; measure C
    # on the same grid with an independent reimplementation
    speed = 0.5
    w1 = tabulated_state(lambda r: 1.0 / np.sqrt(1.0 + r**2), n=160001)
    w2 = tabulated_state(lambda r: 1.0 / np.sqrt(1.0 + r**2), n=160001)
    v1 = compact_bump_well(depth=2.0, width=1.5)
    pair = SolitonPair(w1=w1, w2=BoostedProfile(w2, make_frame(speed)),
                       v1=v1, v2=zero_potential())
    terms = build_terms(pair)
    radius = np.linspace(0.0, 30.0, 61)
    times = np.linspace(0.0, 12.0, 7)
    report = envelope_check(terms, v=speed, radius_grid=radius, time_grid=times)

    g = pair.frame.gamma
    x1 = np.unique(np.concatenate([-radius, radius]))[:, None, None]
    rho = np.unique(np.concatenate([[0.0], radius]))[None, :, None]
    t = times[None, None, :]
    ww1 = 1.0 / np.sqrt(1.0 + x1**2 + rho**2)
    ww2 = 1.0 / np.sqrt(1.0 + g**2 * (x1 - speed * t) ** 2 + rho**2)
    f1 = 5.0 * ww1**4 * ww2 + v1.eval(np.sqrt(x1**2 + rho**2)) * ww2
    env1 = (1.0 + x1**2 + rho**2) ** -2.0 / np.sqrt(1.0 + (x1 - speed * t) ** 2 + rho**2)
    expected_c1 = float(np.max(np.abs(f1) / env1))
    assert report.c1 == pytest.approx(expected_c1, rel=1.0e-4)
    assert not report.degenerate
    assert report.passed
    # with the exact 1/<x> profile the constant is 5 plus the well's bump
    assert 4.0 < report.c1 < 5.0 + 2.0 * (1.0 + 1.5**2) ** 2 + 0.5


def test_envelope_point_value(ground_pair):
    terms = build_terms(ground_pair)
    w1_0 = ground_pair.w1.interp(0.0)
    w2_0 = ground_pair.w2.rest_profile.interp(0.0)
    v1_0 = ground_pair.v1.at_origin()
    assert terms.f1(0.0, 0.0, 0.0) == pytest.approx(
        5.0 * w1_0**4 * w2_0 + v1_0 * w2_0, rel=1.0e-12)


def test_envelope_ground_pair_finite(ground_pair):
    terms = build_terms(ground_pair)
    report = envelope_check(terms, radius_grid=np.linspace(0.0, 25.0, 51),
                            time_grid=np.linspace(0.0, 10.0, 6))
    assert np.isfinite(report.c1) and report.c1 > 0.0
    assert np.isfinite(report.c2) and report.c2 > 0.0
    assert report.passed


def test_envelope_degenerate_zero_velocity():
    w = tabulated_state(lambda r: 1.0 / np.sqrt(1.0 + r**2), n=160001)
    pair = SolitonPair(w1=w, w2=BoostedProfile(w, make_frame(0.0)),
                       v1=zero_potential(), v2=zero_potential())
    terms = build_terms(pair)
    radius = np.linspace(0.0, 20.0, 41)
    report = envelope_check(terms, radius_grid=radius,
                            time_grid=np.array([0.0, 5.0]))
    assert report.degenerate
    # F1 = 5 <x>^-5 exactly, so the collapsed envelope gives C1 = 5
    assert report.c1 == pytest.approx(5.0, rel=1.0e-4)
    assert report.c2 == pytest.approx(5.0, rel=1.0e-4)


def test_envelope_velocity_mismatch(ground_pair):
    terms = build_terms(ground_pair)
    with pytest.raises(ValueError, match="does not match"):
        envelope_check(terms, v=0.25)


def test_envelope_cap_offenders():
    w = tabulated_state(lambda r: 1.0 / np.sqrt(1.0 + r**2))
    pair = SolitonPair(w1=w, w2=BoostedProfile(w, make_frame(0.5)),
                       v1=zero_potential(), v2=zero_potential())
    terms = build_terms(pair)
    report = envelope_check(terms, radius_grid=np.linspace(0.0, 10.0, 21),
                            time_grid=np.array([0.0]), cap=3.0)
    assert not report.passed
    assert all(entry[4] > 3.0 for entry in report.offenders)
    names = {entry[0] for entry in report.offenders}
    assert names <= {"f1", "f2"}


def test_validation_rejects_bad_profiles():
    grid = np.linspace(0.0, 10.0, 101)
    bad = StaticState(grid=grid, values=np.ones_like(grid), far_field_c=0.0,
                      energy=0.0, shoot_alpha=1.0,
                      residual=np.full_like(grid, 1.0e-2))
    pair = SolitonPair(w1=bad, w2=BoostedProfile(zero_state(), make_frame(0.4)),
                       v1=zero_potential(), v2=zero_potential())
    with pytest.raises(ValueError, match="elliptic"):
        build_terms(pair)


def test_coefficient_snapshot_roundtrip(tmp_path, ground_pair):
    terms = build_terms(ground_pair)
    x1 = np.linspace(-4.0, 4.0, 17)
    rho = np.linspace(0.0, 3.0, 7)
    times = np.linspace(0.0, 2.0, 3)
    snap = coefficient_snapshot(terms, "a", x1, rho, times)
    assert snap.u.shape == (3, 17, 7)
    assert snap.u[1] == pytest.approx(terms.a(x1[:, None], rho[None, :], times[1]))
    assert np.all(snap.dtu == 0.0)
    path = tmp_path / "a.field"
    save_field(snap, path)
    back = load_field(path)
    assert np.array_equal(back.u, snap.u)
    with pytest.raises(ValueError, match="unknown coefficient"):
        coefficient_snapshot(terms, "b3", x1, rho, times)
