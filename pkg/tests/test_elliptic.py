"""Radial static solver, energy, spectrum, and far-field checks.

Frozen reference numbers come from two independent routes: closed-form
identities (the Nehari relation J = -(1/3) int u^6 for any static state)
and a zero-energy node-count oracle for eigenvalue counts, integrated here
with a different method and grid than the module under test.
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mswl import elliptic as el
from mswl.potentials import gaussian_well, zero_potential

# Frozen by the bisection + quadrature run; stable across grid refinement.
DEEP = dict(depth=20.0, alpha=2.0703979985, c=1.3726493, J=-71.75792)

# (depth, negative-eigenvalue counts for ell = 0, 1, 2 at u = 0).
SWEEP_COUNTS = {
    2.0: (0, 0, 0),
    6.0: (1, 0, 0),
    12.0: (1, 0, 0),
    20.0: (2, 1, 0),
    35.0: (2, 1, 1),
}


@pytest.fixture(scope="module")
def deep_well():
    return gaussian_well(DEEP["depth"], 1.0)


@pytest.fixture(scope="module")
def ground(deep_well):
    return el.find_ground_state(deep_well)


def count_zero_energy_nodes(V, ell, r_max=80.0):
    """Sturm oracle: nodes of the zero-energy solution = bound states."""

    def rhs(r, y):
        u, du = y
        return (du, (V.eval(r) + ell * (ell + 1) / r**2) * u - 2.0 * du / r)

    r0 = 1.0e-3
    if ell == 0:
        y0 = [1.0 + V.at_origin() * r0**2 / 6.0, V.at_origin() * r0 / 3.0]
    else:
        y0 = [r0**ell, ell * r0 ** (ell - 1)]
    sol = solve_ivp(rhs, (r0, r_max), y0, method="RK45", rtol=1.0e-9,
                    atol=1.0e-300, dense_output=True)
    rr = np.linspace(r0, r_max, 30000)
    uu = sol.sol(rr)[0]
    return int(np.sum(np.diff(np.sign(uu)) != 0))


def test_zero_potential_zero_alpha():
    state = el.solve_radial_static(zero_potential(), 0.0)
    assert np.all(state.values == 0.0)
    assert state.far_field_c == 0.0
    assert state.energy == 0.0


def test_free_nonzero_alpha_diverges():
    with pytest.raises(el.ShootDiverged) as err:
        el.solve_radial_static(zero_potential(), 0.5)
    assert "shoot diverged" in str(err.value)
    assert err.value.radius > 0.0


def test_deep_well_ground_state(ground):
    assert ground.tag == "ground"
    assert abs(ground.shoot_alpha - DEEP["alpha"]) < 2.0e-5
    assert ground.far_field_c == pytest.approx(DEEP["c"], rel=2.0e-3)
    assert ground.energy == pytest.approx(DEEP["J"], rel=1.0e-3)
    assert ground.energy < 0.0
    assert np.all(ground.values >= 0.0)
    assert ground.max_residual < 1.0e-6


def test_far_field_plateau(ground):
    r = np.linspace(50.0, 100.0, 400)
    ru = r * ground.interp(r)
    spread = (ru.max() - ru.min()) / abs(ru.mean())
    assert spread < 0.01


def test_nehari_identity(ground):
    r, u = ground.grid, ground.values
    i6 = np.trapezoid(u**6 * 4.0 * np.pi * r**2, r)
    assert abs(ground.energy + i6 / 3.0) < 1.0e-5 * abs(ground.energy)


def test_far_field_synthetic_tail():
    grid = el.default_grid()
    values = 1.0 / (1.0 + grid)
    state = el.StaticState(grid, values, 0.0, 0.0, 1.0)
    c, resid = el.far_field_coefficient(state, full_output=True)
    assert c == pytest.approx(1.0, abs=0.03)
    assert resid < 0.05


def test_far_field_zero_state():
    assert el.far_field_coefficient(el.zero_state()) == 0.0


def test_far_field_unresolved_tail():
    grid = el.default_grid()
    state = el.StaticState(grid, np.cos(grid), 0.0, 0.0, 1.0)
    with pytest.raises(el.TailNotResolved):
        el.far_field_coefficient(state)


def test_spectrum_free_laplacian():
    spec = el.linearization_spectrum(el.zero_state(), zero_potential())
    assert spec.negative_eigenvalues == []
    assert spec.is_stable
    assert spec.zero_resonance_indicator > 0.1


@pytest.mark.parametrize("depth", sorted(SWEEP_COUNTS))
def test_spectrum_counts_match_node_oracle(depth):
    V = gaussian_well(depth, 1.0)
    spec = el.linearization_spectrum(el.zero_state(), V)
    for ell in (0, 1, 2):
        assert spec.per_angular_sector[ell] == SWEEP_COUNTS[depth][ell]
        assert spec.per_angular_sector[ell] == count_zero_energy_nodes(V, ell)


def test_deep_well_ground_eigenvalue(deep_well):
    spec = el.linearization_spectrum(el.zero_state(), deep_well)
    assert spec.negative_eigenvalues[0] == pytest.approx(-8.5613, rel=1.0e-3)


def test_resonance_indicator_at_critical_depth():
    near_critical = el.linearization_spectrum(el.zero_state(),
                                              gaussian_well(2.684, 1.0))
    assert near_critical.negative_eigenvalues == []
    assert near_critical.zero_resonance_indicator < 1.0e-4
    assert not near_critical.is_stable

    shallow = el.linearization_spectrum(el.zero_state(),
                                        gaussian_well(2.0, 1.0))
    assert shallow.is_stable


def test_ground_state_linearization_stable(ground, deep_well):
    spec = el.linearization_spectrum(ground, deep_well)
    assert spec.negative_eigenvalues == []
    assert spec.is_stable


def test_dichotomy_shooting_vs_eigencount():
    for depth in (2.0, 6.0, 20.0):
        V = gaussian_well(depth, 1.0)
        spec = el.linearization_spectrum(el.zero_state(), V)
        trapped = bool(spec.negative_eigenvalues)
        assert el.has_crossed_outcome(V) == trapped


def test_no_trapping_returns_zero_state():
    state = el.find_ground_state(gaussian_well(2.0, 1.0))
    assert state.tag == "no trapping"
    assert np.all(state.values == 0.0)


def test_grid_refinement_far_field(deep_well, ground):
    coarse = el.find_ground_state(deep_well, grid=el.default_grid(n=10000))
    assert abs(coarse.far_field_c - ground.far_field_c) < 0.01 * abs(ground.far_field_c)


def test_discretized_operator_is_symmetric():
    dr = 0.1
    r = dr * np.arange(1, 100)
    q = -20.0 * np.exp(-(r**2))
    d = 2.0 / dr**2 + q
    e = np.full(r.size - 1, -1.0 / dr**2)
    A = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    np.testing.assert_allclose(A, A.T)


def test_random_wells_static_properties():
    rng = np.random.default_rng(20260816)
    for _ in range(4):
        depth = rng.uniform(4.0, 30.0)
        width = rng.uniform(0.7, 1.6)
        V = gaussian_well(depth, width)
        state = el.find_ground_state(V)
        if state.tag == "no trapping":
            continue
        assert state.max_residual < 1.0e-6
        assert state.energy < 0.0
        assert np.all(state.values >= 0.0)
        r, u = state.grid, state.values
        i6 = np.trapezoid(u**6 * 4.0 * np.pi * r**2, r)
        assert abs(state.energy + i6 / 3.0) < 1.0e-4 * abs(state.energy)


# Frozen by the node-count bisection; the well traps two s-wave levels
# (-2.8176, -0.1961) so it carries a 1-node state below the ground state.
TWO_LEVEL = dict(depth=6.0, width=2.0, alpha=1.459135873, c=-1.591238,
                 e_s=-1.158452, e_p=-0.4987, ground_alpha=1.538333462)


class ShiftedLinearization:
    """V + 5 u^4 - E as a potential-like object for the Sturm oracle."""

    def __init__(self, V, state, E=0.0):
        self.V = V
        self.state = state
        self.E = E

    def eval(self, r):
        return self.V.eval(r) + 5.0 * self.state.interp(r) ** 4 - self.E

    def at_origin(self):
        return self.V.at_origin() + 5.0 * self.state.values[0] ** 4 - self.E


@pytest.fixture(scope="module")
def two_level_well():
    return gaussian_well(TWO_LEVEL["depth"], TWO_LEVEL["width"])


@pytest.fixture(scope="module")
def census(two_level_well):
    return el.static_state_census(two_level_well)


def test_excited_state_profile(census, two_level_well):
    q1 = census[0]
    assert q1.tag == "excited-1"
    assert q1.shoot_alpha == pytest.approx(TWO_LEVEL["alpha"], rel=1.0e-9)
    assert q1.far_field_c == pytest.approx(TWO_LEVEL["c"], rel=1.0e-5)
    assert q1.far_field_c < 0.0
    assert q1.max_residual < 1.0e-6
    u = q1.values
    signs = np.sign(u[np.abs(u) > 1.0e-10 * np.abs(u).max()])
    assert int(np.sum(signs[1:] != signs[:-1])) == 1
    r, u = q1.grid, q1.values
    i6 = np.trapezoid(u**6 * 4.0 * np.pi * r**2, r)
    assert abs(q1.energy + i6 / 3.0) < 1.0e-4 * abs(q1.energy)


def test_excited_state_spectrum(census, two_level_well):
    q1 = census[0]
    spec = el.linearization_spectrum(q1, two_level_well)
    assert not spec.is_stable
    assert spec.per_angular_sector == {0: 1, 1: 1, 2: 0}
    assert spec.sector_eigenvalues[0][0] == pytest.approx(TWO_LEVEL["e_s"], rel=1.0e-3)
    assert spec.sector_eigenvalues[1][0] == pytest.approx(TWO_LEVEL["e_p"], rel=1.0e-3)


def test_excited_spectrum_matches_sturm_oracle(census, two_level_well):
    q1 = census[0]
    lin = ShiftedLinearization(two_level_well, q1)
    assert count_zero_energy_nodes(lin, 0) == 1
    assert count_zero_energy_nodes(lin, 1) == 1
    assert count_zero_energy_nodes(lin, 2) == 0
    # the s eigenvalue is bracketed by node-count flips 2% on either side
    below = ShiftedLinearization(two_level_well, q1, 1.02 * TWO_LEVEL["e_s"])
    above = ShiftedLinearization(two_level_well, q1, 0.98 * TWO_LEVEL["e_s"])
    assert count_zero_energy_nodes(below, 0) == 0
    assert count_zero_energy_nodes(above, 0) == 1


def test_census_orders_states(census, two_level_well):
    assert [s.tag for s in census] == ["excited-1", "ground"]
    q1, g = census
    assert q1.shoot_alpha < g.shoot_alpha
    assert g.shoot_alpha == pytest.approx(TWO_LEVEL["ground_alpha"], rel=1.0e-9)
    assert np.all(g.values >= 0.0)
    assert g.energy < q1.energy < 0.0
    gspec = el.linearization_spectrum(g, two_level_well)
    assert gspec.is_stable


def test_census_without_trapping_is_zero_state():
    states = el.static_state_census(gaussian_well(2.0, 1.0))
    assert len(states) == 1
    assert states[0].tag == "no trapping"


def test_excited_state_needs_two_levels():
    with pytest.raises(ValueError, match="s-wave level"):
        el.find_excited_state(gaussian_well(6.0, 1.0))


def test_excited_state_marginal_level_unresolved():
    with pytest.raises(el.UnresolvedSpectrum, match="unresolved spectrum"):
        el.find_excited_state(gaussian_well(4.5, 2.0))


def test_save_state_roundtrip(tmp_path, ground, deep_well):
    path = tmp_path / "ground.csv"
    spec = el.linearization_spectrum(ground, deep_well)
    el.save_state(ground, path, spectrum=spec, provenance="mswl test")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# mswl")
    import json

    header = json.loads(lines[1][2:])
    assert header["alpha"] == ground.shoot_alpha
    assert header["is_stable"] is True
    assert lines[2] == "r,u,residual"
    data = np.loadtxt(lines[3:], delimiter=",")
    assert data.shape[0] == ground.grid.size
    np.testing.assert_allclose(data[:, 1], ground.values, rtol=1e-12)
