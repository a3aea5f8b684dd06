import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bosegp.errors import ConvergenceError, DomainError, ValidationError
from bosegp.gp_solver import (
    Grid,
    GpState,
    TrapPotential,
    gap_check,
    gp_residual,
    lowest_eigenpairs,
    minimize_gp,
    torus_feasibility_boundary,
    trap_admissibility,
)

# int phi_0^4 for the Gaussian ground state pi^{-3/4} exp(-|x|^2/2) of -Delta + |x|^2
GAUSSIAN_QUARTIC = (2 * math.pi) ** -1.5


@pytest.fixture(scope="module")
def harmonic():
    return TrapPotential.harmonic()


@pytest.fixture(scope="module")
def harmonic_small():
    return TrapPotential.harmonic(M=32)


@pytest.fixture(scope="module")
def torus():
    return TrapPotential.torus(M=16)


# -- grid ------------------------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid(1.0, 6)
    with pytest.raises(ValidationError):
        Grid(-1.0, 8)


def test_grid_spectral_laplacian_exact_on_plane_wave():
    g = Grid(math.pi, 16)
    X, Y, Z = g.mesh()
    u = np.cos(2 * X) * np.sin(Y)
    np.testing.assert_allclose(g.minus_laplacian(u), 5.0 * u, atol=1e-10)


def test_torus_grid_has_unit_volume(torus):
    assert torus.grid.volume == pytest.approx(1.0)
    assert torus.is_torus


# -- harmonic references ---------------------------------------------------------------


def test_harmonic_linear_ground_state(harmonic):
    state = minimize_gp(harmonic, 0.0)
    assert abs(state.e_gp - 3.0) <= 5e-4
    X, Y, Z = harmonic.grid.mesh()
    gauss = math.pi**-0.75 * np.exp(-0.5 * (X**2 + Y**2 + Z**2))
    assert np.max(np.abs(state.phi - gauss)) < 1e-8
    assert state.residual <= 1e-8


def test_harmonic_eigenvalues(harmonic_small):
    vals, vecs = lowest_eigenpairs(harmonic_small, 4)
    np.testing.assert_allclose(vals, [3, 5, 5, 5], atol=1e-6)
    g = harmonic_small.grid
    gram = np.array([[g.inner(u, v) for v in vecs] for u in vecs])
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-10)


def test_small_a_perturbation_slope(harmonic_small):
    avals = np.array([1e-3, 2e-3, 4e-3])
    e = np.array([minimize_gp(harmonic_small, a).e_gp for a in avals])
    slope, intercept = np.polyfit(avals, e, 1)
    assert intercept == pytest.approx(3.0, abs=1e-5)
    assert slope == pytest.approx(4 * math.pi * GAUSSIAN_QUARTIC, rel=1e-2)


def test_converged_residual_and_monotone_energy(harmonic_small):
    state = minimize_gp(harmonic_small, 0.5)
    assert state.residual <= 1e-8
    assert gp_residual(state, harmonic_small) <= 1e-8
    hist = np.array(state.energy_history)
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]))
    g = state.grid
    assert g.norm(state.phi) == pytest.approx(1.0, abs=1e-12)
    # positive up to spectral ripple in the far tail of the coarse grid
    assert state.phi.min() > -1e-6 * state.phi.max()
    # chemical potential relation mu = e_gp + 4 pi a int phi^4
    assert state.mu == pytest.approx(state.e_gp + 4 * math.pi * 0.5 * state.quartic_integral(), rel=1e-10)


def test_quartic_trap_converges():
    trap = TrapPotential.quartic(M=32)
    state = minimize_gp(trap, 0.2)
    assert state.residual <= 1e-8


def test_convergence_error(harmonic_small):
    with pytest.raises(ConvergenceError):
        minimize_gp(harmonic_small, 0.5, tol=1e-14, max_iter=1)


def test_negative_a_rejected(harmonic_small):
    with pytest.raises(DomainError):
        minimize_gp(harmonic_small, -0.1)


def test_grid_dump(tmp_path, harmonic_small):
    state = minimize_gp(harmonic_small, 0.0)
    path = tmp_path / "phi.bin"
    state.dump_grid(path)
    back = np.fromfile(path, dtype="<f8").reshape((32,) * 3)
    np.testing.assert_array_equal(back, state.phi)


# -- torus -----------------------------------------------------------------------------


@pytest.mark.parametrize("a", [0.05, 0.3])
def test_torus_constant_state(torus, a):
    state = minimize_gp(torus, a)
    assert abs(state.e_gp - 4 * math.pi * a) <= 1e-8
    assert np.max(np.abs(state.phi - 1.0)) <= 1e-10
    assert state.residual <= 1e-8


def test_exact_torus_residual_vanishes(torus):
    a = 0.2
    g = torus.grid
    state = GpState(np.ones((16,) * 3), 4 * math.pi * a, 8 * math.pi * a, a, 0.0, g)
    assert gp_residual(state, torus) <= 1e-12


def test_gaussian_residual_vanishes(harmonic):
    X, Y, Z = harmonic.grid.mesh()
    gauss = math.pi**-0.75 * np.exp(-0.5 * (X**2 + Y**2 + Z**2))
    state = GpState(gauss, 3.0, 3.0, 0.0, 0.0, harmonic.grid)
    assert gp_residual(state, harmonic) < 1e-8


def test_residual_grid_mismatch(torus, harmonic_small):
    state = minimize_gp(torus, 0.1)
    with pytest.raises(ValidationError):
        gp_residual(state, harmonic_small)


# -- gap -------------------------------------------------------------------------------


def test_gap_small_a(harmonic):
    state = minimize_gp(harmonic, 1e-3)
    rep = gap_check(state, harmonic)
    assert rep.holds
    assert rep.mu1 == pytest.approx(3.0, abs=0.05)
    assert rep.mu2 == pytest.approx(5.0, abs=0.05)
    assert rep.margin > 1.9
    assert rep.mu1 < rep.default_mu < rep.mu2


def test_gap_fails_for_large_a(harmonic_small):
    state = minimize_gp(harmonic_small, 1.0)
    rep = gap_check(state, harmonic_small)
    assert not rep.holds
    # direct evaluation of both sides of the smallness condition
    g = state.grid
    lhs = g.kinetic(state.phi) + g.cell * np.sum(harmonic_small.values * state.phi**2) + 40 * math.pi * state.phi_max_squared
    assert rep.condition_lhs == pytest.approx(lhs, rel=1e-12)
    assert lhs >= rep.inf_perp


def test_torus_window(torus):
    a = math.pi / 8
    state = minimize_gp(torus, a)
    lo, hi = gap_check(state, torus).window
    assert lo == pytest.approx(2 * math.pi**2, rel=1e-9)
    assert hi == pytest.approx(3 * math.pi**2, rel=1e-9)


def test_torus_feasibility_boundary():
    assert abs(torus_feasibility_boundary(M=8) - math.pi / 6) <= 1e-6


def test_trap_admissibility(harmonic, torus):
    c, ok = trap_admissibility(harmonic)
    # max over t = r^2 >= 0 of 4t - 2t^3, attained at t = sqrt(2/3)
    exact = 8.0 / 3.0 * math.sqrt(2.0 / 3.0)
    assert ok and c <= exact + 1e-12 and c == pytest.approx(exact, rel=2e-2)
    assert trap_admissibility(torus) == (0.0, True)
    assert trap_admissibility(TrapPotential.quartic(M=16))[1]


def test_bad_traps():
    with pytest.raises(ValidationError):
        TrapPotential("nope")
    with pytest.raises(ValidationError):
        TrapPotential.harmonic(c=-1.0, M=8)


@given(st.floats(0.0, 0.49))
def test_torus_window_nonempty_below_bound(a):
    lo, hi = 16 * math.pi * a, 4 * math.pi**2 - 8 * math.pi * a
    trap = TrapPotential.torus(M=8)
    state = minimize_gp(trap, a)
    wlo, whi = gap_check(state, trap).window
    assert wlo == pytest.approx(lo, abs=1e-9) and whi == pytest.approx(hi, rel=1e-8)
    assert (wlo < whi) == (a < math.pi / 6)
