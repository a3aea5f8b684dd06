import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bosegp.errors import ValidationError
from bosegp.quasifree import (
    QuasiFreePair,
    TrialStateSpec,
    admissible,
    check_interaction_symmetry,
    from_kernel,
    grid_interaction_tensor,
    grid_operator_matrix,
    moment_bound_check,
    number_mgf,
    number_moment,
    number_moment_wick,
    number_tail_bound,
    squeezed_moments_bruteforce,
    torus_trial_energy,
    trial_upper_bound,
    wick_energy,
    young_check,
)


def random_pair(rng, n, scale=0.5):
    A = scale * rng.normal(size=(n, n))
    k = 0.5 * (A + A.T)
    phi = rng.normal(size=n)
    phi /= np.linalg.norm(phi)
    return from_kernel(TrialStateSpec(k, 10.0), phi), k, phi


# -- admissibility -------------------------------------------------------------------------


def test_vacuum_admissible():
    assert admissible(QuasiFreePair.vacuum(3)).ok


@pytest.mark.parametrize("s", [0.0, 0.2, 1.0, 3.0])
def test_squeezed_mode_saturates(s):
    pair = QuasiFreePair.squeezed_mode(s)
    assert admissible(pair).ok
    g, a = pair.gamma[0, 0], pair.alpha[0, 0]
    assert abs(g * (1 + g) - a * a) <= 1e-10 * max(1.0, a * a)


def test_pairing_without_density_rejected():
    pair = QuasiFreePair(np.zeros((2, 2)), np.array([[0.0, 0.1], [0.1, 0.0]]))
    res = admissible(pair)
    assert not res.ok and res.violated == "block"
    assert res.witness is not None
    B = pair.block()
    assert res.witness @ B @ res.witness < 0


def test_negative_density_rejected():
    pair = QuasiFreePair(np.diag([0.1, -0.1]), np.zeros((2, 2)))
    res = admissible(pair)
    assert not res.ok and res.violated == "gamma"


def test_zero_kernel_gives_vacuum():
    pair = from_kernel(TrialStateSpec(np.zeros((3, 3)), 5.0), [1.0, 0.0, 0.0])
    assert np.all(pair.gamma == 0) and np.all(pair.alpha == 0)


def test_rank_one_kernel():
    v = np.array([0.0, 0.6, 0.8])
    lam = 0.7
    k = lam * np.outer(v, v)
    pair = from_kernel(TrialStateSpec(k, 5.0), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(pair.gamma, k @ k, atol=1e-15)
    np.testing.assert_allclose(pair.alpha, k, atol=1e-15)
    # gamma >= alpha^2 with equality in the paired mode
    assert v @ pair.gamma @ v == pytest.approx((v @ pair.alpha @ v) ** 2, abs=1e-14)
    assert admissible(pair).ok


@given(st.integers(0, 2**31), st.integers(1, 7), st.floats(0.01, 3.0))
def test_from_kernel_always_admissible(seed, n, scale):
    pair, _, phi = random_pair(np.random.default_rng(seed), n, scale)
    assert admissible(pair).ok
    np.testing.assert_allclose(pair.gamma @ phi, 0.0, atol=1e-10 * max(1, scale**2))
    np.testing.assert_allclose(pair.alpha @ phi, 0.0, atol=1e-10 * max(1, scale))


def test_from_kernel_validation():
    with pytest.raises(ValidationError):
        from_kernel(TrialStateSpec(np.eye(2), 1.0), [1.0, 1.0])
    with pytest.raises(ValidationError):
        from_kernel(TrialStateSpec(np.eye(2), 1.0), [1.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        TrialStateSpec(np.eye(2), 0.0)


def test_pair_json_roundtrip():
    pair, _, _ = random_pair(np.random.default_rng(2), 4)
    back = QuasiFreePair.from_json(pair.to_json())
    np.testing.assert_array_equal(back.gamma, pair.gamma)
    np.testing.assert_array_equal(back.alpha, pair.alpha)


# -- moments -------------------------------------------------------------------------------


@pytest.mark.parametrize("s", [0.2, 0.5, 1.0])
def test_squeezed_second_moment_bruteforce(s):
    pair = QuasiFreePair.squeezed_mode(s)
    g, a = s * s, s * math.sqrt(1 + s * s)
    wick = number_moment_wick(pair, 2)
    assert wick == pytest.approx(2 * g * g + g + a * a, abs=1e-12)
    assert abs(wick - squeezed_moments_bruteforce(s, 2, 60)) <= 1e-8
    assert number_moment(pair, 2) == pytest.approx(wick, abs=1e-12)


@pytest.mark.parametrize("s", [0.3, 0.8])
def test_squeezed_higher_moments(s):
    pair = QuasiFreePair.squeezed_mode(s)
    assert number_moment(pair, 1) == pytest.approx(squeezed_moments_bruteforce(s, 1), abs=1e-10)
    assert number_moment(pair, 3) == pytest.approx(squeezed_moments_bruteforce(s, 3), rel=1e-10)


@given(st.integers(0, 2**31), st.integers(1, 3))
def test_moment_formulas_match_wick(seed, n):
    pair, _, _ = random_pair(np.random.default_rng(seed), n, 0.4)
    for ell in (1, 2, 3):
        assert number_moment(pair, ell) == pytest.approx(number_moment_wick(pair, ell), rel=1e-10, abs=1e-13)


def test_mgf_derivatives():
    pair, _, _ = random_pair(np.random.default_rng(5), 3, 0.3)
    t = 1e-4
    d1 = (number_mgf(pair, t) - number_mgf(pair, -t)) / (2 * t)
    d2 = (number_mgf(pair, t) - 2 + number_mgf(pair, -t)) / t**2
    assert d1 == pytest.approx(number_moment(pair, 1), rel=1e-6)
    assert d2 == pytest.approx(number_moment(pair, 2), rel=1e-5)
    assert number_mgf(pair, 0.0) == 1.0
    assert number_mgf(pair, 50.0) == math.inf


def test_vacuum_moments():
    vac = QuasiFreePair.vacuum(2)
    for ell in (2, 3):
        chk = moment_bound_check(vac, ell)
        assert chk.ok and chk.moment == 0.0
    assert number_tail_bound(vac, 1.0) == 0.0


@given(st.integers(0, 2**31), st.integers(1, 6), st.floats(0.05, 2.0))
def test_moment_bounds_random(seed, n, scale):
    pair, _, _ = random_pair(np.random.default_rng(seed), n, scale)
    for ell in (2, 3):
        assert moment_bound_check(pair, ell).ok


def test_tail_bound_dominates_exact_tail():
    from scipy.special import gammaln

    s = 0.5
    t = math.tanh(math.asinh(s))
    m = np.arange(400)
    # squeezed vacuum: P(n = 2m) = (2m)!/(4^m m!^2) t^(2m) sqrt(1 - t^2)
    prob = np.exp(gammaln(2 * m + 1) - 2 * gammaln(m + 1) - m * math.log(4.0) + 2 * m * math.log(t)) * math.sqrt(1 - t * t)
    assert prob.sum() == pytest.approx(1.0, abs=1e-12)
    pair = QuasiFreePair.squeezed_mode(s)
    previous = 1.0
    for N in (2.0, 5.0, 10.0, 20.0):
        exact = prob[2 * m > N].sum()
        bound = number_tail_bound(pair, N)
        assert exact <= bound <= previous
        previous = bound
    assert bound < 1e-6


def test_moment_validation():
    vac = QuasiFreePair.vacuum(1)
    with pytest.raises(ValidationError):
        number_moment(vac, 4)
    with pytest.raises(ValidationError):
        moment_bound_check(vac, 1)


# -- Wick energy ------------------------------------------------------------------------------


def random_tensor(rng, n):
    W = rng.normal(size=(n, n, n, n))
    W = W + W.transpose(1, 0, 3, 2)
    return W + W.transpose(2, 3, 0, 1)


def test_vacuum_energy_is_condensate_hartree():
    rng = np.random.default_rng(0)
    n = 3
    h = np.diag([1.0, 2.0, 3.0])
    W = random_tensor(rng, n)
    phi = np.array([1.0, 0.0, 0.0])
    e = wick_energy(QuasiFreePair.vacuum(n), h, W, phi, 7.0)
    assert e.kinetic == e.pairing == e.quartic == 0.0
    assert e.total == pytest.approx(7.0 * 1.0 + 0.5 * 49.0 * W[0, 0, 0, 0])


def test_symmetry_check():
    rng = np.random.default_rng(1)
    W = random_tensor(rng, 2)
    check_interaction_symmetry(W)
    W[0, 1, 0, 0] += 1.0
    with pytest.raises(ValidationError):
        check_interaction_symmetry(W)
    with pytest.raises(ValidationError):
        wick_energy(QuasiFreePair.vacuum(2), np.eye(2), W, [1.0, 0.0], 2.0)


def test_wick_energy_shape_validation():
    with pytest.raises(ValidationError):
        wick_energy(QuasiFreePair.vacuum(2), np.eye(3), np.zeros((2,) * 4), [1.0, 0.0], 2.0)


def test_basis_and_momentum_evaluators_agree(soft_well):
    """Seven real plane waves on the torus reproduce the momentum-space evaluator with n_cut = 1."""
    from bosegp.gp_solver import TrapPotential
    from bosegp.quadratic import _kernel_symbol

    N = 6.0
    grid = TrapPotential.torus(M=8).grid
    X, Y, Z = grid.mesh()
    w = 2 * math.pi
    funcs = [np.ones_like(X)]
    for c in (X, Y, Z):
        funcs += [math.sqrt(2) * np.cos(w * c), math.sqrt(2) * np.sin(w * c)]
    funcs = np.array(funcs)
    h = grid_operator_matrix(grid, funcs, grid.minus_laplacian)
    symbol = _kernel_symbol(grid, lambda p: soft_well.potential_transform(p / N) / N)
    W = grid_interaction_tensor(grid, funcs, symbol)
    k1 = -soft_well.vf_transform(np.array([w / N]))[0] / (2 * w * w)
    kmat = np.diag([0.0] + [k1] * 6)
    phi = np.eye(7)[0]
    pair = from_kernel(TrialStateSpec(kmat, N), phi)
    basis = wick_energy(pair, h, W, phi, N, C=0.5)
    momentum = torus_trial_energy(soft_well, N, n_cut=1, C=0.5)
    assert basis.total == pytest.approx(momentum.total, rel=1e-10)
    for key in ("hartree", "kinetic", "pairing", "quartic"):
        assert getattr(basis, key) == pytest.approx(getattr(momentum.energy, key), rel=1e-9, abs=1e-12)


def test_pairing_lowers_energy(soft_well):
    res = torus_trial_energy(soft_well, 16)
    assert res.energy.pairing < 0
    assert res.energy.kinetic > 0
    # pairing gain exceeds the kinetic cost and the trial energy undercuts the Hartree energy
    assert res.total < res.energy.hartree
    assert 0 <= res.tail_bound <= 1


def test_n_cut_validation(soft_well):
    with pytest.raises(ValidationError):
        torus_trial_energy(soft_well, 4, n_cut=0)


# -- trial bound and Young ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def torus_gp(soft_well):
    from bosegp.gp_solver import TrapPotential, minimize_gp

    trap = TrapPotential.torus(M=16)
    return minimize_gp(trap, soft_well.a)


def test_trial_a_zero_has_zero_defect():
    from bosegp.gp_solver import TrapPotential, minimize_gp
    from bosegp.scattering import RadialPotential, solve_scattering

    sol = solve_scattering(RadialPotential.square_well(0.0, 1.0))
    state = minimize_gp(TrapPotential.torus(M=8), 0.0)
    sweep = trial_upper_bound(state, sol, N_sweep=(4, 8))
    assert all(r["defect"] == 0.0 for r in sweep.rows)


def test_young_on_torus(torus_gp, soft_well):
    from bosegp.scattering import scale

    for N in (8, 16, 32):
        chk = young_check(torus_gp, scale(soft_well, N))
        assert chk.holds()
        assert chk.gp_value == pytest.approx(chk.young_bound, rel=1e-7)


def test_young_in_trap(soft_well):
    from bosegp.gp_solver import TrapPotential, minimize_gp
    from bosegp.scattering import scale

    trap = TrapPotential.harmonic(L=3.0, M=32)
    state = minimize_gp(trap, soft_well.a)
    chk = young_check(state, scale(soft_well, 2))
    assert chk.holds()
    assert chk.convolution < chk.young_bound


def test_trap_trial_needs_resolution(soft_well):
    from bosegp.errors import ResolutionError
    from bosegp.gp_solver import TrapPotential, minimize_gp

    state = minimize_gp(TrapPotential.harmonic(L=4.0, M=16), soft_well.a)
    with pytest.raises(ResolutionError):
        trial_upper_bound(state, soft_well, N_sweep=(4,))


def test_trap_trial_small(soft_well):
    from bosegp.gp_solver import TrapPotential, minimize_gp

    state = minimize_gp(TrapPotential.harmonic(L=2.0, M=16), soft_well.a)
    sweep = trial_upper_bound(state, soft_well, M=4, N_sweep=(2,))
    row = sweep.rows[0]
    assert math.isfinite(row["wick_energy"]) and 0 <= row["trace_defect"] <= 1
