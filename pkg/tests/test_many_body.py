import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bosegp.errors import ResourceError, ValidationError
from bosegp.many_body import (
    FockSector,
    ManyBodyProblem,
    born_trial_pair,
    condensation_report,
    exact_diagonalize,
    excitation_map,
    excitation_map_inverse,
    excitation_tail_probability,
    hartree_energy,
    random_problem,
    reconstruct_trial_state,
    sandwich,
    toy_problem,
)
from bosegp.quasifree import QuasiFreePair, number_moment


def first_quantized_two_particles(h, W):
    """Dense two-particle Hamiltonian on the symmetric subspace, basis (2,0), (1,1), (0,2)."""
    M = h.shape[0]
    eye = np.eye(M)
    H = np.kron(h, eye) + np.kron(eye, h) + W.reshape(M * M, M * M)
    e = np.eye(M)
    sym = np.array(
        [np.kron(e[0], e[0]), (np.kron(e[0], e[1]) + np.kron(e[1], e[0])) / math.sqrt(2), np.kron(e[1], e[1])]
    )
    return sym @ H @ sym.T


# -- sectors -----------------------------------------------------------------------------


def test_sector_order_and_size():
    s = FockSector(3, 2)
    assert s.dim == 6
    assert tuple(s.states[0]) == (2, 0, 0)
    assert s.index(np.array([[0, 1, 1]]))[0] >= 0
    with pytest.raises(ResourceError):
        FockSector(40, 20)


def test_lowering_matrix_elements():
    s = FockSector(2, 3)
    L = s.lowering(0).toarray()
    # a_0 |3,0> = sqrt 3 |2,0>
    assert L[s.below.index(np.array([[2, 0]]))[0], s.index(np.array([[3, 0]]))[0]] == pytest.approx(math.sqrt(3))


# -- Hamiltonian and ED ----------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_two_particle_two_mode_brute_force(seed):
    prob = random_problem(np.random.default_rng(seed), 2, 2)
    oracle = first_quantized_two_particles(prob.one_body, prob.two_body)
    mat = prob.hamiltonian().toarray()
    order = [prob.sector.index(np.array([occ]))[0] for occ in ([2, 0], [1, 1], [0, 2])]
    np.testing.assert_allclose(mat[np.ix_(order, order)], oracle, atol=1e-12)
    E = exact_diagonalize(prob).energy
    assert E == pytest.approx(np.linalg.eigvalsh(oracle)[0], abs=1e-10)


def test_matrix_free_matches_sparse():
    prob = toy_problem("torus_1d", M=5, N=4, coupling=3.0)
    v = np.random.default_rng(0).normal(size=prob.sector.dim)
    np.testing.assert_allclose(prob.apply_hamiltonian(v), prob.hamiltonian() @ v, atol=1e-10)


def test_single_particle():
    prob = toy_problem("torus_1d", M=5, N=1, coupling=2.0)
    assert exact_diagonalize(prob).energy == pytest.approx(np.linalg.eigvalsh(prob.one_body)[0], abs=1e-12)


def test_noninteracting():
    h = np.diag([0.5, 1.0, 2.0])
    prob = ManyBodyProblem(h, np.zeros((3,) * 4), 4)
    res = exact_diagonalize(prob)
    assert res.energy == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(res.gamma1, np.diag([4.0, 0, 0]), atol=1e-12)
    assert condensation_report(prob, res).depletion == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["torus_1d", "torus_3d", "oscillator_modes"])
def test_toy_density_trace(kind):
    prob = toy_problem(kind, M=4, N=3, coupling=2.0)
    res = exact_diagonalize(prob)
    assert res.trace_gamma1 == pytest.approx(3.0, abs=1e-10)
    w = np.linalg.eigvalsh(res.gamma1)
    assert w.min() > -1e-12
    assert res.residual < 1e-8


def test_sparse_solver_path():
    prob = toy_problem("torus_1d", M=8, N=7, coupling=1.0)
    assert prob.sector.dim > 1500
    res = exact_diagonalize(prob, n_states=2)
    dense = np.linalg.eigvalsh(prob.hamiltonian().toarray())[:2]
    np.testing.assert_allclose(res.energies, dense, atol=1e-8)


def test_weak_coupling_depletion_quadratic():
    lams = [0.01, 0.02, 0.04]
    dep = []
    for lam in lams:
        prob = toy_problem("torus_1d", M=5, N=4, coupling=lam).adapted()
        dep.append(condensation_report(prob, exact_diagonalize(prob)).depletion)
    assert np.all(np.diff(dep) > 0) and dep[0] >= 0
    slope = np.polyfit(np.log(lams), np.log(dep), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.05)


def test_problem_validation():
    with pytest.raises(ValidationError):
        ManyBodyProblem(np.eye(2), np.zeros((2, 2, 2)), 2)
    W = np.zeros((2,) * 4)
    W[0, 1, 0, 0] = 1.0
    with pytest.raises(ValidationError):
        ManyBodyProblem(np.eye(2), W, 2)
    with pytest.raises(ValidationError):
        ManyBodyProblem(np.eye(2), np.zeros((2,) * 4), 0)
    with pytest.raises(ValidationError):
        ManyBodyProblem(np.eye(2), np.zeros((2,) * 4), 2, condensate_vector=[1.0, 1.0])
    with pytest.raises(ValidationError):
        toy_problem("nope")


# -- excitation map ---------------------------------------------------------------------------


def rotated_problem(rng, M=3, N=3):
    prob = random_problem(rng, M, N)
    phi = rng.normal(size=M)
    phi /= np.linalg.norm(phi)
    return ManyBodyProblem(prob.one_body, prob.two_body, N, "custom", phi)


def test_condensate_power_maps_to_vacuum_layer():
    rng = np.random.default_rng(4)
    prob = rotated_problem(rng)
    # phi^N expanded in the original basis: coefficients sqrt(N!/prod n!) prod phi_i^n_i
    st = prob.sector.states
    coeff = np.array([math.sqrt(math.factorial(3) / np.prod([math.factorial(n) for n in s])) * np.prod(prob.condensate_vector**s) for s in st])
    xi = excitation_map(prob, coeff)
    assert abs(xi.layers[0][0]) == pytest.approx(1.0, abs=1e-12)
    assert np.all(xi.norms[1:] < 1e-12)


def test_excited_pair_fills_top_layer():
    theta = 0.37
    c, s = math.cos(theta), math.sin(theta)
    prob = ManyBodyProblem(np.eye(2), np.zeros((2,) * 4), 2, "custom", [c, s])
    # (a*_chi)^2 |0> / sqrt 2 with chi = (-s, c), written in the basis (2,0), (1,1), (0,2)
    vec = np.zeros(3)
    for occ, val in (([2, 0], s * s), ([1, 1], -math.sqrt(2) * s * c), ([0, 2], c * c)):
        vec[prob.sector.index(np.array([occ]))[0]] = val
    xi = excitation_map(prob, vec)
    assert xi.norms[0] < 1e-14 and xi.norms[1] < 1e-14
    assert xi.norms[2] == pytest.approx(1.0, abs=1e-14)


@given(st.integers(0, 2**31))
def test_excitation_map_unitary(seed):
    rng = np.random.default_rng(seed)
    prob = rotated_problem(rng)
    d = prob.sector.dim
    u, v = rng.normal(size=d), rng.normal(size=d)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    xu, xv = excitation_map(prob, u), excitation_map(prob, v)
    assert xu.inner(xv) == pytest.approx(u @ v, abs=1e-12)
    assert np.abs(excitation_map_inverse(prob, xu) - u).max() <= 1e-12


def test_excitation_map_validation():
    prob = toy_problem("torus_1d", M=3, N=2)
    with pytest.raises(ValidationError):
        excitation_map(prob, np.ones(3))
    with pytest.raises(ValidationError):
        excitation_map(prob, np.ones(prob.sector.dim))


# -- trial states and sandwich -----------------------------------------------------------------


def test_reconstructed_single_mode_state():
    """A squeezed excited mode: the sector state reproduces the occupation statistics."""
    prob = ManyBodyProblem(np.diag([0.0, 1.0]), np.zeros((2,) * 4), 12)
    s = 0.3
    pair = QuasiFreePair(np.diag([0.0, s * s]), np.diag([0.0, s * math.sqrt(1 + s * s)]))
    rec = reconstruct_trial_state(prob, pair, truncation=24)
    assert rec.ancillas == 0
    n_exc = prob.sector.states[:, 1]
    mean = float(np.sum(np.diag(rec.density) * n_exc))
    assert mean == pytest.approx(s * s, abs=1e-6)
    assert rec.trace == pytest.approx(1.0 - excitation_tail_probability(pair, 12), abs=1e-8)


def test_reconstructed_mixed_state_density():
    prob = toy_problem("torus_1d", M=4, N=6, coupling=4.0).adapted()
    pair = born_trial_pair(prob)
    rec = reconstruct_trial_state(prob, pair, truncation=12)
    assert rec.ancillas > 0
    w = np.linalg.eigvalsh(rec.density)
    assert w.min() > -1e-12
    g = np.zeros((prob.M, prob.M))
    for i in range(prob.M):
        Li = prob.sector.lowering(i)
        for j in range(prob.M):
            g[j, i] = np.trace(prob.sector.lowering(j).toarray() @ rec.density @ Li.toarray().T)
    g /= rec.trace
    # conditioning on at most N excitations shifts moments by about (N + 1) P(n > N)
    tail = excitation_tail_probability(pair, 6)
    assert tail < 1e-4
    np.testing.assert_allclose(g[1:, 1:], pair.gamma[1:, 1:], atol=2 * 7 * tail)
    assert np.trace(g) == pytest.approx(6.0, abs=1e-10)


def test_tail_probability_matches_moments():
    pair = QuasiFreePair.squeezed_mode(0.4)
    assert excitation_tail_probability(pair, 0) == pytest.approx(1.0 - 1.0 / math.sqrt(1 + 0.16), abs=1e-12)
    assert excitation_tail_probability(pair, 40) < 1e-12
    assert number_moment(pair, 1) == pytest.approx(0.16)


def test_sandwich_noninteracting():
    h = np.diag([0.0, 2.0, 3.0])
    prob = ManyBodyProblem(h, np.zeros((3,) * 4), 3)
    rep = sandwich(prob, C=0.0)
    assert rep.E_N == pytest.approx(0.0, abs=1e-12)
    assert rep.trial_exact == pytest.approx(rep.E_N, abs=1e-12)
    assert rep.c == pytest.approx(2.0, rel=1e-8)
    assert rep.one_body_gap == pytest.approx(2.0)


def test_sandwich_toy_torus():
    prob = toy_problem("torus_1d", M=5, N=4, coupling=5.0)
    rep = sandwich(prob)
    assert rep.variational_ok and rep.lower_ok
    assert rep.E_N <= rep.trial_exact + 1e-8
    assert rep.E_N <= 4 * hartree_energy(prob.adapted()) + 1e-10
    assert 0.0 <= rep.depletion < 4.0
    assert rep.c > 0
    row = rep.to_row()
    assert list(row) == ["N", "M", "lambda", "E_N", "depletion", "trial_energy", "c", "C"]
