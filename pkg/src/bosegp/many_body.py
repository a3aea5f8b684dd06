"""Exact diagonalisation of small second-quantised Bose systems.

The Hamiltonian on ``M`` real orthonormal modes is

    H_N = sum_mn h_mn a*_m a_n + 1/2 sum_mnpq W_mnpq a*_m a*_n a_q a_p,
    W_mnpq = <u_m (x) u_n, V u_p (x) u_q>,

restricted to the sector with ``N`` particles.  The toy problems use a
smooth repulsive interaction (a periodised Gaussian) at fixed small ``M``;
they reproduce the structure of the large-``N`` statements (variational
sandwich, condensation, excitation map), not their scaling regime.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, ResourceError, ValidationError
from .fock import OccupationBasis, lowering_matrix

__all__ = [
    "FockSector",
    "ManyBodyProblem",
    "EDResult",
    "exact_diagonalize",
    "CondensationReport",
    "condensation_report",
    "ExcitationVector",
    "excitation_map",
    "excitation_map_inverse",
    "rotate_symmetric",
    "toy_problem",
    "random_problem",
    "born_trial_pair",
    "ReconstructedState",
    "reconstruct_trial_state",
    "SandwichReport",
    "sandwich",
    "hartree_energy",
    "BASIS_KINDS",
    "MAX_SECTOR_DIM",
]

log = logging.getLogger(__name__)

BASIS_KINDS = ("torus_1d", "torus_3d", "oscillator_modes", "custom")
MAX_SECTOR_DIM = 200_000
_DENSE_LIMIT = 1500
_MATRIX_FREE_LIMIT = 10_000


@dataclass(frozen=True, eq=False)
class FockSector:
    """Occupation vectors of ``N`` bosons in ``M`` modes, ``(N, 0, ..., 0)`` first."""

    M: int
    N: int
    max_dim: int = MAX_SECTOR_DIM

    def __post_init__(self) -> None:
        if self.M < 1 or self.N < 0:
            raise ValidationError("need M >= 1 modes and N >= 0 particles")
        dim = math.comb(self.N + self.M - 1, self.N)
        if dim > self.max_dim:
            raise ResourceError(f"sector dimension {dim} exceeds limit {self.max_dim}", dimension=dim)

    @cached_property
    def basis(self) -> OccupationBasis:
        return OccupationBasis.fixed(self.M, self.N)

    @property
    def dim(self) -> int:
        return math.comb(self.N + self.M - 1, self.N)

    @property
    def states(self) -> np.ndarray:
        return self.basis.states

    def index(self, occupations: np.ndarray) -> np.ndarray:
        return self.basis.index(np.asarray(occupations))

    def lowering(self, mode: int) -> sp.csr_matrix:
        """``a_mode`` from this sector to the ``N - 1`` sector."""
        return lowering_matrix(self.basis, self.below.basis, mode)

    @cached_property
    def below(self) -> "FockSector":
        if self.N == 0:
            raise ValidationError("no sector below N = 0")
        return FockSector(self.M, self.N - 1, self.max_dim)


@dataclass(frozen=True, eq=False)
class ManyBodyProblem:
    """One- and two-body matrix elements, particle number and condensate vector."""

    one_body: np.ndarray
    two_body: np.ndarray
    N: int
    basis_kind: str = "custom"
    condensate_vector: np.ndarray | None = None
    coupling: float = float("nan")
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        h = np.array(self.one_body, dtype=float)
        W = np.array(self.two_body, dtype=float)
        M = h.shape[0]
        if h.shape != (M, M) or W.shape != (M, M, M, M):
            raise ValidationError("one_body must be M x M and two_body M x M x M x M")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(W))):
            raise ValidationError("matrix elements must be finite")
        scale = max(1.0, float(np.abs(h).max()), float(np.abs(W).max()))
        if np.abs(h - h.T).max() > 1e-10 * scale:
            raise ValidationError("one_body must be symmetric")
        for name, perm in (("particle exchange", (1, 0, 3, 2)), ("hermiticity", (2, 3, 0, 1))):
            if np.abs(W - W.transpose(perm)).max() > 1e-10 * scale:
                raise ValidationError(f"two_body violates {name} symmetry")
        if self.basis_kind not in BASIS_KINDS:
            raise ValidationError(f"unknown basis kind {self.basis_kind!r}")
        if self.N < 1:
            raise ValidationError("N must be at least 1")
        h = 0.5 * (h + h.T)
        h.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "one_body", h)
        object.__setattr__(self, "two_body", W)
        phi = np.zeros(M) if self.condensate_vector is None else np.array(self.condensate_vector, float)
        if self.condensate_vector is None:
            phi[0] = 1.0
        if phi.shape != (M,) or abs(np.linalg.norm(phi) - 1.0) > 1e-10:
            raise ValidationError("condensate vector must be a unit vector in the basis")
        phi.setflags(write=False)
        object.__setattr__(self, "condensate_vector", phi)

    @property
    def M(self) -> int:
        return self.one_body.shape[0]

    @cached_property
    def sector(self) -> FockSector:
        return FockSector(self.M, self.N)

    def with_N(self, N: int) -> "ManyBodyProblem":
        return replace(self, N=N)

    def scaled_interaction(self, t: float) -> "ManyBodyProblem":
        return replace(self, two_body=t * self.two_body, coupling=t * self.coupling)

    @cached_property
    def adapted_rotation(self) -> np.ndarray:
        """Orthogonal matrix whose first column is the condensate vector."""
        return _completion(self.condensate_vector)

    def adapted(self) -> "ManyBodyProblem":
        """The same problem in a basis whose first vector is the condensate."""
        O = self.adapted_rotation
        h = O.T @ self.one_body @ O
        W = np.einsum("mnpq,ma,nb,pc,qd->abcd", self.two_body, O, O, O, O, optimize=True)
        W = 0.5 * (W + W.transpose(1, 0, 3, 2))
        W = 0.5 * (W + W.transpose(2, 3, 0, 1))
        e0 = np.zeros(self.M)
        e0[0] = 1.0
        return replace(self, one_body=h, two_body=W, condensate_vector=e0, info={**self.info, "adapted": True})

    # -- Hamiltonian --------------------------------------------------------

    def hamiltonian_terms(self, tol: float = 0.0):
        h, W = self.one_body, self.two_body
        M = self.M
        for i in range(M):
            for j in range(M):
                if abs(h[i, j]) > tol:
                    yield h[i, j], [(i, True), (j, False)]
        idx = np.argwhere(np.abs(W) > tol)
        for m, n, p, q in idx:
            yield 0.5 * W[m, n, p, q], [(m, True), (n, True), (q, False), (p, False)]

    def hamiltonian(self) -> sp.csr_matrix:
        """Sparse matrix of ``H_N`` assembled from the operator monomials."""
        H = self.sector.basis.operator(self.hamiltonian_terms())
        return (0.5 * (H + H.T)).tocsr()

    @cached_property
    def _lowering_ops(self) -> tuple[list[sp.csr_matrix], list[sp.csr_matrix]]:
        top = self.sector
        first = [top.lowering(i) for i in range(self.M)]
        second = [top.below.lowering(i) for i in range(self.M)] if self.N >= 2 else []
        return first, second

    def apply_hamiltonian(self, v: np.ndarray) -> np.ndarray:
        """``H_N v`` without assembling ``H_N``, through the ``N - 1`` and ``N - 2`` sectors."""
        L1, L2 = self._lowering_ops
        M = self.M
        Y1 = np.array([L @ v for L in L1])  # a_i v
        out = np.zeros_like(v, dtype=float)
        hY = self.one_body @ Y1  # sum_j h_ij a_j v
        for i in range(M):
            out += L1[i].T @ hY[i]
        if L2:
            Y2 = np.array([[L2[q] @ Y1[p] for q in range(M)] for p in range(M)])  # a_q a_p v
            Z = np.einsum("mnpq,pqk->mnk", self.two_body, Y2)
            for m in range(M):
                inner = sum(L2[n].T @ Z[m, n] for n in range(M))
                out += 0.5 * (L1[m].T @ inner)
        return out

    def linear_operator(self) -> spla.LinearOperator:
        d = self.sector.dim
        return spla.LinearOperator((d, d), matvec=self.apply_hamiltonian, dtype=float)

    def excitation_number(self) -> np.ndarray:
        """Diagonal of ``N_+`` in the adapted basis, i.e. ``N - n_0``."""
        return self.N - self.sector.states[:, 0].astype(float)

    def to_dict(self) -> dict[str, Any]:
        return {
            "M": self.M,
            "N": self.N,
            "basis_kind": self.basis_kind,
            "coupling": self.coupling,
            "one_body": self.one_body.ravel().tolist(),
            "two_body": self.two_body.ravel().tolist(),
            "condensate_vector": self.condensate_vector.tolist(),
        }


def _completion(phi: np.ndarray) -> np.ndarray:
    """Orthogonal ``O`` with ``O[:, 0] = phi`` (Householder reflection, sign-corrected)."""
    phi = np.asarray(phi, float)
    M = phi.size
    e0 = np.zeros(M)
    e0[0] = 1.0
    v = phi - e0
    if np.linalg.norm(v) < 1e-14:
        return np.eye(M)
    v /= np.linalg.norm(v)
    O = np.eye(M) - 2.0 * np.outer(v, v)  # maps e0 to phi
    return O


# -- exact diagonalisation ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EDResult:
    energy: float
    vector: np.ndarray
    gamma1: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    residual: float

    @property
    def trace_gamma1(self) -> float:
        return float(np.trace(self.gamma1))


def one_body_density(problem: ManyBodyProblem, vector: np.ndarray) -> np.ndarray:
    """``gamma_mn = <a*_n a_m>`` on a normalised sector vector."""
    L1, _ = problem._lowering_ops
    Y = np.array([L @ vector for L in L1])
    g = Y @ Y.T
    return 0.5 * (g + g.T)


def exact_diagonalize(problem: ManyBodyProblem, n_states: int = 1, tol: float = 1e-10) -> EDResult:
    """Lowest eigenpairs of ``H_N`` and the ground state's one-body density matrix."""
    d = problem.sector.dim
    k = max(1, min(n_states, d))
    if d <= _DENSE_LIMIT:
        w, U = np.linalg.eigh(problem.hamiltonian().toarray())
        w, U = w[:k], U[:, :k]
    else:
        A = problem.linear_operator() if d > _MATRIX_FREE_LIMIT else problem.hamiltonian()
        v0 = np.full(d, 1.0 / math.sqrt(d))
        try:
            w, U = spla.eigsh(A, k=k, which="SA", tol=tol, v0=v0, maxiter=20 * d)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError("eigensolver did not converge", residual=float("nan")) from exc
        order = np.argsort(w)
        w, U = w[order], U[:, order]
    v = U[:, 0]
    Hv = problem.apply_hamiltonian(v) if d > _MATRIX_FREE_LIMIT else problem.hamiltonian() @ v
    residual = float(np.linalg.norm(Hv - w[0] * v))
    if residual > 1e-6 * max(1.0, abs(w[0])):
        raise ConvergenceError(f"ground-state residual {residual:.3e} too large", residual=residual)
    # deterministic sign: largest component positive
    v = v * np.sign(v[np.argmax(np.abs(v))])
    return EDResult(float(w[0]), v, one_body_density(problem, v), w, U, residual)


@dataclass(frozen=True)
class CondensationReport:
    depletion: float
    condensate_overlap: float
    excited_ratios: list[float]


def condensation_report(problem: ManyBodyProblem, result: EDResult) -> CondensationReport:
    """``N - <phi, gamma phi>`` and, for excited eigenstates, depletion over ``E - E_N + 1``."""
    phi = problem.condensate_vector
    overlap = float(phi @ result.gamma1 @ phi)
    ratios = []
    for j in range(1, result.vectors.shape[1]):
        g = one_body_density(problem, result.vectors[:, j])
        dep = problem.N - float(phi @ g @ phi)
        ratios.append(dep / (result.energies[j] - result.energy + 1.0))
    return CondensationReport(problem.N - overlap, overlap, ratios)


def hartree_energy(problem: ManyBodyProblem) -> float:
    """Energy per particle of the product state ``phi^N``: ``<phi,h phi> + (N-1)/2 <phi phi, W phi phi>``."""
    phi = problem.condensate_vector
    h = float(phi @ problem.one_body @ phi)
    w = float(np.einsum("mnpq,m,n,p,q->", problem.two_body, phi, phi, phi, phi))
    return h + 0.5 * (problem.N - 1) * w


# -- excitation map -----------------------------------------------------------------


def _multinomial_sqrt(states: np.ndarray) -> np.ndarray:
    """``sqrt(N! / prod n_i!)`` per occupation vector."""
    from scipy.special import gammaln

    N = states.sum(axis=1)
    return np.exp(0.5 * (gammaln(N + 1) - gammaln(states + 1).sum(axis=1)))


def rotate_symmetric(sector: FockSector, vector: np.ndarray, U: np.ndarray, max_entries: int = 20_000_000) -> np.ndarray:
    """Coefficients of a sector vector in the basis ``v_k = sum_i U_ik u_i``.

    Uses the symmetric-tensor representation: the tensor entry at an index
    tuple with occupations ``n`` is ``c_n sqrt(prod n! / N!)``.
    """
    M, N = sector.M, sector.N
    if M**N > max_entries:
        raise ResourceError(f"tensor representation needs {M ** N} entries", dimension=M**N)
    states = sector.states
    if N == 0:
        return np.array(vector, float)
    # canonical tuple of each occupation vector: modes repeated n_i times
    tuples = np.array([np.repeat(np.arange(M), s) for s in states])
    flat = np.ravel_multi_index(tuples.T, (M,) * N)
    T = np.zeros(M**N)
    # scatter every permutation of each tuple
    weight = vector / _multinomial_sqrt(states)
    from itertools import permutations

    for k, tup in enumerate(tuples):
        for perm in set(permutations(tup)):
            T[np.ravel_multi_index(perm, (M,) * N)] = weight[k]
    T = T.reshape((M,) * N)
    for axis in range(N):
        T = np.tensordot(U.T, T, axes=([1], [axis]))
        T = np.moveaxis(T, 0, axis)
    return T.ravel()[flat] * _multinomial_sqrt(states)


@dataclass(frozen=True, eq=False)
class ExcitationVector:
    """Layers ``xi_k`` of a sector vector: ``xi_k`` lives on ``k`` excitations outside ``phi``."""

    layers: list[np.ndarray]
    layer_states: list[np.ndarray]

    @property
    def norms(self) -> np.ndarray:
        return np.array([float(np.linalg.norm(x)) for x in self.layers])

    def inner(self, other: "ExcitationVector") -> float:
        return float(sum(np.dot(a, b) for a, b in zip(self.layers, other.layers)))


def excitation_map(problem: ManyBodyProblem, vector: np.ndarray) -> ExcitationVector:
    """Decompose ``Psi = sum_k phi^(N-k) (x)_s xi_k`` and return ``(xi_0, ..., xi_N)``."""
    v = np.asarray(vector, float)
    sector = problem.sector
    if v.shape != (sector.dim,):
        raise ValidationError("vector does not belong to the N-particle sector")
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValidationError("vector must be normalised")
    w = rotate_symmetric(sector, v, problem.adapted_rotation)
    n0 = sector.states[:, 0]
    layers, states = [], []
    for k in range(problem.N + 1):
        sel = np.flatnonzero(n0 == problem.N - k)
        layers.append(w[sel])
        states.append(sector.states[sel, 1:])
    return ExcitationVector(layers, states)


def excitation_map_inverse(problem: ManyBodyProblem, xi: ExcitationVector) -> np.ndarray:
    """Reassemble the sector vector from its excitation layers."""
    sector = problem.sector
    w = np.zeros(sector.dim)
    for k, (layer, st) in enumerate(zip(xi.layers, xi.layer_states)):
        full = np.concatenate([np.full((st.shape[0], 1), problem.N - k), st], axis=1)
        idx = sector.index(full)
        if np.any(idx < 0):
            raise ValidationError("layer occupations do not belong to the sector")
        w[idx] = layer
    return rotate_symmetric(sector, w, problem.adapted_rotation.T)


# -- toy problems ------------------------------------------------------------------


def _torus1d_modes(M: int, G: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(G) / G
    funcs, energies = [np.ones(G)], [0.0]
    j = 1
    while len(funcs) < M:
        funcs.append(math.sqrt(2.0) * np.cos(2 * math.pi * j * x))
        energies.append((2 * math.pi * j) ** 2)
        if len(funcs) < M:
            funcs.append(math.sqrt(2.0) * np.sin(2 * math.pi * j * x))
            energies.append((2 * math.pi * j) ** 2)
        j += 1
    return np.array(funcs), np.array(energies)


def toy_problem(
    kind: str = "torus_1d",
    M: int = 5,
    N: int = 4,
    coupling: float = 1.0,
    width: float = 0.1,
) -> ManyBodyProblem:
    """Small repulsive Bose gas with a Gaussian interaction of strength ``coupling`` and width ``width``.

    ``torus_1d``: real plane waves ``1, sqrt2 cos, sqrt2 sin`` on ``[0, 1)``
    with ``V^_j = coupling exp(-(2 pi j width)^2 / 2)``.  ``torus_3d``: real plane
    waves on the unit cube, ordered by ``|n|^2``.  ``oscillator_modes``: the
    lowest eigenfunctions of ``-Delta + |x|^2``.
    """
    if kind == "torus_1d":
        jmax = (M + 1) // 2
        G = 8 * jmax + 8
        funcs, energies = _torus1d_modes(M, G)
        prods = np.einsum("mx,px->mpx", funcs, funcs)
        coeff = np.fft.fft(prods, axis=-1) / G  # int u_m u_p e^{-2 pi i k x}
        k = np.fft.fftfreq(G, 1.0 / G)
        vhat = coupling * np.exp(-0.5 * (2 * math.pi * k * width) ** 2)
        W = np.einsum("k,mpk,nqk->mnpq", vhat, np.conj(coeff), coeff).real
        W = 0.5 * (W + W.transpose(1, 0, 3, 2))
        W = 0.5 * (W + W.transpose(2, 3, 0, 1))
        return ManyBodyProblem(np.diag(energies), W, N, "torus_1d", None, coupling, {"width": width})
    if kind in ("torus_3d", "oscillator_modes"):
        from .gp_solver import TrapPotential, lowest_eigenpairs
        from .quasifree import grid_interaction_tensor, grid_operator_matrix

        if kind == "oscillator_modes" and M > 6:
            raise ValidationError("oscillator_modes supports at most 6 modes")
        trap = TrapPotential.torus(M=16) if kind == "torus_3d" else TrapPotential.harmonic(L=6.0, M=32)
        grid = trap.grid
        vals, vecs = lowest_eigenpairs(trap, M)
        symbol = coupling * np.exp(-0.5 * width**2 * grid.k_squared_half)
        W = grid_interaction_tensor(grid, vecs, symbol)
        h = grid_operator_matrix(grid, vecs, lambda u: grid.minus_laplacian(u) + trap.values * u)
        return ManyBodyProblem(h, W, N, kind, None, coupling, {"width": width})
    raise ValidationError(f"unknown basis kind {kind!r}")


def random_problem(rng: np.random.Generator, M: int = 2, N: int = 2, scale: float = 1.0) -> ManyBodyProblem:
    """Random symmetric one-body matrix and two-body tensor with the exchange and hermiticity symmetries."""
    A = rng.normal(size=(M, M))
    h = 0.5 * (A + A.T)
    W = scale * rng.normal(size=(M, M, M, M))
    W = 0.25 * (W + W.transpose(1, 0, 3, 2) + W.transpose(2, 3, 0, 1) + W.transpose(3, 2, 1, 0))
    return ManyBodyProblem(h, W, N, "custom", None, scale, {"random": True})


# -- trial state and sandwich ------------------------------------------------------------


def born_trial_pair(problem: ManyBodyProblem):
    """Quasi-free pair from the first-order pair kernel ``k_ij = -N W_ij00 / (e_i + e_j)``.

    Indices refer to the adapted basis (condensate first); ``e_i`` are the
    excitation energies of the compressed one-body operator.  The kernel is
    supported on the excited modes, so ``gamma = k^2`` and ``alpha = k``.
    """
    from .quasifree import TrialStateSpec, from_kernel

    ad = problem.adapted()
    M = ad.M
    h = ad.one_body
    hq = h[1:, 1:]
    e, R = np.linalg.eigh(hq)
    e = e - h[0, 0]
    K = problem.N * ad.two_body[1:, 1:, 0, 0]
    Kr = R.T @ K @ R
    denom = e[:, None] + e[None, :]
    if np.any(denom <= 0):
        raise ValidationError("condensate is not the lowest one-body mode; Born kernel undefined")
    kr = -Kr / denom
    k = np.zeros((M, M))
    k[1:, 1:] = R @ kr @ R.T
    phi = np.zeros(M)
    phi[0] = 1.0
    return from_kernel(TrialStateSpec(0.5 * (k + k.T), problem.N), phi)


@dataclass(frozen=True, eq=False)
class ReconstructedState:
    """Positive operator on the adapted ``N``-sector built from a quasi-free pair."""

    density: np.ndarray
    trace: float
    truncation: int
    ancillas: int


def _purification(gamma: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Pairing matrix ``Z`` of a pure Gaussian state on system + ancilla modes reducing to ``(gamma, alpha)``."""
    n = gamma.shape[0]
    A = gamma + alpha + 0.5 * np.eye(n)  # <x x>
    B = gamma - alpha + 0.5 * np.eye(n)  # <p p>
    wA, UA = np.linalg.eigh(A)
    if wA[0] <= 0:
        raise ValidationError("covariance is not positive definite")
    Ah = (UA * np.sqrt(wA)) @ UA.T
    C = Ah @ B @ Ah
    nu2, Wm = np.linalg.eigh(0.5 * (C + C.T))
    nu = np.sqrt(np.maximum(nu2, 0.25))
    X = Ah @ Wm / np.sqrt(nu)
    Xit = np.linalg.inv(X).T
    s = np.sqrt(np.maximum(nu * nu - 0.25, 0.0))
    mixed = np.flatnonzero(s > 1e-12)
    m = mixed.size
    S = np.diag(s[mixed])
    Atot = np.block([[A, X[:, mixed] @ S], [S @ X[:, mixed].T, np.diag(nu[mixed])]])
    Btot = np.block([[B, -Xit[:, mixed] @ S], [-S @ Xit[:, mixed].T, np.diag(nu[mixed])]])
    gtot = 0.5 * (Atot + Btot) - 0.5 * np.eye(n + m)
    atot = 0.5 * (Atot - Btot)
    Z = np.linalg.solve((np.eye(n + m) + gtot).T, atot.T).T  # alpha (1 + gamma)^-1
    return 0.5 * (Z + Z.T)


def reconstruct_trial_state(problem: ManyBodyProblem, pair, truncation: int | None = None) -> ReconstructedState:
    """Map a quasi-free state of the excitations into the ``N``-particle sector.

    The (mixed) quasi-free state is purified with ancilla modes, expanded as
    ``exp(1/2 a* Z a*)|0>`` up to total occupation ``truncation``, reduced to
    the system, cut to at most ``N`` excitations and placed in the sector with
    ``n_0 = N - k``.  The result is positive semi-definite, so its normalised
    energy bounds the ground-state energy from above.
    """
    N, M = problem.N, problem.M
    g = pair.gamma
    a = pair.alpha
    if g.shape[0] == M:
        O = problem.adapted_rotation
        g = (O.T @ g @ O)[1:, 1:]
        a = (O.T @ a @ O)[1:, 1:]
    if g.shape[0] != M - 1:
        raise ValidationError("pair must live on the excited modes")
    Z = _purification(g, a)
    n_sys = M - 1
    n_tot = Z.shape[0]
    lam = truncation if truncation is not None else 2 * N + 4
    lam -= lam % 2
    basis = OccupationBasis.truncated(n_tot, lam, parity=0, max_dim=MAX_SECTOR_DIM)
    terms = []
    for i in range(n_tot):
        for j in range(n_tot):
            if Z[i, j] != 0:
                terms.append((0.5 * Z[i, j], [(i, True), (j, True)]))
    Cop = basis.operator(terms)
    psi = np.zeros(basis.dim)
    psi[0] = 1.0  # vacuum is the first state of the truncated basis
    term = psi.copy()
    for j in range(1, lam // 2 + 1):
        term = Cop @ term / j
        psi += term
    # exact norm^2 of the untruncated state: det(1 - Z^2)^(-1/2)
    wz = np.linalg.eigvalsh(Z)
    norm2 = float(np.exp(-0.5 * np.sum(np.log1p(-wz * wz))))
    sys_occ = basis.states[:, :n_sys]
    anc_occ = basis.states[:, n_sys:]
    keep = sys_occ.sum(axis=1) <= N
    sector = problem.sector
    full = np.concatenate([N - sys_occ[keep].sum(axis=1, keepdims=True), sys_occ[keep]], axis=1)
    rows = sector.index(full)
    if n_tot > n_sys:
        anc_basis = OccupationBasis(np.unique(anc_occ[keep], axis=0))
        cols, n_cols = anc_basis.index(anc_occ[keep]), anc_basis.dim
    else:
        cols, n_cols = np.zeros(rows.size, dtype=np.int64), 1
    mat = sp.csr_matrix((psi[keep], (rows, cols)), shape=(sector.dim, n_cols))
    rho = (mat @ mat.T).toarray() / norm2
    rho = 0.5 * (rho + rho.T)
    return ReconstructedState(rho, float(np.trace(rho)), lam, n_tot - n_sys)


def excitation_tail_probability(pair, N: int) -> float:
    """``P(N_exc > N)`` for the quasi-free state, from the generating function ``det(1 - (z-1)B)^(-1/2)``."""
    g, a = pair.gamma, pair.alpha
    beta = np.linalg.eigvalsh(np.block([[g, a], [a, g]]))
    beta = beta[np.abs(beta) > 1e-15]
    rho = beta / (1.0 + beta)
    c0 = -0.5 * float(np.sum(np.log1p(beta)))
    # log E[z^n] = c0 + sum_k (1/2) sum_i rho_i^k / k z^k
    L = np.array([0.5 * float(np.sum(rho**k)) / k for k in range(1, N + 1)])
    # exponentiate the power series: P_0 = e^{c0}, n P_n = sum_k k L_k P_{n-k}
    P = np.zeros(N + 1)
    P[0] = math.exp(c0)
    for n in range(1, N + 1):
        P[n] = sum(k * L[k - 1] * P[n - k] for k in range(1, n + 1)) / n
    return float(max(0.0, 1.0 - P.sum()))


@dataclass(frozen=True)
class SandwichReport:
    """Variational and lower-bound sandwich of the exact ground-state energy."""

    N: int
    M: int
    coupling: float
    E_N: float
    gp_energy_analog: float
    trial_wick: float
    trial_exact: float
    trial_trace: float
    trace_defect: float
    c: float
    C: float
    C_at_zero: float
    one_body_gap: float
    depletion: float

    @property
    def variational_ok(self) -> bool:
        return self.E_N <= self.trial_exact + 1e-8

    @property
    def lower_ok(self) -> bool:
        return self.C >= self.C_at_zero - 1e-10 or self.c == 0.0

    def to_row(self) -> dict[str, float]:
        return {
            "N": self.N,
            "M": self.M,
            "lambda": self.coupling,
            "E_N": self.E_N,
            "depletion": self.depletion,
            "trial_energy": self.trial_exact,
            "c": self.c,
            "C": self.C,
        }


def _lowest(A: sp.spmatrix | np.ndarray) -> float:
    if sp.issparse(A):
        if A.shape[0] <= _DENSE_LIMIT:
            return float(np.linalg.eigvalsh(A.toarray())[0])
        v0 = np.full(A.shape[0], 1.0 / math.sqrt(A.shape[0]))
        return float(spla.eigsh(A, k=1, which="SA", tol=1e-12, v0=v0)[0][0])
    return float(np.linalg.eigvalsh(A)[0])


def sandwich(
    problem: ManyBodyProblem,
    gp_energy_analog: float | None = None,
    trial_pair=None,
    C: float | None = None,
    truncation: int | None = None,
    c_tol: float = 1e-9,
) -> SandwichReport:
    """``E_N`` between the trial-state energy and ``N e - C + c N_+`` lower bounds.

    (i) the reconstructed trial state gives ``E_N <= Tr(H Gamma_N)/Tr Gamma_N``;
    (ii) for the constant ``C`` (default ``max(0, N e - E_N) + 1``) the largest
    ``c`` with ``lambda_min(H_N - c N_+) >= N e - C`` is found by bisection.
    """
    from .quasifree import wick_energy

    ad = problem.adapted()
    e = hartree_energy(ad) if gp_energy_analog is None else float(gp_energy_analog)
    H = ad.hamiltonian()
    result = exact_diagonalize(ad)
    E_N = result.energy
    if trial_pair is None:
        trial_pair = born_trial_pair(problem)
    phi = ad.condensate_vector
    pair_ad = trial_pair
    if trial_pair.dim == problem.M:
        O = problem.adapted_rotation
        pair_ad = trial_pair.conjugated(O)
    wick = wick_energy(pair_ad, ad.one_body, ad.two_body, phi, problem.N).total
    state = reconstruct_trial_state(ad, pair_ad, truncation)
    trial_exact = float(H.multiply(state.density).sum() / state.trace)
    tail = excitation_tail_probability(pair_ad, problem.N)

    Nplus = sp.diags(ad.excitation_number())
    target = problem.N * e
    C_zero = target - E_N
    C_val = max(0.0, C_zero) + 1.0 if C is None else float(C)

    def ok(c: float) -> bool:
        return _lowest(H - c * Nplus) >= target - C_val - 1e-12

    if not ok(0.0):
        c_best = 0.0
    else:
        lo, hi = 0.0, 1.0
        while ok(hi) and hi < 1e8:
            lo, hi = hi, 2.0 * hi
        while hi - lo > c_tol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        c_best = lo
    hq = np.linalg.eigvalsh(ad.one_body[1:, 1:]) if problem.M > 1 else np.array([np.inf])
    gap = float(hq[0] - ad.one_body[0, 0])
    dep = problem.N - float(phi @ result.gamma1 @ phi)
    return SandwichReport(
        problem.N, problem.M, problem.coupling, E_N, e, wick, trial_exact, state.trace, tail, c_best, C_val, C_zero, gap, dep
    )
