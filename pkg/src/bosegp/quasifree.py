"""Quasi-free bosonic states, Wick energies and the pair-correlated trial state.

A quasi-free state on a real one-body basis is described by its density
matrices ``gamma_ij = <a*_j a_i>`` and ``alpha_ij = <a_i a_j>``.  A pair
``(gamma, alpha)`` comes from a state iff ``gamma >= 0`` and

    [[gamma, alpha], [alpha, 1 + gamma]] >= 0.

The trial state puts ``N`` particles in the condensate ``phi`` and
correlates the excitations through ``gamma = Q k^2 Q`` and
``alpha = Q k Q``, where ``k`` is the pair kernel ``-phi(x) N omega_N(x-y) phi(y)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.fft import next_fast_len
from scipy.stats import linregress

from .errors import DomainError, ValidationError

__all__ = [
    "QuasiFreePair",
    "Admissibility",
    "admissible",
    "TrialStateSpec",
    "from_kernel",
    "WickEnergy",
    "wick_energy",
    "check_interaction_symmetry",
    "grid_interaction_tensor",
    "grid_operator_matrix",
    "number_moment",
    "number_moment_wick",
    "number_mgf",
    "number_tail_bound",
    "squeezed_moments_bruteforce",
    "MomentCheck",
    "moment_bound_check",
    "TorusTrialEnergy",
    "torus_trial_energy",
    "YoungCheck",
    "young_check",
    "TrialSweep",
    "trial_upper_bound",
    "MOMENT_CONSTANTS",
]

MOMENT_CONSTANTS = {2: 10.0, 3: 100.0}


def _as_symmetric(name: str, A: Any, n: int | None = None) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be a square matrix")
    if n is not None and A.shape[0] != n:
        raise ValidationError(f"{name} has dimension {A.shape[0]}, expected {n}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > 1e-10 * scale:
        raise ValidationError(f"{name} must be symmetric")
    A = 0.5 * (A + A.T)
    A.setflags(write=False)
    return A


@dataclass(frozen=True, eq=False)
class QuasiFreePair:
    """One-body density matrices ``(gamma, alpha)`` of a quasi-free state."""

    gamma: np.ndarray
    alpha: np.ndarray

    def __post_init__(self) -> None:
        g = _as_symmetric("gamma", self.gamma)
        a = _as_symmetric("alpha", self.alpha, g.shape[0])
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "alpha", a)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    @property
    def trace_gamma(self) -> float:
        return float(np.trace(self.gamma))

    @classmethod
    def vacuum(cls, n: int) -> "QuasiFreePair":
        return cls(np.zeros((n, n)), np.zeros((n, n)))

    @classmethod
    def squeezed_mode(cls, s: float) -> "QuasiFreePair":
        """Pure single-mode squeezed vacuum with ``gamma = s^2``, ``alpha = s sqrt(1 + s^2)``."""
        return cls(np.array([[s * s]]), np.array([[s * math.sqrt(1.0 + s * s)]]))

    def block(self) -> np.ndarray:
        """``[[gamma, alpha], [alpha, 1 + gamma]]``."""
        n = self.dim
        return np.block([[self.gamma, self.alpha], [self.alpha, np.eye(n) + self.gamma]])

    def conjugated(self, O: np.ndarray) -> "QuasiFreePair":
        return QuasiFreePair(O.T @ self.gamma @ O, O.T @ self.alpha @ O)

    def to_dict(self) -> dict[str, Any]:
        return {"dim": self.dim, "gamma": self.gamma.ravel().tolist(), "alpha": self.alpha.ravel().tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "QuasiFreePair":
        n = int(data["dim"])
        return cls(np.asarray(data["gamma"], float).reshape(n, n), np.asarray(data["alpha"], float).reshape(n, n))

    @classmethod
    def from_json(cls, text: str) -> "QuasiFreePair":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Admissibility:
    """Outcome of the positivity test; ``witness`` is a violating eigenvector if any."""

    ok: bool
    min_eigenvalue: float
    violated: str | None = None
    witness: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.ok


def admissible(pair: QuasiFreePair, tol: float = 1e-10) -> Admissibility:
    """Check ``gamma >= 0`` and the block positivity condition."""
    if pair.gamma.shape != pair.alpha.shape:
        raise ValidationError("gamma and alpha must have the same shape")
    n = pair.dim
    if n == 0:
        return Admissibility(True, math.inf)
    B = pair.block()
    scale = max(1.0, float(np.abs(B).max()))
    wg, Ug = np.linalg.eigh(pair.gamma)
    if wg[0] < -tol * scale:
        return Admissibility(False, float(wg[0]), "gamma", Ug[:, 0])
    wb, Ub = np.linalg.eigh(B)
    if wb[0] < -tol * scale:
        return Admissibility(False, float(wb[0]), "block", Ub[:, 0])
    return Admissibility(True, float(min(wg[0], wb[0])))


# -- trial pair --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrialStateSpec:
    """Pair kernel ``k`` in an orthonormal real basis, with the particle number ``N``."""

    k_matrix: np.ndarray
    N: float
    basis: Any = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "k_matrix", _as_symmetric("k", self.k_matrix))
        if not self.N > 0:
            raise ValidationError("N must be positive")

    @property
    def hilbert_schmidt_norm(self) -> float:
        return float(np.linalg.norm(self.k_matrix))


def from_kernel(spec: TrialStateSpec, phi_vector: Sequence[float]) -> QuasiFreePair:
    """``gamma = Q k^T k Q``, ``alpha = Q k Q`` with ``Q = 1 - |phi><phi|``.

    The pair is admissible for every symmetric ``k``: with ``alpha = Qk Q`` and
    ``gamma = Q k^2 Q >= alpha^2`` the block matrix is a sum of
    ``[[alpha^2, alpha], [alpha, 1]] >= 0`` and a positive remainder.
    """
    phi = np.asarray(phi_vector, float)
    k = spec.k_matrix
    if phi.shape != (k.shape[0],):
        raise ValidationError("phi_vector does not match the kernel dimension")
    if abs(np.linalg.norm(phi) - 1.0) > 1e-10:
        raise ValidationError("phi_vector must be normalised")
    Q = np.eye(phi.size) - np.outer(phi, phi)
    gamma = Q @ k.T @ k @ Q
    alpha = Q @ k @ Q
    pair = QuasiFreePair(0.5 * (gamma + gamma.T), 0.5 * (alpha + alpha.T))
    check = admissible(pair)
    if not check.ok:  # pragma: no cover - guaranteed by construction
        raise ArithmeticError(f"trial pair failed admissibility ({check.violated}, {check.min_eigenvalue})")
    return pair


# -- Wick energies -----------------------------------------------------------------


def check_interaction_symmetry(W: np.ndarray, tol: float = 1e-10) -> None:
    """Validate ``W_mnpq = W_nmqp = W_pqmn`` for ``W_mnpq = <u_m u_n, V u_p u_q>``."""
    W = np.asarray(W)
    if W.ndim != 4 or len(set(W.shape)) != 1:
        raise ValidationError("interaction must be an n x n x n x n tensor")
    scale = max(1.0, float(np.abs(W).max(initial=0.0)))
    for name, perm in (("particle exchange", (1, 0, 3, 2)), ("hermiticity", (2, 3, 0, 1))):
        if np.abs(W - W.transpose(perm)).max(initial=0.0) > tol * scale:
            raise ValidationError(f"interaction tensor violates {name} symmetry")


@dataclass(frozen=True)
class WickEnergy:
    """The five contributions to the trial energy and their sum.

    ``condensate``: ``N <phi, h phi>``; ``hartree``: ``(N^2/2) <phi phi, V phi phi>``;
    ``kinetic``: ``Tr(h gamma)``; ``pairing``: ``N <phi phi, V alpha>``;
    ``quartic``: ``(1 + C/N)/2`` times the direct, exchange and pairing
    contractions of ``V`` with ``gamma`` and ``alpha``.
    """

    condensate: float
    hartree: float
    kinetic: float
    pairing: float
    quartic: float

    @property
    def total(self) -> float:
        return self.condensate + self.hartree + self.kinetic + self.pairing + self.quartic

    def to_dict(self) -> dict[str, float]:
        return {
            "condensate": self.condensate,
            "hartree": self.hartree,
            "kinetic": self.kinetic,
            "pairing": self.pairing,
            "quartic": self.quartic,
            "total": self.total,
        }


def wick_energy(
    pair: QuasiFreePair,
    one_body: np.ndarray,
    interaction: np.ndarray,
    phi_vector: Sequence[float],
    N: float,
    C: float = 0.0,
    check_symmetry: bool = True,
) -> WickEnergy:
    """Energy of ``N`` condensed particles in ``phi`` dressed by the quasi-free pair.

    ``interaction[m, n, p, q] = int u_m(x) u_n(y) V(x - y) u_p(x) u_q(y)``.
    """
    h = np.asarray(one_body, float)
    W = np.asarray(interaction, float)
    phi = np.asarray(phi_vector, float)
    n = pair.dim
    if h.shape != (n, n) or W.shape != (n, n, n, n) or phi.shape != (n,):
        raise ValidationError("pair, one-body matrix, interaction and phi must share one basis")
    if check_symmetry:
        check_interaction_symmetry(W)
    g, a = pair.gamma, pair.alpha
    Wphi = np.einsum("mnpq,p,q->mn", W, phi, phi)
    condensate = N * float(phi @ h @ phi)
    hartree = 0.5 * N * N * float(np.einsum("mn,m,n->", Wphi, phi, phi))
    kinetic = float(np.sum(h * g))
    pairing = N * float(np.sum(Wphi * a))
    direct = np.einsum("mnpq,mp,nq->", W, g, g)
    exchange = np.einsum("mnpq,mn,pq->", W, g, g)
    pairs = np.einsum("mnpq,mn,pq->", W, a, a)
    quartic = 0.5 * (1.0 + C / N) * float(direct + exchange + pairs)
    return WickEnergy(condensate, hartree, kinetic, pairing, quartic)


def grid_operator_matrix(grid, functions: np.ndarray, apply) -> np.ndarray:
    """``<u_i, A u_j>`` for grid functions ``u`` and a linear map ``apply``."""
    flat = functions.reshape(functions.shape[0], -1)
    images = np.array([apply(u) for u in functions]).reshape(flat.shape)
    A = grid.cell * flat @ images.T
    return 0.5 * (A + A.T)


def grid_interaction_tensor(grid, functions: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """``W_mnpq = int (u_m u_p)(x) (v * (u_n u_q))(x) dx`` with ``v^`` given on the half spectrum."""
    n = functions.shape[0]
    prods = np.einsum("m...,p...->mp...", functions, functions)
    flat = prods.reshape(n * n, -1)
    conv = np.array([grid.fourier_multiply(prods[i, j], symbol) for i in range(n) for j in range(n)])
    conv = conv.reshape(n * n, -1)
    W = (grid.cell * flat @ conv.T).reshape(n, n, n, n)  # [(m,p),(n,q)]
    W = W.transpose(0, 2, 1, 3)
    # enforce the exact symmetries removed by rounding
    W = 0.5 * (W + W.transpose(1, 0, 3, 2))
    return 0.5 * (W + W.transpose(2, 3, 0, 1))


# -- moments of the number operator ---------------------------------------------------


def _b_matrix(pair: QuasiFreePair) -> np.ndarray:
    return np.block([[pair.gamma, pair.alpha], [pair.alpha, pair.gamma]])


def number_mgf(pair: QuasiFreePair, t: float) -> float:
    """``<exp(t N)> = det(1 - (e^t - 1) B)^(-1/2)`` with ``B = [[gamma, alpha], [alpha, gamma]]``."""
    x = math.expm1(t)
    beta = np.linalg.eigvalsh(_b_matrix(pair))
    arg = 1.0 - x * beta
    if np.any(arg <= 0):
        return math.inf
    return float(np.exp(-0.5 * np.sum(np.log(arg))))


def number_moment(pair: QuasiFreePair, ell: int) -> float:
    """``<N^ell>`` for ``ell <= 3`` from the factorial cumulants ``(k-1)! Tr(B^k)/2``."""
    if ell not in (0, 1, 2, 3):
        raise ValidationError("moments are available for ell <= 3")
    g, a = pair.gamma, pair.alpha
    b1 = float(np.trace(g))
    if ell == 0:
        return 1.0
    if ell == 1:
        return b1
    g2, a2 = g @ g, a @ a
    b2 = float(np.trace(g2) + np.trace(a2))
    f2 = b2 + b1 * b1  # <N(N-1)>
    if ell == 2:
        return f2 + b1
    # Tr(B^3)/2 = Tr(g^3) + 3 Tr(g a^2)
    b3 = float(np.trace(g2 @ g) + 3.0 * np.trace(g @ a2))
    f3 = 2.0 * b3 + 3.0 * b2 * b1 + b1**3  # <N(N-1)(N-2)>
    return f3 + 3.0 * f2 + b1


def _contraction(pair: QuasiFreePair, left: tuple[int, bool], right: tuple[int, bool]) -> float:
    (i, ci), (j, cj) = left, right
    if ci and not cj:
        return pair.gamma[j, i]  # <a*_i a_j>
    if not ci and cj:
        return (1.0 if i == j else 0.0) + pair.gamma[i, j]  # <a_i a*_j>
    return pair.alpha[i, j]  # <a* a*> = <a a> = alpha for real states


def _pairings(items: list[int]) -> Iterable[list[tuple[int, int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k in range(len(rest)):
        for tail in _pairings(rest[:k] + rest[k + 1 :]):
            yield [(first, rest[k])] + tail


def number_moment_wick(pair: QuasiFreePair, ell: int) -> float:
    """``<N^ell>`` by summing all Wick pairings of ``(sum_i a*_i a_i)^ell`` explicitly."""
    if ell not in (1, 2, 3):
        raise ValidationError("explicit Wick expansion is tabulated for ell <= 3")
    n = pair.dim
    if n > 8:
        raise ValidationError("explicit Wick expansion is limited to 8 modes")
    pairings = list(_pairings(list(range(2 * ell))))
    total = 0.0
    for idx in itertools.product(range(n), repeat=ell):
        ops = []
        for i in idx:
            ops += [(i, True), (i, False)]
        for pr in pairings:
            term = 1.0
            for l, r in pr:
                term *= _contraction(pair, ops[l], ops[r])
                if term == 0.0:
                    break
            total += term
    return total


def squeezed_moments_bruteforce(s: float, ell: int, n_max: int = 60) -> float:
    """``<n^ell>`` of the single-mode squeezed vacuum with ``<n> = s^2`` by explicit Fock expansion.

    The state is ``sum_{m <= n_max} c_m |2m>`` with
    ``c_m ~ (-tanh r)^m sqrt((2m)!)/(2^m m!)`` and ``sinh r = s``; ``n_max``
    counts expansion terms (pair occupations), and the truncated amplitudes
    are renormalised.
    """
    from scipy.special import gammaln

    r = math.asinh(s)
    t = math.tanh(r)
    m = np.arange(n_max + 1)
    if t == 0:
        return 0.0
    log_c = m * math.log(t) + 0.5 * gammaln(2 * m + 1) - m * math.log(2.0) - gammaln(m + 1)
    w = np.exp(2 * (log_c - np.max(log_c)))
    w /= w.sum()
    return float(np.sum(w * (2.0 * m) ** ell))


def number_tail_bound(pair: QuasiFreePair, N: float) -> float:
    """Chernoff bound on ``P(N_exc > N)``: ``min_t <exp(t N_exc)> exp(-t (N + 1))``."""
    from scipy.optimize import minimize_scalar

    beta_max = float(np.linalg.eigvalsh(_b_matrix(pair))[-1])
    if beta_max <= 0:
        return 0.0
    t_max = math.log1p(1.0 / beta_max) * (1 - 1e-9)

    def log_bound(t: float) -> float:
        mgf = number_mgf(pair, t)
        return math.log(mgf) - t * (N + 1.0) if math.isfinite(mgf) else math.inf

    res = minimize_scalar(log_bound, bounds=(0.0, t_max), method="bounded", options={"xatol": 1e-10})
    return float(min(1.0, math.exp(min(res.fun, 0.0))))


@dataclass(frozen=True)
class MomentCheck:
    ok: bool
    moment: float
    bound: float
    ell: int


def moment_bound_check(pair: QuasiFreePair, ell: int, constants: dict[int, float] | None = None) -> MomentCheck:
    """``<N^ell> <= C_ell (1 + <N>)^ell`` with ``C_2 = 10``, ``C_3 = 100`` unless overridden."""
    if ell not in (2, 3):
        raise ValidationError("ell must be 2 or 3")
    consts = dict(MOMENT_CONSTANTS)
    if constants:
        consts.update(constants)
    value = number_moment(pair, ell)
    bound = consts[ell] * (1.0 + pair.trace_gamma) ** ell
    return MomentCheck(value <= bound * (1 + 1e-12), value, bound, ell)


# -- homogeneous trial energy in momentum space ---------------------------------------------


@dataclass(frozen=True)
class TorusTrialEnergy:
    """Trial energy on the unit torus (``phi = 1``) with the modes ``0 < |n| <= n_cut``."""

    N: float
    n_cut: int
    energy: WickEnergy
    trace_gamma: float
    tail_bound: float

    @property
    def total(self) -> float:
        return self.energy.total


def _lattice_ball(n_cut: int) -> tuple[np.ndarray, np.ndarray]:
    ax = np.arange(-n_cut, n_cut + 1)
    n2 = ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2
    return ax, n2


def _radial_on_squares(values_of, n2: np.ndarray) -> np.ndarray:
    uniq, inv = np.unique(n2, return_inverse=True)
    return values_of(uniq)[inv].reshape(n2.shape)


def torus_trial_energy(solution, N: float, n_cut: int | None = None, cutoff: float = 2.0, C: float = 0.0) -> TorusTrialEnergy:
    """Wick energy of the pair-correlated trial state of the homogeneous gas.

    The pair kernel is ``k_p = -(V f)^(p/N) / (2 |p|^2)`` for ``0 < |p| <= 2 pi n_cut``
    (``n_cut = ceil(cutoff * N)`` by default), i.e. ``-N omega_N^`` restricted to
    the mode set; ``gamma_p = k_p^2`` and ``alpha_{p,-p} = k_p``.
    """
    from .scattering import ScaledScattering

    sol = solution.solution if isinstance(solution, ScaledScattering) else solution
    if n_cut is None:
        n_cut = int(math.ceil(cutoff * N))
    if n_cut < 1:
        raise ValidationError("n_cut must be at least 1")
    ax, n2 = _lattice_ball(n_cut)
    inside = (n2 <= n_cut * n_cut) & (n2 > 0)
    p2 = 4.0 * math.pi**2 * n2
    vf = _radial_on_squares(lambda m: sol.vf_transform(2.0 * math.pi * np.sqrt(m) / N), n2)
    k = np.where(inside, -vf / (2.0 * np.where(inside, p2, 1.0)), 0.0)
    vhat_N = lambda m: sol.potential_transform(2.0 * math.pi * np.sqrt(m) / N) / N  # noqa: E731
    vN = _radial_on_squares(vhat_N, n2)
    v0 = float(vhat_N(np.array([0.0]))[0])

    condensate = 0.0
    hartree = 0.5 * N * N * v0
    kinetic = float(np.sum(p2 * k * k))
    pairing = N * float(np.sum(vN * k))
    # sum_{p,q} V_N^(p - q) u_p u_q via the autocorrelation of u on a padded grid
    size = next_fast_len(4 * n_cut + 1)
    ax2 = np.fft.fftfreq(size, 1.0 / size).astype(int)
    d2 = ax2[:, None, None] ** 2 + ax2[None, :, None] ** 2 + ax2[None, None, :] ** 2
    vd = _radial_on_squares(vhat_N, d2)

    def correlate(u: np.ndarray) -> float:
        pad = np.zeros((size,) * 3)
        pad[: 2 * n_cut + 1, : 2 * n_cut + 1, : 2 * n_cut + 1] = u
        F = np.fft.rfftn(pad)
        ac = np.fft.irfftn(F * np.conj(F), s=pad.shape, axes=(0, 1, 2))  # ac[d] = sum_p u_{p+d} u_p
        return float(np.sum(vd * ac))

    gam = k * k
    direct = v0 * float(np.sum(gam)) ** 2
    quartic = 0.5 * (1.0 + C / N) * (direct + correlate(gam) + correlate(k))
    energy = WickEnergy(condensate, hartree, kinetic, pairing, quartic)
    # the state factorises over pairs (p, -p): B has eigenvalues gamma_p +- alpha_p per mode
    modes = k[inside]
    tail = _diagonal_tail_bound(modes * modes, modes, N)
    return TorusTrialEnergy(float(N), int(n_cut), energy, float(np.sum(gam)), tail)


def _diagonal_tail_bound(gamma: np.ndarray, alpha: np.ndarray, N: float) -> float:
    """Chernoff bound on ``P(N_exc > N)`` for a pair with simultaneously diagonal ``gamma``, ``alpha``."""
    from scipy.optimize import minimize_scalar

    beta = np.concatenate([gamma + alpha, gamma - alpha])
    bmax = float(beta.max(initial=0.0))
    if bmax <= 0:
        return 0.0
    t_max = math.log1p(1.0 / bmax) * (1 - 1e-9)

    def log_bound(t: float) -> float:
        arg = 1.0 - math.expm1(t) * beta
        return -0.5 * float(np.sum(np.log(arg))) - t * (N + 1.0)

    res = minimize_scalar(log_bound, bounds=(0.0, t_max), method="bounded", options={"xatol": 1e-12})
    return float(min(1.0, math.exp(min(res.fun, 0.0))))


# -- Young's inequality check --------------------------------------------------------------


@dataclass(frozen=True)
class YoungCheck:
    """``(N^2/2) int ((V_N f_N) * phi^2) phi^2`` against ``(N^2/2) ||V_N f_N||_1 int phi^4``."""

    N: float
    convolution: float
    young_bound: float
    gp_value: float

    def holds(self, tol: float = 1e-10) -> bool:
        return self.convolution <= self.young_bound + tol * max(1.0, abs(self.young_bound))


def young_check(state, scattering) -> YoungCheck:
    """Evaluate both sides of Young's inequality for the condensate; ``gp_value = 4 pi a N int phi^4``."""
    from .quadratic import _kernel_symbol

    grid = state.grid
    N = scattering.N
    rho = state.phi**2
    l1 = scattering.integral_vf()
    phi4 = grid.inner(rho, rho)
    if state.trap is not None and state.trap.is_torus and np.ptp(state.phi) == 0:
        conv = float(np.sum(rho) * grid.cell) ** 2 * l1  # constant density: exact
    else:
        symbol = _kernel_symbol(grid, scattering.fourier)
        conv = grid.inner(rho, grid.fourier_multiply(rho, symbol))
    return YoungCheck(float(N), 0.5 * N * N * conv, 0.5 * N * N * l1 * phi4, 4.0 * math.pi * scattering.a * N * phi4)


# -- sweeps ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialSweep:
    """Rows ``(N, wick_energy, N e_gp, defect, trace_defect)`` and the Young checks."""

    rows: list[dict[str, float]]
    young: list[YoungCheck]
    slope: float
    slope_stderr: float

    CSV_COLUMNS = ("N", "wick_energy", "N_e_gp", "defect", "trace_defect")

    @property
    def defects(self) -> np.ndarray:
        return np.array([r["defect"] for r in self.rows])

    @property
    def slope_non_positive(self) -> bool:
        return self.slope <= 0.0

    @property
    def defect_range(self) -> float:
        d = self.defects
        return float(d.max() - d.min()) if d.size else 0.0


def _basis_trial(state, solution, N: float, M: int, C: float) -> tuple[float, float]:
    """Trial energy of a trapped condensate in the basis ``{phi} + M excited functions``."""
    from .quadratic import _kernel_symbol, _projected_basis
    from .scattering import scale

    trap = state.trap
    grid = state.grid
    sc = scale(solution, N)
    ex, _ = _projected_basis(state, trap, M)
    funcs = np.concatenate([state.phi[None], ex])
    n = funcs.shape[0]
    h = grid_operator_matrix(grid, funcs, lambda u: grid.minus_laplacian(u) + trap.values * u)
    W = grid_interaction_tensor(grid, funcs, _kernel_symbol(grid, sc.potential_fourier))
    # pair kernel -phi(x) N omega_N(x - y) phi(y); the 1/|x| tail of omega_N is cut at the
    # box half-width, beyond which phi(x) phi(y) is negligible for a confined condensate
    cut = grid.L

    def omega_trunc(p: np.ndarray) -> np.ndarray:
        return solution.omega_transform_truncated(np.asarray(p, float) / N, cut * N) / N**3

    symbol = -N * _kernel_symbol(grid, omega_trunc)
    weighted = funcs * state.phi[None]
    kmat = grid_operator_matrix(grid, weighted, lambda u: grid.fourier_multiply(u, symbol))
    phi_vec = np.zeros(n)
    phi_vec[0] = 1.0
    pair = from_kernel(TrialStateSpec(kmat, N), phi_vec)
    energy = wick_energy(pair, h, W, phi_vec, N, C)
    return energy.total, number_tail_bound(pair, N)


def trial_upper_bound(
    state,
    scattering,
    M: int = 8,
    N_sweep: Sequence[float] = (8, 16, 32),
    cutoff: float = 2.0,
    C: float = 0.0,
) -> TrialSweep:
    """Trial energy minus ``N e_gp`` along an ``N`` sweep.

    On the torus the energy is evaluated in momentum space with modes up to
    ``|p| <= 2 pi ceil(cutoff N)``; in a trap it is evaluated on the condensate
    plus ``M`` excited basis functions.
    """
    from .scattering import ScaledScattering, scale

    sol = scattering.solution if isinstance(scattering, ScaledScattering) else scattering
    trap = state.trap
    if trap is None:
        raise ValidationError("state carries no trap")
    rows, young = [], []
    for N in N_sweep:
        sc = scale(sol, N)
        if trap.is_torus:
            if state.a == 0 or sol.potential is not None and sol.potential.kind != "hard_sphere" and sol.potential.V0 == 0:
                total, tail = N * state.e_gp, 0.0
            else:
                res = torus_trial_energy(sol, N, cutoff=cutoff, C=C)
                total, tail = res.total, res.tail_bound
        else:
            if state.grid.h > 1.0 / (2.0 * N) * (1 + 1e-12):
                from .errors import ResolutionError

                raise ResolutionError(f"grid spacing {state.grid.h:.4g} exceeds 1/(2N)")
            total, tail = _basis_trial(state, sol, N, M, C)
        rows.append(
            {"N": float(N), "wick_energy": total, "N_e_gp": N * state.e_gp, "defect": total - N * state.e_gp, "trace_defect": tail}
        )
        young.append(young_check(state, sc))
    if len(rows) >= 2:
        fit = linregress([r["N"] for r in rows], [r["defect"] for r in rows])
        slope = float(fit.slope)
        err = float(fit.stderr) if len(rows) > 2 else 0.0
    else:
        slope, err = 0.0, math.inf
    return TrialSweep(rows, young, slope, err)
