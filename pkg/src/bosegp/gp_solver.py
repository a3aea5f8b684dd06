"""Gross-Pitaevskii ground states on a periodic spectral grid.

The functional ``E(u) = int |grad u|^2 + V_ext u^2 + 4 pi a u^4`` is minimised
over ``||u||_2 = 1`` on a cubic box ``[-L, L)^3`` with ``M`` points per axis.
The Laplacian is applied spectrally; for a decaying trap the box is taken
large enough for the condensate to vanish at its edge, and for the unit torus
the box is ``[-1/2, 1/2)^3`` with genuinely periodic boundary conditions.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .errors import ConvergenceError, DomainError, ValidationError

__all__ = [
    "Grid",
    "TrapPotential",
    "GapReport",
    "GpState",
    "minimize_gp",
    "gp_residual",
    "gap_check",
    "trap_admissibility",
    "lowest_eigenpairs",
    "torus_feasibility_boundary",
]

TRAP_KINDS = ("harmonic", "quartic", "tabulated_grid", "zero_on_torus")
BOUNDARIES = ("decaying_trap", "periodic_torus")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L, L)^3`` with ``M`` points per axis."""

    L: float
    M: int

    def __post_init__(self) -> None:
        if self.M < 4 or self.M & (self.M - 1):
            raise ValidationError(f"grid points per axis must be a power of two >= 4, got {self.M}")
        if not self.L > 0:
            raise ValidationError("box half-width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def cell(self) -> float:
        """Volume element ``h^3``."""
        return self.h**3

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** 3

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.M)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.M, d=self.h)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, self.x, indexing="ij")

    def k_squared(self) -> np.ndarray:
        k2 = self.k**2
        return k2[:, None, None] + k2[None, :, None] + k2[None, None, :]

    @cached_property
    def k_squared_half(self) -> np.ndarray:
        """``|k|^2`` on the half spectrum used by real FFTs."""
        k2 = self.k**2
        kz = 2.0 * np.pi * np.fft.rfftfreq(self.M, d=self.h)
        return k2[:, None, None] + k2[None, :, None] + (kz**2)[None, None, :]

    def fourier_multiply(self, u: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Apply a Fourier multiplier given on the half spectrum to a real field."""
        axes = tuple(range(u.ndim))
        return np.fft.irfftn(symbol * np.fft.rfftn(u, axes=axes), s=u.shape, axes=axes)

    def minus_laplacian(self, u: np.ndarray) -> np.ndarray:
        return self.fourier_multiply(u, self.k_squared_half)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(self.cell * np.vdot(u, v).real)

    def norm(self, u: np.ndarray) -> float:
        return math.sqrt(self.inner(u, u))

    def kinetic(self, u: np.ndarray) -> float:
        """``int |grad u|^2`` evaluated spectrally."""
        uh = np.abs(np.fft.rfftn(u)) ** 2
        # interior half-spectrum planes appear twice in the full spectrum
        weight = np.full(uh.shape[-1], 2.0)
        weight[0] = 1.0
        if self.M % 2 == 0:
            weight[-1] = 1.0
        return float(self.cell * np.sum(self.k_squared_half * uh * weight) / u.size)

    def matches(self, other: "Grid") -> bool:
        return self.M == other.M and math.isclose(self.L, other.L, rel_tol=1e-14)


@dataclass(frozen=True, eq=False)
class TrapPotential:
    """External potential sampled on a spectral grid.

    ``harmonic``: ``sum_i c_i x_i^2`` with ``parameters["c"]`` (default 1, scalar
    or per axis).  ``quartic``: ``c |x|^4``.  ``tabulated_grid``:
    ``parameters["values"]`` is an ``M^3`` array.  ``zero_on_torus``: the unit
    torus without external field (the box half-width is forced to 1/2).
    """

    kind: str
    parameters: dict[str, Any] = field(default_factory=dict)
    L: float = 8.0
    M: int = 64
    boundary: str = "decaying_trap"
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in TRAP_KINDS:
            raise ValidationError(f"unknown trap kind {self.kind!r}")
        if self.kind == "zero_on_torus":
            object.__setattr__(self, "boundary", "periodic_torus")
            object.__setattr__(self, "L", 0.5)
        if self.boundary not in BOUNDARIES:
            raise ValidationError(f"unknown boundary {self.boundary!r}")
        grid = Grid(float(self.L), int(self.M))
        values = self._evaluate(grid)
        if values.shape != (grid.M,) * 3:
            raise ValidationError(f"trap values have shape {values.shape}, expected {(grid.M,) * 3}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("trap potential must be finite on the grid")
        if np.any(values < 0):
            raise ValidationError("trap potential must be non-negative")
        if self.boundary == "decaying_trap":
            edge = np.concatenate([values[0].ravel(), values[:, 0].ravel(), values[:, :, 0].ravel()])
            centre = values[grid.M // 2, grid.M // 2, grid.M // 2]
            if edge.min() <= centre:
                raise ValidationError("a decaying trap must grow towards the box boundary")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def grid(self) -> Grid:
        return Grid(float(self.L), int(self.M))

    @property
    def is_torus(self) -> bool:
        return self.boundary == "periodic_torus"

    @property
    def separable_coefficients(self) -> np.ndarray | None:
        """Per-axis coefficients for the harmonic trap, else ``None``."""
        if self.kind != "harmonic":
            return None
        return np.broadcast_to(np.asarray(self.parameters.get("c", 1.0), float), (3,)).copy()

    def _evaluate(self, grid: Grid) -> np.ndarray:
        if self.kind == "zero_on_torus":
            return np.zeros((grid.M,) * 3)
        if self.kind == "tabulated_grid":
            if "values" not in self.parameters:
                raise ValidationError("tabulated_grid trap needs parameters['values']")
            return np.array(self.parameters["values"], dtype=float)
        X, Y, Z = grid.mesh()
        if self.kind == "harmonic":
            c = np.broadcast_to(np.asarray(self.parameters.get("c", 1.0), float), (3,))
            if np.any(c <= 0):
                raise ValidationError("harmonic coefficients must be positive")
            return c[0] * X**2 + c[1] * Y**2 + c[2] * Z**2
        c = float(self.parameters.get("c", 1.0))
        if c <= 0:
            raise ValidationError("quartic coefficient must be positive")
        return c * (X**2 + Y**2 + Z**2) ** 2

    def gradient_squared(self) -> np.ndarray:
        """``|grad V_ext|^2`` on the grid (analytic where available)."""
        grid = self.grid
        if self.kind == "zero_on_torus":
            return np.zeros_like(self.values)
        if self.kind == "tabulated_grid":
            gx, gy, gz = np.gradient(self.values, grid.h, edge_order=2)
            return gx**2 + gy**2 + gz**2
        X, Y, Z = grid.mesh()
        if self.kind == "harmonic":
            c = self.separable_coefficients
            return (2 * c[0] * X) ** 2 + (2 * c[1] * Y) ** 2 + (2 * c[2] * Z) ** 2
        c = float(self.parameters.get("c", 1.0))
        r2 = X**2 + Y**2 + Z**2
        return 16.0 * c * c * r2**3

    def to_dict(self) -> dict[str, Any]:
        params = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in self.parameters.items()}
        return {"kind": self.kind, "parameters": params, "L": self.L, "M": self.M, "boundary": self.boundary}

    @classmethod
    def harmonic(cls, c: Any = 1.0, L: float = 8.0, M: int = 64) -> "TrapPotential":
        return cls("harmonic", {"c": c}, L=L, M=M)

    @classmethod
    def quartic(cls, c: float = 1.0, L: float = 5.0, M: int = 64) -> "TrapPotential":
        return cls("quartic", {"c": c}, L=L, M=M)

    @classmethod
    def torus(cls, M: int = 32) -> "TrapPotential":
        return cls("zero_on_torus", {}, L=0.5, M=M, boundary="periodic_torus")


@dataclass(frozen=True)
class GapReport:
    """Spectral-gap data of a condensate.

    ``inf_perp`` is the infimum of ``<u, (-Delta + V_ext) u>`` over normalised
    ``u`` orthogonal to the condensate; ``condition_lhs`` is the left side
    ``int |grad phi|^2 + V_ext phi^2 + 40 pi a ||phi||_inf^2`` of the
    smallness condition, which holds when it is below ``inf_perp``.
    """

    mu1: float
    mu2: float
    margin: float
    holds: bool
    inf_perp: float
    condition_lhs: float
    condition_holds: bool
    window: tuple[float, float]

    @property
    def default_mu(self) -> float:
        return 0.5 * (self.mu1 + self.mu2)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mu1": self.mu1,
            "mu2": self.mu2,
            "margin": self.margin,
            "holds": self.holds,
            "inf_perp": self.inf_perp,
            "condition_lhs": self.condition_lhs,
            "condition_holds": self.condition_holds,
            "window": list(self.window),
        }


@dataclass(frozen=True, eq=False)
class GpState:
    """Converged condensate on a grid."""

    phi: np.ndarray
    e_gp: float
    mu: float
    a: float
    residual: float
    grid: Grid
    iterations: int = 0
    energy_history: tuple[float, ...] = ()
    gap_report: GapReport | None = None
    trap: TrapPotential | None = None

    def with_gap(self, report: GapReport) -> "GpState":
        return replace(self, gap_report=report)

    @property
    def phi_max_squared(self) -> float:
        return float(np.max(self.phi) ** 2)

    def quartic_integral(self) -> float:
        return float(self.grid.cell * np.sum(self.phi**4))

    def header(self) -> dict[str, Any]:
        return {
            "e_gp": self.e_gp,
            "mu": self.mu,
            "a": self.a,
            "residual": self.residual,
            "iterations": self.iterations,
            "grid": {"L": self.grid.L, "M": self.grid.M},
            "gap_report": None if self.gap_report is None else self.gap_report.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.header(), indent=2)

    def dump_grid(self, path: str | Path) -> None:
        """Write ``phi`` as little-endian float64, row-major with axis order x, y, z."""
        np.ascontiguousarray(self.phi, dtype="<f8").tofile(path)


def _hamiltonian(grid: Grid, V: np.ndarray, a: float, u: np.ndarray) -> np.ndarray:
    return grid.minus_laplacian(u) + V * u + 8.0 * np.pi * a * u**3


def _energy(grid: Grid, V: np.ndarray, a: float, u: np.ndarray) -> float:
    return grid.kinetic(u) + grid.cell * float(np.sum(V * u * u)) + 4.0 * np.pi * a * grid.cell * float(np.sum(u**4))


def _fix_phase(grid: Grid, u: np.ndarray) -> np.ndarray:
    if np.sum(u) < 0:
        u = -u
    return u / grid.norm(u)


def _preconditioner(grid: Grid, shift: float):
    inv = 1.0 / (grid.k_squared_half + shift)

    def apply(u: np.ndarray) -> np.ndarray:
        return grid.fourier_multiply(u, inv)

    return apply


def _separable_modes(grid: Grid, coeffs: np.ndarray, count: int) -> list[tuple[float, tuple[np.ndarray, ...]]]:
    """Lowest product eigenpairs of ``-Delta + sum c_i x_i^2`` on the grid."""
    M = grid.M
    dft = np.fft.fft(np.eye(M), axis=0)
    lap = (np.fft.ifft(grid.k[:, None] ** 2 * dft, axis=0)).real
    lap = 0.5 * (lap + lap.T)
    axes = []
    for c in coeffs:
        w, v = np.linalg.eigh(lap + np.diag(c * grid.x**2))
        v = v / math.sqrt(grid.h)
        for j in range(M):
            if v[:, j].sum() < 0 or (abs(v[:, j].sum()) < 1e-12 and v[np.argmax(np.abs(v[:, j])), j] < 0):
                v[:, j] = -v[:, j]
        axes.append((w, v))
    nmax = min(M, count + 2)
    triples = []
    for i in range(nmax):
        for j in range(nmax):
            for l in range(nmax):
                triples.append((axes[0][0][i] + axes[1][0][j] + axes[2][0][l], i, j, l))
    triples.sort(key=lambda t: (t[0], t[1], t[2], t[3]))
    return [(e, (axes[0][1][:, i], axes[1][1][:, j], axes[2][1][:, l])) for e, i, j, l in triples[:count]]


def _torus_modes(grid: Grid, count: int) -> list[tuple[float, np.ndarray]]:
    """Real plane waves on the box, ordered by ``|p|^2`` then lexicographically."""
    M = grid.M
    n = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    vecs = []
    rng = range(-(M // 2) + 1, M // 2)
    for i in rng:
        for j in rng:
            for l in rng:
                vecs.append((i * i + j * j + l * l, i, j, l))
    vecs.sort()
    out: list[tuple[float, np.ndarray]] = []
    seen = set()
    X, Y, Z = grid.mesh()
    scale = 2.0 * np.pi / (2.0 * grid.L)
    amp = 1.0 / math.sqrt(grid.volume)
    for n2, i, j, l in vecs:
        if len(out) >= count:
            break
        if (i, j, l) in seen:
            continue
        seen.add((i, j, l))
        seen.add((-i, -j, -l))
        phase = scale * (i * X + j * Y + l * Z)
        eig = scale**2 * n2
        if (i, j, l) == (0, 0, 0):
            out.append((eig, np.full(X.shape, amp)))
            continue
        out.append((eig, math.sqrt(2.0) * amp * np.cos(phase)))
        if len(out) < count:
            out.append((eig, math.sqrt(2.0) * amp * np.sin(phase)))
    del n
    return out


def lowest_eigenpairs(
    trap: TrapPotential, count: int, tol: float = 1e-10, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``count`` eigenpairs of ``-Delta + V_ext`` on the trap's grid.

    Returns ``(values, vectors)`` with vectors of shape ``(count, M, M, M)``
    normalised in the grid ``L^2`` norm.  The harmonic trap uses its exact
    tensor-product structure, the torus its plane waves; other traps use
    preconditioned LOBPCG.
    """
    grid = trap.grid
    if count < 1:
        raise ValidationError("count must be positive")
    if trap.is_torus and trap.kind == "zero_on_torus":
        modes = _torus_modes(grid, count)
        return np.array([m[0] for m in modes]), np.array([m[1] for m in modes])
    coeffs = trap.separable_coefficients
    if coeffs is not None:
        modes = _separable_modes(grid, coeffs, count)
        vals = np.array([m[0] for m in modes])
        vecs = np.array([np.einsum("i,j,k->ijk", *m[1]) for m in modes])
        return vals, vecs
    vals, vecs = _lobpcg(grid, trap.values, count, None, max(tol, 1e-9), seed)
    return vals, vecs


def _lobpcg(
    grid: Grid,
    V: np.ndarray,
    count: int,
    constraint: np.ndarray | None,
    tol: float,
    seed: int,
    maxiter: int = 1000,
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest eigenpairs of ``-Delta + V`` by preconditioned LOBPCG.

    ``tol`` bounds the relative residual of each returned vector; the
    eigenvalue error is of order ``tol^2``.  With ``constraint`` the
    iteration is confined to its orthogonal complement.
    """
    shape = V.shape
    size = V.size
    shift = max(1.0, float(np.min(V)) + 1.0)
    D = 1.0 / np.sqrt(1.0 + V / shift)
    inv = 1.0 / (grid.k_squared_half + shift)

    def matvec(X: np.ndarray) -> np.ndarray:
        X = X.reshape(size, -1)
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            u = X[:, j].reshape(shape)
            out[:, j] = (grid.minus_laplacian(u) + V * u).ravel()
        return out

    def precond(X: np.ndarray) -> np.ndarray:
        X = X.reshape(size, -1)
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            u = X[:, j].reshape(shape)
            out[:, j] = (D * grid.fourier_multiply(D * u, inv)).ravel()
        return out

    A = LinearOperator((size, size), matvec=matvec, matmat=matvec, dtype=float)
    T = LinearOperator((size, size), matvec=precond, matmat=precond, dtype=float)
    rng = np.random.default_rng(seed)
    X0 = rng.standard_normal((size, count))
    weight = np.exp(-V.ravel() / max(1.0, float(V.max())) * 20.0)
    X0 *= weight[:, None]
    Y = None if constraint is None else constraint.reshape(size, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs = lobpcg(A, X0, M=T, Y=Y, tol=tol, maxiter=maxiter, largest=False)
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    out = np.array([v.reshape(shape) / grid.norm(v.reshape(shape)) for v in vecs.T])
    # independent residual check (grid-measure relative residual)
    worst = 0.0
    for lam, v in zip(vals, out):
        r = grid.minus_laplacian(v) + V * v - lam * v
        worst = max(worst, grid.norm(r) / max(1.0, abs(lam)))
    if worst > 10.0 * tol:
        raise ConvergenceError("eigensolver stagnated", residual=worst)
    return vals, out


def _subspace_step(grid: Grid, V: np.ndarray, a: float, vectors: list[np.ndarray]) -> np.ndarray | None:
    """Stationary point of the GP functional restricted to ``span(vectors)``.

    The first vector is the current iterate.  The restricted problem is the
    small nonlinear eigenproblem ``(A + 8 pi a T[c, c]) c = lambda c``, solved by
    fixed-point iteration on its lowest eigenvector.
    """
    basis: list[np.ndarray] = []
    for v in vectors:
        w = v.copy()
        for _ in range(2):
            for q in basis:
                w -= grid.inner(q, w) * q
        n = grid.norm(w)
        if n > 1e-10 * grid.norm(v):
            basis.append(w / n)
    B = np.array(basis)
    HB = np.array([grid.minus_laplacian(q) + V * q for q in B])
    A = grid.cell * np.einsum("iabc,jabc->ij", B, HB)
    A = 0.5 * (A + A.T)
    T = grid.cell * np.einsum("iabc,jabc,kabc,labc->ijkl", B, B, B, B, optimize=True)
    c = np.zeros(len(basis))
    c[0] = 1.0
    for _ in range(500):
        G = A + 8.0 * np.pi * a * np.einsum("ijkl,k,l->ij", T, c, c)
        _, U = np.linalg.eigh(G)
        new = U[:, 0] * (1.0 if U[0, 0] >= 0 else -1.0)
        if np.linalg.norm(new - c) < 1e-14:
            c = new
            break
        c = new
    else:
        return None
    out = np.tensordot(c, B, axes=1)
    return out / grid.norm(out)


def minimize_gp(
    trap: TrapPotential,
    a: float,
    tol: float = 1e-8,
    max_iter: int = 500,
    initial: np.ndarray | None = None,
) -> GpState:
    """Minimise the GP functional for scattering length ``a`` on ``trap``'s grid.

    ``a = 0`` is solved as a linear eigenproblem.  For ``a > 0`` the iteration
    starts from the ``a = 0`` ground state (or ``initial``).  Each step takes
    the preconditioned residual as search direction and moves to the
    stationary point of the functional on ``span(phi, P r, previous step)``
    (a locally optimal gradient step).  Should that ever raise the energy, the
    step falls back to a plain normalised gradient step with halving, so the
    energy sequence is non-increasing.  Iteration stops once
    ``||(-Delta + V + 8 pi a phi^2 - mu) phi|| <= tol``.
    """
    if not a >= 0:
        raise DomainError(f"scattering length must be non-negative, got {a}")
    grid = trap.grid
    V = trap.values
    if initial is None:
        _, vecs = lowest_eigenpairs(trap, 1)
        phi = _fix_phase(grid, vecs[0])
    else:
        if initial.shape != V.shape:
            raise ValidationError("initial guess does not match the grid")
        phi = _fix_phase(grid, np.asarray(initial, float))

    def residual_of(u: np.ndarray) -> tuple[float, np.ndarray, float]:
        Hu = _hamiltonian(grid, V, a, u)
        mu = grid.inner(u, Hu)
        r = Hu - mu * u
        return grid.norm(r), r, mu

    energy = _energy(grid, V, a, phi)
    history = [energy]
    slack = 1e-12 * max(1.0, abs(energy))
    res, r, mu = residual_of(phi)
    it = 0
    previous: np.ndarray | None = None
    while a > 0 and res > tol:
        if it >= max_iter:
            raise ConvergenceError(f"GP iteration did not converge in {max_iter} steps", residual=res)
        shift = max(1.0, mu)
        # symmetric kinetic/potential preconditioner D (shift - Delta)^-1 D
        D = 1.0 / np.sqrt(1.0 + (V + 8.0 * np.pi * a * phi**2) / shift)
        d = D * grid.fourier_multiply(D * r, 1.0 / (grid.k_squared_half + shift))
        vectors = [phi, d] if previous is None else [phi, d, previous]
        trial = _subspace_step(grid, V, a, vectors)
        e_trial = np.inf if trial is None else _energy(grid, V, a, trial)
        if e_trial > energy + slack:
            step = 1.0
            while True:
                trial = phi - step * d
                trial = trial / grid.norm(trial)
                e_trial = _energy(grid, V, a, trial)
                if e_trial <= energy + slack:
                    break
                step *= 0.5
                if step < 1e-14:
                    raise ConvergenceError("GP step size underflow", residual=res)
        previous = trial - grid.inner(phi, trial) * phi
        phi, energy = trial, e_trial
        history.append(energy)
        res, r, mu = residual_of(phi)
        it += 1
    phi = _fix_phase(grid, phi)
    kin_pot = grid.kinetic(phi) + grid.cell * float(np.sum(V * phi * phi))
    quartic = grid.cell * float(np.sum(phi**4))
    e_gp = kin_pot + 4.0 * np.pi * a * quartic
    mu = kin_pot + 8.0 * np.pi * a * quartic
    state = GpState(phi, e_gp, mu, float(a), 0.0, grid, it, tuple(history), trap=trap)
    resid = gp_residual(state, trap)
    if resid > max(tol, 1e-8):
        raise ConvergenceError("ground state residual above tolerance", residual=resid)
    return replace(state, residual=resid)


def gp_residual(state: GpState, trap: TrapPotential) -> float:
    """``||(-Delta + V_ext + 8 pi a phi^2 - mu) phi||_2`` re-evaluated from scratch."""
    if not state.grid.matches(trap.grid) or state.phi.shape != trap.values.shape:
        raise ValidationError("state and trap live on different grids")
    grid = state.grid
    phi = state.phi
    r = _hamiltonian(grid, trap.values, state.a, phi) - state.mu * phi
    return grid.norm(r)


def gap_check(state: GpState, trap: TrapPotential, a: float | None = None, tol: float = 1e-7) -> GapReport:
    """Evaluate ``mu1``, ``mu2`` and the smallness condition for ``state``.

    ``mu1 = int |grad phi|^2 + V phi^2 + 32 pi a ||phi||_inf^2`` and
    ``mu2 = inf_{u perp phi} <u, (-Delta + V) u> - 8 pi a ||phi||_inf^2``, the
    infimum computed by LOBPCG constrained to the orthogonal complement of
    ``phi``.  ``window`` is ``(16 pi a ||phi||_inf^2, mu2)``, the admissible
    range of the chemical-potential parameter in the homogeneous argument.
    """
    if a is None:
        a = state.a
    if a < 0:
        raise DomainError("scattering length must be non-negative")
    if not state.grid.matches(trap.grid):
        raise ValidationError("state and trap live on different grids")
    grid = state.grid
    phi = state.phi
    kin_pot = grid.kinetic(phi) + grid.cell * float(np.sum(trap.values * phi * phi))
    pm2 = state.phi_max_squared
    vals, _ = _lobpcg(grid, trap.values, 1, phi, tol, seed=1)
    inf_perp = float(vals[0])
    mu1 = kin_pot + 32.0 * np.pi * a * pm2
    mu2 = inf_perp - 8.0 * np.pi * a * pm2
    lhs = kin_pot + 40.0 * np.pi * a * pm2
    cond = bool(lhs < inf_perp)
    return GapReport(
        mu1=mu1,
        mu2=mu2,
        margin=mu2 - mu1,
        holds=bool(mu1 < mu2) and cond,
        inf_perp=inf_perp,
        condition_lhs=lhs,
        condition_holds=cond,
        window=(16.0 * np.pi * a * pm2, mu2),
    )


def trap_admissibility(trap: TrapPotential) -> tuple[float, bool]:
    """Sampled constant ``C_fit = max (|grad V|^2 - 2 V^3)`` and whether it is finite."""
    values = trap.gradient_squared() - 2.0 * trap.values**3
    c_fit = float(np.max(values))
    if trap.kind == "zero_on_torus":
        c_fit = 0.0
    return c_fit, bool(np.isfinite(c_fit))


def torus_feasibility_boundary(M: int = 16, a_hi: float = 1.0, tol: float = 1e-9) -> float:
    """Largest ``a`` for which the torus window ``(16 pi a, mu2)`` is non-empty.

    Each bisection step solves the GP problem on the torus and re-runs the
    gap computation, so the boundary is detected from the numerics rather
    than from the closed form.
    """
    trap = TrapPotential.torus(M)

    def nonempty(a: float) -> bool:
        state = minimize_gp(trap, a)
        lo, hi = gap_check(state, trap, a).window
        return lo < hi

    lo, hi = 0.0, a_hi
    if not nonempty(lo):
        raise DomainError("window empty already at a = 0")
    if nonempty(hi):
        raise DomainError("window still non-empty at the upper bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if nonempty(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
