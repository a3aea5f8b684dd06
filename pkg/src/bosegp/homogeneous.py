"""Homogeneous gas on the unit torus: Bogoliubov lattice sums in momentum space.

Momenta are ``p = 2 pi n`` with ``n`` in ``Z^3``.  All sums over ``p`` depend
only on ``|n|^2``, so they are grouped by integer shells with multiplicities
``r3(m) = #{n : |n|^2 = m}``.  The interaction enters through

    G(p) = N (V_N f_N)^(p) = (V f)^(p / N),

which is tabulated once on ``[0, p_cut / N]`` and interpolated.
"""

from __future__ import annotations

import logging
import math
import os
import weakref
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve
from scipy.stats import linregress

from .errors import DomainError, ValidationError
from .scattering import ScaledScattering, ScatteringSolution, scale

__all__ = [
    "shell_counts",
    "shell_counts_direct",
    "ShellTable",
    "TorusSumSpec",
    "LatticeSum",
    "PlancherelReference",
    "bogoliubov_lattice_sum",
    "lattice_sum_details",
    "leading_expansion",
    "plancherel_reference",
    "homogeneous_energy_bound",
    "mu_window",
    "DefectSweep",
    "defect_sweep",
    "DEFAULT_N_SWEEP",
]

log = logging.getLogger(__name__)

SHELL_CACHE_VERSION = 1
DEFAULT_N_SWEEP = (50, 100, 200, 400, 800)
_PROFILE_STEP = 0.004
_TAIL_STEP = 0.01


# -- shell counts ----------------------------------------------------------------


def _cache_dir() -> Path:
    return Path(os.environ.get("BOSEGP_CACHE_DIR", Path.home() / ".cache" / "bosegp"))


def shell_counts_direct(m_max: int) -> np.ndarray:
    """``r3(m)`` for ``m <= m_max`` by enumerating every lattice point in the ball."""
    if m_max < 0:
        raise ValidationError("m_max must be non-negative")
    R = math.isqrt(m_max)
    axis = np.arange(-R, R + 1)
    sq = axis * axis
    counts = np.zeros(m_max + 1, dtype=np.int64)
    for x2 in sq:
        s = x2 + sq[:, None] + sq[None, :]
        s = s[s <= m_max]
        counts += np.bincount(s, minlength=m_max + 1)
    return counts


def _shell_counts_fft(m_max: int) -> np.ndarray:
    """``r3 = r1 * r1 * r1`` as a convolution over ``m``, with ``r1`` the squares' indicator."""
    r1 = np.zeros(m_max + 1)
    k = np.arange(math.isqrt(m_max) + 1)
    r1[k * k] = 2.0
    r1[0] = 1.0
    r2 = np.rint(fftconvolve(r1, r1)[: m_max + 1])
    raw = fftconvolve(r2, r1)[: m_max + 1]
    counts = np.rint(raw)
    if np.abs(raw - counts).max(initial=0.0) > 0.25:
        raise ArithmeticError("shell counting lost integer precision")
    return counts.astype(np.int64)


def shell_counts(m_max: int, cache: bool | Path | str = True) -> np.ndarray:
    """``r3(m)``, the number of ``n`` in ``Z^3`` with ``|n|^2 = m``, for ``0 <= m <= m_max``.

    Large tables are cached as ``.npy`` files; any cached table at least as
    long as requested is reused.
    """
    if m_max < 0:
        raise ValidationError("m_max must be non-negative")
    if m_max <= 4096:
        return shell_counts_direct(m_max)
    directory = None
    if cache:
        directory = _cache_dir() if cache is True else Path(cache)
        if directory.is_dir():
            for path in sorted(directory.glob(f"r3_v{SHELL_CACHE_VERSION}_*.npy")):
                try:
                    size = int(path.stem.rsplit("_", 1)[1])
                except ValueError:
                    continue
                if size >= m_max:
                    table = np.load(path, mmap_mode="r")
                    if table.shape == (size + 1,):
                        return np.array(table[: m_max + 1], dtype=np.int64)
    counts = _shell_counts_fft(m_max)
    if directory is not None:
        try:
            directory.mkdir(parents=True, exist_ok=True)
            tmp = directory / f".r3_v{SHELL_CACHE_VERSION}_{m_max}.{os.getpid()}.npy"
            np.save(tmp, counts.astype(np.int32))
            tmp.replace(directory / f"r3_v{SHELL_CACHE_VERSION}_{m_max}.npy")
        except OSError as exc:  # cache is an optimisation only
            log.warning("could not write shell cache: %s", exc)
    return counts


@dataclass(frozen=True, eq=False)
class ShellTable:
    """Lattice-point multiplicities per shell ``|n|^2 = m``, ``m <= m_max``."""

    counts: np.ndarray

    @classmethod
    def for_cutoff(cls, p_cut: float, cache: bool | Path | str = True) -> "ShellTable":
        m_max = int(math.floor((p_cut / (2.0 * math.pi)) ** 2 + 1e-9))
        return cls(shell_counts(m_max, cache))

    @property
    def m_max(self) -> int:
        return self.counts.size - 1

    @property
    def p_cut(self) -> float:
        return 2.0 * math.pi * math.sqrt(self.m_max)

    def lattice_points(self) -> int:
        """Number of non-zero lattice points with ``|n|^2 <= m_max``."""
        return int(self.counts[1:].sum())


# -- specification -----------------------------------------------------------------


def mu_window(a: float) -> tuple[float, float]:
    """``(16 pi a, 4 pi^2 - 8 pi a)``, the chemical potentials giving a positive ``N_+`` coefficient."""
    return 16.0 * math.pi * a, 4.0 * math.pi**2 - 8.0 * math.pi * a


@dataclass(frozen=True, eq=False)
class TorusSumSpec:
    """Inputs of the lattice sum: ``N``, scattering data, ``mu`` and the cutoff ``p_cut``.

    ``p_cut`` defaults to ``8 pi N`` (four times ``2 pi N``) and may not be
    smaller than that.
    """

    N: float
    scattering: ScaledScattering
    mu: float
    p_cut: float | None = None
    shell_table: ShellTable | None = field(default=None, repr=False)
    cache: bool | Path | str = field(default=True, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.scattering, ScaledScattering):
            raise ValidationError("scattering must be a ScaledScattering")
        if abs(self.scattering.N - self.N) > 1e-12 * self.N:
            raise ValidationError("scattering scale does not match N")
        hi = 4.0 * math.pi**2 - 8.0 * math.pi * self.a
        if not 0 < self.mu < hi:
            raise DomainError(f"mu = {self.mu} outside (0, 4 pi^2 - 8 pi a) = (0, {hi})")
        min_cut = 8.0 * math.pi * self.N
        p_cut = min_cut if self.p_cut is None else float(self.p_cut)
        if p_cut < min_cut * (1 - 1e-12):
            raise ValidationError(f"p_cut = {p_cut} is below 8 pi N = {min_cut}")
        object.__setattr__(self, "p_cut", p_cut)
        if self.shell_table is None:
            object.__setattr__(self, "shell_table", ShellTable.for_cutoff(p_cut, self.cache))
        elif self.shell_table.p_cut < p_cut * (1 - 1e-12) - 2 * math.pi:
            raise ValidationError("shell table shorter than the cutoff")

    @classmethod
    def from_solution(cls, solution: ScatteringSolution, N: float, mu: float | None = None, **kw) -> "TorusSumSpec":
        """Spec at scale ``N``; ``mu`` defaults to the middle of the admissible window."""
        if mu is None:
            lo, hi = mu_window(solution.a)
            mu = 0.5 * (lo + hi) if lo < hi else 0.5 * hi
        return cls(float(N), scale(solution, N), float(mu), **kw)

    @property
    def a(self) -> float:
        return self.scattering.a

    @property
    def q_cut(self) -> float:
        return self.p_cut / self.N

    @cached_property
    def profile(self) -> CubicSpline:
        """Cubic spline of ``q -> (V f)^(q)`` on ``[0, q_cut]``."""
        n = max(64, int(math.ceil(self.q_cut / _PROFILE_STEP)))
        q = np.linspace(0.0, self.q_cut * (1 + 1e-9), n + 1)
        return CubicSpline(q, self.scattering.solution.vf_transform(q))

    def coupling(self, p: np.ndarray) -> np.ndarray:
        """``G(p) = N (V_N f_N)^(p)``."""
        return self.profile(np.asarray(p, float) / self.N)

    def shells(self) -> tuple[np.ndarray, np.ndarray]:
        """Occupied shells ``m`` with ``0 < 4 pi^2 m <= p_cut^2`` and their multiplicities."""
        m_max = int(math.floor((self.p_cut / (2.0 * math.pi)) ** 2 + 1e-9))
        counts = self.shell_table.counts[: m_max + 1]
        m = np.flatnonzero(counts)
        m = m[m > 0]
        return m, counts[m]


# -- lattice sum ---------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSum:
    value: float
    inner: float
    tail_estimate: float
    shells: int


def _summand(A: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``-1/2 (A - sqrt(A^2 - G^2))`` in cancellation-free form."""
    return -0.5 * G * G / (A + np.sqrt(A * A - G * G))


# N-independent radial integrals, cached per scattering solution
_INTEGRAL_CACHE: "weakref.WeakKeyDictionary[ScatteringSolution, dict]" = weakref.WeakKeyDictionary()


def _cached(solution: ScatteringSolution, key: tuple, compute) -> float:
    store = _INTEGRAL_CACHE.setdefault(solution, {})
    if key not in store:
        store[key] = compute()
    return store[key]


def _tail_integral(spec: TorusSumSpec) -> float:
    """``-(1/(8 pi^2)) int_{p_cut}^inf G(p)^2 dp``, the leading term beyond the cutoff."""
    sol = spec.scattering.solution
    body_rest = _cached(sol, ("tail", spec.q_cut), lambda: _tail_body(sol, spec.q_cut))
    return float(-(spec.N / (8.0 * math.pi**2)) * body_rest)


def _tail_body(sol: ScatteringSolution, q0: float) -> float:
    q1 = max(4.0 * q0, q0 + 400.0)
    n = int(math.ceil((q1 - q0) / _TAIL_STEP))
    n += n % 2
    q = np.linspace(q0, q1, n + 1)
    g = sol.vf_transform(q)
    body = simpson(g * g, x=q)
    # beyond q1 the transform decays at least like 1/q^2 with the envelope at q1
    env = float(np.max(np.abs(g[-max(8, n // 100) :])))
    rest = env * env * q1 / 3.0
    return float(body + rest)


def lattice_sum_details(spec: TorusSumSpec) -> LatticeSum:
    """Shell-grouped sum over ``0 < |p| <= p_cut`` plus the radial tail estimate."""
    m, r = spec.shells()
    p2 = 4.0 * math.pi**2 * m.astype(float)
    A = p2 - spec.mu
    G = spec.coupling(np.sqrt(p2))
    bad = np.flatnonzero(A * A < G * G)
    if bad.size:
        k = bad[0]
        raise DomainError(f"negative radicand on shell |n|^2 = {int(m[k])}: |p|^2 - mu = {A[k]}, G = {G[k]}")
    inner = float(np.sum(r * _summand(A, G)))
    tail = _tail_integral(spec)
    return LatticeSum(inner + tail, inner, tail, int(m.size))


def bogoliubov_lattice_sum(spec: TorusSumSpec) -> float:
    """``-1/2 sum_{p != 0} (|p|^2 - mu - sqrt((|p|^2 - mu)^2 - G(p)^2))``."""
    return lattice_sum_details(spec).value


def leading_expansion(spec: TorusSumSpec) -> float:
    """Second-order term ``-sum_{0<|p|<=p_cut} G(p)^2 / (4 |p|^2)`` evaluated term by term."""
    m, r = spec.shells()
    p = 2.0 * math.pi * np.sqrt(m.astype(float))
    G = spec.coupling(p)
    return float(-np.sum(r * G * G / (4.0 * p * p)))


@dataclass(frozen=True)
class PlancherelReference:
    """Two evaluations of ``-(N^2/2) int V_N f_N omega_N``.

    ``radial`` uses position-space quadrature; ``continuum`` uses
    ``-(N/(8 pi^2)) int_0^inf (V f)^(q)^2 dq``, equal by Plancherel and
    ``(V f)^ = 2 q^2 omega^``.
    """

    radial: float
    continuum: float

    @property
    def value(self) -> float:
        return self.radial

    @property
    def relative_difference(self) -> float:
        scale_ = max(abs(self.radial), abs(self.continuum))
        return 0.0 if scale_ == 0 else abs(self.radial - self.continuum) / scale_


def _continuum_integral(solution: ScatteringSolution, q_max: float = 800.0) -> float:
    """``int_0^inf (V f)^(q)^2 dq`` by Simpson quadrature plus an envelope tail."""
    n = int(math.ceil(q_max / _TAIL_STEP))
    n += n % 2
    q = np.linspace(0.0, q_max, n + 1)
    g = solution.vf_transform(q)
    env = float(np.max(np.abs(g[-max(8, n // 100) :])))
    return float(simpson(g * g, x=q)) + env * env * q_max / 3.0


def plancherel_reference(spec: TorusSumSpec) -> PlancherelReference:
    """``-(N^2/2) int V_N f_N omega_N`` in position space and in momentum space."""
    sol = spec.scattering.solution
    N = spec.N
    if sol.potential is not None and sol.potential.kind != "hard_sphere" and sol.potential.V0 == 0:
        return PlancherelReference(0.0, 0.0)
    radial = -0.5 * N * N * spec.scattering.integral_vf_omega()
    continuum = -(N / (8.0 * math.pi**2)) * _cached(sol, ("continuum",), lambda: _continuum_integral(sol))
    return PlancherelReference(radial, continuum)


def homogeneous_energy_bound(spec: TorusSumSpec) -> tuple[float, float]:
    """Constant and ``N_+`` coefficient of the operator lower bound on the torus.

    Returns ``(lattice_sum + N(N-1)/2 int (2 f_N - f_N^2) V_N, mu - 16 pi a)``;
    the constant equals ``4 pi a N`` plus the Plancherel defect up to
    ``N``-independent terms.
    """
    lo, hi = mu_window(spec.a)
    if not lo < hi:
        raise DomainError(f"empty chemical-potential window for a = {spec.a} (needs a < pi/6)")
    if not lo < spec.mu < hi:
        raise DomainError(f"mu = {spec.mu} outside ({lo}, {hi})")
    N = spec.N
    sc = spec.scattering
    sol = sc.solution
    if sol.potential is not None and sol.potential.kind != "hard_sphere" and sol.potential.V0 == 0:
        pair = 0.0
    else:
        # int (2 f_N - f_N^2) V_N = int V_N f_N + int V_N f_N omega_N
        pair = sc.integral_vf() + sc.integral_vf_omega()
    const = bogoliubov_lattice_sum(spec) + 0.5 * N * (N - 1.0) * pair
    return const, spec.mu - 16.0 * math.pi * spec.a


# -- N sweeps --------------------------------------------------------------------------


@dataclass(frozen=True)
class DefectSweep:
    """Rows ``(N, sum, reference, defect, tail_estimate, mu)`` and a linear fit of the defect."""

    rows: list[dict[str, float]]
    slope: float
    slope_stderr: float

    CSV_COLUMNS = ("N", "sum", "reference", "defect", "tail_estimate", "mu")

    @property
    def defects(self) -> np.ndarray:
        return np.array([r["defect"] for r in self.rows])

    @property
    def slope_consistent_with_zero(self) -> bool:
        return abs(self.slope) <= 2.0 * self.slope_stderr

    @property
    def bounded(self) -> bool:
        d = np.abs(self.defects)
        return bool(d.max() < 10.0 * d[0])


def defect_sweep(
    solution: ScatteringSolution,
    Ns: Sequence[float] = DEFAULT_N_SWEEP,
    mu: float | None = None,
    cache: bool | Path | str = True,
) -> DefectSweep:
    """Lattice sum, Plancherel reference and their difference along an ``N`` sweep."""
    Ns = list(Ns)
    if not Ns:
        raise ValidationError("empty N sweep")
    table = ShellTable.for_cutoff(8.0 * math.pi * max(Ns), cache)
    rows = []
    for N in Ns:
        spec = TorusSumSpec.from_solution(solution, N, mu, shell_table=table)
        ls = lattice_sum_details(spec)
        ref = plancherel_reference(spec).value
        rows.append(
            {"N": float(N), "sum": ls.value, "reference": ref, "defect": ls.value - ref, "tail_estimate": ls.tail_estimate, "mu": spec.mu}
        )
        log.info("N=%s sum=%.12g reference=%.12g", N, ls.value, ref)
    if len(rows) >= 3:
        fit = linregress([r["N"] for r in rows], [r["defect"] for r in rows])
        slope, err = float(fit.slope), float(fit.stderr)
    else:
        slope, err = 0.0, math.inf
    return DefectSweep(rows, slope, err)
