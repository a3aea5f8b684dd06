"""Zero-energy two-body scattering for radial, compactly supported potentials.

Units follow the convention hbar = 2m = 1, so the two-body relative problem
reads ``(-2 Delta + V) f = 0`` with ``f -> 1`` at infinity.  Writing
``u(r) = r f(r)`` turns it into the radial ODE ``u'' = V u / 2`` with
``u(0) = 0``; outside the support ``u`` is affine and normalised to
``u(r) = r - a``, which defines the scattering length ``a``.

Fourier transforms use ``g^(p) = int g(x) exp(-i p.x) dx`` so for a radial
function ``g^(q) = (4 pi / q) int_0^inf g(r) r sin(q r) dr``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, ValidationError

__all__ = [
    "RadialPotential",
    "ScatteringSolution",
    "ScaledScattering",
    "solve_scattering",
    "scale",
    "fourier_profile",
    "read_tabulated_potential",
    "square_well_scattering_length",
]

POTENTIAL_KINDS = ("square_well", "gaussian_truncated", "tabulated", "hard_sphere")

# Number of wavenumbers transformed per vectorised block.
_FOURIER_CHUNK = 512


def square_well_scattering_length(V0: float, R0: float) -> float:
    """Closed-form scattering length of the square well ``V0 * 1(r <= R0)``.

    Matching ``u = sinh(kappa r) / (kappa cosh(kappa R0))`` to ``r - a`` at
    ``R0`` with ``kappa = sqrt(V0 / 2)`` gives ``a = R0 - tanh(kappa R0)/kappa``.
    """
    if V0 < 0 or R0 <= 0:
        raise DomainError("square well needs V0 >= 0 and R0 > 0")
    if V0 == 0:
        return 0.0
    kappa = math.sqrt(V0 / 2.0)
    return R0 - math.tanh(kappa * R0) / kappa


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """Non-negative radial interaction supported in ``r <= R0``.

    ``kind`` is one of ``square_well``, ``gaussian_truncated``, ``tabulated``
    or ``hard_sphere``.  For ``gaussian_truncated`` the profile is
    ``V0 exp(-r^2 / (2 width^2))`` cut at ``R0`` (``width`` defaults to
    ``R0 / 3``).  Tabulated potentials are linearly interpolated between the
    samples and vanish beyond the last sample radius, which becomes ``R0``.
    """

    kind: str
    V0: float = 0.0
    R0: float = 1.0
    samples: np.ndarray | None = None
    width: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in POTENTIAL_KINDS:
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.samples is None:
                raise ValidationError("tabulated potential needs samples")
            table = np.array(self.samples, dtype=float)
            if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
                raise ValidationError("samples must be an (n, 2) table of (r, V) with n >= 2")
            r, v = table[:, 0], table[:, 1]
            if r[0] != 0.0:
                raise ValidationError("tabulated radii must start at 0")
            if np.any(np.diff(r) <= 0):
                raise ValidationError("tabulated radii must be strictly increasing")
            if not np.all(np.isfinite(v)):
                raise ValidationError("tabulated potential values must be finite")
            if np.any(v < 0):
                raise ValidationError("negative potential sample")
            table.setflags(write=False)
            object.__setattr__(self, "samples", table)
            object.__setattr__(self, "R0", float(r[-1]))
            object.__setattr__(self, "V0", float(v.max()))
        else:
            if not (math.isfinite(self.R0) and self.R0 > 0):
                raise ValidationError("range R0 must be positive and finite")
            if self.kind != "hard_sphere":
                if not math.isfinite(self.V0) or self.V0 < 0:
                    raise ValidationError("strength V0 must be finite and non-negative")
        if self.kind == "gaussian_truncated":
            width = self.R0 / 3.0 if self.width is None else float(self.width)
            if width <= 0:
                raise ValidationError("gaussian width must be positive")
            object.__setattr__(self, "width", width)

    # -- constructors -------------------------------------------------
    @classmethod
    def square_well(cls, V0: float, R0: float) -> "RadialPotential":
        return cls("square_well", V0=float(V0), R0=float(R0))

    @classmethod
    def gaussian_truncated(cls, V0: float, R0: float, width: float | None = None) -> "RadialPotential":
        return cls("gaussian_truncated", V0=float(V0), R0=float(R0), width=width)

    @classmethod
    def hard_sphere(cls, R0: float) -> "RadialPotential":
        return cls("hard_sphere", V0=math.inf, R0=float(R0))

    @classmethod
    def tabulated(cls, r: Any, V: Any) -> "RadialPotential":
        return cls("tabulated", samples=np.column_stack([np.asarray(r, float), np.asarray(V, float)]))

    # -- evaluation ---------------------------------------------------
    def __call__(self, r: Any) -> np.ndarray:
        """Evaluate ``V(r)``; the support is closed, ``V(R0)`` uses the inner value."""
        r = np.abs(np.asarray(r, dtype=float))
        inside = r <= self.R0
        if self.kind == "square_well":
            return np.where(inside, self.V0, 0.0)
        if self.kind == "gaussian_truncated":
            return np.where(inside, self.V0 * np.exp(-0.5 * (r / self.width) ** 2), 0.0)
        if self.kind == "hard_sphere":
            return np.where(r < self.R0, np.inf, 0.0)
        table = self.samples
        return np.where(inside, np.interp(r, table[:, 0], table[:, 1]), 0.0)

    def scaled(self, N: float) -> "RadialPotential":
        """The potential ``N^2 V(N r)`` (range ``R0 / N``)."""
        if N <= 0:
            raise DomainError("scaling factor must be positive")
        if self.kind == "tabulated":
            return RadialPotential.tabulated(self.samples[:, 0] / N, self.samples[:, 1] * N**2)
        if self.kind == "hard_sphere":
            return RadialPotential.hard_sphere(self.R0 / N)
        width = None if self.width is None else self.width / N
        return RadialPotential(self.kind, V0=self.V0 * N**2, R0=self.R0 / N, width=width)

    def with_strength(self, factor: float) -> "RadialPotential":
        """The potential ``factor * V``."""
        if factor < 0:
            raise DomainError("coupling factor must be non-negative")
        if self.kind == "hard_sphere":
            raise DomainError("hard sphere has no coupling constant")
        if self.kind == "tabulated":
            return RadialPotential.tabulated(self.samples[:, 0], self.samples[:, 1] * factor)
        return RadialPotential(self.kind, V0=self.V0 * factor, R0=self.R0, width=self.width)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "R0": self.R0}
        if self.kind == "tabulated":
            out["samples"] = self.samples.tolist()
        elif self.kind != "hard_sphere":
            out["V0"] = self.V0
        if self.kind == "gaussian_truncated":
            out["width"] = self.width
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RadialPotential":
        kind = data.get("kind")
        if kind == "tabulated":
            if "samples" in data:
                return cls("tabulated", samples=np.asarray(data["samples"], float))
            if "path" in data:
                return read_tabulated_potential(data["path"])
            raise ValidationError("tabulated potential needs 'samples' or 'path'")
        if kind == "hard_sphere":
            return cls.hard_sphere(data.get("R0", 1.0))
        if kind not in POTENTIAL_KINDS:
            raise ValidationError(f"unknown potential kind {kind!r}")
        return cls(kind, V0=float(data.get("V0", 0.0)), R0=float(data.get("R0", 1.0)), width=data.get("width"))


def read_tabulated_potential(path: str | Path) -> RadialPotential:
    """Read a two-column ``r V`` text table; ``#`` starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"potential table {path} does not exist")
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.shape[1] != 2:
        raise ValidationError(f"{path}: expected two columns, found {table.shape[1]}")
    return RadialPotential("tabulated", samples=table)


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    """Radial zero-energy scattering solution on a uniform grid.

    ``u`` and ``du`` hold ``u(r) = r f(r)`` and its derivative on ``r_grid``;
    the grid contains ``match_radius`` (= ``R0``) as a node, beyond which
    ``u = r - a``.
    """

    r_grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    a: float
    a_quadrature: float
    match_radius: float
    potential: RadialPotential | None = None
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for name in ("r_grid", "u", "du"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.r_grid) <= 0):
            raise ValidationError("r_grid must be strictly increasing")
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.r_grid, self.u, self.du))

    @property
    def n_inside(self) -> int:
        """Index of the node at ``match_radius``."""
        return int(np.argmin(np.abs(self.r_grid - self.match_radius)))

    def u_of(self, r: Any) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        rmax = self.r_grid[-1]
        return np.where(r <= rmax, self._spline(np.minimum(r, rmax)), r - self.a)

    def f(self, r: Any) -> np.ndarray:
        """Scattering profile ``f(r)``, continuous at ``r = 0``."""
        r = np.abs(np.asarray(r, dtype=float))
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.u_of(safe) / safe, self.du[0])

    def omega(self, r: Any) -> np.ndarray:
        """Correlation hole ``omega = 1 - f``."""
        return 1.0 - self.f(r)

    def omega_bound_constant(self) -> float:
        """Smallest ``C`` with ``omega(r) <= C / (r + 1)`` on the grid and beyond.

        Beyond the grid ``omega = a / r`` so ``omega (r + 1)`` decreases
        towards ``a``; the grid maximum therefore covers all radii.
        """
        w = self.omega(self.r_grid)
        return float(max(np.max(w * (self.r_grid + 1.0)), self.a))

    # -- quadratures on the interior grid -----------------------------
    def _inside(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n_inside
        r = self.r_grid[: n + 1]
        return r, self.u[: n + 1], self.potential(r) if self.potential is not None else np.zeros_like(r)

    def radial_transform(self, weight: np.ndarray, q: Any) -> np.ndarray:
        """``(4 pi / q) int_0^R0 weight(s) sin(q s) ds`` for ``weight = g(s) s`` on interior nodes."""
        r = self.r_grid[: self.n_inside + 1]
        q = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.empty_like(q)
        for start in range(0, q.size, _FOURIER_CHUNK):
            qs = q[start : start + _FOURIER_CHUNK]
            small = qs < 1e-12
            qsafe = np.where(small, 1.0, qs)
            # sin(q s)/q -> s as q -> 0
            kern = np.where(small[:, None], r[None, :], np.sin(np.outer(qsafe, r)) / qsafe[:, None])
            out[start : start + qs.size] = 4.0 * np.pi * simpson(kern * weight[None, :], x=r, axis=1)
        return out

    def vf_transform(self, q: Any) -> np.ndarray:
        """``(V f)^(q)`` at scale ``N = 1``."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if self.potential is not None and self.potential.kind == "hard_sphere":
            # V f is the surface measure with total mass 8 pi a
            qr = q * self.a
            return 8.0 * np.pi * self.a * np.where(qr > 1e-12, np.sin(qr) / np.where(qr > 0, qr, 1.0), 1.0)
        r, u, v = self._inside()
        return self.radial_transform(v * u, q)

    def omega_transform(self, q: Any) -> np.ndarray:
        """``omega^(q)`` for ``q > 0`` from the interior profile plus the exact ``a / r`` tail."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if np.any(q <= 0):
            raise DomainError("omega^ is singular at q = 0")
        r = self.r_grid[: self.n_inside + 1]
        inner = self.radial_transform(r - self.u[: self.n_inside + 1], q)
        return inner + 4.0 * np.pi * self.a * np.cos(q * self.match_radius) / q**2

    def omega_transform_truncated(self, q: Any, cut: float) -> np.ndarray:
        """Transform of ``omega(r) 1(r < cut)`` for ``cut >= R0``; finite at ``q = 0``."""
        if cut < self.match_radius:
            raise DomainError("truncation radius must not be inside the potential range")
        q = np.atleast_1d(np.asarray(q, dtype=float))
        r = self.r_grid[: self.n_inside + 1]
        inner = self.radial_transform(r - self.u[: self.n_inside + 1], q)
        R0 = self.match_radius
        # 4 pi a (cos(q R0) - cos(q cut)) / q^2 without cancellation
        small = q < 1e-8
        qs = np.where(small, 1.0, q)
        tail = 8.0 * np.pi * self.a * np.sin(0.5 * qs * (cut + R0)) * np.sin(0.5 * qs * (cut - R0)) / qs**2
        tail = np.where(small, 2.0 * np.pi * self.a * (cut * cut - R0 * R0), tail)
        return inner + tail

    def potential_transform(self, q: Any) -> np.ndarray:
        """``V^(q)`` (not defined for the hard sphere)."""
        self._require_soft()
        r, _, v = self._inside()
        return self.radial_transform(v * r, q)

    def vf_omega_transform(self, q: Any) -> np.ndarray:
        """``(V f omega)^(q)``."""
        self._require_soft()
        r, u, v = self._inside()
        return self.radial_transform(v * u * self._omega_inside(), q)

    def integral_vf(self) -> float:
        """``int V f d^3x`` (equals ``8 pi a`` up to quadrature error)."""
        if self.potential is not None and self.potential.kind == "hard_sphere":
            return 8.0 * np.pi * self.a_quadrature
        r, u, v = self._inside()
        return float(4.0 * np.pi * simpson(v * u * r, x=r))

    def integral_vf_omega(self) -> float:
        """``int V f omega d^3x``."""
        self._require_soft()
        r, u, v = self._inside()
        return float(4.0 * np.pi * simpson(v * u * self._omega_inside() * r, x=r))

    def integral_v(self) -> float:
        """``int V d^3x``."""
        self._require_soft()
        r, _, v = self._inside()
        return float(4.0 * np.pi * simpson(v * r * r, x=r))

    def _omega_inside(self) -> np.ndarray:
        r = self.r_grid[: self.n_inside + 1]
        return np.where(r > 0, 1.0 - self.u[: r.size] / np.where(r > 0, r, 1.0), 1.0 - self.du[0])

    def _require_soft(self) -> None:
        if self.potential is None:
            raise ValidationError("solution carries no potential")
        if self.potential.kind == "hard_sphere":
            raise DomainError("operation needs a finite potential, not a hard sphere")

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "r_grid": self.r_grid.tolist(),
            "u": self.u.tolist(),
            "du": self.du.tolist(),
            "a": self.a,
            "a_quadrature": self.a_quadrature,
            "match_radius": self.match_radius,
            "potential": None if self.potential is None else self.potential.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScatteringSolution":
        pot = data.get("potential")
        return cls(
            r_grid=np.asarray(data["r_grid"], float),
            u=np.asarray(data["u"], float),
            du=np.asarray(data["du"], float),
            a=float(data["a"]),
            a_quadrature=float(data["a_quadrature"]),
            match_radius=float(data["match_radius"]),
            potential=None if pot is None else RadialPotential.from_dict(pot),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScatteringSolution":
        return cls.from_dict(json.loads(text))


def _grid(R0: float, r_max: float, n_points: int) -> tuple[np.ndarray, int]:
    h_target = r_max / (n_points - 1)
    n_in = max(2, 2 * math.ceil(R0 / h_target / 2.0))
    h = R0 / n_in
    n_total = math.ceil(r_max / h - 1e-9) + 1
    return h * np.arange(n_total), n_in


def _rk4_interior(potential: RadialPotential, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``u'' = V u / 2`` from ``u(0) = 0, u'(0) = 1`` over the nodes ``r``."""
    h = r[1] - r[0]
    half = 0.5 * potential(r[:-1] + 0.5 * h)
    left = 0.5 * potential(r[:-1])
    right = 0.5 * potential(r[1:])
    u = np.empty_like(r)
    du = np.empty_like(r)
    u[0], du[0] = 0.0, 1.0
    y0, y1 = 0.0, 1.0
    for i in range(r.size - 1):
        k1u, k1v = y1, left[i] * y0
        k2u, k2v = y1 + 0.5 * h * k1v, half[i] * (y0 + 0.5 * h * k1u)
        k3u, k3v = y1 + 0.5 * h * k2v, half[i] * (y0 + 0.5 * h * k2u)
        k4u, k4v = y1 + h * k3v, right[i] * (y0 + h * k3u)
        y0 = y0 + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        y1 = y1 + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        u[i + 1], du[i + 1] = y0, y1
    return u, du


def solve_scattering(
    potential: RadialPotential, r_max: float | None = None, n_points: int = 4001
) -> ScatteringSolution:
    """Solve the zero-energy scattering problem for ``potential``.

    The interior ``[0, R0]`` is integrated with classical RK4 on a uniform
    grid that has ``R0`` as a node; outside the support ``u`` is continued
    affinely and ``a`` is read off a least-squares line fit of the tail.
    ``a_quadrature`` is the independent value ``(1/2) int_0^R0 V u r dr``
    (for the hard sphere, the Dirichlet energy ``(1/8pi) int 2|grad f|^2``).
    """
    if not isinstance(potential, RadialPotential):
        raise ValidationError("potential must be a RadialPotential")
    R0 = potential.R0
    if r_max is None:
        r_max = 4.0 * R0
    if not r_max > R0:
        raise DomainError(f"r_max = {r_max} does not exceed the support radius R0 = {R0}")
    if n_points < 100:
        raise ValidationError("n_points must be at least 100")

    r, n_in = _grid(R0, float(r_max), int(n_points))
    inner = r[: n_in + 1]
    if potential.kind == "hard_sphere":
        u_in = np.zeros_like(inner)
        du_in = np.zeros_like(inner)
        du_in[-1] = 1.0
    else:
        u_in, du_in = _rk4_interior(potential, inner)

    outer = r[n_in:]
    u_out = u_in[-1] + du_in[-1] * (outer - R0)
    slope, intercept = np.polyfit(outer - R0, u_out, 1)
    if slope <= 0:
        raise DomainError("non-positive tail slope; potential is not repulsive")
    a = R0 - intercept / slope

    u = np.concatenate([u_in, u_out[1:]]) / slope
    du = np.concatenate([du_in, np.full(outer.size - 1, du_in[-1])]) / slope
    if potential.kind == "hard_sphere":
        du[:n_in] = 0.0

    if potential.kind == "hard_sphere":
        ro, uo, duo = r[n_in:], u[n_in:], du[n_in:]
        integrand = (duo * ro - uo) ** 2 / ro**2
        a_quad = float(simpson(integrand, x=ro)) + a * a / ro[-1]
    else:
        v = potential(inner)
        a_quad = float(0.5 * simpson(v * u[: n_in + 1] * inner, x=inner))

    return ScatteringSolution(
        r_grid=r, u=u, du=du, a=float(a), a_quadrature=a_quad, match_radius=float(R0), potential=potential
    )


@dataclass(frozen=True, eq=False)
class ScaledScattering:
    """Scattering data at scale ``N``: ``f_N(x) = f(N|x|)``, ``V_N = N^2 V(N .)``."""

    solution: ScatteringSolution
    N: float

    def __post_init__(self) -> None:
        if not self.N >= 1:
            raise DomainError("scale N must be at least 1")

    @property
    def a(self) -> float:
        """Unscaled scattering length ``a`` (``V_N`` has scattering length ``a / N``)."""
        return self.solution.a

    @property
    def support_radius(self) -> float:
        return self.solution.match_radius / self.N

    def f(self, r: Any) -> np.ndarray:
        return self.solution.f(self.N * np.asarray(r, float))

    def omega(self, r: Any) -> np.ndarray:
        return self.solution.omega(self.N * np.asarray(r, float))

    def V(self, r: Any) -> np.ndarray:
        if self.solution.potential is None:
            raise ValidationError("solution carries no potential")
        return self.N**2 * self.solution.potential(self.N * np.asarray(r, float))

    def integral_vf(self) -> float:
        """``int V_N f_N d^3x`` by Simpson quadrature on the scaled radial grid."""
        sol = self.solution
        if sol.potential is not None and sol.potential.kind == "hard_sphere":
            return sol.integral_vf() / self.N
        n = sol.n_inside
        r = sol.r_grid[: n + 1] / self.N
        g = self.V(r) * np.where(r > 0, sol.u[: n + 1] / np.where(r > 0, self.N * r, 1.0), sol.du[0])
        return float(4.0 * np.pi * simpson(g * r * r, x=r))

    def integral_vf_omega(self) -> float:
        """``int V_N f_N omega_N d^3x = N^{-1} int V f omega``."""
        return self.solution.integral_vf_omega() / self.N

    def fourier(self, p: Any) -> np.ndarray:
        """``(V_N f_N)^(p) = N^{-1} (V f)^(p / N)``."""
        return self.solution.vf_transform(np.asarray(p, float) / self.N) / self.N

    def omega_fourier(self, p: Any) -> np.ndarray:
        """``omega_N^(p) = N^{-3} omega^(p / N)`` for ``p > 0``."""
        return self.solution.omega_transform(np.asarray(p, float) / self.N) / self.N**3

    def potential_fourier(self, p: Any) -> np.ndarray:
        """``V_N^(p) = N^{-1} V^(p / N)``."""
        return self.solution.potential_transform(np.asarray(p, float) / self.N) / self.N

    def vf_omega_fourier(self, p: Any) -> np.ndarray:
        """``(V_N f_N omega_N)^(p) = N^{-1} (V f omega)^(p / N)``."""
        return self.solution.vf_omega_transform(np.asarray(p, float) / self.N) / self.N


def scale(solution: ScatteringSolution, N: float) -> ScaledScattering:
    """Scattering data for ``V_N(x) = N^2 V(N x)``."""
    if N == 0:
        raise DomainError("N must be non-zero")
    return ScaledScattering(solution, float(N))


def fourier_profile(solution: ScatteringSolution | ScaledScattering, p: Any) -> np.ndarray | float:
    """Radial Fourier transform ``(V_N f_N)^(p)``; ``p = 0`` gives ``int V_N f_N``."""
    if isinstance(solution, ScatteringSolution):
        solution = scale(solution, 1)
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0):
        raise DomainError("wavenumber must be non-negative")
    out = solution.fourier(np.atleast_1d(p_arr))
    return float(out[0]) if p_arr.ndim == 0 else out
