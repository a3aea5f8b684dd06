"""Occupation-number bases and vectorised bosonic operator application.

A basis is a set of occupation vectors stored as an integer array of shape
``(dim, modes)`` in lexicographic order.  Operator monomials such as
``a*_i a*_j a_k a_l`` are applied to every basis state at once; states that
leave the basis (for truncated Fock spaces) are dropped, which realises the
compression ``P A P`` onto the span of the basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ResourceError, ValidationError

__all__ = ["OccupationBasis", "fixed_number_states", "truncated_states", "lowering_matrix", "MonomialTerm"]


def fixed_number_states(modes: int, particles: int) -> np.ndarray:
    """All occupation vectors with ``sum n_i = particles``, lexicographically descending in ``n_1``.

    The order lists ``(N, 0, ..., 0)`` first, so the condensate state of
    mode 0 has index 0.
    """
    if modes < 1 or particles < 0:
        raise ValidationError("need at least one mode and a non-negative particle number")
    rows = []
    for combo in combinations_with_replacement(range(modes), particles):
        occ = np.bincount(np.asarray(combo, dtype=int), minlength=modes) if particles else np.zeros(modes, int)
        rows.append(occ)
    states = np.array(rows, dtype=np.int64).reshape(-1, modes)
    order = np.lexsort(states.T[::-1])[::-1]
    return states[order]


def truncated_states(modes: int, max_total: int, parity: int | None = None) -> np.ndarray:
    """Occupation vectors with total ``<= max_total`` (optionally fixed parity), by total then lexicographic."""
    blocks = [
        fixed_number_states(modes, n) for n in range(max_total + 1) if parity is None or n % 2 == parity % 2
    ]
    return np.concatenate(blocks, axis=0) if blocks else np.zeros((0, modes), dtype=np.int64)


# A monomial is a coefficient times a product of ladder operators, written
# left to right as (mode, is_creation) pairs; it acts on kets right to left.
MonomialTerm = tuple[complex | float, Sequence[tuple[int, bool]]]


@dataclass(frozen=True, eq=False)
class OccupationBasis:
    """Indexed set of occupation vectors."""

    states: np.ndarray
    _codes: np.ndarray = field(init=False, repr=False)
    _order: np.ndarray = field(init=False, repr=False)
    _radix: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        states = np.ascontiguousarray(self.states, dtype=np.int64)
        if states.ndim != 2:
            raise ValidationError("states must be a 2-D array")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        radix = int(states.max(initial=0)) + 2
        object.__setattr__(self, "_radix", radix)
        codes = self._encode(states)
        order = np.argsort(codes, kind="stable")
        if np.any(np.diff(codes[order]) == 0):
            raise ValidationError("duplicate occupation vectors")
        object.__setattr__(self, "_codes", codes[order])
        object.__setattr__(self, "_order", order)

    @classmethod
    def fixed(cls, modes: int, particles: int, max_dim: int | None = None) -> "OccupationBasis":
        dim = comb(particles + modes - 1, particles)
        if max_dim is not None and dim > max_dim:
            raise ResourceError(f"sector dimension {dim} exceeds limit {max_dim}", dimension=dim)
        return cls(fixed_number_states(modes, particles))

    @classmethod
    def truncated(cls, modes: int, max_total: int, parity: int | None = None, max_dim: int | None = None) -> "OccupationBasis":
        total = comb(max_total + modes, modes)
        dim = total if parity is None else (total + 1) // 2
        if max_dim is not None and dim > max_dim:
            raise ResourceError(f"truncated Fock dimension {dim} exceeds limit {max_dim}", dimension=dim)
        return cls(truncated_states(modes, max_total, parity))

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def modes(self) -> int:
        return self.states.shape[1]

    def _encode(self, states: np.ndarray) -> np.ndarray:
        weights = self._radix ** np.arange(states.shape[1], dtype=np.int64)
        if states.shape[1] * np.log(self._radix) > 62 * np.log(2):
            raise ResourceError("occupation vectors too long to encode", dimension=states.shape[0])
        return states @ weights

    def index(self, states: np.ndarray) -> np.ndarray:
        """Indices of ``states`` in the basis, ``-1`` where absent."""
        states = np.atleast_2d(states)
        out = np.full(states.shape[0], -1, dtype=np.int64)
        ok = np.all((states >= 0) & (states < self._radix - 1), axis=1)
        if not np.any(ok):
            return out
        codes = self._encode(states[ok])
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, self._codes.size - 1)
        hit = self._codes[pos] == codes
        found = np.where(hit, self._order[pos], -1)
        out[ok] = found
        return out

    def apply_monomial(self, ops: Sequence[tuple[int, bool]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Apply a ladder-operator product to every basis state.

        Returns ``(rows, cols, amps)`` such that the product maps basis state
        ``cols[k]`` to ``amps[k]`` times basis state ``rows[k]``.
        """
        cur = self.states.copy()
        amp = np.ones(self.dim)
        alive = np.ones(self.dim, dtype=bool)
        for mode, creation in reversed(list(ops)):
            n = cur[:, mode]
            if creation:
                amp *= np.sqrt(np.maximum(n + 1.0, 0.0))
                cur[:, mode] = n + 1
            else:
                alive &= n > 0
                amp *= np.sqrt(np.maximum(n, 0).astype(float))
                cur[:, mode] = n - 1
        cols = np.flatnonzero(alive)
        rows = self.index(cur[cols])
        keep = rows >= 0
        return rows[keep], cols[keep], amp[cols][keep]

    def operator(self, terms: Iterable[MonomialTerm]) -> sp.csr_matrix:
        """Sparse matrix of a linear combination of monomials on this basis."""
        rows, cols, vals = [], [], []
        for coeff, ops in terms:
            if coeff == 0:
                continue
            r, c, amp = self.apply_monomial(ops)
            rows.append(r)
            cols.append(c)
            vals.append(coeff * amp)
        if not rows:
            return sp.csr_matrix((self.dim, self.dim))
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.dim, self.dim)
        )
        return mat.tocsr()

    def number_operator(self, weights: np.ndarray | None = None) -> np.ndarray:
        """Diagonal of ``sum_i w_i n_i``."""
        w = np.ones(self.modes) if weights is None else np.asarray(weights, float)
        return self.states @ w


def lowering_matrix(source: OccupationBasis, target: OccupationBasis, mode: int) -> sp.csr_matrix:
    """Matrix of ``a_mode`` from the span of ``source`` into the span of ``target``."""
    if source.modes != target.modes:
        raise ValidationError("bases have different numbers of modes")
    n = source.states[:, mode]
    cols = np.flatnonzero(n > 0)
    lowered = source.states[cols].copy()
    lowered[:, mode] -= 1
    rows = target.index(lowered)
    keep = rows >= 0
    vals = np.sqrt(n[cols][keep].astype(float))
    return sp.csr_matrix((vals, (rows[keep], cols[keep])), shape=(target.dim, source.dim))
