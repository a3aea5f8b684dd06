"""Numerics for dilute trapped Bose gases in the Gross-Pitaevskii regime.

Modules
-------
scattering  zero-energy scattering solutions and scattering lengths
gp_solver   Gross-Pitaevskii ground states and spectral-gap certificates
quadratic   quadratic (Bogoliubov) Hamiltonians, exact energies and lower bounds
homogeneous lattice sums of the homogeneous torus problem
quasifree   quasi-free states, Wick energies and trial-state bounds
many_body   exact diagonalisation of small Bose gases
cli         command-line batch driver
"""

from .errors import (
    BoseGPError,
    ConvergenceError,
    DomainError,
    PreconditionError,
    ResolutionError,
    ResourceError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "BoseGPError",
    "ConvergenceError",
    "DomainError",
    "PreconditionError",
    "ResolutionError",
    "ResourceError",
    "ValidationError",
    "__version__",
]
