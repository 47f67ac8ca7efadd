"""Reduced Dirac-Fock atoms, the relativistic Scott correction and Dirac-Coulomb gap certificates."""

__version__ = "0.1.0"

from .core import (NU0_LOWER_BOUND, NU_SAFETY_LIMIT, ArtifactError, CertificationError, ChannelIndex,
                   CouplingParams, DomainError, InputError, NonConvergenceError, NumericalError,
                   RadialDensity, RadialGrid, coulomb_energy, coulomb_potential, grad_potential_norms)

__all__ = [
    "__version__", "NU0_LOWER_BOUND", "NU_SAFETY_LIMIT", "ArtifactError", "CertificationError",
    "ChannelIndex", "CouplingParams", "DomainError", "InputError", "NonConvergenceError",
    "NumericalError", "RadialDensity", "RadialGrid", "coulomb_energy", "coulomb_potential",
    "grad_potential_norms",
]
