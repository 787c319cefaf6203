"""Numerical companion to the variational upper bound for the dilute 3D Hubbard model.

Modules
-------
lattice_scattering
    Lattice Green's function, scattering length and zero-energy solution.
free_fermi
    Dirichlet/periodic single-particle spectra, Slater orbitals and densities.
determinantal
    Weighted Slater norms, k-particle densities and the overlap-matrix lemmas.
trial_state
    Jastrow factors, the trial wavefunction and the xi sum.
exact_diag
    Sparse exact diagonalisation of small boxes.
variational
    Rayleigh quotient of the trial state (exhaustive and Monte Carlo).
bound_assembly
    Assembled energy bound, constants calibration and polarization curve.

Submodules are not imported here so that ``import hubbardlab`` stays cheap
and the command-line thread setting can take effect before numpy loads.
"""
from .errors import (
    CapExceededError,
    ConstructionError,
    ConvergenceError,
    DomainError,
    HubbardLabError,
    InvariantError,
    MixingError,
    PreconditionError,
    RegimeError,
    SingularMatrixError,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "HubbardLabError",
    "DomainError",
    "PreconditionError",
    "ConvergenceError",
    "InvariantError",
    "CapExceededError",
    "SingularMatrixError",
    "ConstructionError",
    "RegimeError",
    "MixingError",
]
