"""
esrcontrol Core

Spin Hamiltonians, control pulses and bases, and unitary propagation.
"""

from .errors import (
    ConfigError,
    ControlError,
    DimensionMismatchError,
    InvalidBasisError,
    RunAbortedError,
    TransferGridError,
)
from .propagator import (
    GradientVector,
    PropagationResult,
    analytic_gradient,
    ensemble_fidelity,
    propagate,
    state_fidelity,
)
from .pulses import (
    BasisKind,
    BasisSet,
    ControlPulse,
    PulseProgram,
    RotationModel,
    insert_rotation,
    make_canonical_basis,
    make_linear_basis,
    make_slepian_basis,
    perturb_along,
    slepian_half_bandwidth,
    update_pulse,
)
from .spin import (
    EnsembleSpec,
    Eigenstructure,
    PauliState,
    SpinSystem,
    build_hamiltonian,
    diagonalize,
    lorentzian_ensemble,
    stick_spectrum,
)

__all__ = [
    "ConfigError",
    "ControlError",
    "DimensionMismatchError",
    "InvalidBasisError",
    "RunAbortedError",
    "TransferGridError",
    "GradientVector",
    "PropagationResult",
    "analytic_gradient",
    "ensemble_fidelity",
    "propagate",
    "state_fidelity",
    "BasisKind",
    "BasisSet",
    "ControlPulse",
    "PulseProgram",
    "RotationModel",
    "insert_rotation",
    "make_canonical_basis",
    "make_linear_basis",
    "make_slepian_basis",
    "perturb_along",
    "slepian_half_bandwidth",
    "update_pulse",
    "EnsembleSpec",
    "Eigenstructure",
    "PauliState",
    "SpinSystem",
    "build_hamiltonian",
    "diagonalize",
    "lorentzian_ensemble",
    "stick_spectrum",
]
