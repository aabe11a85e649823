"""
esrcontrol Spectrometer

Virtual hardware loop: transfer-function distortion, transition-selective
noisy readout with thermal-reference normalization, and experiment budgets.
"""

from .budget import ExperimentBudget, charge_budget, charge_experiments
from .readout import (
    GATES,
    GateSpec,
    MeasurementModel,
    ReadoutKind,
    SignalPair,
    VirtualSpectrometer,
    combine_signals,
    control_quality,
    get_gate,
    measure_signals,
    propagate_error,
)
from .transfer import TransferFunction, distort, distort_adjoint, synthesize_transfer

__all__ = [
    "ExperimentBudget",
    "charge_budget",
    "charge_experiments",
    "GATES",
    "GateSpec",
    "MeasurementModel",
    "ReadoutKind",
    "SignalPair",
    "VirtualSpectrometer",
    "combine_signals",
    "control_quality",
    "get_gate",
    "measure_signals",
    "propagate_error",
    "TransferFunction",
    "distort",
    "distort_adjoint",
    "synthesize_transfer",
]
