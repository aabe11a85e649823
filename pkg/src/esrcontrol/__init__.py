"""
esrcontrol - closed-loop and open-loop optimal control of an
electron-nuclear spin pair on a simulated pulsed ESR spectrometer.
"""

__version__ = "0.1.0"

from .app import ExperimentConfig, load_config, run_optimization
from .core import ControlPulse, SpinSystem
from .spectrometer import VirtualSpectrometer

__all__ = [
    "ExperimentConfig",
    "load_config",
    "run_optimization",
    "ControlPulse",
    "SpinSystem",
    "VirtualSpectrometer",
]
