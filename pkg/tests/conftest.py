"""Shared fixtures: spin systems, transfer functions and small spectrometers."""

import pytest

from esrcontrol.core.spin import EnsembleSpec, SpinSystem
from esrcontrol.persistence import get_memory_store
from esrcontrol.spectrometer.readout import MeasurementModel, VirtualSpectrometer
from esrcontrol.spectrometer.transfer import TransferFunction, synthesize_transfer


@pytest.fixture
def radical():
    """The reference radical: A=66, B=26, omega_I=-14.5 MHz."""
    return SpinSystem()


@pytest.fixture
def no_pseudosecular():
    """Hyperfine without the B term; eigenbasis equals the product basis."""
    return SpinSystem(A=72.0, B=0.0)


@pytest.fixture
def bare_electron():
    """H0 = 0: no hyperfine, no nuclear Zeeman, on resonance."""
    return SpinSystem(A=0.0, B=0.0, omega_I=0.0)


@pytest.fixture
def flat():
    return TransferFunction.flat()


@pytest.fixture
def t130():
    return synthesize_transfer(130.0)


@pytest.fixture
def t70():
    return synthesize_transfer(70.0)


@pytest.fixture
def single_member():
    return EnsembleSpec(n_points=1)


@pytest.fixture
def small_ensemble():
    return EnsembleSpec(fwhm=10.0, n_points=3)


def make_spectrometer(system=None, ensemble=None, transfer=None, sigma=0.0, seed=0):
    return VirtualSpectrometer(
        system=system or SpinSystem(),
        ensemble=ensemble or EnsembleSpec(n_points=1),
        transfer=transfer or TransferFunction.flat(),
        measurement=MeasurementModel(sigma=sigma, seed=seed),
    )


@pytest.fixture
def spectrometer():
    """Factory for spectrometers with a single member and no noise by default."""
    return make_spectrometer


@pytest.fixture
def quiet(radical, small_ensemble):
    """Noiseless three-member spectrometer with a flat response."""
    return make_spectrometer(radical, small_ensemble)


@pytest.fixture
def noisy(radical, small_ensemble):
    return make_spectrometer(radical, small_ensemble, sigma=0.03, seed=11)


@pytest.fixture(autouse=True)
def clean_memory_store():
    store = get_memory_store()
    store.clear()
    yield store
    store.clear()


TINY_CONFIG = """\
seed = 5
trials = 2
gate = "gate2"

[system]
A = 66.0
B = 26.0
omega_I = -14.5

[ensemble]
n_points = 1

[pulse]
M = 4
dt = 2.0
amplitude = 5.0

[measurement]
sigma = 0.03

[optimizer]
method = "hqca"
max_iters = 2
stop_mode = "fixed"
repeats = 3
"""


@pytest.fixture
def tiny_config_text():
    return TINY_CONFIG


@pytest.fixture
def tiny_config_path(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_CONFIG)
    return path
