import numpy as np
import pytest

from esrcontrol.app.gradcheck import CheckSettings, central_difference, random_pulses, run_gradcheck
from esrcontrol.core.propagator import analytic_gradient
from esrcontrol.spectrometer.readout import GATES

SMALL = CheckSettings(n_pulses=2, M=8)


def test_random_pulses_are_reproducible():
    a = random_pulses(SMALL)
    b = random_pulses(SMALL)
    assert len(a) == 2
    assert all(p.M == 8 for p in a)
    assert all(np.array_equal(x.as_array(), y.as_array()) for x, y in zip(a, b))
    assert np.max(np.abs(a[0].as_array())) <= SMALL.amplitude


def test_central_difference_tracks_exact_gradient(quiet):
    p = random_pulses(SMALL)[0]
    gate = GATES["gate2"]
    exact = analytic_gradient(p, quiet.members, gate.initial, gate.target, frame="transition")
    approx = central_difference(p, quiet.members, 1e-3)
    assert exact.cosine(approx) > 0.99999


def test_all_checks_pass_on_noiseless_flat_spectrometer(quiet):
    results = run_gradcheck(quiet, SMALL)
    assert [r.name for r in results] == ["oracle", "consistency", "sin_theta", "chain_rule"]
    assert all(r.passed for r in results), [(r.name, r.measured) for r in results]
    assert not any(r.informational for r in results)
    sin_theta = next(r for r in results if r.name == "sin_theta")
    assert sin_theta.measured == pytest.approx(np.sin(np.pi / 4), rel=1e-6)


def test_noise_makes_consistency_informational(noisy):
    results = {r.name: r for r in run_gradcheck(noisy, SMALL)}
    assert results["consistency"].informational
    assert results["consistency"].passed
    assert results["chain_rule"].passed


def test_settings_reject_unknown_fields():
    with pytest.raises(ValueError):
        CheckSettings(pulses=3)
