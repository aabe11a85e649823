import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from esrcontrol.core.errors import TransferGridError
from esrcontrol.core.pulses import ControlPulse
from esrcontrol.spectrometer.transfer import (
    TransferFunction,
    distort,
    distort_adjoint,
    synthesize_transfer,
)


def test_flat_transfer_leaves_pulse_unchanged(flat):
    p = ControlPulse(ux=[1.0, -2.0, 3.0], uy=[0.5, 0.0, 0.25], max_amp=5.0)
    q = distort(p, flat)
    assert flat.is_identity
    assert_array_equal(q.ux, p.ux)
    assert_array_equal(q.uy, p.uy)


def test_pure_delay_shifts_by_whole_segments():
    dt, shift = 2.0, 3
    tau_us = shift * dt * 1e-3
    grid = np.arange(-1000, 1001) * 0.5
    delay = TransferFunction(freq_grid=grid, response=np.exp(-2j * np.pi * grid * tau_us))
    ux = np.zeros(32)
    uy = np.zeros(32)
    ux[10:14] = [1.0, 3.0, -2.0, 0.5]
    uy[12] = 4.0
    q = distort(ControlPulse(dt=dt, ux=ux, uy=uy), delay)
    assert_allclose(q.ux, np.roll(ux, shift), atol=2e-3)
    assert_allclose(q.uy, np.roll(uy, shift), atol=2e-3)


def test_narrow_response_broadens_a_spike(t70):
    ux = np.zeros(40)
    ux[10] = 10.0
    q = distort(ControlPulse(ux=ux, uy=np.zeros(40)), t70)
    assert abs(q.ux[10]) < 10.0
    assert np.max(np.abs(q.ux[11:])) > 0.1


@pytest.mark.parametrize("kind", ["measured_like", "lorentzian"])
def test_synthesized_response_half_width(kind):
    T = synthesize_transfer(130.0, kind)
    amp = np.abs(T.evaluate(np.array([0.0, -65.0, 65.0])))
    assert amp[0] == pytest.approx(1.0)
    assert amp[1] == pytest.approx(0.5, abs=0.01)
    assert amp[2] == pytest.approx(0.5, abs=0.01)


def test_narrow_response_attenuates_more(t70, t130):
    f = t70.freq_grid
    outside = np.abs(f) >= 20.0
    assert np.all(np.abs(t70.response[outside]) <= np.abs(t130.response[outside]))


def test_measured_like_response_is_asymmetric(t130):
    r = np.abs(t130.evaluate(np.array([30.0, -30.0])))
    assert r[0] != pytest.approx(r[1], abs=1e-3)


def test_evaluate_is_zero_outside_grid(t130):
    assert_array_equal(t130.evaluate(np.array([-600.0, 600.0])), 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_adjoint_is_the_transpose(t130, seed):
    """<distort(p), g> == <p, distort_adjoint(g)> for the real inner product."""
    rng = np.random.default_rng(seed)
    M = 24
    p = ControlPulse(ux=rng.normal(size=M), uy=rng.normal(size=M))
    g = rng.normal(size=2 * M)
    lhs = distort(p, t130).as_array() @ g
    rhs = p.as_array() @ distort_adjoint(g, t130, p.dt).as_array()
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_adjoint_of_flat_is_identity(flat):
    g = np.arange(6, dtype=float)
    assert_array_equal(distort_adjoint(g, flat, 2.0).as_array(), g)


def test_grid_too_narrow_is_rejected():
    grid = np.linspace(-50.0, 50.0, 201)
    narrow = TransferFunction(freq_grid=grid, response=np.ones(grid.size) * 0.9)
    rng = np.random.default_rng(0)
    p = ControlPulse(ux=rng.normal(size=16), uy=rng.normal(size=16))
    with pytest.raises(TransferGridError):
        distort(p, narrow)


@pytest.mark.parametrize("grid", [[0.0, 1.0, 0.5], [0.0, 1.0, 3.0], [1.0]])
def test_grid_validation(grid):
    with pytest.raises(ValueError):
        TransferFunction(freq_grid=grid, response=np.ones(len(grid)))


def test_csv_round_trip_keeps_full_precision(tmp_path, t130):
    path = t130.to_csv(tmp_path / "t130.csv")
    loaded = TransferFunction.from_csv(path, fwhm_label=130.0)
    assert_array_equal(loaded.freq_grid, t130.freq_grid)
    assert_array_equal(loaded.response, t130.response)
    assert loaded.kind == "csv"


@pytest.mark.parametrize("seed", range(3))
def test_distort_is_linear(t130, seed):
    rng = np.random.default_rng(seed)
    p = ControlPulse(ux=rng.normal(0, 5, 40), uy=rng.normal(0, 5, 40))
    q = ControlPulse(ux=rng.normal(0, 5, 40), uy=rng.normal(0, 5, 40))
    a, b = 0.7, -1.3
    mixed = ControlPulse.from_array(a * p.as_array() + b * q.as_array(), p.dt)
    expected = a * distort(p, t130).as_array() + b * distort(q, t130).as_array()
    assert_allclose(distort(mixed, t130).as_array(), expected, atol=1e-10)
