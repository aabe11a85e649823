import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm
from scipy.stats import unitary_group

from esrcontrol.core.propagator import (
    GradientVector,
    analytic_gradient,
    control_operators,
    ensemble_fidelity,
    evolve_batch,
    propagate,
    state_fidelity,
)
from esrcontrol.core.pulses import ControlPulse
from esrcontrol.core.spin import EnsembleSpec, PauliState, SpinSystem, build_hamiltonian, diagonalize, lorentzian_ensemble


def random_pulse(M, seed, amplitude=20.0, dt=2.0):
    rng = np.random.default_rng(seed)
    return ControlPulse(dt=dt, ux=rng.uniform(-amplitude, amplitude, M), uy=rng.uniform(-amplitude, amplitude, M))


def central_difference(p, ensemble, rho_i, rho_f, h, frame="product"):
    v = p.as_array()
    g = np.zeros_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        hi = ensemble_fidelity(ControlPulse.from_array(v + e, p.dt), ensemble, rho_i, rho_f, frame)
        lo = ensemble_fidelity(ControlPulse.from_array(v - e, p.dt), ensemble, rho_i, rho_f, frame)
        g[i] = (hi - lo) / (2 * h)
    return g


def test_zero_pulse_without_h0_is_identity(bare_electron):
    U = propagate(ControlPulse.zeros(5), bare_electron).total_unitary
    assert_allclose(U, np.eye(4), atol=1e-12)


def test_zero_pulse_gives_diagonal_phases(no_pseudosecular):
    p = ControlPulse.zeros(10, dt=2.0)
    U = propagate(p, no_pseudosecular).total_unitary
    E = diagonalize(no_pseudosecular).energies
    assert_allclose(U, np.diag(np.exp(-1j * E * p.duration * 1e-3)), atol=1e-10)


def test_propagator_matches_scipy_expm(radical):
    p = random_pulse(6, seed=1)
    sx, sy = control_operators(2)
    h0 = build_hamiltonian(radical)
    expected = np.eye(4, dtype=complex)
    for x, y in zip(p.ux, p.uy):
        expected = expm(-1j * p.dt * 1e-3 * (h0 + x * sx + y * sy)) @ expected
    assert_allclose(propagate(p, radical).total_unitary, expected, atol=1e-10)


def test_pi_half_rotation_turns_z_into_minus_y(bare_electron):
    # 2 u tau = pi/2 with tau = 2 ns
    u = (np.pi / 2) / (2 * 2e-3)
    p = ControlPulse(dt=2.0, ux=[u], uy=[0.0])
    final = propagate(p, bare_electron, "ZI").final_state
    assert_allclose(final, -PauliState(label="YI").matrix, atol=1e-12)
    U = propagate(p, bare_electron).total_unitary
    assert state_fidelity("ZI", "YI", U) == pytest.approx(-1.0)


def test_state_fidelity_examples():
    assert state_fidelity("ZI", "ZI", np.eye(4)) == pytest.approx(1.0)
    assert state_fidelity("ZI", "ZZ", np.eye(4)) == pytest.approx(0.0)
    assert state_fidelity("ZZ", "ZZ", np.eye(4)) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(3))
def test_state_fidelity_against_trace_formula(seed):
    U = unitary_group.rvs(4, random_state=seed)
    a = PauliState(label="ZI").matrix
    b = PauliState(label="XY").matrix
    expected = np.real(np.trace(U @ a @ U.conj().T @ b)) / 4
    assert state_fidelity("ZI", "XY", U) == pytest.approx(expected)
    assert abs(state_fidelity("ZI", "XY", U)) <= 1 + 1e-12


def test_ensemble_fidelity_weighted_mean():
    """Two members, one unaffected and one precessing x into y: F = 0.5."""
    base = SpinSystem(A=0.0, B=0.0, omega_I=0.0)
    # detuning 1 MHz for 0.25 us turns x by 90 degrees
    members = [(base, 0.5), (base.with_detuning(1.0), 0.5)]
    p = ControlPulse.zeros(125, dt=2.0)
    assert ensemble_fidelity(p, members, "XI", "XI") == pytest.approx(0.5, abs=1e-12)


def test_default_ensemble_zero_pulse_keeps_polarization(radical):
    members = lorentzian_ensemble(EnsembleSpec(), radical)
    p = ControlPulse.zeros(20)
    assert ensemble_fidelity(p, members, "ZI", "ZI") == pytest.approx(1.0, abs=1e-12)
    assert ensemble_fidelity(p, members, "ZI", "ZI", frame="transition") == pytest.approx(1.0, abs=1e-12)


def test_evolve_batch_matches_single_propagation(radical):
    members = lorentzian_ensemble(EnsembleSpec(n_points=3), radical)
    pulses = [random_pulse(5, seed=s) for s in range(4)]
    totals = evolve_batch(np.stack([p.ux for p in pulses]), np.stack([p.uy for p in pulses]), 2.0, members)
    assert totals.shape == (4, 3, 4, 4)
    for b, p in enumerate(pulses):
        for e, (sys, _) in enumerate(members):
            assert_allclose(totals[b, e], propagate(p, sys).total_unitary, atol=1e-12)


def test_gradient_vanishes_at_stationary_point(bare_electron):
    g = analytic_gradient(ControlPulse.zeros(4), bare_electron, "ZI", "ZI")
    assert_allclose(g.as_array(), 0.0, atol=1e-15)


@pytest.mark.parametrize("first_order", [False, True])
def test_single_segment_gradient(bare_electron, first_order):
    dt = 2.0
    g = analytic_gradient(ControlPulse.zeros(1, dt=dt), bare_electron, "ZI", "YI", first_order=first_order)
    assert g.gx[0] == pytest.approx(-2 * dt * 1e-3, rel=1e-12)
    assert g.gy[0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("frame", ["product", "transition"])
def test_exact_gradient_matches_central_differences(radical, frame):
    error_threshold = 1e-3
    members = lorentzian_ensemble(EnsembleSpec(n_points=3), radical)
    for seed in range(3):
        p = random_pulse(8, seed=seed)
        exact = analytic_gradient(p, members, "ZI", "ZZ", frame=frame).as_array()
        approx = central_difference(p, members, "ZI", "ZZ", 1e-4, frame)
        assert np.linalg.norm(exact - approx) / np.linalg.norm(approx) < error_threshold


def test_exact_gradient_for_three_spins():
    sys = SpinSystem(extra_proton=(4.0, 2.0))
    p = random_pulse(5, seed=4)
    exact = analytic_gradient(p, sys, "ZI", "ZZ").as_array()
    approx = central_difference(p, sys, "ZI", "ZZ", 1e-4)
    assert np.linalg.norm(exact - approx) / np.linalg.norm(approx) < 1e-3


def test_first_order_gradient_approaches_exact_for_short_segments(radical):
    p = random_pulse(10, seed=2, amplitude=5.0, dt=0.05)
    exact = analytic_gradient(p, radical, "ZI", "YI")
    first = analytic_gradient(p, radical, "ZI", "YI", first_order=True)
    assert exact.cosine(first) > 0.999


def test_gradient_vector_rejects_non_finite():
    with pytest.raises(ValueError):
        GradientVector(gx=[0.0, np.nan], gy=[0.0, 0.0])


def test_gradient_vector_cosine():
    a = GradientVector(gx=[1.0, 0.0], gy=[0.0, 0.0])
    b = GradientVector(gx=[0.0, 0.0], gy=[2.0, 0.0])
    assert a.cosine(a.scaled(3.0)) == pytest.approx(1.0)
    assert a.cosine(b) == pytest.approx(0.0)
    assert a.cosine(GradientVector.zeros(2)) == 0.0


def test_propagation_composes_over_concatenated_pulses(radical):
    first, second = random_pulse(7, 21), random_pulse(5, 22)
    joined = ControlPulse(ux=np.concatenate([first.ux, second.ux]), uy=np.concatenate([first.uy, second.uy]))
    expected = propagate(second, radical).total_unitary @ propagate(first, radical).total_unitary
    assert_allclose(propagate(joined, radical).total_unitary, expected, atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_fidelity_invariant_under_simultaneous_conjugation(seed):
    U = unitary_group.rvs(4, random_state=seed)
    V = unitary_group.rvs(4, random_state=seed + 10)
    a = PauliState(label="ZI").matrix
    b = PauliState(label="XZ").matrix
    rotated = state_fidelity(V @ a @ V.conj().T, V @ b @ V.conj().T, V @ U @ V.conj().T)
    assert rotated == pytest.approx(state_fidelity(a, b, U), abs=1e-12)
