"""
esrcontrol Spectrometer - Readout

The virtual spectrometer: it distorts each programmed pulse, drives the
thermal state through every ensemble member, reads transition-selective
signals in each member's eigenbasis, normalizes them by their thermal
reference and adds Gaussian noise from a seeded child stream.
"""

import logging
from enum import Enum
from typing import Any, Dict, List, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from ..core.propagator import (
    backward_operators,
    evolve_batch,
    forward_states,
    frame_operator,
    segment_eigh,
    unitaries_from_eigh,
)
from ..core.pulses import ControlPulse, PulseProgram, electron_rotation
from ..core.spin import EnsembleSpec, SpinSystem, build_hamiltonian, diagonalize, lorentzian_ensemble
from .transfer import TransferFunction, distort

logger = logging.getLogger(__name__)

PulseLike = Union[ControlPulse, PulseProgram]
Key = Tuple[int, ...]


class ReadoutKind(str, Enum):
    POLARIZATION = "polarization"
    COHERENCE = "coherence"
    EXPECTATION = "expectation"


class GateSpec(BaseModel):
    """
    A state-to-state control task and how its quality is read out.

    ``polarization`` reads the longitudinal polarization of the two allowed
    transitions, ``coherence`` the magnitude of their transverse coherence,
    and ``expectation`` an ideal tomographic expectation of the target.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    initial: str = "ZI"
    target: str
    readout: ReadoutKind
    combine: Literal["sum", "difference"]

    @classmethod
    def expectation(cls, target: str, initial: str = "ZI") -> "GateSpec":
        return cls(
            name=f"{initial}->{target}",
            initial=initial,
            target=target,
            readout=ReadoutKind.EXPECTATION,
            combine="sum",
        )


GATES: Dict[str, GateSpec] = {
    "gate1": GateSpec(name="gate1", target="XI", readout=ReadoutKind.COHERENCE, combine="sum"),
    "gate2": GateSpec(name="gate2", target="ZZ", readout=ReadoutKind.POLARIZATION, combine="difference"),
}

GateLike = Union[str, GateSpec]


def get_gate(gate: GateLike) -> GateSpec:
    if isinstance(gate, GateSpec):
        return gate
    try:
        return GATES[gate]
    except KeyError:
        raise ValueError(f"unknown gate {gate!r}; expected one of {sorted(GATES)}") from None


class MeasurementModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(0.03, ge=0)
    seed: int = Field(0, ge=0)
    averages: int = Field(16000, ge=1)


class SignalPair(BaseModel):
    """Normalized left (nuclear-up) and right (nuclear-down) transition signals."""

    model_config = ConfigDict(frozen=True)

    sL: float
    sR: float

    def as_array(self) -> np.ndarray:
        return np.array([self.sL, self.sR])


def combine_signals(values: np.ndarray, gate: GateLike) -> np.ndarray:
    """Control quality of normalized signals along the last axis."""
    values = np.asarray(values, dtype=float)
    if get_gate(gate).combine == "sum":
        return (values[..., 0] + values[..., 1]) / 2.0
    return (values[..., 0] - values[..., 1]) / 2.0


def control_quality(s: SignalPair, gate: GateLike) -> float:
    """(sL + sR)/2 for gate 1 (F_XI), (sL - sR)/2 for gate 2 (F_ZZ)."""
    return float(combine_signals(s.as_array(), gate))


def propagate_error(
    sL: float,
    sR: float,
    refL: float,
    refR: float,
    dsL: float,
    dsR: float,
    drefL: float,
    drefR: float,
) -> float:
    """
    Uncertainty of a two-transition control quality.

    Implements sqrt(qL^2 [(dsL/sL)^2 + (drefL/refL)^2] + qR^2 [...]) with
    q = s/ref, without a 1/2 prefactor. The terms are evaluated as
    (ds/ref)^2 + q^2 (dref/ref)^2, which is the same expression and stays
    finite for a vanishing signal.
    """
    if refL == 0 or refR == 0:
        raise ValueError("reference signals must be non-zero")
    qL, qR = sL / refL, sR / refR
    var = (dsL / refL) ** 2 + (qL * drefL / refL) ** 2
    var += (dsR / refR) ** 2 + (qR * drefR / refR) ** 2
    return float(np.sqrt(var))


class ReadoutOperators(BaseModel):
    """Observables per member (E, K, d, d), their transition group and reduction."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ops: np.ndarray
    groups: np.ndarray
    mode: Literal["real", "abs"]

    @property
    def onehot(self) -> np.ndarray:
        out = np.zeros((len(self.groups), 2))
        out[np.arange(len(self.groups)), self.groups] = 1.0
        return out


def _level(e: int, n1: int, s: int, d: int) -> int:
    """Index of |electron e, proton n1, spectator s> (0 = up)."""
    return e * (d // 2) + n1 * (d // 4) + s


def _readout_ops(sys: SpinSystem, gate: GateSpec) -> Tuple[np.ndarray, np.ndarray]:
    eig = diagonalize(sys)
    d = sys.dim
    if gate.readout == ReadoutKind.EXPECTATION:
        target = frame_operator(gate.target, sys, "transition")
        return np.stack([target, target]), np.array([0, 1])

    ops, groups = [], []
    for n1 in (0, 1):
        if gate.readout == ReadoutKind.POLARIZATION:
            diag = np.zeros(d)
            for s in range(d // 4):
                diag[_level(0, n1, s, d)] = 1.0
                diag[_level(1, n1, s, d)] = -1.0
            ops.append(eig.from_eigenframe(np.diag(diag).astype(complex)))
            groups.append(n1)
        else:
            for s in range(d // 4):
                flip = np.zeros((d, d), dtype=complex)
                flip[_level(1, n1, s, d), _level(0, n1, s, d)] = 1.0
                ops.append(eig.from_eigenframe(flip))
                groups.append(n1)
    return np.stack(ops), np.array(groups)


def echo_efficiency(detuning: Union[float, np.ndarray], duration: float) -> np.ndarray:
    """
    Refocusing efficiency of a square selective pi pulse of ``duration`` ns
    at ``detuning`` MHz from its transition, (w1/W)^2 sin^2(W t / 2).
    """
    t = duration * 1e-3
    w1 = np.pi / t
    W = np.hypot(w1, 2 * np.pi * np.asarray(detuning, dtype=float))
    return (w1 / W) ** 2 * np.sin(W * t / 2) ** 2


def _group_pulses(pulses: Sequence[PulseLike]) -> Dict[Any, List[int]]:
    groups: Dict[Any, List[int]] = {}
    for i, item in enumerate(pulses):
        pulse, kicks = (item.pulse, item.kicks) if isinstance(item, PulseProgram) else (item, ())
        groups.setdefault((pulse.M, pulse.dt, kicks), []).append(i)
    return groups


class VirtualSpectrometer(BaseModel):
    """
    Ensemble of detuned spin systems behind a transfer function and a noisy
    transition-selective readout.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    system: SpinSystem = Field(default_factory=SpinSystem)
    ensemble: EnsembleSpec = Field(default_factory=EnsembleSpec)
    transfer: TransferFunction = Field(default_factory=TransferFunction.flat)
    measurement: MeasurementModel = Field(default_factory=MeasurementModel)
    reference_duration: float = Field(200.0, gt=0)
    reference_dt: float = Field(2.0, gt=0)

    _cache: Dict[Any, Any] = PrivateAttr(default_factory=dict)

    def with_updates(self, **changes: Any) -> "VirtualSpectrometer":
        """Copy with some fields replaced and a fresh cache."""
        fields = {name: getattr(self, name) for name in type(self).model_fields}
        return type(self)(**{**fields, **changes})

    @property
    def members(self):
        if "members" not in self._cache:
            self._cache["members"] = lorentzian_ensemble(self.ensemble, self.system)
        return self._cache["members"]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.members])

    @property
    def sigma(self) -> float:
        return self.measurement.sigma

    def rng(self, *key: int) -> np.random.Generator:
        """Child stream for one measurement, derived from (seed, *key)."""
        return np.random.default_rng([self.measurement.seed, *key])

    def readout(self, gate: GateLike) -> ReadoutOperators:
        gate = get_gate(gate)
        cache_key = ("readout", gate)
        if cache_key not in self._cache:
            per_member = [_readout_ops(sys, gate) for sys, _ in self.members]
            self._cache[cache_key] = ReadoutOperators(
                ops=np.stack([ops for ops, _ in per_member]),
                groups=per_member[0][1],
                mode="abs" if gate.readout == ReadoutKind.COHERENCE else "real",
            )
        return self._cache[cache_key]

    def initial_states(self, gate: GateLike) -> np.ndarray:
        gate = get_gate(gate)
        return np.stack([frame_operator(gate.initial, sys, "transition") for sys, _ in self.members])

    def signals_from_traces(self, traces: np.ndarray, gate: GateLike) -> np.ndarray:
        """Ensemble-averaged raw signals from traces of shape (..., E, K)."""
        ro = self.readout(gate)
        vals = np.real(traces) if ro.mode == "real" else np.abs(traces)
        per_member = vals @ ro.onehot
        return np.einsum("...ek,e->...k", per_member, self.detection_weights(gate))

    def detection_weights(self, gate: GateLike) -> np.ndarray:
        """
        Member weights as seen by the readout. Coherence is detected as a
        selective echo, so each member also carries the refocusing
        efficiency of the reference pi pulse at its detuning.
        """
        gate = get_gate(gate)
        if gate.readout != ReadoutKind.COHERENCE:
            return self.weights
        cache_key = ("detection", gate)
        if cache_key not in self._cache:
            offsets = np.array([sys.detuning for sys, _ in self.members]) - self.system.detuning
            self._cache[cache_key] = self.weights * echo_efficiency(offsets, self.reference_duration)
        return self._cache[cache_key]

    def signals_from_states(self, states: np.ndarray, gate: GateLike) -> np.ndarray:
        """Raw signals from final states of shape (..., E, d, d)."""
        ops = self.readout(gate).ops
        traces = np.einsum("...eij,ekji->...ek", states, ops)
        return self.signals_from_traces(traces, gate)

    def references(self, gate: GateLike) -> np.ndarray:
        """Noiseless thermal reference signals (refL, refR)."""
        gate = get_gate(gate)
        cache_key = ("references", gate)
        if cache_key not in self._cache:
            if gate.readout == ReadoutKind.EXPECTATION:
                refs = np.full(2, float(self.system.dim))
            elif gate.readout == ReadoutKind.POLARIZATION:
                refs = self.signals_from_states(self.initial_states(gate), gate)
            else:
                refs = self._selective_references(gate)
            if np.any(refs == 0):
                raise ValueError(f"vanishing thermal reference for {gate.name}: {refs}")
            self._cache[cache_key] = refs
        return self._cache[cache_key]

    def transition_offsets(self) -> np.ndarray:
        """Carrier offsets (MHz) of the nuclear-up and nuclear-down allowed transitions."""
        eig = diagonalize(self.system)
        e = eig.energies
        d = self.system.dim
        return np.array([
            (e[_level(0, n1, 0, d)] - e[_level(1, n1, 0, d)]) / (2 * np.pi) for n1 in (0, 1)
        ])

    def _selective_references(self, gate: GateSpec) -> np.ndarray:
        n = max(1, int(round(self.reference_duration / self.reference_dt)))
        t_us = (np.arange(n) + 0.5) * self.reference_dt * 1e-3
        a = np.pi / (4.0 * n * self.reference_dt * 1e-3)
        refs = np.zeros(2)
        for group, offset in enumerate(self.transition_offsets()):
            square = ControlPulse.from_envelope(a * np.exp(2j * np.pi * offset * t_us), self.reference_dt)
            refs[group] = self._raw_signals([square], gate)[0, group]
        return refs

    def _raw_signals(self, pulses: Sequence[PulseLike], gate: GateLike) -> np.ndarray:
        out = np.zeros((len(pulses), 2))
        rho0 = self.initial_states(gate)
        for (_, dt, kicks), idx in _group_pulses(pulses).items():
            shaped = []
            for i in idx:
                item = pulses[i]
                pulse = item.pulse if isinstance(item, PulseProgram) else item
                shaped.append(distort(pulse, self.transfer))
            ux = np.stack([p.ux for p in shaped])
            uy = np.stack([p.uy for p in shaped])
            totals = evolve_batch(ux, uy, dt, self.members, kicks)
            states = totals @ rho0 @ np.swapaxes(totals.conj(), -1, -2)
            out[idx] = self.signals_from_states(states, gate)
        return out

    def noiseless(self, pulses: Sequence[PulseLike], gate: GateLike) -> np.ndarray:
        """Normalized signals without noise, shape (B, 2)."""
        return self._raw_signals(pulses, gate) / self.references(gate)

    def add_noise(self, values: np.ndarray, keys: Sequence[Key]) -> np.ndarray:
        values = np.array(values, dtype=float)
        if self.sigma == 0:
            return values
        flat = values.reshape(len(keys), -1)
        for row, key in zip(flat, keys):
            row += self.rng(*key).normal(0.0, self.sigma, size=row.shape)
        return flat.reshape(values.shape)

    def measure_batch(self, pulses: Sequence[PulseLike], gate: GateLike, keys: Sequence[Key]) -> np.ndarray:
        """Noisy normalized signals, one child stream per pulse."""
        if len(keys) != len(pulses):
            raise ValueError("one RNG key is required per pulse")
        return self.add_noise(self.noiseless(pulses, gate), keys)

    def quality_batch(self, pulses: Sequence[PulseLike], gate: GateLike, keys: Sequence[Key]) -> np.ndarray:
        return combine_signals(self.measure_batch(pulses, gate, keys), gate)

    def rotation_signals(self, p: ControlPulse, gate: GateLike, theta: float) -> np.ndarray:
        """
        Noiseless normalized signals with an ideal electron rotation
        exp(-i sign theta sigma_axis / 2) inserted after each segment.

        Equivalent to measuring every ``insert_rotation`` program, but reuses
        the forward states and back-propagated observables of the shaped pulse.

        Returns:
            Array of shape (axis x/y, sign +/-, M, 2)
        """
        shaped = distort(p, self.transfer)
        n_spins = self.system.n_spins
        h0s = np.stack([build_hamiltonian(sys) for sys, _ in self.members])
        w, v = segment_eigh(h0s, shaped.ux, shaped.uy, n_spins)
        us = unitaries_from_eigh(w, v, shaped.dt * 1e-3)
        states = forward_states(us, self.initial_states(gate))[:, 1:]
        observables = backward_operators(us, self.readout(gate).ops)[:, 1:]
        refs = self.references(gate)

        out = np.zeros((2, 2, p.M, 2))
        for a, axis in enumerate(("x", "y")):
            for s, sign in enumerate((1, -1)):
                r = electron_rotation(axis, sign * theta, n_spins)
                kicked = r @ states @ r.conj().T
                traces = np.einsum("emij,emkji->mek", kicked, observables)
                out[a, s] = self.signals_from_traces(traces, gate) / refs
        return out

    def measure(self, p: PulseLike, gate: GateLike, key: Key = (0,)) -> SignalPair:
        sL, sR = self.measure_batch([p], gate, [key])[0]
        return SignalPair(sL=float(sL), sR=float(sR))


def measure_signals(p: PulseLike, gate: GateLike, spect: VirtualSpectrometer, key: Key = (0,)) -> SignalPair:
    """Distort, propagate, read out and add noise for a single pulse."""
    return spect.measure(p, gate, key)
