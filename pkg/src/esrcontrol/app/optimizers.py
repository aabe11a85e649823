"""
Gradient Estimators

Open-loop GRAPE (model gradient, optionally pushed through a design
transfer function), closed-loop HQCA (fidelity differences with inserted
+-theta electron rotations) and closed-loop finite differences over a
basis set. Every estimator is registered with @gradient_method and shares
one interface used by the engine.

RNG keys for measurements are (purpose, iteration, component, sign or
repeat), so serial and batched evaluation draw identical noise.
"""

import logging
from abc import ABC
from typing import ClassVar, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.propagator import GradientVector, analytic_gradient
from ..core.pulses import (
    BasisKind,
    BasisSet,
    ControlPulse,
    RotationModel,
    insert_rotation,
    make_canonical_basis,
    make_linear_basis,
    make_slepian_basis,
    perturb_along,
    slepian_half_bandwidth,
)
from ..core.spin import Ensemble, EnsembleSpec, SpinSystem, lorentzian_ensemble
from ..spectrometer.budget import ExperimentBudget, charge_budget
from ..spectrometer.readout import GateLike, MeasurementModel, ReadoutKind, VirtualSpectrometer, combine_signals, get_gate
from ..spectrometer.transfer import TransferFunction, distort, distort_adjoint
from .registry import MethodInfo, gradient_method, get_method

logger = logging.getLogger(__name__)

GRADIENT, EVALUATE, CALIBRATE = 0, 1, 2
# calibrated delta_u stays within [probe / 4, probe * 8]
DELTA_SHRINK, DELTA_GROWTH = 4.0, 8.0
CHANNELS = ("x", "y")


class BasisSpec(BaseModel):
    """How to build a per-channel basis for a pulse of M segments."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: BasisKind = BasisKind.LINEAR_HADAMARD
    bandwidth: Optional[float] = Field(120.0, gt=0)
    W: Optional[float] = Field(None, gt=0, le=0.5)
    count: Optional[int] = Field(None, ge=1)

    def build(self, M: int, dt: float) -> BasisSet:
        if self.kind == BasisKind.LINEAR_HADAMARD:
            return make_linear_basis(M)
        if self.kind == BasisKind.CANONICAL:
            return make_canonical_basis(M)
        W = self.W if self.W is not None else slepian_half_bandwidth(self.bandwidth, dt)
        return make_slepian_basis(M, W, self.count)


class OptimizerConfig(BaseModel):
    """Method selection, schedule and stopping rule of one optimization run."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    method: Literal["grape", "hqca", "fd"] = "hqca"
    basis: BasisSpec = Field(default_factory=BasisSpec)
    grape_basis: Optional[BasisSpec] = None
    rotation: RotationModel = Field(default_factory=RotationModel)
    c0: Optional[float] = Field(None, gt=0)
    max_step: Optional[float] = Field(3.0, gt=0)
    delta_u: Optional[float] = Field(None, gt=0)
    delta_u_probe: float = Field(4.0, gt=0)
    max_iters: int = Field(100, ge=0)
    stop_window: int = Field(5, ge=1)
    stop_threshold: float = 0.01
    stop_mode: Literal["window", "fixed"] = "window"
    repeats: int = Field(5, ge=1)
    experiments_per_measurement: int = Field(1, ge=1)
    first_order: bool = False
    model_system: Optional[SpinSystem] = None
    model_ensemble: Optional[EnsembleSpec] = None
    design_transfer: Optional[TransferFunction] = None


def learning_rate_schedule(F: float, c0: float) -> float:
    """c0 below 0.95, halved at 0.95, quartered at 0.97, eighth from 0.98 on."""
    if F < 0.95:
        return c0
    if F < 0.97:
        return 0.5 * c0
    if F < 0.98:
        return 0.25 * c0
    return 0.125 * c0


def _noisy_qualities(spect: VirtualSpectrometer, values: np.ndarray, keys: Sequence[Tuple[int, ...]], gate: GateLike) -> np.ndarray:
    shape = values.shape[:-1]
    noisy = spect.add_noise(values.reshape(-1, 2), keys)
    return combine_signals(noisy, gate).reshape(shape)


def hqca_gradient(
    p: ControlPulse,
    spect: VirtualSpectrometer,
    gate: GateLike,
    rotation: RotationModel,
    iteration: int = 0,
) -> GradientVector:
    """
    Closed-loop gradient from inserted +-theta rotations.

    dF/du_a(m) = dt * (F(+theta) - F(-theta)) with the rotation about axis
    a inserted after segment m. The gradient refers to the amplitudes that
    reach the spins, so no transfer-function correction is applied.
    """
    M = p.M
    keys = [
        (GRADIENT, iteration, a * M + m, s)
        for a in range(2) for s in range(2) for m in range(M)
    ]
    if rotation.kind == "ideal":
        values = spect.rotation_signals(p, gate, rotation.theta)
    else:
        programs = [
            insert_rotation(p, m + 1, axis, sign, rotation)
            for axis in CHANNELS for sign in (1, -1) for m in range(M)
        ]
        values = spect.noiseless(programs, gate).reshape(2, 2, M, 2)
    F = _noisy_qualities(spect, values, keys, gate)
    g = p.dt * 1e-3 * (F[:, 0] - F[:, 1])
    return GradientVector(gx=g[0], gy=g[1])


def fd_differences(
    p: ControlPulse,
    spect: VirtualSpectrometer,
    gate: GateLike,
    vectors: np.ndarray,
    delta_u: float,
    channel_index: int,
    iteration: int,
    purpose: int = GRADIENT,
) -> np.ndarray:
    """F(u + delta v_k) - F(u - delta v_k) for each row of ``vectors`` on one channel."""
    channel = CHANNELS[channel_index]
    K = len(vectors)
    pulses = [perturb_along(p, v, delta_u, channel, sign) for sign in (1, -1) for v in vectors]
    keys = [(purpose, iteration, channel_index * K + k, s) for s in range(2) for k in range(K)]
    F = spect.quality_batch(pulses, gate, keys).reshape(2, K)
    return F[0] - F[1]


def fd_gradient(
    p: ControlPulse,
    spect: VirtualSpectrometer,
    gate: GateLike,
    basis: BasisSet,
    delta_u: float,
    iteration: int = 0,
) -> GradientVector:
    """
    Closed-loop central-difference gradient over a basis, x channel first.

    g = sum_k [F(u + delta v_k) - F(u - delta v_k)] / (2 delta) v_k
    """
    if delta_u <= 0:
        raise ValueError(f"delta_u must be positive, got {delta_u}")
    if basis.M != p.M:
        raise ValueError(f"basis length {basis.M} does not match pulse length {p.M}")
    parts = []
    for c in range(2):
        diffs = fd_differences(p, spect, gate, basis.vectors, delta_u, c, iteration)
        parts.append(basis.reconstruct(diffs / (2.0 * delta_u)))
    return GradientVector(gx=parts[0], gy=parts[1])


def grape_gradient(
    p: ControlPulse,
    model_sys: Union[SpinSystem, Ensemble],
    design_T: Optional[TransferFunction],
    gate: GateLike,
    basis: Optional[BasisSet] = None,
    first_order: bool = False,
) -> GradientVector:
    """
    Open-loop gradient from the model alone.

    With a design transfer function the model gradient is taken at the
    distorted pulse and mapped back through the transpose Jacobian.
    """
    gate = get_gate(gate)
    shaped = p if design_T is None else distort(p, design_T)
    g = analytic_gradient(
        shaped, model_sys, gate.initial, gate.target, first_order=first_order, frame="transition"
    )
    if design_T is not None:
        g = distort_adjoint(g, design_T, p.dt)
    if basis is not None:
        g = GradientVector(gx=basis.project(g.gx), gy=basis.project(g.gy))
    return g


class GradientEstimator(ABC):
    """
    Common interface of all gradient methods.

    Subclasses implement :meth:`gradient`; closed-loop estimators also charge
    experiments and evaluate through noisy measurements.
    """

    _method_info: ClassVar[MethodInfo]

    def __init__(self, cfg: OptimizerConfig, spect: VirtualSpectrometer, gate: GateLike):
        self.cfg = cfg
        self.spect = spect
        self.gate = get_gate(gate)

    @property
    def info(self) -> MethodInfo:
        return self._method_info

    @property
    def closed_loop(self) -> bool:
        return self._method_info.closed_loop

    @property
    def monotone(self) -> bool:
        """Whether the recorded fidelity is the quantity the gradient ascends."""
        return False

    def components_per_channel(self, M: int) -> int:
        return M

    def calibrate(self, p: ControlPulse) -> int:
        """Optional pre-step; returns experiments spent."""
        return 0

    def gradient(self, p: ControlPulse, iteration: int) -> GradientVector:
        raise NotImplementedError

    def charge(self, budget: ExperimentBudget, M: int) -> ExperimentBudget:
        if not self.closed_loop:
            return budget
        return charge_budget(budget, 1, self.components_per_channel(M), self.cfg.experiments_per_measurement)

    def evaluate(self, p: ControlPulse, iteration: int) -> Tuple[float, float]:
        """Recorded fidelity: mean and spread of repeated noisy measurements."""
        R = self.cfg.repeats
        keys = [(EVALUATE, iteration, 0, r) for r in range(R)]
        F = self.spect.quality_batch([p] * R, self.gate, keys)
        return float(np.mean(F)), float(np.std(F, ddof=1)) if R > 1 else 0.0


@gradient_method("hqca", closed_loop=True, description="Inserted +-theta rotations, measured")
class HQCAEstimator(GradientEstimator):
    """Hybrid quantum-classical gradient measurement."""

    def gradient(self, p: ControlPulse, iteration: int) -> GradientVector:
        return hqca_gradient(p, self.spect, self.gate, self.cfg.rotation, iteration)


@gradient_method("fd", closed_loop=True, description="Central differences over a basis, measured")
class FiniteDifferenceEstimator(GradientEstimator):
    """Finite-difference gradient measurement over a basis set."""

    def __init__(self, cfg: OptimizerConfig, spect: VirtualSpectrometer, gate: GateLike):
        super().__init__(cfg, spect, gate)
        self._basis: Optional[BasisSet] = None
        self.delta_u: Optional[float] = cfg.delta_u

    def basis_for(self, p: ControlPulse) -> BasisSet:
        if self._basis is None or self._basis.M != p.M:
            self._basis = self.cfg.basis.build(p.M, p.dt)
        return self._basis

    def components_per_channel(self, M: int) -> int:
        return self._basis.size if self._basis is not None else M

    def calibrate(self, p: ControlPulse) -> int:
        """
        Pick delta_u so one perturbation moves the fidelity by about five
        noise standard deviations.

        Probe differences are averaged over ``repeats`` draws and their
        RMS is corrected for the noise floor before scaling the probe.
        """
        basis = self.basis_for(p)
        if self.delta_u is not None:
            return 0
        probe = self.cfg.delta_u_probe
        sigma = self.spect.sigma
        R = self.cfg.repeats
        n_probe = min(basis.size, 8)
        diffs = np.mean([
            fd_differences(p, self.spect, self.gate, basis.vectors[:n_probe], probe, 0, r, CALIBRATE)
            for r in range(R)
        ], axis=0)
        # F+ - F- has variance sigma^2 per draw
        signal = float(np.sqrt(max(np.mean(diffs ** 2) - sigma ** 2 / R, 0.0)))
        lo, hi = probe / DELTA_SHRINK, probe * DELTA_GROWTH
        if sigma == 0:
            self.delta_u = probe
        elif signal == 0:
            self.delta_u = hi
        else:
            # |F+ - F-| is twice the one-sided change
            self.delta_u = float(np.clip(probe * 10.0 * sigma / signal, lo, hi))
        logger.info("Calibrated delta_u=%.4g from probe %.4g (RMS dF=%.3g)", self.delta_u, probe, signal)
        return 2 * n_probe * R * self.cfg.experiments_per_measurement

    def gradient(self, p: ControlPulse, iteration: int) -> GradientVector:
        return fd_gradient(p, self.spect, self.gate, self.basis_for(p), self.delta_u, iteration)


@gradient_method("grape", closed_loop=False, description="Model gradient, no measurements")
class GrapeEstimator(GradientEstimator):
    """Open-loop gradient ascent on a model of the system."""

    @property
    def monotone(self) -> bool:
        # the coherence readout is not the fidelity GRAPE ascends
        return self.gate.readout != ReadoutKind.COHERENCE

    def __init__(self, cfg: OptimizerConfig, spect: VirtualSpectrometer, gate: GateLike):
        super().__init__(cfg, spect, gate)
        model_sys = cfg.model_system or spect.system
        ensemble = cfg.model_ensemble or spect.ensemble
        self.members: Ensemble = lorentzian_ensemble(ensemble, model_sys)
        self.model = spect.with_updates(
            system=model_sys,
            ensemble=ensemble,
            transfer=cfg.design_transfer or TransferFunction.flat(),
            measurement=MeasurementModel(sigma=0.0, seed=spect.measurement.seed),
        )
        self._basis: Optional[BasisSet] = None

    def gradient(self, p: ControlPulse, iteration: int) -> GradientVector:
        if self.cfg.grape_basis is not None and (self._basis is None or self._basis.M != p.M):
            self._basis = self.cfg.grape_basis.build(p.M, p.dt)
        return grape_gradient(
            p, self.members, self.cfg.design_transfer, self.gate, self._basis, self.cfg.first_order
        )

    def evaluate(self, p: ControlPulse, iteration: int) -> Tuple[float, float]:
        """Model-predicted control quality."""
        value = combine_signals(self.model.noiseless([p], self.gate)[0], self.gate)
        return float(value), 0.0


def build_estimator(cfg: OptimizerConfig, spect: VirtualSpectrometer, gate: GateLike) -> GradientEstimator:
    return get_method(cfg.method)(cfg, spect, gate)
