"""
Optimization Engine

Runs the shared gradient-ascent loop for every registered method:
measure or compute the gradient, pick the learning rate from the schedule,
update the pulse, record the fidelity, charge the budget and test the stop
rule. Progress is published on an event bus.
"""

import logging
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import RunAbortedError
from ..core.pulses import ControlPulse, update_pulse
from ..spectrometer.budget import ExperimentBudget, charge_experiments
from ..spectrometer.readout import GateLike, VirtualSpectrometer
from .bus import EventBus
from .optimizers import GradientEstimator, OptimizerConfig, build_estimator, learning_rate_schedule

logger = logging.getLogger(__name__)

# GRAPE decreases smaller than this are rounding, not a failed step
DECREASE_TOL = 1e-9


class IterationRecord(BaseModel):
    """One row of a run history; index 0 is the initial pulse."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    fidelity: float
    fidelity_std: float = 0.0
    gradient_norm: float = 0.0
    learning_rate: float = 0.0
    experiments: int = 0
    cumulative_experiments: int = 0
    pulse_snapshot: ControlPulse
    status: Literal["ok", "warning", "aborted"] = "ok"
    message: str = ""


class OptimizationRun(BaseModel):
    """Records of a finished run with the reason it stopped."""

    model_config = ConfigDict(frozen=True)

    method: str
    records: List[IterationRecord]
    stop_reason: str

    @property
    def final(self) -> IterationRecord:
        """Last record with a finite fidelity."""
        for rec in reversed(self.records):
            if rec.status != "aborted":
                return rec
        return self.records[0]

    @property
    def final_pulse(self) -> ControlPulse:
        return self.final.pulse_snapshot

    @property
    def aborted(self) -> bool:
        return self.records[-1].status == "aborted"

    def raise_for_abort(self) -> None:
        if self.aborted:
            raise RunAbortedError(self.records[-1].message)


def window_converged(records: List[IterationRecord], window: int, threshold: float) -> bool:
    """True once the fidelity gained over the last ``window`` iterations is below ``threshold``."""
    if len(records) <= window:
        return False
    return records[-1].fidelity - records[-1 - window].fidelity < threshold


def default_c0(M: int, dt: float) -> float:
    """
    Base learning rate from the pulse grid alone.

    A unit change along a resonant direction rotates a transition by
    2 tau sqrt(M), so the fidelity curvature there is at most 2 M tau^2;
    1 / (4 M tau^2) halves the distance to a quadratic optimum per step.
    """
    tau = dt * 1e-3
    return 1.0 / (4.0 * M * tau ** 2)


def capped_rate(c: float, g: np.ndarray, max_step: Optional[float]) -> float:
    """Largest rate <= ``c`` whose step changes no amplitude by more than ``max_step``."""
    peak = float(np.max(np.abs(g))) if g.size else 0.0
    if max_step is None or peak == 0 or c * peak <= max_step:
        return c
    return max_step / peak


class Optimizer:
    """
    Gradient-ascent driver for one run.

    The estimator decides how the gradient and the recorded fidelity are
    obtained; everything else is shared.
    """

    def __init__(
        self,
        cfg: OptimizerConfig,
        spect: VirtualSpectrometer,
        gate: GateLike,
        bus: Optional[EventBus] = None,
        label: str = "run",
    ):
        self.cfg = cfg
        self.estimator: GradientEstimator = build_estimator(cfg, spect, gate)
        self.bus = bus
        self.label = label
        self.records: List[IterationRecord] = []
        self.budget = ExperimentBudget()

    def _publish(self, **event) -> None:
        if self.bus is not None:
            self.bus.publish({"run": self.label, **event})

    def _append(self, rec: IterationRecord) -> IterationRecord:
        self.records.append(rec)
        self._publish(event="iteration", record=rec)
        return rec

    def _abort(self, index: int, p: ControlPulse, message: str) -> str:
        logger.error("%s aborted at iteration %d: %s", self.label, index, message)
        self._append(IterationRecord(
            index=index,
            fidelity=float("nan"),
            cumulative_experiments=self.budget.cumulative,
            pulse_snapshot=p,
            status="aborted",
            message=message,
        ))
        return f"aborted: {message}"

    def run(self, initial: ControlPulse) -> OptimizationRun:
        cfg = self.cfg
        est = self.estimator
        p = initial
        self._publish(event="started", method=cfg.method)

        spent = est.calibrate(p)
        if spent:
            self.budget = charge_experiments(self.budget, spent)
        F, F_std = est.evaluate(p, 0)
        if not np.isfinite(F):
            reason = self._abort(0, p, f"non-finite initial fidelity {F}")
            return self._finish(reason)
        self._append(IterationRecord(
            index=0,
            fidelity=F,
            fidelity_std=F_std,
            experiments=self.budget.experiments_per_iteration,
            cumulative_experiments=self.budget.cumulative,
            pulse_snapshot=p,
        ))

        c0 = cfg.c0 if cfg.c0 is not None else default_c0(p.M, p.dt)
        logger.info("%s: c0=%.4g, max step %s rad/us", self.label, c0, cfg.max_step)
        reason = "max_iters reached"
        for q in range(1, cfg.max_iters + 1):
            try:
                g = est.gradient(p, q)
            except ValueError as exc:
                reason = self._abort(q, p, f"gradient failed: {exc}")
                break
            flat = g.as_array()
            if not np.any(flat):
                reason = "zero gradient"
                logger.warning("%s: gradient vanished at iteration %d, stopping", self.label, q)
                break

            c = capped_rate(learning_rate_schedule(F, c0), flat, cfg.max_step)
            p = update_pulse(p, g, c)
            self.budget = est.charge(self.budget, p.M)
            F_new, F_std = est.evaluate(p, q)
            if not np.isfinite(F_new):
                reason = self._abort(q, p, f"non-finite fidelity {F_new}")
                break

            status, message = "ok", ""
            if est.monotone and F_new < F - DECREASE_TOL:
                status = "warning"
                message = f"fidelity decreased by {F - F_new:.3g}"
                logger.warning("%s iteration %d: %s", self.label, q, message)
            F = F_new
            self._append(IterationRecord(
                index=q,
                fidelity=F,
                fidelity_std=F_std,
                gradient_norm=g.norm,
                learning_rate=c,
                experiments=self.budget.experiments_per_iteration if est.closed_loop else 0,
                cumulative_experiments=self.budget.cumulative,
                pulse_snapshot=p,
                status=status,
                message=message,
            ))
            if cfg.stop_mode == "window" and window_converged(self.records, cfg.stop_window, cfg.stop_threshold):
                reason = f"improvement below {cfg.stop_threshold} over {cfg.stop_window} iterations"
                break
        return self._finish(reason)

    def _finish(self, reason: str) -> OptimizationRun:
        self._publish(event="finished", iterations=len(self.records) - 1, reason=reason)
        return OptimizationRun(method=self.cfg.method, records=list(self.records), stop_reason=reason)


def run_optimization(
    cfg: OptimizerConfig,
    spect: VirtualSpectrometer,
    gate: GateLike,
    initial: ControlPulse,
    bus: Optional[EventBus] = None,
    label: str = "run",
) -> List[IterationRecord]:
    """
    Optimize ``initial`` toward ``gate`` and return the iteration records.

    A non-finite fidelity or gradient ends the run with an ``aborted``
    record instead of raising.
    """
    return Optimizer(cfg, spect, gate, bus, label).run(initial).records
