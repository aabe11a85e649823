"""
Campaigns

Repeated trials of one experiment with deterministic child seeds, and
cross-product sweeps laid out as a table of sweep values by methods.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from ..core.pulses import BasisKind
from ..spectrometer.readout import combine_signals
from .bus import EventBus
from .config import ExperimentConfig, config_hash
from .engine import OptimizationRun, Optimizer
from .optimizers import BasisSpec

logger = logging.getLogger(__name__)

SweepVariable = Literal["sigma", "transfer_fwhm", "method", "basis"]
SWEEP_VARIABLES = ("sigma", "transfer_fwhm", "method", "basis")

METHOD_LABELS: Dict[str, Tuple[str, Optional[BasisKind]]] = {
    "hqca": ("hqca", None),
    "fd-linear": ("fd", BasisKind.LINEAR_HADAMARD),
    "fd-slepian": ("fd", BasisKind.SLEPIAN),
    "fd-canonical": ("fd", BasisKind.CANONICAL),
    "grape": ("grape", None),
    "grape-linear": ("grape", BasisKind.LINEAR_HADAMARD),
    "grape-slepian": ("grape", BasisKind.SLEPIAN),
}


class TrialOutcome(BaseModel):
    """One optimization run of a campaign and its true final quality."""

    model_config = ConfigDict(frozen=True)

    trial: int
    seed: int
    run: OptimizationRun
    final_quality: float


class CampaignResult(BaseModel):
    """Final qualities of every trial; mean and std are derived from them."""

    model_config = ConfigDict(frozen=True)

    config_hash: str
    label: str = ""
    seed: int
    final_fidelities: List[float]
    runtime: float = 0.0

    @computed_field
    @property
    def mean(self) -> float:
        return float(np.mean(self.final_fidelities))

    @computed_field
    @property
    def std(self) -> float:
        if len(self.final_fidelities) < 2:
            return 0.0
        return float(np.std(self.final_fidelities, ddof=1))

    @property
    def trials(self) -> int:
        return len(self.final_fidelities)


def trial_seed(master: int, trial: int) -> int:
    """Deterministic per-trial seed derived from the master seed."""
    return int(np.random.SeedSequence([master, trial]).generate_state(1, np.uint64)[0])


def final_quality(cfg: ExperimentConfig, run: OptimizationRun, seed: int) -> float:
    """Noiseless quality of the final pulse on the true system."""
    spect = cfg.spectrometer(seed)
    return float(combine_signals(spect.noiseless([run.final_pulse], cfg.gate_spec)[0], cfg.gate_spec))


def run_trial(cfg: ExperimentConfig, trial: int, bus: Optional[EventBus] = None) -> TrialOutcome:
    seed = trial_seed(cfg.seed, trial)
    spect = cfg.spectrometer(seed)
    opt = Optimizer(cfg.optimizer_config(), spect, cfg.gate_spec, bus, label=f"trial {trial}")
    run = opt.run(cfg.initial_pulse())
    return TrialOutcome(trial=trial, seed=seed, run=run, final_quality=final_quality(cfg, run, seed))


def run_campaign(
    cfg: ExperimentConfig,
    bus: Optional[EventBus] = None,
    label: str = "",
) -> Tuple[CampaignResult, List[TrialOutcome]]:
    """
    Run ``cfg.trials`` independent trials, in worker processes when
    ``cfg.threads > 1``. Results are ordered by trial regardless of
    completion order.
    """
    start = time.perf_counter()
    trials = range(cfg.trials)
    if cfg.threads > 1 and cfg.trials > 1:
        # per-iteration events stay in the workers; the parent sees trial events
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = list(pool.map(run_trial, [cfg] * cfg.trials, trials))
    else:
        outcomes = [run_trial(cfg, t, bus) for t in trials]
    for out in outcomes:
        if bus is not None:
            bus.publish({"event": "trial", "run": label or "campaign", "trial": out.trial,
                         "final_quality": out.final_quality})
    result = CampaignResult(
        config_hash=config_hash(cfg),
        label=label,
        seed=cfg.seed,
        final_fidelities=[o.final_quality for o in outcomes],
        runtime=time.perf_counter() - start,
    )
    logger.info("Campaign %s: F=%.4f +- %.4f over %d trials", label or result.config_hash,
                result.mean, result.std, result.trials)
    return result, outcomes


def apply_method(cfg: ExperimentConfig, label: str) -> ExperimentConfig:
    """Configure the optimizer for a method label such as ``fd-slepian``."""
    try:
        method, kind = METHOD_LABELS[label]
    except KeyError:
        raise ValueError(f"unknown method label {label!r}; expected one of {sorted(METHOD_LABELS)}") from None
    update: Dict[str, object] = {"method": method}
    if kind is not None:
        spec = cfg.optimizer.basis.model_copy(update={"kind": kind})
        update["basis" if method == "fd" else "grape_basis"] = spec
    elif method == "grape":
        update["grape_basis"] = None
    return cfg.model_copy(update={"optimizer": cfg.optimizer.model_copy(update=update)})


def apply_sweep_value(cfg: ExperimentConfig, variable: str, value: Union[str, float]) -> ExperimentConfig:
    if variable == "sigma":
        return cfg.model_copy(update={"measurement": cfg.measurement.model_copy(update={"sigma": float(value)})})
    if variable == "transfer_fwhm":
        kind = cfg.transfer.kind if cfg.transfer.kind in ("measured_like", "lorentzian") else "measured_like"
        transfer = cfg.transfer.model_copy(update={"fwhm": float(value), "kind": kind})
        return cfg.model_copy(update={"transfer": transfer})
    if variable == "method":
        return apply_method(cfg, str(value))
    if variable == "basis":
        basis = BasisSpec(**{**cfg.optimizer.basis.model_dump(), "kind": BasisKind(str(value))})
        return cfg.model_copy(update={"optimizer": cfg.optimizer.model_copy(update={"basis": basis})})
    raise ValueError(f"unknown sweep variable {variable!r}; expected one of {SWEEP_VARIABLES}")


class SweepCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: str
    method: str
    result: CampaignResult


class SweepTable(BaseModel):
    """Rows are sweep values, columns are methods."""

    model_config = ConfigDict(frozen=True)

    variable: str
    values: List[str]
    methods: List[str]
    cells: List[SweepCell] = Field(default_factory=list)

    def cell(self, value: str, method: str) -> CampaignResult:
        for c in self.cells:
            if c.value == value and c.method == method:
                return c.result
        raise KeyError((value, method))

    def to_csv(self) -> str:
        lines = [f"{self.variable},method,mean,std,trials,config_hash"]
        for c in self.cells:
            r = c.result
            lines.append(f"{c.value},{c.method},{r.mean:.6f},{r.std:.6f},{r.trials},{r.config_hash}")
        return "\n".join(lines) + "\n"


def sweep(
    cfg: ExperimentConfig,
    variable: str,
    values: Sequence[Union[str, float]],
    methods: Optional[Sequence[str]] = None,
    store=None,
    bus: Optional[EventBus] = None,
) -> SweepTable:
    """
    Cross-product campaign over sweep values and method labels.

    Cells already present in ``store`` (keyed by config hash) are reused.
    """
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"unknown sweep variable {variable!r}; expected one of {SWEEP_VARIABLES}")
    if not values:
        raise ValueError("sweep needs at least one value")
    if variable == "method" or not methods:
        methods = ["configured"]
    for m in methods:
        if m != "configured" and m not in METHOD_LABELS:
            raise ValueError(f"unknown method label {m!r}; expected one of {sorted(METHOD_LABELS)}")

    cells = []
    for value in values:
        base = apply_sweep_value(cfg, variable, value)
        for method in methods:
            cell_cfg = base if method == "configured" else apply_method(base, method)
            label = f"{variable}={value} {method}"
            key = config_hash(cell_cfg)
            result = store.get(key) if store is not None else None
            if result is None:
                result, _ = run_campaign(cell_cfg, bus, label)
                if store is not None:
                    store.save(result)
            else:
                logger.info("Reusing stored result for %s (%s)", label, key)
            cells.append(SweepCell(value=str(value), method=method, result=result))
    return SweepTable(variable=variable, values=[str(v) for v in values], methods=list(methods), cells=cells)
