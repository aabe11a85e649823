import numpy as np
import pytest

from esrcontrol.app.bus import InProcessBus
from esrcontrol.app.engine import (
    IterationRecord,
    Optimizer,
    capped_rate,
    default_c0,
    run_optimization,
    window_converged,
)
from esrcontrol.app.optimizers import OptimizerConfig
from esrcontrol.core.errors import RunAbortedError
from esrcontrol.core.pulses import ControlPulse
from esrcontrol.spectrometer.readout import GateSpec


def records_with(fidelities):
    p = ControlPulse.zeros(1)
    return [IterationRecord(index=i, fidelity=f, pulse_snapshot=p) for i, f in enumerate(fidelities)]


def test_zero_iterations_records_initial_pulse_only(noisy):
    p = ControlPulse.square(4, amplitude=5.0)
    records = run_optimization(OptimizerConfig(max_iters=0), noisy, "gate2", p)
    assert len(records) == 1
    assert records[0].index == 0
    assert records[0].pulse_snapshot is p
    assert records[0].cumulative_experiments == 0


def test_records_are_ordered_and_budget_accumulates(noisy):
    cfg = OptimizerConfig(method="hqca", max_iters=3, stop_mode="fixed")
    records = run_optimization(cfg, noisy, "gate2", ControlPulse.square(10, amplitude=5.0))
    assert [r.index for r in records] == [0, 1, 2, 3]
    assert [r.cumulative_experiments for r in records] == [0, 40, 80, 120]
    assert all(r.experiments == 40 for r in records[1:])
    assert all(r.status == "ok" for r in records)


def test_every_step_respects_max_step(noisy):
    cfg = OptimizerConfig(method="hqca", max_iters=4, stop_mode="fixed", max_step=0.1)
    records = run_optimization(cfg, noisy, "gate2", ControlPulse.square(6, amplitude=5.0))
    moves = [
        np.max(np.abs(after.pulse_snapshot.as_array() - before.pulse_snapshot.as_array()))
        for before, after in zip(records, records[1:])
    ]
    assert all(m <= 0.1 + 1e-12 for m in moves)
    # c0 for six segments is large, so the bound is what sets the first step
    assert moves[0] == pytest.approx(0.1, rel=1e-9)


def test_unset_c0_uses_grid_default(quiet):
    cfg = OptimizerConfig(method="grape", max_iters=1, stop_mode="fixed", max_step=None)
    records = run_optimization(cfg, quiet, "gate2", ControlPulse.square(20, amplitude=5.0))
    assert records[1].learning_rate == pytest.approx(default_c0(20, 2.0))


def test_default_c0_scales_with_grid():
    assert default_c0(100, 2.0) == pytest.approx(625.0)
    assert default_c0(50, 2.0) == pytest.approx(1250.0)
    assert default_c0(100, 4.0) == pytest.approx(156.25)


def test_capped_rate():
    g = np.array([0.5, -1.5, 0.0])
    assert capped_rate(10.0, g, 3.0) == pytest.approx(2.0)
    assert capped_rate(1.0, g, 3.0) == 1.0
    assert capped_rate(10.0, g, None) == 10.0
    assert capped_rate(10.0, np.zeros(3), 3.0) == 10.0


def test_zero_gradient_stops_the_run(spectrometer, bare_electron):
    cfg = OptimizerConfig(method="grape", max_iters=5)
    run = Optimizer(cfg, spectrometer(bare_electron), GateSpec.expectation("ZI")).run(ControlPulse.zeros(4))
    assert run.stop_reason == "zero gradient"
    assert len(run.records) == 1


def test_window_rule():
    assert not window_converged(records_with([0.1, 0.2, 0.3]), 5, 0.01)
    assert window_converged(records_with([0.5, 0.5, 0.5, 0.5, 0.5, 0.505]), 5, 0.01)
    assert not window_converged(records_with([0.5, 0.5, 0.5, 0.5, 0.5, 0.52]), 5, 0.01)


def test_window_stop_ends_run_early(noisy):
    cfg = OptimizerConfig(method="hqca", max_iters=50, stop_mode="window", stop_window=2, stop_threshold=10.0)
    run = Optimizer(cfg, noisy, "gate2").run(ControlPulse.square(4, amplitude=5.0))
    assert len(run.records) == 3
    assert "improvement below" in run.stop_reason


def test_gradient_failure_aborts_with_record(noisy, monkeypatch):
    opt = Optimizer(OptimizerConfig(method="hqca", max_iters=3), noisy, "gate2")

    def broken(p, iteration):
        raise ValueError("gradient contains non-finite entries")

    monkeypatch.setattr(opt.estimator, "gradient", broken)
    run = opt.run(ControlPulse.square(4, amplitude=5.0))
    assert run.aborted
    assert run.records[-1].status == "aborted"
    assert np.isnan(run.records[-1].fidelity)
    assert run.final.index == 0
    with pytest.raises(RunAbortedError):
        run.raise_for_abort()


def test_non_finite_fidelity_aborts(noisy, monkeypatch):
    opt = Optimizer(OptimizerConfig(method="hqca", max_iters=3, stop_mode="fixed"), noisy, "gate2")
    real = opt.estimator.evaluate

    def flaky(p, iteration):
        return (float("nan"), 0.0) if iteration == 2 else real(p, iteration)

    monkeypatch.setattr(opt.estimator, "evaluate", flaky)
    run = opt.run(ControlPulse.square(4, amplitude=5.0))
    assert [r.status for r in run.records] == ["ok", "ok", "aborted"]
    assert run.final.index == 1
    assert run.stop_reason.startswith("aborted")


def test_events_are_published(noisy):
    bus = InProcessBus()
    events = []
    bus.subscribe(events.append)
    bus.subscribe(lambda e: 1 / 0)
    cfg = OptimizerConfig(method="hqca", max_iters=2, stop_mode="fixed")
    Optimizer(cfg, noisy, "gate2", bus, label="unit").run(ControlPulse.square(4, amplitude=5.0))
    kinds = [e["event"] for e in events]
    assert kinds == ["started", "iteration", "iteration", "iteration", "finished"]
    assert all(e["run"] == "unit" for e in events)


def test_grape_open_loop_records_no_experiments(quiet):
    cfg = OptimizerConfig(method="grape", max_iters=3, stop_mode="fixed")
    records = run_optimization(cfg, quiet, "gate2", ControlPulse.square(20, amplitude=5.0))
    assert all(r.cumulative_experiments == 0 for r in records)
    assert all(r.fidelity_std == 0.0 for r in records)


@pytest.mark.slow
def test_grape_reaches_high_fidelity_on_exact_model(spectrometer, radical):
    cfg = OptimizerConfig(method="grape", max_iters=200, stop_mode="fixed")
    records = run_optimization(cfg, spectrometer(radical), "gate2", ControlPulse.square(100, amplitude=5.0))
    assert records[-1].fidelity >= 0.99


@pytest.mark.slow
def test_hqca_improves_noisy_quality(spectrometer, radical, t130):
    spect = spectrometer(radical, transfer=t130, sigma=0.03, seed=9)
    cfg = OptimizerConfig(method="hqca", max_iters=40, stop_mode="fixed")
    records = run_optimization(cfg, spect, "gate2", ControlPulse.square(100, amplitude=5.0))
    assert records[-1].fidelity > records[0].fidelity + 0.3
