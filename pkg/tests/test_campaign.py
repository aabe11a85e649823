import numpy as np
import pytest

from esrcontrol.app import campaign
from esrcontrol.app.bus import InProcessBus
from esrcontrol.app.campaign import (
    apply_method,
    apply_sweep_value,
    final_quality,
    run_campaign,
    sweep,
    trial_seed,
)
from esrcontrol.app.config import config_hash, parse_config
from esrcontrol.app.recorder import history_lines
from esrcontrol.core.pulses import BasisKind
from esrcontrol.persistence import get_memory_store


@pytest.fixture
def tiny(tiny_config_text):
    return parse_config(tiny_config_text)


def test_trial_seeds_are_deterministic_and_distinct():
    seeds = [trial_seed(2024, t) for t in range(10)]
    assert seeds == [trial_seed(2024, t) for t in range(10)]
    assert len(set(seeds)) == 10
    assert trial_seed(2025, 0) != seeds[0]


def test_campaign_statistics(tiny):
    result, outcomes = run_campaign(tiny, label="tiny")
    assert result.trials == 2
    assert [o.trial for o in outcomes] == [0, 1]
    assert result.final_fidelities == [o.final_quality for o in outcomes]
    assert result.mean == pytest.approx(np.mean(result.final_fidelities))
    assert result.std == pytest.approx(np.std(result.final_fidelities, ddof=1))
    assert result.config_hash == config_hash(tiny)
    for o in outcomes:
        assert o.final_quality == pytest.approx(final_quality(tiny, o.run, o.seed))
        assert len(o.run.records) == 3


def test_campaign_is_reproducible(tiny):
    first, a = run_campaign(tiny)
    second, b = run_campaign(tiny)
    assert first.final_fidelities == second.final_fidelities
    assert history_lines(a, tiny.seed, "h") == history_lines(b, tiny.seed, "h")


def test_single_trial_has_zero_std(tiny):
    result, _ = run_campaign(tiny.model_copy(update={"trials": 1}))
    assert result.std == 0.0


def test_campaign_publishes_trial_events(tiny):
    bus = InProcessBus()
    events = []
    bus.subscribe(events.append)
    run_campaign(tiny, bus, label="tiny")
    trials = [e for e in events if e["event"] == "trial"]
    assert [e["trial"] for e in trials] == [0, 1]


@pytest.mark.slow
def test_worker_processes_match_serial_run(tiny):
    serial, _ = run_campaign(tiny)
    parallel, _ = run_campaign(tiny.model_copy(update={"threads": 2}))
    assert parallel.final_fidelities == serial.final_fidelities


@pytest.mark.parametrize("label, method, field, kind", [
    ("fd-slepian", "fd", "basis", BasisKind.SLEPIAN),
    ("fd-linear", "fd", "basis", BasisKind.LINEAR_HADAMARD),
    ("grape-slepian", "grape", "grape_basis", BasisKind.SLEPIAN),
])
def test_apply_method(tiny, label, method, field, kind):
    cfg = apply_method(tiny, label)
    assert cfg.optimizer.method == method
    assert getattr(cfg.optimizer, field).kind == kind


def test_apply_method_plain_labels(tiny):
    assert apply_method(tiny, "hqca").optimizer.method == "hqca"
    assert apply_method(tiny, "grape").optimizer.grape_basis is None
    with pytest.raises(ValueError):
        apply_method(tiny, "spsa")


def test_apply_sweep_values(tiny):
    assert apply_sweep_value(tiny, "sigma", "0.05").measurement.sigma == 0.05
    shaped = apply_sweep_value(tiny, "transfer_fwhm", 70)
    assert shaped.transfer.kind == "measured_like"
    assert shaped.transfer.fwhm == 70.0
    assert apply_sweep_value(tiny, "basis", "slepian").optimizer.basis.kind == BasisKind.SLEPIAN
    assert config_hash(shaped) != config_hash(tiny)


@pytest.mark.parametrize("variable, values, methods", [
    ("temperature", ["1"], None),
    ("sigma", [], None),
    ("sigma", ["0.01"], ["hqca", "adam"]),
])
def test_sweep_rejects_bad_requests(tiny, variable, values, methods):
    with pytest.raises(ValueError):
        sweep(tiny, variable, values, methods)


def test_sweep_fills_store_and_reuses_cells(tiny, monkeypatch):
    cfg = tiny.model_copy(update={"trials": 1})
    store = get_memory_store()
    table = sweep(cfg, "sigma", ["0.0", "0.03"], ["hqca", "fd-linear"], store=store)
    assert len(table.cells) == 4
    assert len(store.all()) == 4
    csv = table.to_csv().splitlines()
    assert csv[0] == "sigma,method,mean,std,trials,config_hash"
    assert len(csv) == 5

    def fail(*args, **kwargs):
        raise AssertionError("stored cells must not be recomputed")

    monkeypatch.setattr(campaign, "run_campaign", fail)
    again = sweep(cfg, "sigma", ["0.0", "0.03"], ["hqca", "fd-linear"], store=store)
    assert again.cell("0.03", "fd-linear") == table.cell("0.03", "fd-linear")


def test_method_sweep_uses_configured_column(tiny):
    table = sweep(tiny.model_copy(update={"trials": 1}), "method", ["hqca", "grape"])
    assert table.methods == ["configured"]
    assert table.cell("grape", "configured").trials == 1
