import json

import pytest

from esrcontrol.app.campaign import run_campaign
from esrcontrol.app.config import config_hash, parse_config
from esrcontrol.app.recorder import SUMMARY_COLUMNS, ArtifactSession, history_lines, summary_csv
from esrcontrol.core.pulses import ControlPulse


@pytest.fixture
def campaign_run(tiny_config_text):
    cfg = parse_config(tiny_config_text)
    result, outcomes = run_campaign(cfg, label="tiny")
    return cfg, config_hash(cfg), result, outcomes


def test_history_has_one_line_per_record(campaign_run):
    cfg, chash, _, outcomes = campaign_run
    lines = history_lines(outcomes, cfg.seed, chash).splitlines()
    assert len(lines) == sum(len(o.run.records) for o in outcomes)
    first = json.loads(lines[0])
    assert first["seed"] == cfg.seed
    assert first["config_hash"] == chash
    assert first["trial"] == 0
    assert first["index"] == 0
    assert {"fidelity", "fidelity_std", "gradient_norm", "learning_rate", "cumulative_experiments"} <= set(first)


def test_summary_header(campaign_run):
    cfg, chash, _, outcomes = campaign_run
    lines = summary_csv(outcomes, cfg.seed, chash).splitlines()
    assert lines[0] == f"# seed={cfg.seed} config_hash={chash}"
    assert lines[1] == ",".join(SUMMARY_COLUMNS)
    assert len(lines) == 2 + sum(len(o.run.records) for o in outcomes)


def test_commit_writes_all_artifacts(tmp_path, campaign_run):
    cfg, chash, result, outcomes = campaign_run
    out = tmp_path / "run"
    with ArtifactSession(out, cfg.seed, chash) as session:
        session.add_campaign(result, outcomes)
        written = session.commit()
    names = {p.relative_to(out).as_posix() for p in written}
    assert names == {
        "history.jsonl", "summary.csv", "campaign.json", "convergence.svg",
        "pulses/trial_000.txt", "pulses/trial_001.txt",
    }
    saved = json.loads((out / "campaign.json").read_text())
    assert saved["final_fidelities"] == result.final_fidelities
    assert [t["trial"] for t in saved["trials"]] == [0, 1]
    assert (out / "convergence.svg").read_text().startswith("<?xml")

    pulse = ControlPulse.from_text((out / "pulses" / "trial_001.txt").read_text())
    assert pulse.ux.tolist() == outcomes[1].run.final_pulse.ux.tolist()
    assert pulse.uy.tolist() == outcomes[1].run.final_pulse.uy.tolist()


def test_exception_discards_staged_artifacts(tmp_path, campaign_run):
    cfg, chash, result, outcomes = campaign_run
    out = tmp_path / "run"
    with pytest.raises(RuntimeError):
        with ArtifactSession(out, cfg.seed, chash) as session:
            session.add_campaign(result, outcomes)
            raise RuntimeError("rendering failed")
    assert not out.exists()


def test_rerun_produces_identical_history(tmp_path, campaign_run):
    cfg, chash, _, outcomes = campaign_run
    _, again = run_campaign(cfg, label="tiny")
    assert history_lines(again, cfg.seed, chash) == history_lines(outcomes, cfg.seed, chash)
