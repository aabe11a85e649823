"""
Run Artifacts

Collects every output of a campaign (JSONL history, CSV summary,
campaign.json, final pulses, convergence plot) and writes them in one
commit. Nothing reaches disk if rendering fails part-way.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from ..ui.plots import convergence_plot
from .campaign import CampaignResult, TrialOutcome

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "trial", "iteration", "fidelity", "fidelity_std", "gradient_norm", "learning_rate", "cumulative_experiments",
)


def _num(v: float) -> str:
    return repr(float(v))


def history_lines(outcomes: List[TrialOutcome], seed: int, config_hash: str) -> str:
    """One JSON object per IterationRecord, tagged with seed, config hash and trial."""
    lines = []
    for out in outcomes:
        for rec in out.run.records:
            row = {"seed": seed, "config_hash": config_hash, "trial": out.trial, "trial_seed": out.seed}
            row.update(rec.model_dump(mode="json"))
            lines.append(json.dumps(row, sort_keys=True))
    return "\n".join(lines) + "\n"


def summary_csv(outcomes: List[TrialOutcome], seed: int, config_hash: str) -> str:
    lines = [f"# seed={seed} config_hash={config_hash}", ",".join(SUMMARY_COLUMNS)]
    for out in outcomes:
        for rec in out.run.records:
            lines.append(",".join([
                str(out.trial), str(rec.index), _num(rec.fidelity), _num(rec.fidelity_std),
                _num(rec.gradient_norm), _num(rec.learning_rate), str(rec.cumulative_experiments),
            ]))
    return "\n".join(lines) + "\n"


class ArtifactSession:
    """
    Pending artifacts for one output directory.

    Used as a context manager: files are staged with :meth:`add` and written
    by :meth:`commit`; leaving the block with an exception discards them.
    """

    def __init__(self, out_dir: Union[str, Path], seed: int, config_hash: str):
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.config_hash = config_hash
        self._pending: Dict[str, str] = {}
        self._committed = False

    def add(self, name: str, content: str) -> None:
        self._pending[name] = content

    def add_campaign(self, result: CampaignResult, outcomes: List[TrialOutcome], title: Optional[str] = None) -> None:
        summary = summary_csv(outcomes, self.seed, self.config_hash)
        self.add("history.jsonl", history_lines(outcomes, self.seed, self.config_hash))
        self.add("summary.csv", summary)
        campaign = result.model_dump(mode="json")
        campaign["trials"] = [
            {"trial": o.trial, "seed": o.seed, "final_quality": o.final_quality,
             "iterations": len(o.run.records) - 1, "stop_reason": o.run.stop_reason}
            for o in outcomes
        ]
        self.add("campaign.json", json.dumps(campaign, indent=2, sort_keys=True) + "\n")
        for o in outcomes:
            header = f"# seed={self.seed} config_hash={self.config_hash} trial={o.trial}\n"
            self.add(f"pulses/trial_{o.trial:03d}.txt", header + o.run.final_pulse.to_text())
        self.add("convergence.svg", convergence_plot(summary, title or f"{result.label or 'run'} ({self.config_hash})"))

    def commit(self) -> List[Path]:
        """Write all staged files; returns their paths."""
        written = []
        for name, content in self._pending.items():
            path = self.out_dir / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content)
            written.append(path)
        self._committed = True
        self._pending.clear()
        logger.info("Wrote %d artifacts to %s", len(written), self.out_dir)
        return written

    def rollback(self) -> None:
        if not self._committed:
            self._pending.clear()

    def __enter__(self) -> "ArtifactSession":
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            self.rollback()
