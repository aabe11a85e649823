"""Experiment accounting for closed-loop methods."""

from pydantic import BaseModel, ConfigDict, Field


class ExperimentBudget(BaseModel):
    """Experiments charged for the last iteration and in total."""

    model_config = ConfigDict(frozen=True)

    experiments_per_iteration: int = Field(0, ge=0)
    cumulative: int = Field(0, ge=0)


def charge_budget(b: ExperimentBudget, N: int, M: int, P: int) -> ExperimentBudget:
    """
    Charge one full-gradient iteration: 4 N M P experiments.

    Args:
        b: Budget so far
        N: Number of driven spins
        M: Gradient components per channel (segments, or basis vectors)
        P: Experiments per fidelity measurement

    Returns:
        New budget; ``b`` is unchanged
    """
    spent = 4 * N * M * P
    return ExperimentBudget(experiments_per_iteration=spent, cumulative=b.cumulative + spent)


def charge_experiments(b: ExperimentBudget, count: int) -> ExperimentBudget:
    """Charge an arbitrary number of experiments (calibration steps)."""
    return ExperimentBudget(experiments_per_iteration=count, cumulative=b.cumulative + count)
