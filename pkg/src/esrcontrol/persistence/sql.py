"""
esrcontrol Persistence - SQL Backend

Campaign results in any database SQLAlchemy can reach, via sqlmodel. The
per-trial fidelities are stored as a JSON array.
"""

import json
import logging
from datetime import datetime, timezone
from typing import List

from sqlmodel import Field, Session, SQLModel, create_engine, select

from .base import ResultStore

logger = logging.getLogger(__name__)


class CampaignRow(SQLModel, table=True):
    __tablename__ = "campaign_results"

    config_hash: str = Field(primary_key=True)
    label: str = ""
    seed: int = 0
    final_fidelities: str = "[]"
    mean: float = 0.0
    std: float = 0.0
    runtime: float = 0.0
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))


class SQLStore(ResultStore):
    """Result store backed by a sqlmodel engine; tables are created on first use."""

    def __init__(self, url: str = "sqlite:///esrcontrol.db", echo: bool = False):
        self.url = url
        self.engine = create_engine(url, echo=echo)
        SQLModel.metadata.create_all(self.engine, tables=[CampaignRow.__table__])

    @staticmethod
    def _to_row(result) -> CampaignRow:
        return CampaignRow(
            config_hash=result.config_hash,
            label=result.label,
            seed=result.seed,
            final_fidelities=json.dumps(result.final_fidelities),
            mean=result.mean,
            std=result.std,
            runtime=result.runtime,
        )

    @staticmethod
    def _from_row(row: CampaignRow):
        from ..app.campaign import CampaignResult

        return CampaignResult(
            config_hash=row.config_hash,
            label=row.label,
            seed=row.seed,
            final_fidelities=json.loads(row.final_fidelities),
            runtime=row.runtime,
        )

    def save(self, result) -> bool:
        try:
            with Session(self.engine) as session:
                session.merge(self._to_row(result))
                session.commit()
            return True
        except Exception:
            logger.exception("Error saving campaign %s to %s", result.config_hash, self.url)
            return False

    def get(self, config_hash: str):
        with Session(self.engine) as session:
            row = session.get(CampaignRow, config_hash)
            return self._from_row(row) if row is not None else None

    def delete(self, config_hash: str) -> bool:
        with Session(self.engine) as session:
            row = session.get(CampaignRow, config_hash)
            if row is None:
                return False
            session.delete(row)
            session.commit()
            return True

    def all(self) -> List:
        with Session(self.engine) as session:
            rows = session.exec(select(CampaignRow).order_by(CampaignRow.created_at)).all()
            return [self._from_row(r) for r in rows]
