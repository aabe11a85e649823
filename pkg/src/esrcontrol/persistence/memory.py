"""
esrcontrol Persistence - Memory Backend

Process-wide in-memory store; the default when no database URL is given.
"""

import logging
from typing import TYPE_CHECKING, Dict, List, Optional

from .base import ResultStore

if TYPE_CHECKING:
    from ..app.campaign import CampaignResult

logger = logging.getLogger(__name__)


class MemoryStore(ResultStore):
    """
    In-memory result store (Singleton).

    Data is lost when the process exits.
    """

    _instance = None
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not self._initialized:
            self._data: Dict[str, "CampaignResult"] = {}
            MemoryStore._initialized = True

    def save(self, result: "CampaignResult") -> bool:
        self._data[result.config_hash] = result
        logger.debug("Stored campaign %s in memory", result.config_hash)
        return True

    def get(self, config_hash: str) -> Optional["CampaignResult"]:
        return self._data.get(config_hash)

    def delete(self, config_hash: str) -> bool:
        return self._data.pop(config_hash, None) is not None

    def all(self) -> List["CampaignResult"]:
        return list(self._data.values())

    def clear(self) -> None:
        self._data.clear()


def get_memory_store() -> MemoryStore:
    return MemoryStore()
