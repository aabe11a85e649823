"""
esrcontrol Persistence - Base Classes

Abstract interface for campaign result stores. Results are keyed by the
config hash, so an identical experiment is never run twice by a sweep.
"""

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, List, Optional

if TYPE_CHECKING:
    from ..app.campaign import CampaignResult


class ResultStore(ABC):
    """Storage backend for CampaignResult records."""

    @abstractmethod
    def save(self, result: "CampaignResult") -> bool:
        """
        Save a campaign result, replacing any with the same config hash.

        Returns:
            True if the save succeeded
        """

    @abstractmethod
    def get(self, config_hash: str) -> Optional["CampaignResult"]:
        """Stored result for ``config_hash``, or None."""

    @abstractmethod
    def delete(self, config_hash: str) -> bool:
        """Delete a result; True if one existed."""

    @abstractmethod
    def all(self) -> List["CampaignResult"]:
        """Every stored result."""

    def exists(self, config_hash: str) -> bool:
        return self.get(config_hash) is not None
