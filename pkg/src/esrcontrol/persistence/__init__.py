"""
esrcontrol Persistence Module

Stores for campaign results: an in-memory singleton by default, or an SQL
database selected by URL.
"""

from typing import Optional

from .base import ResultStore
from .memory import MemoryStore, get_memory_store
from .sql import CampaignRow, SQLStore


def get_store(url: Optional[str] = None) -> ResultStore:
    """SQLStore for a database URL, otherwise the shared MemoryStore."""
    if url:
        return SQLStore(url)
    return get_memory_store()


__all__ = [
    "ResultStore",
    "MemoryStore",
    "get_memory_store",
    "SQLStore",
    "CampaignRow",
    "get_store",
]
