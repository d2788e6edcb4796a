from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional


@dataclass(frozen=True)
class JournalRecord:
    task_id: str
    seq: int
    status: str
    payload: Dict[str, Any]
    error: Optional[str] = None


class JournalRepository(ABC):
    @abstractmethod
    def completed(self) -> Dict[str, JournalRecord]:
        """Every recorded task, keyed by task_id"""

    @abstractmethod
    def record_many(self, records: Iterable[JournalRecord]) -> None:
        """Persist a batch of finished tasks in one transaction"""

    @abstractmethod
    def count(self) -> int:
        """Number of recorded tasks"""
