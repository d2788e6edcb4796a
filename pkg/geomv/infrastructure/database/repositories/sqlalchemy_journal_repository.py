from typing import Dict, Iterable

from sqlalchemy import func, select
from sqlalchemy.orm import sessionmaker

from geomv.application.interfaces.repositories.journal_repository import JournalRecord, JournalRepository
from geomv.infrastructure.database.models.journal_model import JournalEntry


class SQLAlchemyJournalRepository(JournalRepository):
    def __init__(self, sessions: sessionmaker):
        self.sessions = sessions

    def completed(self) -> Dict[str, JournalRecord]:
        with self.sessions() as session:
            rows = session.execute(select(JournalEntry).order_by(JournalEntry.seq)).scalars().all()
            return {
                row.task_id: JournalRecord(
                    task_id=row.task_id, seq=row.seq, status=row.status, payload=row.payload, error=row.error
                )
                for row in rows
            }

    def record_many(self, records: Iterable[JournalRecord]) -> None:
        with self.sessions.begin() as session:
            for record in records:
                session.merge(
                    JournalEntry(
                        task_id=record.task_id,
                        seq=record.seq,
                        status=record.status,
                        payload=record.payload,
                        error=record.error,
                    )
                )

    def count(self) -> int:
        with self.sessions() as session:
            return int(session.execute(select(func.count()).select_from(JournalEntry)).scalar_one())
