from sqlalchemy import Column, DateTime, Integer, JSON, String, Text
from sqlalchemy.sql import func

from geomv.infrastructure.database.models import Base


class JournalEntry(Base):
    __tablename__ = "journal"

    task_id = Column(String(16), primary_key=True)
    seq = Column(Integer, nullable=False, index=True)
    status = Column(String(10), nullable=False)
    payload = Column(JSON, nullable=False)
    error = Column(Text, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now(), nullable=False)
