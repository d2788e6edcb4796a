from pathlib import Path
from typing import Union

from sqlalchemy import create_engine, event
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker

from geomv.config import settings
from geomv.infrastructure.database.models import Base


def journal_engine(path: Union[str, Path]) -> Engine:
    """SQLite engine for a run journal; tables are created on first use."""
    engine = create_engine(f"sqlite:///{Path(path)}", echo=settings.JOURNAL_ECHO, future=True)

    @event.listens_for(engine, "connect")
    def _pragmas(dbapi_connection, _record):
        # single writer; WAL keeps readers of a finished run unblocked
        cursor = dbapi_connection.cursor()
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.execute("PRAGMA synchronous=NORMAL")
        cursor.close()

    Base.metadata.create_all(engine)
    return engine


def session_factory(engine: Engine) -> sessionmaker:
    return sessionmaker(engine, expire_on_commit=False, future=True)
