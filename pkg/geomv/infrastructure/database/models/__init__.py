from sqlalchemy.orm import declarative_base

Base = declarative_base()

# Import models so Base.metadata knows every table
from geomv.infrastructure.database.models import journal_model  # noqa: F401,E402
