"""Exception hierarchy.

Every error carries the exit code the CLI returns for it: 2 for invalid
configuration, 3 for bad input data, 4 for numerical failures.
"""

from typing import Iterable, Optional, Sequence


class GeomvError(Exception):
    exit_code: int = 1


# ---------- validation (exit 2) ----------


class ValidationError(GeomvError):
    exit_code = 2


class ManifestError(ValidationError):
    def __init__(self, message: str, problems: Optional[Sequence[str]] = None):
        self.problems = list(problems or [])
        detail = "; ".join(self.problems)
        super().__init__(f"{message}: {detail}" if detail else message)


class LatticeError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# ---------- data (exit 3) ----------


class DataError(GeomvError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message: str, line: Optional[int] = None, token: Optional[str] = None):
        self.line = line
        self.token = token
        where = []
        if line is not None:
            where.append(f"line {line}")
        if token is not None:
            where.append(f"token {token!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ShapeError(DataError):
    pass


class FormatError(DataError):
    pass


class OutOfExtentError(DataError):
    pass


class NoDataError(DataError):
    def __init__(self, cells: Iterable[tuple], day: Optional[int] = None):
        self.cells = [tuple(int(v) for v in c) for c in cells]
        self.day = day
        msg = f"nodata in cells {self.cells}"
        if day is not None:
            msg += f" on day {day}"
        super().__init__(msg)

    def on_day(self, day: int) -> "NoDataError":
        return NoDataError(self.cells, day=day)


class EmptyGroupError(DataError):
    pass


class GroupingError(DataError):
    pass


class PolarGuardError(DataError):
    pass


class MissingAdminError(DataError):
    def __init__(self, admin_id: str):
        self.admin_id = admin_id
        super().__init__(f"no polygon for admin unit {admin_id!r}")


class GeometryError(DataError):
    pass


class DisplacementError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class EmptySubsetError(DataError):
    pass


# ---------- numeric (exit 4) ----------


class NumericError(GeomvError):
    exit_code = 4


class CollinearityError(NumericError):
    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient in columns {self.columns}")


class ClusterError(NumericError):
    pass


class DegenerateFitError(NumericError):
    pass
