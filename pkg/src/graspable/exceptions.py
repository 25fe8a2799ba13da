"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class GraspableError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 4
    stage: str | None = None

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class StageFailure(GraspableError):
    """An unexpected error escaped a pipeline stage."""


class StorageError(GraspableError):
    """Reading or writing a file failed."""

    exit_code = 3


def tag_stage(exc: BaseException, stage: str) -> GraspableError:
    """Attach the failing stage to ``exc``, wrapping foreign exceptions."""
    if isinstance(exc, OSError):
        where = f": {exc.filename}" if exc.filename else ""
        wrapped = StorageError(f"{exc.strerror or exc}{where}")
        wrapped.__cause__ = exc
        exc = wrapped
    elif not isinstance(exc, GraspableError):
        wrapped = StageFailure(f"{type(exc).__name__}: {exc}")
        wrapped.__cause__ = exc
        exc = wrapped
    if exc.stage is None:
        exc.stage = stage
    return exc


class ValidationError(GraspableError, ValueError):
    """A parameter or configuration value violates its precondition."""

    exit_code = 2


class CloudParseError(GraspableError):
    """Malformed point-cloud bytes.

    ``line`` is 1-based for text formats, ``offset`` is a byte offset for
    binary payloads. Either may be None when not applicable.
    """

    exit_code = 3

    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.offset = offset


class UnsupportedFormatError(GraspableError):
    exit_code = 3


class InsufficientDataError(GraspableError):
    """Too few usable points or cells to continue."""


class DegenerateGeometryError(GraspableError):
    """Collinear or otherwise rank-deficient geometry."""
