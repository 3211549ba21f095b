"""Exception hierarchy for the chronograph package.

Everything raised on purpose derives from ChronographError so callers can
catch one type at the boundary.  The CLI maps subfamilies to exit codes:
data problems (bad logs, missing stores, refused overwrites) are distinct
from internal failures.
"""

from __future__ import annotations


class ChronographError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ChronographError):
    """A problem with user-supplied data or on-disk state."""


class InvalidEvent(DataError):
    """An event cannot be applied to the state it arrived at."""


class ParseError(DataError):
    """A text log line or config entry does not follow the format."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class UnsortedLog(DataError):
    """Event times in a log are not ascending."""


class OutOfOrderBatch(DataError):
    """An update batch starts before the end of the stored history."""


class RefuseOverwrite(DataError):
    """Target store already holds an index and --force was not given."""


class NotFound(DataError):
    """A requested key or record does not exist."""


class BackendIO(ChronographError):
    """The storage backend failed at the OS level."""


class CodecError(ChronographError):
    """A stored value cannot be decoded (bad magic, version, or payload)."""


class InfeasibleBalance(DataError):
    """Requested partition count cannot satisfy the balance bounds."""


class OutOfSpan(DataError):
    """A requested time lies outside an operand's valid span."""


class UnalignedOperands(DataError):
    """Two collections that must share member ids do not."""


class EmptySeries(DataError):
    """An aggregate was requested over a series with no points."""


class UnknownScript(DataError):
    """The named built-in analysis does not exist."""


class InconsistentDelta(ChronographError):
    """Incremental update drifted from the recomputed ground truth."""


class MemberComputeError(ChronographError):
    """A per-member function failed; carries the member id."""

    def __init__(self, member_id: int, cause: BaseException):
        self.member_id = member_id
        super().__init__(f"compute failed for member {member_id}: {cause!r}")
