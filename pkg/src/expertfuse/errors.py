"""Exception hierarchy shared by all expertfuse modules.

Every exception carries an ``exit_code`` so the CLI can map failures to
stable, machine-checkable process exit statuses (see README).
"""

from __future__ import annotations


class ExpertFuseError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class MalformedRecord(ExpertFuseError):
    """A dataset line or record is structurally or numerically invalid."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


class SchemaMismatch(ExpertFuseError):
    """Data does not match the declared schema (expert count, dims, classes)."""

    exit_code = 3


class DuplicateId(ExpertFuseError):
    """Two records in one dataset share the same id."""

    exit_code = 4


class IoFailure(ExpertFuseError):
    """An underlying filesystem operation failed."""

    exit_code = 5


class InvalidConfig(ExpertFuseError):
    """A configuration object violates its invariants."""

    exit_code = 6


class NonFiniteLoss(ExpertFuseError):
    """Training diverged: the loss or a parameter became NaN/infinite."""

    exit_code = 7


class EmptyDataset(ExpertFuseError):
    """An operation requiring records was given none."""

    exit_code = 8


class NotProbabilityOutputs(ExpertFuseError):
    """An operation requiring probability-vector outputs got something else."""

    exit_code = 9


class InsufficientNeighbors(ExpertFuseError):
    """The validation set is too small for the requested neighborhood."""

    exit_code = 10


class MissingFuser(ExpertFuseError):
    """A fuser bank has no model trained for the requested expert subset."""

    exit_code = 11


class TooManyExperts(ExpertFuseError):
    """Exhaustive subset enumeration was requested above the size guard."""

    exit_code = 12


class InvalidK(ExpertFuseError):
    """An information-theoretic bound needs at least three experts."""

    exit_code = 13


class UnknownStrategy(ExpertFuseError):
    """A manifest or CLI invocation referenced a strategy that does not exist."""

    exit_code = 14
