"""Exception types shared across the package.

Every error that callers are expected to handle derives from
:class:`ClozeSelectError`.  File/format problems additionally derive from
:class:`DataError` so the CLI can map them onto a dedicated exit code.
"""

from __future__ import annotations


class ClozeSelectError(Exception):
    """Base class for all package errors."""


class DataError(ClozeSelectError):
    """Problems with user-supplied files or data (CLI exit code 2)."""


# --- embedding file container -------------------------------------------------

class MagicMismatch(DataError):
    pass


class VersionUnsupported(DataError):
    pass


class HeaderMalformed(DataError):
    pass


class SizeMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    """A row contains NaN or +/-inf; carries the first offending row index."""

    def __init__(self, row: int, message: str = ""):
        self.row = row
        super().__init__(message or f"non-finite value in row {row}")


class DuplicateId(DataError):
    pass


class IoFailure(DataError):
    pass


class MalformedLine(DataError):
    """Bad JSONL line; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str = ""):
        self.lineno = lineno
        super().__init__(message or f"malformed line {lineno}")


# --- geometry -----------------------------------------------------------------

class ZeroNormVector(ClozeSelectError):
    pass


class DimensionTooLarge(ClozeSelectError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateRow(DataError):
    """Row whose pre-normalization norm is below 1e-12; names the item."""


# --- clustering ---------------------------------------------------------------

class KTooLarge(ClozeSelectError):
    pass


class IndexOutOfRange(ClozeSelectError):
    pass


class EmptyCluster(ClozeSelectError):
    pass


class SingleCluster(ClozeSelectError):
    pass


class NoMixedCluster(DataError):
    """Refinement found no cluster containing both tokens and instances."""


# --- selection loop -----------------------------------------------------------

class IneligibleCluster(ClozeSelectError):
    pass


class NoEligibleCluster(ClozeSelectError):
    pass


class NoUnlabeledInstance(ClozeSelectError):
    pass


class ProviderFailure(ClozeSelectError):
    """Label provider raised, or returned a class outside the label space."""


# --- evaluation ---------------------------------------------------------------

class MissingClassToken(ClozeSelectError):
    pass


class UnknownGoldLabel(DataError):
    pass


# --- synthetic ----------------------------------------------------------------

class InfeasibleSpec(ClozeSelectError):
    pass


# --- CLI / orchestration ------------------------------------------------------

class MissingOracleLabel(DataError):
    pass
