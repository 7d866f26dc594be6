"""Exception hierarchy shared across the package."""


class TabqError(Exception):
    """Base class for all package errors."""


# --- registry ---------------------------------------------------------------


class ParseError(TabqError):
    """Malformed input file. ``row`` is the 1-based data row, when known."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"{message} (row {row})")
        self.row = row


class DuplicateId(TabqError):
    """A table_id is already registered for a different source."""


class UnknownTable(TabqError):
    """Referenced table_id does not exist in the corpus."""


class EmptyText(TabqError):
    """Context text is empty after trimming."""


class EmptyTable(TabqError):
    """Operation requires a table with at least one row."""


# --- provider ---------------------------------------------------------------


class ProviderError(TabqError):
    """Base class for completion/embedding backend failures."""


class TransportError(ProviderError):
    """Network-level failure talking to a backend."""


class BackendError(ProviderError):
    """Backend returned an error response."""


class ExecutorError(ProviderError):
    """Batched execution failed. ``capacity=True`` marks out-of-capacity
    signals (OOM, 413, 429) that the adaptive scheduler reacts to by
    shrinking the batch size."""

    def __init__(self, message: str, capacity: bool = False):
        super().__init__(message)
        self.capacity = capacity


class CapacityFloor(ProviderError):
    """Capacity failure at the minimum allowed batch size."""


# --- indexer ----------------------------------------------------------------


class UnknownBlock(TabqError):
    """Referenced block is not present in the index."""


class DimensionMismatch(TabqError):
    """Query vector dimension differs from the index dimension."""


class StaleIndex(TabqError):
    """Index manifest was built against an older corpus version."""


# --- benchmark --------------------------------------------------------------


class TableNameLeak(TabqError):
    """Generated question still contains the table name after a retry."""


class StillLeaky(TabqError):
    """Question still echoes long verbatim source text after rephrase attempts."""


class SqlParseError(ParseError):
    """SQL text does not parse under the template grammar."""


# --- eval -------------------------------------------------------------------


class InvalidBenchmark(TabqError):
    """Benchmark input unusable (e.g. empty question list)."""
