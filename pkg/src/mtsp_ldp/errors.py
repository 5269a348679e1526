"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad schema mapping, bad generator spec, bad flags."""


class IngestError(ValueError):
    """A malformed input row. The message carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class ContractError(RuntimeError):
    """An operation was called on inputs that violate its stated contract."""


class BudgetViolation(RuntimeError):
    """A sliding window would spend more privacy budget than allowed.

    Raised by the ledger at record time. Every mechanism in this package is
    designed so that this is unreachable; seeing it means a bug.
    """


class QueryError(LookupError):
    """A query asked for releases that are not in the series."""

    def __init__(self, message: str, missing: list[int] | None = None):
        super().__init__(message)
        self.missing = missing or []
