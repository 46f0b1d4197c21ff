"""Exception types shared across the pipeline."""


class JumpcastError(Exception):
    """Base class for all library errors."""


# --- ingestion ---

class MalformedRow(JumpcastError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class OrderViolation(JumpcastError):
    """Timestamps out of order, duplicated, or not hour-aligned."""


class EmptyFile(JumpcastError):
    pass


class GapTooLarge(JumpcastError):
    """Consecutive months are missing, or miss more hours than allowed."""


# --- features ---

class NonPositivePrice(JumpcastError):
    pass


class WindowExceedsSeries(JumpcastError):
    pass


class ZeroVariance(JumpcastError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} has zero variance")
        self.column = column


# --- regression ---

class EmptyInput(JumpcastError):
    pass


class WidthMismatch(JumpcastError):
    pass


class NonFinite(JumpcastError):
    """A computation produced inf/nan where a finite value is required."""


# --- garch ---

class TooFewObservations(JumpcastError):
    pass


# --- backtest ---

class InsufficientMonths(JumpcastError):
    pass


class EmptyEvaluation(JumpcastError):
    pass


class UnknownTermId(JumpcastError):
    def __init__(self, term: str, known: tuple):
        super().__init__(f"unknown term {term!r}; expected one of {', '.join(known)}")
        self.term = term
