"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class LLMFactorError(Exception):
    """Base class for all package errors."""


class InsufficientHistory(LLMFactorError):
    pass


class EmptyEvaluation(LLMFactorError):
    pass


class ConfigError(LLMFactorError):
    pass


class TemplateError(LLMFactorError):
    pass


class ParseFailure(LLMFactorError):
    """Raised when an LLM (or classifier) response cannot be interpreted."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class RegistryFormatError(LLMFactorError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IngestError(LLMFactorError):
    def __init__(self, path, reason: str = ""):
        self.path = path
        super().__init__(f"{path}: {reason}" if reason else str(path))


class AlignmentError(LLMFactorError):
    def __init__(self, stock: str, date, reason: str = "date-misaligned price row"):
        self.stock = stock
        self.date = date
        super().__init__(f"{stock} @ {date}: {reason}")


class BackendError(LLMFactorError):
    def __init__(self, reason: str, status: int | None = None, attempts: int = 0):
        self.status = status
        self.attempts = attempts
        detail = reason
        if status is not None:
            detail += f" (status {status})"
        if attempts:
            detail += f" after {attempts} attempt(s)"
        super().__init__(detail)


class EmptyTimeline(LLMFactorError):
    pass
