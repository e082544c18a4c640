"""Exception hierarchy shared across the package.

Every error carries enough context (path, line, field, id) to print a
message that names the offending input.  ``exit_code`` is what the CLI
returns when the error escapes to the top level: 1 usage, 2 data,
3 runtime/provider.
"""

from __future__ import annotations


class CausaldgError(Exception):
    exit_code = 3


class UsageError(CausaldgError):
    exit_code = 1


class DataError(CausaldgError):
    """Bad input data (malformed files, invalid values, degenerate sets)."""

    exit_code = 2

    def __init__(self, message: str, *, path: str | None = None,
                 line: int | None = None, field: str | None = None,
                 item_id: str | None = None):
        parts = [message]
        if path is not None:
            parts.append(f"path={path}")
        if line is not None:
            parts.append(f"line={line}")
        if field is not None:
            parts.append(f"field={field}")
        if item_id is not None:
            parts.append(f"id={item_id}")
        super().__init__(" ".join(parts))
        self.path = path
        self.line = line
        self.field = field
        self.item_id = item_id


class MalformedLineError(DataError):
    pass


class UnknownLabelError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class MissingFieldError(DataError):
    pass


class SpanOutOfBoundsError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class LexiconValidationError(DataError):
    pass


class EmptyDistractorPoolError(DataError):
    pass


class MissingPredictionError(DataError):
    pass


# Model persistence errors: each failure mode is distinct so callers can
# tell a stale file from a corrupt one.

class ModelFileError(DataError):
    pass


class UnsupportedVersionError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


class TruncatedFileError(ModelFileError):
    pass


# Remote paraphrase provider errors (CLI exit code 3).

class ProviderError(CausaldgError):
    exit_code = 3


class AuthError(ProviderError):
    pass


class RetriesExhaustedError(ProviderError):
    pass


class EmptyCompletionError(ProviderError):
    pass


class MalformedResponseError(ProviderError):
    pass
