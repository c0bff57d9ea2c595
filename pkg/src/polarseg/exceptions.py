"""Error types shared across the package.

The CLI maps these (plus the builtin file errors) to exit code 1; anything
else is treated as an internal error and exits with code 2.
"""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class EmptyMaskError(ValueError):
    """An operation that needs foreground pixels received none (or a degenerate region)."""


class InvalidStateError(RuntimeError):
    """An object was used in a way its current state does not allow."""


class IngestionError(RuntimeError):
    """A dataset directory does not follow the documented layout."""


class CheckpointMismatchError(RuntimeError):
    """A checkpoint is incompatible with the model or config it is applied to."""


USER_ERRORS = (
    InvalidArgumentError,
    EmptyMaskError,
    InvalidStateError,
    IngestionError,
    CheckpointMismatchError,
    FileNotFoundError,
    NotADirectoryError,
)
