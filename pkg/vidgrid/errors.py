"""Exception hierarchy shared by every vidgrid module.

Each error keeps a ``context`` dict next to its message so the command line and the
MCP server can report failures as structured records instead of bare strings.
"""

from typing import Any


class VidgridError(Exception):
    """Base class for all vidgrid failures."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: dict[str, Any] = dict(context)

    def with_context(self, **context: Any) -> "VidgridError":
        """Add context keys without overwriting ones set closer to the failure."""
        for key, value in context.items():
            self.context.setdefault(key, value)
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": {k: _plain(v) for k, v in self.context.items()},
        }

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class InvalidInputError(VidgridError, ValueError):
    """A precondition on an argument does not hold."""


class ConfigError(InvalidInputError):
    """The pipeline config could not be parsed or validated."""


class FormatError(VidgridError):
    """A frame, depth map or manifest file is unreadable or malformed."""


class DepthValueError(FormatError):
    """A depth map holds a non-finite or non-positive value."""


class ManifestIncompleteError(FormatError):
    """A manifest references cell files that do not exist."""


class BackendError(VidgridError):
    """A denoiser backend failed to produce an estimate."""


class TransportError(BackendError):
    """The external backend process died, hung, or closed its streams."""


class ProtocolError(BackendError):
    """The external backend sent a message that violates the wire protocol."""


class StageError(VidgridError):
    """A pipeline stage failed; wraps the underlying error with grid context."""


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return str(value)
