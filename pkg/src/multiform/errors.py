"""Shared exception types."""


class MultiformError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MultiformError):
    """Invalid configuration. Carries one message per offending path."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class FixtureError(MultiformError):
    """A scripted fixture or ground-truth file failed to parse."""


class BackendError(MultiformError):
    """A detector or classifier backend failed (load or inference)."""


class ShapeMismatchError(BackendError):
    """A model's tensor layout does not match the documented contract."""


class InvalidDetectionError(MultiformError):
    """A box degenerated (empty after clamping to the image)."""


class OutOfOrderFrameError(MultiformError):
    """A stream delivered a frame index at or before the last one seen."""


class ProtocolError(MultiformError):
    """Malformed data on the raw frame byte protocol."""
