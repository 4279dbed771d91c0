"""Exception hierarchy shared by all hypsel modules."""


class HypselError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HypselError):
    """A config value violates its documented constraints."""


class SchemaVersionError(HypselError):
    """A persisted file carries an unsupported schema version."""

    def __init__(self, found, expected):
        super().__init__(f"unsupported schema version {found!r}, expected {expected!r}")
        self.found = found
        self.expected = expected


class SchemaError(HypselError):
    """A persisted file is structurally invalid (truncated, bad magic, ...)."""


class ShapeError(HypselError):
    """An array argument has the wrong dimensions."""


class ValidationError(HypselError):
    """A runtime argument violates an operation precondition."""


class DecodeError(HypselError):
    """No complete decoding path exists for an utterance."""


class TrainingError(HypselError):
    """Training diverged or could not make progress."""


class NumericError(HypselError):
    """A numeric result is not finite."""
