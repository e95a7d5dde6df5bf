"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class SchemaError(EngineError):
    """Input file violates the expected schema. Carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ClassificationError(EngineError):
    """A bad case could not be mapped to a question type."""


class GatewayError(EngineError):
    """Provider-side failure after retries were exhausted."""


class CassetteMissError(GatewayError):
    """Replay mode was asked for a request that was never recorded."""


class StateError(EngineError):
    """An operation was invoked in a state where it is not allowed."""


class ConfigError(EngineError):
    """A configuration value is out of its documented range."""
