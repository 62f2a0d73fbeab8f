class EgoClusterError(Exception):
    """Base class for hard failures raised by this package."""


class IngestError(EgoClusterError):
    pass


class SchemaError(EgoClusterError):
    """A file does not match its expected layout; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class OracleGuardError(EgoClusterError):
    pass


class EgoClusterWarning(UserWarning):
    pass
