"""Exception types shared across the package."""


class DistillError(Exception):
    """Base class for all distill-lab errors."""


class ConfigError(DistillError):
    """Invalid configuration: bad schedule bounds, malformed scene, unknown keys."""


class OracleError(DistillError):
    """A score-oracle query failed (transport, protocol, or unknown condition).

    ``slot`` carries the condition slot being queried when the failure occurred,
    so a failing step can be attributed to one of the four conditional queries.
    """

    def __init__(self, message: str, slot: str | None = None):
        super().__init__(message if slot is None else f"[{slot}] {message}")
        self.slot = slot


class SchemaError(DistillError):
    """A persisted run directory is missing files or has an unknown schema version."""
