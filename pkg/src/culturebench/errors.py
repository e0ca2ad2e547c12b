"""Exception taxonomy shared across the toolkit."""
from __future__ import annotations


class CultureBenchError(Exception):
    """Base class for all toolkit errors."""


class PreconditionError(CultureBenchError):
    """An operation was called with arguments that violate its contract."""


class SchemaParseError(CultureBenchError):
    """A schema file could not be parsed into nodes."""


class SchemaValidationError(CultureBenchError):
    """A schema parsed but violates a structural invariant."""


class NodeNotFoundError(CultureBenchError):
    """A node id (or name) does not resolve in the schema."""


class ProviderError(CultureBenchError):
    """Base class for provider transport failures."""


class ProviderAuthError(ProviderError):
    """Authentication was rejected; never retried."""


class ProviderRateLimitError(ProviderError):
    """The provider refused the call for rate reasons and retries ran out."""


class ProviderTimeoutError(ProviderError):
    """The call exceeded its timeout after retries."""


class ProviderTransportError(ProviderError):
    """Generic transport failure after retries."""


class EmbeddingItemError(ProviderError):
    """One input text could not be embedded; carries its index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"text[{index}]: {message}")
        self.index = index


class ParseFailure(CultureBenchError):
    """Structured model output could not be parsed."""


class SamplingError(CultureBenchError):
    """A sampling scope holds no eligible instances."""


class StageError(CultureBenchError):
    """A pipeline stage failed as a whole."""


class MetricUndefinedError(CultureBenchError):
    """A metric was requested over an empty record set."""


class IntegrityError(CultureBenchError):
    """Cross-artifact references do not line up (mixed manifests, missing ids)."""


class ConfigError(CultureBenchError):
    """The toolkit configuration is missing, malformed, or inconsistent."""
