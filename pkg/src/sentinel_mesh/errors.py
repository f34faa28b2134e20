"""Exception types shared across the library."""


class SentinelMeshError(Exception):
    """Base class for all library errors."""


class DomainError(SentinelMeshError, ValueError):
    """An operation was called with arguments outside its domain."""


class ConfigError(SentinelMeshError, ValueError):
    """Invalid configuration: bad parameters, duplicate ids, malformed files."""


class ProtocolOrderError(SentinelMeshError):
    """A protocol operation was invoked out of state-machine order."""


class UnreachableError(SentinelMeshError):
    """Two parties have no topology link between them."""


class DemodulationError(SentinelMeshError, ValueError):
    """A waveform contains a symbol energy outside the configured alphabet."""
