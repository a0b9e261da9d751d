"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class SpaceError(EngineError):
    """Invalid attribute-space definition (duplicate name, empty domain, bad class)."""


class RegistryError(EngineError):
    """Invalid subject/object registration or credential derivation."""


class HistoryError(EngineError):
    """Ledger invariant violation (non-monotone sequence numbers)."""


class StateError(EngineError):
    """Corrupt or incompatible persisted state."""


class EncodingError(EngineError):
    """Credential contains bytes reserved by the canonical encoding."""


class ForgedCredentialError(EngineError):
    """Signature verification failed for a presented credential."""


class InvalidSubjectSpaceError(EngineError):
    """A credential resolves to an empty subject space."""


class EmptyCohortError(EngineError):
    """No subject holds at least t attributes."""


class WorkloadError(EngineError):
    """Bad workload parameters or files."""


class BenchError(EngineError):
    """Benchmark harness misuse (empty stream, unknown variant)."""
