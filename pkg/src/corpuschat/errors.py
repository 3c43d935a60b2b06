"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class MalformedManifest(EngineError):
    """Manifest file is unreadable, syntactically bad, or missing a required field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DuplicateDocId(EngineError):
    """Two manifest entries share a doc_id."""


class EmptyDocument(EngineError):
    """Document body has no non-whitespace content."""


class StoreWriteError(EngineError):
    """Fragment store could not be written."""


class ExtractorUnavailable(EngineError):
    """Term extraction provider could not be reached."""


class EmptyQuery(EngineError):
    """Query is empty after trimming."""


class KgUnavailable(EngineError):
    """Knowledge-graph endpoint could not be reached (distinct from a no-match result)."""


class MalformedFixture(EngineError):
    """Concept fixture file failed to parse or validate."""


class ProviderUnavailable(EngineError):
    """Embedding or LLM provider failed after retries."""

    def __init__(self, message: str, provider: str = "provider"):
        super().__init__(message)
        self.provider = provider


class DimensionMismatch(EngineError):
    """Vector dimension differs from the configured dimension."""


class EmptyText(EngineError):
    """Text produced no tokens, so no embedding vector exists for it."""


class EmptyIndex(EngineError):
    """Search was issued against an index with no entries."""


class UnknownDocId(EngineError):
    """A retrieval hit references a document with no known metadata."""


class BudgetTooSmall(EngineError):
    """Token budget cannot fit even the top cluster's header and best fragment."""


class CollectionNotIndexed(EngineError):
    """Ask was issued before the collection's vector index was built."""


class UnknownId(EngineError):
    """Referenced collection or session id does not exist."""


class IndexBusy(EngineError):
    """Collection is being re-indexed under an exclusive writer lock."""


class ConfigError(EngineError):
    """Service configuration value out of range or inconsistent."""
