"""Service configuration and validation."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .retrieval import RetrievalConfig
from .terms import ExtractConfig

ENV_EMBEDDING_KEY = "GW_EMBEDDING_API_KEY"
ENV_LLM_KEY = "GW_LLM_API_KEY"
ENV_KG_TOKEN = "GW_KG_TOKEN"


@dataclass
class ServiceConfig:
    """Every tunable of the engine, with documented ranges.

    offline_mode=True (the default) runs the hashing embedder, the concept
    fixture graph, and the extractive answer path; no provider endpoint may
    be configured in that case.
    """

    data_dir: Path = field(default_factory=lambda: Path("data"))
    offline_mode: bool = True

    # retrieval
    k: int = 8
    alpha: float = 0.7
    score_floor: float = 0.05
    session_decay: float = 0.5
    max_probes: int = 8
    kg_depth: int = 1
    kg_decay: float = 0.5
    languages: tuple[str, ...] | None = None

    # synthesis
    token_budget: int = 2000

    # embedding
    dimension: int = 256
    seed: int = 1337
    batch_size: int = 64

    # extraction
    max_terms_per_query: int = 8
    max_terms_per_collection: int = 500

    # providers (online mode only)
    embedding_base_url: str | None = None
    embedding_model: str = "default-embedder"
    llm_base_url: str | None = None
    llm_model: str = "default-chat"
    term_extractor_url: str | None = None
    term_extractor_model: str = "default-terms"
    kg_endpoint: str | None = None

    # offline knowledge graph fixture (optional)
    kg_fixture: Path | None = None

    # replayed transcripts directory (testing / demo without network)
    transcripts_dir: Path | None = None

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if self.kg_fixture is not None:
            self.kg_fixture = Path(self.kg_fixture)
        if self.transcripts_dir is not None:
            self.transcripts_dir = Path(self.transcripts_dir)
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if not -1.0 <= self.score_floor <= 1.0:
            raise ConfigError("score_floor must be in [-1, 1]")
        if not 0.0 < self.session_decay <= 1.0:
            raise ConfigError("session_decay must be in (0, 1]")
        if self.max_probes < 1:
            raise ConfigError("max_probes must be >= 1")
        if self.kg_depth not in (0, 1, 2):
            raise ConfigError("kg_depth must be 0, 1, or 2")
        if not 0.0 < self.kg_decay <= 1.0:
            raise ConfigError("kg_decay must be in (0, 1]")
        if self.token_budget < 1:
            raise ConfigError("token_budget must be >= 1")
        if self.dimension < 8:
            raise ConfigError("dimension must be >= 8")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.offline_mode:
            configured = [
                name for name, value in (
                    ("embedding_base_url", self.embedding_base_url),
                    ("llm_base_url", self.llm_base_url),
                    ("term_extractor_url", self.term_extractor_url),
                    ("kg_endpoint", self.kg_endpoint),
                ) if value
            ]
            if configured:
                raise ConfigError(
                    "offline_mode=true must not configure network providers: "
                    + ", ".join(configured)
                )

    def extract_config(self) -> ExtractConfig:
        return ExtractConfig(
            max_terms_per_collection=self.max_terms_per_collection,
            max_terms_per_query=self.max_terms_per_query,
        )

    def retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(
            k=self.k,
            alpha=self.alpha,
            score_floor=self.score_floor,
            session_decay=self.session_decay,
            max_probes=self.max_probes,
            kg_depth=self.kg_depth,
            kg_decay=self.kg_decay,
            languages=self.languages,
            extract=self.extract_config(),
        )

    @staticmethod
    def embedding_api_key() -> str | None:
        return os.environ.get(ENV_EMBEDDING_KEY)

    @staticmethod
    def llm_api_key() -> str | None:
        return os.environ.get(ENV_LLM_KEY)

    @staticmethod
    def kg_auth_token() -> str | None:
        return os.environ.get(ENV_KG_TOKEN)
