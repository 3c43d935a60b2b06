"""Unit-norm text embeddings with a deterministic offline fallback.

The fallback is seeded feature hashing: each token is hashed into one of D
buckets with a sign drawn from a second hash, weighted by its count, and
the bucket vector is L2-normalized. It is order-insensitive and a pure
function of (text, seed, D); it makes no semantic claim beyond shared
vocabulary producing shared buckets, which is exactly what the offline
tests need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import DimensionMismatch, EmptyText, ProviderUnavailable
from .providers import TransportError, with_retries
from .textutil import stable_hash64, tokenize

DEFAULT_DIMENSION = 256
DEFAULT_SEED = 1337
DEFAULT_BATCH_SIZE = 64


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    provider_id: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ValueError("embedding vector contains a non-finite value")
        if abs(float(np.linalg.norm(arr)) - 1.0) > 1e-6:
            raise ValueError("embedding vectors must be stored unit-normalized")

    @property
    def dimension(self) -> int:
        return len(self.values)


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        ...


class HashingEmbedder:
    """Offline feature-hashing provider."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = DEFAULT_SEED):
        self.dimension = dimension
        self.seed = seed
        self.provider_id = f"feathash-v1-d{dimension}-s{seed}"
        self._token_cache: dict[str, tuple[int, float]] = {}

    def _bucket(self, token: str) -> tuple[int, float]:
        cached = self._token_cache.get(token)
        if cached is None:
            index = stable_hash64(token, self.seed) % self.dimension
            sign = 1.0 if stable_hash64(token, self.seed, personal=b"sign") & 1 else -1.0
            cached = (index, sign)
            self._token_cache[token] = cached
        return cached

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        return [self._embed_one(text) for text in texts]

    def _embed_one(self, text: str) -> list[float]:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText(f"text {text[:40]!r} has no tokens to embed")
        vec = [0.0] * self.dimension
        for token in tokens:
            index, sign = self._bucket(token)
            vec[index] += sign
        norm = math.sqrt(sum(v * v for v in vec))
        if norm == 0.0:
            raise EmptyText("token signs cancelled to a zero vector")
        return [v / norm for v in vec]


class HttpEmbeddingProvider:
    """Remote provider over the JSON protocol.

    Request ``{"model_id", "texts"}`` to ``{base_url}/embed``; response
    ``{"dimension", "vectors"}``. Transient failures retry with exponential
    backoff before surfacing ProviderUnavailable.
    """

    def __init__(self, base_url: str, model_id: str, transport, dimension: int,
                 attempts: int = 3, sleep=None):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.transport = transport
        self.dimension = dimension
        self.provider_id = f"http:{model_id}"
        self.attempts = attempts
        self._sleep = sleep

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        payload = {"model_id": self.model_id, "texts": texts}
        kwargs = {"attempts": self.attempts}
        if self._sleep is not None:
            kwargs["sleep"] = self._sleep
        try:
            response = with_retries(
                lambda: self.transport.post_json(f"{self.base_url}/embed", payload), **kwargs
            )
        except TransportError as exc:
            raise ProviderUnavailable(str(exc), provider="embedding") from exc
        if response.get("dimension") != self.dimension:
            raise DimensionMismatch(
                f"provider returned dimension {response.get('dimension')}, "
                f"expected {self.dimension}"
            )
        vectors = response.get("vectors", [])
        if len(vectors) != len(texts):
            raise ProviderUnavailable(
                f"provider returned {len(vectors)} vectors for {len(texts)} texts",
                provider="embedding",
            )
        return [[float(v) for v in vec] for vec in vectors]


def _normalize(values: list[float]) -> tuple[float, ...]:
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:
        raise EmptyText("provider returned a zero vector")
    return tuple(v / norm for v in values)


def embed_texts(
    texts: list[str],
    provider: EmbeddingProvider,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[EmbeddingVector]:
    """Embed texts in input order; every output vector is unit-norm.

    Raises EmptyText for blank inputs, DimensionMismatch when the provider
    strays from its declared dimension, ProviderUnavailable on transport
    failure.
    """
    for text in texts:
        if not text or not text.strip():
            raise EmptyText("cannot embed an empty string")
    out: list[EmbeddingVector] = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        for raw in provider.embed_batch(batch):
            if len(raw) != provider.dimension:
                raise DimensionMismatch(
                    f"vector length {len(raw)} != provider dimension {provider.dimension}"
                )
            out.append(EmbeddingVector(values=_normalize(raw), provider_id=provider.provider_id))
    return out


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity; equals the dot product because vectors are unit-norm."""
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"dimensions differ: {a.dimension} vs {b.dimension}")
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot))
