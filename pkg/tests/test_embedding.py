from __future__ import annotations

import hashlib
import math
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpuschat.embedding import (
    EmbeddingVector,
    HashingEmbedder,
    HttpEmbeddingProvider,
    cosine,
    embed_texts,
)
from corpuschat.errors import DimensionMismatch, EmptyText, ProviderUnavailable
from corpuschat.providers import RecordingTransport, ReplayTransport, TransportError


def _one_hot(i: int, dim: int = 8, sign: float = 1.0) -> EmbeddingVector:
    values = [0.0] * dim
    values[i] = sign
    return EmbeddingVector(values=tuple(values), provider_id="test")


def _oracle_vector(text: str, seed: int, dim: int) -> list[float]:
    """Independent re-derivation of the hashing scheme from its definition."""
    key = seed.to_bytes(8, "little")
    vec = [0.0] * dim
    for token in re.findall(r"\w+", text.lower()):
        payload = token.encode("utf-8")
        bucket = int.from_bytes(
            hashlib.blake2b(payload, digest_size=8, key=key).digest(), "little") % dim
        sign_bits = int.from_bytes(
            hashlib.blake2b(payload, digest_size=8, key=key, person=b"sign").digest(), "little")
        vec[bucket] += 1.0 if sign_bits & 1 else -1.0
    norm = math.sqrt(sum(v * v for v in vec))
    return [v / norm for v in vec]


def test_same_text_same_vector():
    embedder = HashingEmbedder()
    [a] = embed_texts(["survey methodology"], embedder)
    [b] = embed_texts(["survey methodology"], embedder)
    assert a == b


def test_duplicate_in_one_batch_has_cosine_one():
    embedder = HashingEmbedder()
    a, b = embed_texts(["panel attrition bias", "panel attrition bias"], embedder)
    assert cosine(a, b) == pytest.approx(1.0, abs=1e-9)


def test_matches_direct_computation_and_disjoint_vocab_is_near_orthogonal():
    embedder = HashingEmbedder()
    text_a = "alpha beta gamma delta"
    text_b = "epsilon zeta eta theta iota kappa"
    a, b = embed_texts([text_a, text_b], embedder)
    assert list(a.values) == pytest.approx(_oracle_vector(text_a, embedder.seed, 256))
    assert list(b.values) == pytest.approx(_oracle_vector(text_b, embedder.seed, 256))
    assert abs(cosine(a, b)) < 0.1


def test_vectors_are_unit_norm():
    embedder = HashingEmbedder(dimension=64)
    vectors = embed_texts(["a few words", "and a few more words here"], embedder)
    for vec in vectors:
        assert math.sqrt(sum(v * v for v in vec.values)) == pytest.approx(1.0, abs=1e-6)


def test_order_insensitive():
    embedder = HashingEmbedder()
    a, b = embed_texts(["alpha beta gamma", "gamma beta alpha"], embedder)
    assert a == b


def test_empty_text_rejected():
    embedder = HashingEmbedder()
    with pytest.raises(EmptyText):
        embed_texts([" "], embedder)
    with pytest.raises(EmptyText):
        embed_texts(["..."], embedder)  # punctuation only: no tokens


def test_cosine_identity_orthogonal_antipodal():
    a = _one_hot(0)
    b = _one_hot(3)
    assert cosine(a, a) == pytest.approx(1.0, abs=1e-9)
    assert cosine(a, b) == 0.0
    neg = EmbeddingVector(values=tuple(-v for v in a.values), provider_id="test")
    assert cosine(a, neg) == pytest.approx(-1.0, abs=1e-9)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        cosine(_one_hot(0, dim=8), _one_hot(0, dim=16))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_cosine_symmetry_bounds_and_dot_agreement(raw_a, raw_b):
    if not any(raw_a) or not any(raw_b):
        return
    norm_a = math.sqrt(sum(v * v for v in raw_a))
    norm_b = math.sqrt(sum(v * v for v in raw_b))
    if norm_a == 0 or norm_b == 0:
        return
    a = EmbeddingVector(values=tuple(v / norm_a for v in raw_a), provider_id="t")
    b = EmbeddingVector(values=tuple(v / norm_b for v in raw_b), provider_id="t")
    assert cosine(a, b) == cosine(b, a)
    assert -1.0 <= cosine(a, b) <= 1.0
    plain_dot = sum(x * y for x, y in zip(a.values, b.values))
    assert cosine(a, b) == pytest.approx(plain_dot, abs=1e-9)


def test_non_normalized_vector_rejected():
    with pytest.raises(ValueError):
        EmbeddingVector(values=(1.0, 1.0), provider_id="t")


# ------------------------------------------------------------ HTTP provider


class FlakyTransport:
    """Fails a fixed number of times, then answers like a live endpoint."""

    def __init__(self, failures: int, dimension: int = 4):
        self.failures = failures
        self.dimension = dimension
        self.calls = 0

    def post_json(self, url, payload):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("transient")
        vectors = []
        for text in payload["texts"]:
            seed = (len(text) % self.dimension)
            vec = [0.0] * self.dimension
            vec[seed] = 1.0
            vectors.append(vec)
        return {"dimension": self.dimension, "vectors": vectors}


def test_http_provider_retries_then_succeeds():
    transport = FlakyTransport(failures=2)
    provider = HttpEmbeddingProvider("http://emb.test", "m1", transport,
                                     dimension=4, sleep=lambda s: None)
    [vec] = embed_texts(["abc"], provider)
    assert transport.calls == 3
    assert vec.provider_id == "http:m1"


def test_http_provider_unavailable_after_retries():
    transport = FlakyTransport(failures=99)
    provider = HttpEmbeddingProvider("http://emb.test", "m1", transport,
                                     dimension=4, sleep=lambda s: None)
    with pytest.raises(ProviderUnavailable):
        embed_texts(["abc"], provider)
    assert transport.calls == 3


def test_batches_are_chunked_to_batch_size():
    transport = FlakyTransport(failures=0)
    provider = HttpEmbeddingProvider("http://emb.test", "m1", transport,
                                     dimension=4, sleep=lambda s: None)
    vectors = embed_texts(["a", "bb", "ccc", "dddd", "eeeee"], provider, batch_size=2)
    assert len(vectors) == 5
    assert transport.calls == 3  # 2 + 2 + 1


def test_http_provider_dimension_mismatch():
    transport = FlakyTransport(failures=0, dimension=4)
    provider = HttpEmbeddingProvider("http://emb.test", "m1", transport,
                                     dimension=16, sleep=lambda s: None)
    with pytest.raises(DimensionMismatch):
        embed_texts(["abc"], provider)


def test_recorded_transcripts_replay_byte_identical(tmp_path):
    live = FlakyTransport(failures=0)
    recorder = RecordingTransport(live, tmp_path / "transcripts")
    recording_provider = HttpEmbeddingProvider("http://emb.test", "m1", recorder,
                                               dimension=4, sleep=lambda s: None)
    recorded = embed_texts(["one text", "another text"], recording_provider)

    replay_provider = HttpEmbeddingProvider(
        "http://emb.test", "m1", ReplayTransport(tmp_path / "transcripts"),
        dimension=4, sleep=lambda s: None)
    replayed_1 = embed_texts(["one text", "another text"], replay_provider)
    replayed_2 = embed_texts(["one text", "another text"], replay_provider)
    assert recorded == replayed_1 == replayed_2


def test_replay_without_transcript_is_unavailable(tmp_path):
    provider = HttpEmbeddingProvider("http://emb.test", "m1",
                                     ReplayTransport(tmp_path / "none"),
                                     dimension=4, sleep=lambda s: None)
    with pytest.raises(ProviderUnavailable):
        embed_texts(["text"], provider)
