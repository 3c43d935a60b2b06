"""Text normalization, tokenization, and canonical JSON helpers.

Everything here must be a pure function of its inputs: these helpers sit
under every deterministic path in the engine (fragment ids, embeddings,
store files, request hashes).
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata

_SENTENCE_END = re.compile(r"(?<=[.!?])[\"')\]]*\s+")
_TOKEN = re.compile(r"\w+", re.UNICODE)
_WS_RUN = re.compile(r"\s+")


def normalize_body(text: str) -> str:
    """Normalize a document body: NFC, LF line endings, at most one blank line."""
    text = unicodedata.normalize("NFC", text)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return re.sub(r"\n{3,}", "\n\n", text)


def normalize_surface(text: str) -> str:
    """Normalize a term surface or label: NFC, lowercase, collapsed whitespace."""
    text = unicodedata.normalize("NFC", text).lower()
    return _WS_RUN.sub(" ", text).strip()


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def sentence_spans(text: str, offset: int = 0) -> list[tuple[int, int]]:
    """Split ``text`` into sentence spans (start, end) relative to ``offset``.

    Boundaries are sentence-ending punctuation followed by whitespace; the
    trailing whitespace belongs to no sentence.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        end = match.start() + len(match.group().rstrip())
        spans.append((offset + start, offset + end))
        start = match.end()
    if start < len(text):
        spans.append((offset + start, offset + len(text)))
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[s:e] for s, e in sentence_spans(text)]


def canonical_json(value) -> str:
    """Serialize with sorted keys and compact separators; byte-stable across runs."""
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def stable_hash64(text: str, seed: int, personal: bytes = b"") -> int:
    """64-bit keyed hash, stable across platforms and interpreter runs."""
    key = seed.to_bytes(8, "little", signed=False)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8, key=key, person=personal).digest()
    return int.from_bytes(digest, "little")


def request_hash(value) -> str:
    """Content hash used to key provider transcripts and the SPARQL cache."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()
