"""Weighted term extraction from fragments and queries.

Candidates are word n-grams (up to three tokens) whose edge tokens are not
stopwords. The default extractor is purely statistical and deterministic:
it weights candidates by term frequency times a smoothed inverse document
frequency (over source documents) times the n-gram length, so multiword
phrases outrank their own constituents. An HTTP-backed extractor can
propose candidates instead; its proposals are validated against the text
(a term must occur verbatim) and re-weighted by the same statistics, so
ranking stays deterministic for a fixed provider transcript.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Protocol

from .errors import EmptyQuery, ExtractorUnavailable
from .ingest import Fragment
from .textutil import normalize_surface, tokenize

NGRAM_MAX = 3


def _load_stopwords() -> frozenset[str]:
    text = resources.files("corpuschat.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


STOPWORDS_EN = _load_stopwords()


@dataclass(frozen=True)
class Term:
    """A normalized candidate term with its weight and source fragments."""

    surface: str
    weight: float
    source_fragments: tuple[str, ...]

    def __post_init__(self):
        if not self.surface:
            raise ValueError("term surface must be non-empty")
        if len(self.surface.split()) > 10:
            raise ValueError(f"term surface {self.surface!r} exceeds 10 tokens")
        if not math.isfinite(self.weight) or self.weight < 0:
            raise ValueError(f"term weight {self.weight!r} must be finite and >= 0")
        if not self.source_fragments:
            raise ValueError("term must reference at least one source fragment")

    def to_dict(self) -> dict:
        return {
            "surface": self.surface,
            "weight": self.weight,
            "source_fragments": list(self.source_fragments),
        }


@dataclass(frozen=True)
class TermTable:
    collection_id: str
    terms: tuple[Term, ...]
    extractor_id: str


@dataclass(frozen=True)
class ExtractConfig:
    max_terms_per_collection: int = 500
    max_terms_per_query: int = 8
    extra_stopwords: tuple[str, ...] = field(default=())

    def stopwords(self) -> frozenset[str]:
        if not self.extra_stopwords:
            return STOPWORDS_EN
        return STOPWORDS_EN | frozenset(w.lower() for w in self.extra_stopwords)


class TermExtractor(Protocol):
    """Candidate source: maps fragments to proposed term surfaces."""

    extractor_id: str

    def propose(self, fragments: list[Fragment]) -> dict[str, list[str]]:
        """Return candidate surfaces per fragment_id."""
        ...


def candidate_ngrams(tokens: list[str], stopwords: frozenset[str]) -> list[str]:
    """All 1..3-grams whose first and last token are not stopwords."""
    grams: list[str] = []
    for n in range(1, NGRAM_MAX + 1):
        for i in range(len(tokens) - n + 1):
            window = tokens[i : i + n]
            if window[0] in stopwords or window[-1] in stopwords:
                continue
            grams.append(" ".join(window))
    return grams


class FallbackExtractor:
    """Statistical candidate generator; a pure function of its input."""

    extractor_id = "ngram-stats-v1"

    def __init__(self, config: ExtractConfig | None = None):
        self.config = config or ExtractConfig()

    def propose(self, fragments: list[Fragment]) -> dict[str, list[str]]:
        stopwords = self.config.stopwords()
        return {
            fragment.fragment_id: candidate_ngrams(tokenize(fragment.text), stopwords)
            for fragment in fragments
        }


class HttpTermExtractor:
    """Extractor backed by the JSON provider protocol.

    Request: ``{"model_id": ..., "fragments": [{"fragment_id", "text"}]}``;
    response: ``{"results": [{"fragment_id", "terms": [surface]}]}``.
    """

    def __init__(self, transport, url: str, model_id: str):
        self.transport = transport
        self.url = url
        self.model_id = model_id
        self.extractor_id = f"http-terms:{model_id}"

    def propose(self, fragments: list[Fragment]) -> dict[str, list[str]]:
        payload = {
            "model_id": self.model_id,
            "fragments": [{"fragment_id": f.fragment_id, "text": f.text} for f in fragments],
        }
        try:
            response = self.transport.post_json(self.url, payload)
        except Exception as exc:
            raise ExtractorUnavailable(f"term extraction provider failed: {exc}") from exc
        proposed: dict[str, list[str]] = {f.fragment_id: [] for f in fragments}
        for row in response.get("results", []):
            fragment_id = row.get("fragment_id")
            if fragment_id in proposed:
                proposed[fragment_id] = [str(t) for t in row.get("terms", [])]
        return proposed


def occurs_in(surface: str, text: str) -> bool:
    """True when the normalized surface appears as a token sequence in text."""
    haystack = " " + " ".join(tokenize(text)) + " "
    return f" {surface} " in haystack


def _score_candidates(
    fragments: list[Fragment],
    proposed: dict[str, list[str]],
) -> dict[str, tuple[float, tuple[str, ...]]]:
    """Weight validated candidates.

    tf counts every occurrence across fragments; idf is smoothed and
    computed over source documents, so duplicating a fragment can only help
    the terms it contains. The n-gram length factor favors full phrases
    over their parts.
    """
    doc_ids = sorted({f.doc_id for f in fragments})
    n_docs = len(doc_ids)
    tf: Counter[str] = Counter()
    docs_with: dict[str, set[str]] = {}
    frags_with: dict[str, set[str]] = {}

    for fragment in fragments:
        tokens = tokenize(fragment.text)
        token_str = " " + " ".join(tokens) + " "
        allowed = {normalize_surface(s) for s in proposed.get(fragment.fragment_id, [])}
        allowed.discard("")
        for surface in sorted(allowed):
            if len(surface.split()) > 10 or f" {surface} " not in token_str:
                continue
            # Token scan rather than str.count: overlapping repeats
            # ("x x x" contains "x x" twice) would otherwise undercount.
            surf_tokens = surface.split()
            count = sum(
                1
                for i in range(len(tokens) - len(surf_tokens) + 1)
                if tokens[i : i + len(surf_tokens)] == surf_tokens
            )
            if count == 0:
                continue
            tf[surface] += count
            docs_with.setdefault(surface, set()).add(fragment.doc_id)
            frags_with.setdefault(surface, set()).add(fragment.fragment_id)

    scored: dict[str, tuple[float, tuple[str, ...]]] = {}
    for surface, count in tf.items():
        df = len(docs_with[surface])
        idf = math.log((1 + n_docs) / (1 + df)) + 1.0
        weight = count * idf * len(surface.split())
        scored[surface] = (weight, tuple(sorted(frags_with[surface])))
    return scored


def extract_terms(
    fragments: list[Fragment],
    extractor: TermExtractor | None = None,
    config: ExtractConfig | None = None,
    collection_id: str = "",
) -> TermTable:
    """Build a TermTable from fragments.

    Raises ExtractorUnavailable when an HTTP extractor cannot be reached;
    the fallback extractor never does.
    """
    if not fragments:
        raise ValueError("extract_terms requires at least one fragment")
    config = config or ExtractConfig()
    extractor = extractor or FallbackExtractor(config)
    proposed = extractor.propose(fragments)
    scored = _score_candidates(fragments, proposed)
    ranked = sorted(scored.items(), key=lambda item: (-item[1][0], item[0]))
    ranked = ranked[: config.max_terms_per_collection]
    terms = tuple(
        Term(surface=surface, weight=weight, source_fragments=sources)
        for surface, (weight, sources) in ranked
    )
    return TermTable(collection_id=collection_id, terms=terms, extractor_id=extractor.extractor_id)


def extract_query_terms(
    query: str,
    extractor: TermExtractor | None = None,
    config: ExtractConfig | None = None,
) -> list[Term]:
    """Extract weighted terms from a free-text query.

    Weights are proportional to occurrence count times n-gram length and
    normalized to sum to 1 (at most ``max_terms_per_query`` terms survive).
    Raises EmptyQuery when the query is blank.
    """
    if not query or not query.strip():
        raise EmptyQuery("query is empty")
    config = config or ExtractConfig()
    pseudo = Fragment(fragment_id="query:0", doc_id="query", ordinal=0,
                      text=query.strip(), char_span=(0, max(1, len(query.strip()))))
    if extractor is not None and not isinstance(extractor, FallbackExtractor):
        proposed = extractor.propose([pseudo])
    else:
        proposed = FallbackExtractor(config).propose([pseudo])
    scored = _score_candidates([pseudo], proposed)
    ranked = sorted(scored.items(), key=lambda item: (-item[1][0], item[0]))
    ranked = ranked[: config.max_terms_per_query]
    total = sum(weight for _, (weight, _) in ranked)
    if total <= 0:
        return []
    return [
        Term(surface=surface, weight=weight / total, source_fragments=sources)
        for surface, (weight, sources) in ranked
    ]


def save_term_table(table: TermTable, path) -> None:
    from .textutil import canonical_json

    lines = [canonical_json({
        "type": "header",
        "collection_id": table.collection_id,
        "extractor_id": table.extractor_id,
        "count": len(table.terms),
    })]
    lines.extend(canonical_json({"type": "term", **t.to_dict()}) for t in table.terms)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
