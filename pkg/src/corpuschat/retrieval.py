"""The full query path: probes, multi-probe search, document-level ranking.

A query becomes a probe set: the query text itself at weight 1, expansion
labels from knowledge-graph enrichment at their expansion weights, and
terms from earlier turns of the session at a decayed weight. Hits are
grouped by source document before ranking, so one document's fragments are
scored jointly and never interleaved with another's downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .embedding import EmbeddingProvider, EmbeddingVector, embed_texts
from .errors import UnknownDocId
from .ingest import DocumentMeta, Fragment
from .kg import KgClient, enrich_terms
from .index import VectorIndex
from .terms import ExtractConfig, TermExtractor, extract_query_terms


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 8
    alpha: float = 0.7  # doc_score = alpha * max(hit scores) + (1 - alpha) * mean
    score_floor: float = 0.05
    session_decay: float = 0.5
    max_probes: int = 8
    kg_depth: int = 1
    kg_decay: float = 0.5
    languages: tuple[str, ...] | None = None
    extract: ExtractConfig = field(default_factory=ExtractConfig)


@dataclass(frozen=True)
class Probe:
    label: str
    weight: float
    vector: EmbeddingVector


@dataclass(frozen=True)
class RetrievalHit:
    fragment: Fragment
    score: float
    probe_label: str


@dataclass(frozen=True)
class DocumentCluster:
    """All hits from one source document, scored jointly."""

    doc_meta: DocumentMeta
    hits: tuple[RetrievalHit, ...]
    doc_score: float
    confidence: float


@dataclass(frozen=True)
class RankedRetrieval:
    query: str
    probes_used: tuple[tuple[str, float], ...]
    clusters: tuple[DocumentCluster, ...]

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "probes_used": [{"label": l, "weight": w} for l, w in self.probes_used],
            "clusters": [
                {
                    "doc_id": c.doc_meta.doc_id,
                    "doc_score": c.doc_score,
                    "confidence": c.confidence,
                    "hits": [
                        {
                            "fragment_id": h.fragment.fragment_id,
                            "score": h.score,
                            "probe_label": h.probe_label,
                        }
                        for h in c.hits
                    ],
                }
                for c in self.clusters
            ],
        }


def _session_term_probes(session, config: RetrievalConfig,
                         extractor: TermExtractor | None) -> list[tuple[str, float]]:
    """Terms from earlier turns, decayed by how many turns back they are."""
    candidates: list[tuple[str, float]] = []
    turns = list(session.turns) if session is not None else []
    for age, turn in enumerate(reversed(turns), start=1):
        decay = config.session_decay ** age
        if decay <= 0.0:
            continue
        for term in extract_query_terms(turn.query, extractor, config.extract):
            weight = min(1.0, term.weight * decay)
            if weight > 0.0:
                candidates.append((term.surface, weight))
    return candidates


def build_probes(
    query: str,
    session,
    extractor: TermExtractor | None,
    kg: KgClient,
    embedder: EmbeddingProvider,
    config: RetrievalConfig | None = None,
) -> list[Probe]:
    """Assemble the probe set for a query.

    Probe 0 is always the full query at weight 1.0. Further probes come
    from enrichment expansion labels and, when a session is given, from
    prior-turn terms at session_decay ** age. The probe count is capped at
    max_probes, keeping the highest-weight candidates.
    """
    config = config or RetrievalConfig()
    query_terms = extract_query_terms(query, extractor, config.extract)
    enriched = enrich_terms(query_terms, kg, languages=config.languages,
                            depth=config.kg_depth, decay=config.kg_decay)

    trimmed = query.strip()
    candidates: dict[str, float] = {}

    def offer(label: str, weight: float) -> None:
        key = label.casefold()
        if key == trimmed.casefold() or weight <= 0.0:
            return
        if weight > candidates.get(label, 0.0):
            candidates[label] = weight

    for term in enriched:
        for expansion in term.expansion_labels:
            offer(expansion.text, expansion.weight)
    for label, weight in _session_term_probes(session, config, extractor):
        offer(label, weight)

    ranked = sorted(candidates.items(), key=lambda item: (-item[1], item[0]))
    ranked = ranked[: max(0, config.max_probes - 1)]

    texts = [trimmed] + [label for label, _ in ranked]
    vectors = embed_texts(texts, embedder)
    probes = [Probe(label=trimmed, weight=1.0, vector=vectors[0])]
    probes.extend(
        Probe(label=label, weight=weight, vector=vec)
        for (label, weight), vec in zip(ranked, vectors[1:])
    )
    return probes


def confidence_of(cluster_doc_score: float, all_doc_scores: list[float]) -> float:
    """Per-document confidence in [0, 1].

    Scores are cosines of unit vectors, so clamping to [0, 1] yields a
    stable, explainable signal that is monotone in the document score. The
    full score list is accepted so a relative formula can replace this one
    without changing call sites.
    """
    del all_doc_scores
    return max(0.0, min(1.0, cluster_doc_score))


def cluster_and_rank(
    hits: list[RetrievalHit],
    metas: dict[str, DocumentMeta],
    config: RetrievalConfig | None = None,
    query: str = "",
    probes_used: tuple[tuple[str, float], ...] = (),
) -> RankedRetrieval:
    """Partition hits by source document and rank the documents.

    doc_score = alpha * max(hit scores) + (1 - alpha) * mean(hit scores);
    clusters sort by (doc_score desc, doc_id asc). Empty input yields an
    empty ranking. Raises UnknownDocId for hits without metadata.
    """
    config = config or RetrievalConfig()
    by_doc: dict[str, list[RetrievalHit]] = {}
    for hit in hits:
        doc_id = hit.fragment.doc_id
        if doc_id not in metas:
            raise UnknownDocId(f"hit references unknown document {doc_id!r}")
        by_doc.setdefault(doc_id, []).append(hit)

    scored: list[tuple[str, float, tuple[RetrievalHit, ...]]] = []
    for doc_id in sorted(by_doc):
        doc_hits = tuple(sorted(by_doc[doc_id],
                                key=lambda h: (-h.score, h.fragment.fragment_id)))
        scores = [h.score for h in doc_hits]
        doc_score = config.alpha * max(scores) + (1 - config.alpha) * (sum(scores) / len(scores))
        scored.append((doc_id, doc_score, doc_hits))

    scored.sort(key=lambda item: (-item[1], item[0]))
    all_scores = [doc_score for _, doc_score, _ in scored]
    clusters = tuple(
        DocumentCluster(
            doc_meta=metas[doc_id],
            hits=doc_hits,
            doc_score=doc_score,
            confidence=confidence_of(doc_score, all_scores),
        )
        for doc_id, doc_score, doc_hits in scored
    )
    return RankedRetrieval(query=query, probes_used=probes_used, clusters=clusters)


def retrieve(
    query: str,
    session,
    k: int,
    fragments: dict[str, Fragment],
    metas: dict[str, DocumentMeta],
    vector_index: VectorIndex,
    extractor: TermExtractor | None,
    kg: KgClient,
    embedder: EmbeddingProvider,
    config: RetrievalConfig | None = None,
) -> RankedRetrieval:
    """build_probes -> multi_probe_search -> cluster_and_rank, end to end.

    Hits scoring below the configured floor are dropped before clustering.
    Deterministic in offline mode: same store, session, and query give the
    same ranking.
    """
    config = config or RetrievalConfig()
    probes = build_probes(query, session, extractor, kg, embedder, config)
    probes_used = tuple((p.label, p.weight) for p in probes)
    results = vector_index.multi_probe_search([(p.vector, p.weight) for p in probes], k)
    hits = [
        RetrievalHit(
            fragment=fragments[r.fragment_id],
            score=r.score,
            probe_label=probes[r.probe_index or 0].label,
        )
        for r in results
        if r.score >= config.score_floor and r.fragment_id in fragments
    ]
    return cluster_and_rank(hits, metas, config, query=query, probes_used=probes_used)
