from __future__ import annotations

import json
from types import SimpleNamespace

import pytest

from corpuschat.embedding import HashingEmbedder
from corpuschat.errors import EmptyQuery, UnknownDocId
from corpuschat.ingest import DocumentMeta, Fragment
from corpuschat.kg import NullKgClient, load_skos_fixture
from corpuschat.retrieval import (
    RetrievalConfig,
    RetrievalHit,
    build_probes,
    cluster_and_rank,
    confidence_of,
    retrieve,
)
from corpuschat.textutil import canonical_json

from conftest import GOLDEN, KOS_PATH, MBM_QUERY


def _meta(doc_id: str) -> DocumentMeta:
    return DocumentMeta(doc_id=doc_id, title=f"Title {doc_id}")


def _hit(fragment_id: str, doc_id: str, score: float) -> RetrievalHit:
    fragment = Fragment(fragment_id=fragment_id, doc_id=doc_id,
                        ordinal=int(fragment_id.split(":")[1]),
                        text=f"text of {fragment_id}", char_span=(0, 10))
    return RetrievalHit(fragment=fragment, score=score, probe_label="q")


def _session(*queries: str):
    return SimpleNamespace(turns=[SimpleNamespace(query=q) for q in queries])


# ------------------------------------------------------------------ probes


def test_no_kg_no_session_single_probe():
    probes = build_probes("something unusual", None, None, NullKgClient(), HashingEmbedder())
    assert len(probes) == 1
    assert probes[0].weight == 1.0
    assert probes[0].label == "something unusual"


def test_probes_include_german_expansion_label():
    kos = load_skos_fixture(KOS_PATH)
    probes = build_probes(MBM_QUERY, None, None, kos, HashingEmbedder())
    by_label = {p.label: p.weight for p in probes}
    # "male breadwinner model" carries normalized query weight 0.2; its
    # concept's German alt label is offered at that expansion weight.
    assert by_label["männliches Ernährermodell"] == pytest.approx(0.2)
    assert probes[0].label == MBM_QUERY and probes[0].weight == 1.0


def test_session_terms_decay_by_age():
    probes = build_probes("zzxqy unknown words", _session("panel attrition"),
                          None, NullKgClient(), HashingEmbedder())
    by_label = {p.label: p.weight for p in probes}
    # "panel attrition" weighs 0.5 in its own turn; one turn old halves it.
    assert by_label["panel attrition"] == pytest.approx(0.25)


def test_probe_zero_survives_session_and_cap():
    config = RetrievalConfig(max_probes=2)
    probes = build_probes("fresh question", _session("panel attrition", "income data"),
                          None, NullKgClient(), HashingEmbedder(), config)
    assert len(probes) == 2
    assert probes[0].label == "fresh question"
    assert probes[0].weight == 1.0


def test_empty_query_propagates():
    with pytest.raises(EmptyQuery):
        build_probes("  ", None, None, NullKgClient(), HashingEmbedder())


# -------------------------------------------------------------- clustering


def test_doc_score_blends_max_and_mean():
    hits = [_hit("d1:0", "d1", 0.9), _hit("d1:1", "d1", 0.5)]
    ranked = cluster_and_rank(hits, {"d1": _meta("d1")}, RetrievalConfig(alpha=0.7))
    [cluster] = ranked.clusters
    assert cluster.doc_score == pytest.approx(0.7 * 0.9 + 0.3 * 0.7)
    assert cluster.doc_score == pytest.approx(0.84)
    assert cluster.confidence == pytest.approx(0.84)


def test_equal_doc_scores_order_by_doc_id():
    hits = [_hit("db:0", "db", 0.6), _hit("da:0", "da", 0.6)]
    ranked = cluster_and_rank(hits, {"da": _meta("da"), "db": _meta("db")})
    assert [c.doc_meta.doc_id for c in ranked.clusters] == ["da", "db"]


def test_empty_hits_empty_ranking():
    ranked = cluster_and_rank([], {})
    assert ranked.clusters == ()


def test_unknown_doc_id_raises():
    with pytest.raises(UnknownDocId):
        cluster_and_rank([_hit("dx:0", "dx", 0.5)], {"d1": _meta("d1")})


def test_hits_partition_exactly():
    hits = [_hit(f"d{i % 3}:{i}", f"d{i % 3}", 0.1 + 0.01 * i) for i in range(20)]
    metas = {f"d{i}": _meta(f"d{i}") for i in range(3)}
    ranked = cluster_and_rank(hits, metas)
    seen = [h.fragment.fragment_id for c in ranked.clusters for h in c.hits]
    assert sorted(seen) == sorted(h.fragment.fragment_id for h in hits)
    assert len(seen) == len(set(seen)) == len(hits)


def test_cluster_order_invariant_under_positive_scaling():
    hits = [_hit("d1:0", "d1", 0.9), _hit("d1:1", "d1", 0.2),
            _hit("d2:0", "d2", 0.7), _hit("d3:0", "d3", 0.65), _hit("d3:1", "d3", 0.6)]
    metas = {d: _meta(d) for d in ("d1", "d2", "d3")}
    base = [c.doc_meta.doc_id for c in cluster_and_rank(hits, metas).clusters]
    scaled_hits = [_hit(h.fragment.fragment_id, h.fragment.doc_id, h.score * 3.7)
                   for h in hits]
    scaled = [c.doc_meta.doc_id for c in cluster_and_rank(scaled_hits, metas).clusters]
    assert base == scaled


def test_within_cluster_hits_sorted_desc():
    hits = [_hit("d1:0", "d1", 0.2), _hit("d1:1", "d1", 0.9), _hit("d1:2", "d1", 0.5)]
    ranked = cluster_and_rank(hits, {"d1": _meta("d1")})
    scores = [h.score for h in ranked.clusters[0].hits]
    assert scores == sorted(scores, reverse=True)


# -------------------------------------------------------------- confidence


def test_confidence_upper_bound():
    assert confidence_of(1.0, [1.0]) == 1.0


def test_confidence_clamps_nonpositive():
    assert confidence_of(-0.3, [-0.3, 0.5]) == 0.0
    assert confidence_of(0.0, [0.0]) == 0.0


def test_confidence_identity_on_cosine_range():
    assert confidence_of(0.84, [0.84, 0.42]) == pytest.approx(0.84)
    assert confidence_of(0.42, [0.84, 0.42]) == pytest.approx(0.42)


def test_confidence_monotone_in_own_score():
    others = [0.2, 0.5, 0.9]
    values = [confidence_of(s, others + [s]) for s in (0.1, 0.3, 0.6, 0.95)]
    assert values == sorted(values)


# ---------------------------------------------------------------- retrieve


def _deps(engine):
    data = engine.collection("mda-mini")
    return {
        "fragments": data.fragment_by_id(),
        "metas": data.manifest.meta_by_id(),
        "vector_index": engine._index_for("mda-mini"),
        "extractor": engine.extractor,
        "kg": engine.kg,
        "embedder": engine.embedder,
        "config": engine.config.retrieval_config(),
    }


def test_retrieve_matches_frozen_golden(indexed_engine):
    ranked = retrieve(MBM_QUERY, None, indexed_engine.config.k, **_deps(indexed_engine))
    golden = (GOLDEN / "retrieval_mbm.json").read_text(encoding="utf-8").strip()
    assert canonical_json(ranked.to_dict()) == golden
    # spot checks: the breadwinner article leads, every confidence in range
    assert ranked.clusters[0].doc_meta.doc_id == "mda-001"
    for cluster in ranked.clusters:
        assert 0.0 <= cluster.confidence <= 1.0


def test_retrieve_twice_is_identical(indexed_engine):
    first = retrieve(MBM_QUERY, None, 8, **_deps(indexed_engine))
    second = retrieve(MBM_QUERY, None, 8, **_deps(indexed_engine))
    assert first == second


def test_nothing_above_floor_yields_empty_clusters(indexed_engine):
    deps = _deps(indexed_engine)
    deps["config"] = RetrievalConfig(score_floor=0.95)
    ranked = retrieve("jabberwocky gyre gimble", None, 8, **deps)
    assert ranked.clusters == ()
    assert ranked.probes_used[0][1] == 1.0


def test_retrieve_with_session_keeps_primary_probe(indexed_engine):
    ranked = retrieve("and the follow-up question about data collection",
                      _session(MBM_QUERY), 8, **_deps(indexed_engine))
    labels = [label for label, _ in ranked.probes_used]
    assert labels[0] == "and the follow-up question about data collection"
    assert any(weight < 1.0 for _, weight in ranked.probes_used[1:])
