"""Orchestration: wires stores, providers, retrieval, and chat sessions.

The engine is the single object the HTTP service and the CLI both drive.
It owns the per-collection artifacts on disk (fragment store, term tables,
vector index), an in-memory index registry with snapshot-swap semantics,
and append-only chat sessions persisted as JSON-lines logs.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .config import ServiceConfig
from .embedding import HashingEmbedder, HttpEmbeddingProvider, embed_texts
from .errors import (
    CollectionNotIndexed,
    EmptyQuery,
    IndexBusy,
    UnknownId,
)
from .index import IndexEntry, VectorIndex
from .ingest import (
    CollectionData,
    FragmentStore,
    IngestReport,
    ingest_collection,
    load_manifest,
    manifest_from_dict,
    read_bodies_dir,
)
from .kg import NullKgClient, SparqlKgClient, enrich_terms, load_skos_fixture
from .providers import LiveTransport, ReplayTransport
from .retrieval import retrieve
from .synthesis import Answer, HttpLlmProvider, pack_context, synthesize
from .terms import HttpTermExtractor, extract_terms, save_term_table
from .textutil import canonical_json

logger = logging.getLogger(__name__)

NO_MATCH_ANSWER = "No source in this collection matched the question."


@dataclass(frozen=True)
class Turn:
    query: str
    answer: Answer
    timestamp: str
    probes_used: tuple[tuple[str, float], ...] = ()


@dataclass
class ChatSession:
    """Append-only turn history bound to one collection."""

    session_id: str
    collection_id: str
    turns: list[Turn] = field(default_factory=list)


@dataclass
class IndexReport:
    collection_id: str
    documents: int
    fragments: int
    terms: int
    linked_terms: int
    index_size: int
    dimension: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


class Engine:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.store = FragmentStore(config.data_dir)
        self._collections: dict[str, CollectionData] = {}
        self._indexes: dict[str, VectorIndex] = {}
        self._sessions: dict[str, ChatSession] = {}
        self._index_locks: dict[str, threading.Lock] = {}
        self._session_locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

        self.embedder = self._build_embedder()
        self.kg = self._build_kg()
        self.extractor = self._build_extractor()
        self.llm = self._build_llm()
        self._load_sessions()

    # ------------------------------------------------------------- providers

    def _transport(self):
        if self.config.transcripts_dir is not None:
            return ReplayTransport(self.config.transcripts_dir)
        return LiveTransport(api_key=None)

    def _build_embedder(self):
        if self.config.offline_mode or not self.config.embedding_base_url:
            return HashingEmbedder(dimension=self.config.dimension, seed=self.config.seed)
        transport = (ReplayTransport(self.config.transcripts_dir)
                     if self.config.transcripts_dir is not None
                     else LiveTransport(api_key=ServiceConfig.embedding_api_key()))
        return HttpEmbeddingProvider(
            base_url=self.config.embedding_base_url,
            model_id=self.config.embedding_model,
            transport=transport,
            dimension=self.config.dimension,
        )

    def _build_kg(self):
        if self.config.kg_fixture is not None:
            return load_skos_fixture(self.config.kg_fixture)
        if not self.config.offline_mode and self.config.kg_endpoint:
            return SparqlKgClient(
                endpoint=self.config.kg_endpoint,
                cache_path=self.config.data_dir / "kg_cache.jsonl",
                auth_token=ServiceConfig.kg_auth_token(),
            )
        return NullKgClient()

    def _build_extractor(self):
        if self.config.offline_mode or not self.config.term_extractor_url:
            return None  # statistical fallback
        return HttpTermExtractor(
            transport=self._transport(),
            url=self.config.term_extractor_url,
            model_id=self.config.term_extractor_model,
        )

    def _build_llm(self):
        if self.config.offline_mode or not self.config.llm_base_url:
            return None  # extractive fallback
        transport = (ReplayTransport(self.config.transcripts_dir)
                     if self.config.transcripts_dir is not None
                     else LiveTransport(api_key=ServiceConfig.llm_api_key()))
        return HttpLlmProvider(
            base_url=self.config.llm_base_url,
            model_id=self.config.llm_model,
            transport=transport,
        )

    # ----------------------------------------------------------- collections

    def ingest(self, manifest_path: str | Path, bodies_dir: str | Path) -> IngestReport:
        manifest = load_manifest(manifest_path)
        bodies = read_bodies_dir(bodies_dir, manifest)
        return self.ingest_parsed(manifest, bodies)

    def ingest_parsed(self, manifest, bodies: dict[str, str]) -> IngestReport:
        report = ingest_collection(manifest, bodies, self.store)
        with self._registry_lock:
            self._collections.pop(manifest.collection_id, None)
            self._indexes.pop(manifest.collection_id, None)
        logger.info("ingested collection %s: %d documents, %d fragments",
                    manifest.collection_id, report.documents, report.fragments)
        return report

    def ingest_payload(self, payload: dict) -> str:
        manifest = manifest_from_dict(payload.get("manifest") or {})
        bodies = {str(k): str(v) for k, v in (payload.get("bodies") or {}).items()}
        self.ingest_parsed(manifest, bodies)
        return manifest.collection_id

    def collection(self, collection_id: str) -> CollectionData:
        with self._registry_lock:
            cached = self._collections.get(collection_id)
        if cached is not None:
            return cached
        if not self.store.has_collection(collection_id):
            raise UnknownId(f"unknown collection {collection_id!r}")
        data = self.store.read(collection_id)
        with self._registry_lock:
            self._collections[collection_id] = data
        return data

    def list_collections(self) -> list[dict]:
        out = []
        for collection_id in self.store.list_collections():
            data = self.collection(collection_id)
            out.append({
                "collection_id": collection_id,
                "title": data.manifest.title,
                "documents": len(data.manifest.documents),
                "indexed": self._index_path(collection_id).exists(),
            })
        return out

    def _index_path(self, collection_id: str) -> Path:
        return self.store.collection_dir(collection_id) / "index.jsonl"

    def _lock_for(self, collection_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._index_locks.setdefault(collection_id, threading.Lock())

    def build_index(self, collection_id: str) -> IndexReport:
        """Extract, enrich, embed, and upsert; swap the snapshot atomically."""
        data = self.collection(collection_id)
        lock = self._lock_for(collection_id)
        if not lock.acquire(blocking=False):
            raise IndexBusy(f"collection {collection_id!r} is being re-indexed")
        try:
            fragments = list(data.fragments)
            table = extract_terms(fragments, self.extractor,
                                  self.config.extract_config(), collection_id)
            enriched = enrich_terms(list(table.terms), self.kg,
                                    languages=self.config.languages,
                                    depth=self.config.kg_depth,
                                    decay=self.config.kg_decay)
            linked = sum(1 for e in enriched if e.concept is not None)

            directory = self.store.collection_dir(collection_id)
            save_term_table(table, directory / "terms.jsonl")
            enriched_lines = "\n".join(canonical_json(e.to_dict()) for e in enriched)
            (directory / "enriched_terms.jsonl").write_text(
                enriched_lines + ("\n" if enriched_lines else ""), encoding="utf-8")

            vectors = embed_texts([f.text for f in fragments], self.embedder,
                                  batch_size=self.config.batch_size)
            metas = data.manifest.meta_by_id()
            entries = [
                IndexEntry(
                    fragment_id=fragment.fragment_id,
                    doc_id=fragment.doc_id,
                    vector=vector,
                    language=metas[fragment.doc_id].language,
                )
                for fragment, vector in zip(fragments, vectors)
            ]
            index = VectorIndex(dimension=self.embedder.dimension,
                                provider_id=self.embedder.provider_id)
            size = index.upsert(entries)
            index.save(self._index_path(collection_id))
            with self._registry_lock:
                self._indexes[collection_id] = index
            return IndexReport(
                collection_id=collection_id,
                documents=len(data.manifest.documents),
                fragments=len(fragments),
                terms=len(table.terms),
                linked_terms=linked,
                index_size=size,
                dimension=index.dimension,
            )
        finally:
            lock.release()

    def _index_for(self, collection_id: str) -> VectorIndex:
        with self._registry_lock:
            cached = self._indexes.get(collection_id)
        if cached is not None:
            return cached
        path = self._index_path(collection_id)
        if not path.exists():
            raise CollectionNotIndexed(f"collection {collection_id!r} is not indexed yet")
        index = VectorIndex.load(path)
        with self._registry_lock:
            self._indexes[collection_id] = index
        return index

    def index_sizes(self) -> dict[str, int]:
        sizes = {}
        for collection_id in self.store.list_collections():
            if self._index_path(collection_id).exists():
                try:
                    sizes[collection_id] = len(self._index_for(collection_id))
                except Exception:
                    continue
        return sizes

    # -------------------------------------------------------------- sessions

    def _sessions_dir(self) -> Path:
        return self.config.data_dir / "sessions"

    def _load_sessions(self) -> None:
        directory = self._sessions_dir()
        if not directory.is_dir():
            return
        for path in sorted(directory.glob("*.jsonl")):
            try:
                lines = path.read_text(encoding="utf-8").splitlines()
                header = json.loads(lines[0])
                session = ChatSession(session_id=header["session_id"],
                                      collection_id=header["collection_id"])
                for line in lines[1:]:
                    raw = json.loads(line)
                    session.turns.append(Turn(
                        query=raw["query"],
                        answer=_answer_from_dict(raw["answer"]),
                        timestamp=raw["timestamp"],
                        probes_used=tuple((p["label"], p["weight"])
                                          for p in raw.get("probes_used", [])),
                    ))
                self._sessions[session.session_id] = session
            except Exception:
                logger.warning("skipping unreadable session log %s", path)

    def create_session(self, collection_id: str) -> ChatSession:
        self.collection(collection_id)  # raises UnknownId
        session = ChatSession(session_id=uuid.uuid4().hex, collection_id=collection_id)
        self._sessions[session.session_id] = session
        directory = self._sessions_dir()
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{session.session_id}.jsonl"
        path.write_text(canonical_json({
            "session_id": session.session_id,
            "collection_id": collection_id,
            "created_at": _now(),
        }) + "\n", encoding="utf-8")
        return session

    def session(self, session_id: str) -> ChatSession:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownId(f"unknown session {session_id!r}")
        return session

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._session_locks.setdefault(session_id, threading.Lock())

    def ask(self, session_id: str, query: str) -> dict:
        """One chat turn: retrieve, pack, answer, append to the session."""
        session = self.session(session_id)
        if not query or not query.strip():
            raise EmptyQuery("query is empty")
        with self._session_lock(session_id):
            data = self.collection(session.collection_id)
            lock = self._lock_for(session.collection_id)
            if lock.locked():
                raise IndexBusy(
                    f"collection {session.collection_id!r} is being re-indexed")
            index = self._index_for(session.collection_id)
            ranked = retrieve(
                query=query,
                session=session,
                k=self.config.k,
                fragments=data.fragment_by_id(),
                metas=data.manifest.meta_by_id(),
                vector_index=index,
                extractor=self.extractor,
                kg=self.kg,
                embedder=self.embedder,
                config=self.config.retrieval_config(),
            )
            if ranked.clusters:
                pack = pack_context(ranked, self.config.token_budget)
                answer = synthesize(query, pack, self.llm)
            else:
                answer = Answer(text=NO_MATCH_ANSWER, citations=(),
                                model_id="none", offline=self.llm is None)
            turn = Turn(query=query.strip(), answer=answer, timestamp=_now(),
                        probes_used=ranked.probes_used)
            session.turns.append(turn)
            self._append_turn(session, turn)
            return self.turn_response(turn, data)

    def _append_turn(self, session: ChatSession, turn: Turn) -> None:
        path = self._sessions_dir() / f"{session.session_id}.jsonl"
        record = {
            "query": turn.query,
            "answer": turn.answer.to_dict(),
            "timestamp": turn.timestamp,
            "probes_used": [{"label": l, "weight": w} for l, w in turn.probes_used],
        }
        with path.open("a", encoding="utf-8") as handle:
            handle.write(canonical_json(record) + "\n")

    @staticmethod
    def turn_response(turn: Turn, data: CollectionData | None = None) -> dict:
        fragments = data.fragment_by_id() if data is not None else {}
        return {
            "answer_text": turn.answer.text,
            "citations": [_citation_response(c, fragments) for c in turn.answer.citations],
            "probes_used": [{"label": l, "weight": w} for l, w in turn.probes_used],
            "model_id": turn.answer.model_id,
            "offline": turn.answer.offline,
        }

    def session_history(self, session_id: str) -> dict:
        session = self.session(session_id)
        try:
            data = self.collection(session.collection_id)
        except UnknownId:
            data = None
        return {
            "session_id": session.session_id,
            "collection_id": session.collection_id,
            "turns": [
                {"query": t.query, "timestamp": t.timestamp, **self.turn_response(t, data)}
                for t in session.turns
            ],
        }


PREVIEW_CHARS = 200


def _citation_response(citation, fragments: dict) -> dict:
    meta = citation.doc_meta
    previews = []
    for fragment_id in citation.fragment_ids:
        fragment = fragments.get(fragment_id)
        previews.append({
            "fragment_id": fragment_id,
            "preview": fragment.text[:PREVIEW_CHARS] if fragment is not None else "",
        })
    return {
        "title": meta.title,
        "authors": list(meta.authors),
        "date": meta.publication_date,
        "uri": meta.source_uri,
        "confidence": citation.confidence,
        "fragments": previews,
    }


def _answer_from_dict(raw: dict) -> Answer:
    from .ingest import DocumentMeta
    from .synthesis import Citation

    citations = tuple(
        Citation(
            doc_meta=DocumentMeta(
                doc_id=c["doc_id"],
                title=c["title"],
                authors=tuple(c.get("authors", ())),
                publication_date=c.get("date"),
                source_uri=c.get("uri"),
            ),
            confidence=c["confidence"],
            fragment_ids=tuple(c.get("fragments", ())),
        )
        for c in raw.get("citations", [])
    )
    return Answer(text=raw["text"], citations=citations,
                  model_id=raw.get("model_id", ""), offline=bool(raw.get("offline", True)))
