"""HTTP JSON API over the engine (versioned under /v1).

Request and response schemas are documented with examples in docs/api.md.
"""

from __future__ import annotations

import logging
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ServiceConfig
from .engine import Engine
from .errors import (
    BudgetTooSmall,
    CollectionNotIndexed,
    DimensionMismatch,
    DuplicateDocId,
    EmptyQuery,
    EngineError,
    ExtractorUnavailable,
    IndexBusy,
    KgUnavailable,
    MalformedManifest,
    ProviderUnavailable,
    StoreWriteError,
    UnknownId,
)

logger = logging.getLogger(__name__)


class IngestRequest(BaseModel):
    manifest: dict
    bodies: dict[str, str] = {}


class SessionRequest(BaseModel):
    collection_id: str


class AskRequest(BaseModel):
    query: str


def _error_status(exc: EngineError) -> tuple[int, dict]:
    if isinstance(exc, UnknownId):
        return 404, {"error": str(exc)}
    if isinstance(exc, CollectionNotIndexed):
        return 409, {"error": str(exc)}
    if isinstance(exc, IndexBusy):
        return 503, {"error": str(exc)}
    if isinstance(exc, EmptyQuery):
        return 400, {"error": str(exc)}
    if isinstance(exc, (MalformedManifest, DuplicateDocId, BudgetTooSmall)):
        return 400, {"error": str(exc)}
    if isinstance(exc, ProviderUnavailable):
        return 502, {"error": str(exc), "provider": exc.provider}
    if isinstance(exc, KgUnavailable):
        return 502, {"error": str(exc), "provider": "kg"}
    if isinstance(exc, ExtractorUnavailable):
        return 502, {"error": str(exc), "provider": "term-extractor"}
    if isinstance(exc, (StoreWriteError, DimensionMismatch)):
        return 500, {"error": str(exc)}
    return 500, {"error": str(exc)}


def create_app(config: ServiceConfig | None = None, engine: Engine | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    engine = engine or Engine(config or ServiceConfig())
    app = FastAPI(title="corpuschat", version="0.1.0")
    app.state.engine = engine

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        status, payload = _error_status(exc)
        if status >= 500:
            logger.error("%s %s -> %d: %s", request.method, request.url.path, status, exc)
        return JSONResponse(status_code=status, content=payload)

    @app.get("/v1/healthz")
    def healthz():
        return {
            "status": "ok",
            "offline_mode": engine.config.offline_mode,
            "index_sizes": engine.index_sizes(),
        }

    @app.get("/v1/collections")
    def list_collections():
        return {"collections": engine.list_collections()}

    @app.post("/v1/collections", status_code=201)
    def create_collection(request: IngestRequest):
        collection_id = engine.ingest_payload(request.model_dump())
        return {"collection_id": collection_id}

    @app.post("/v1/collections/{collection_id}/index")
    def index_collection(collection_id: str):
        report = engine.build_index(collection_id)
        return report.to_dict()

    @app.post("/v1/sessions", status_code=201)
    def create_session(request: SessionRequest):
        session = engine.create_session(request.collection_id)
        return {"session_id": session.session_id, "collection_id": session.collection_id}

    @app.post("/v1/sessions/{session_id}/ask")
    def ask(session_id: str, request: AskRequest):
        return engine.ask(session_id, request.query)

    @app.get("/v1/sessions/{session_id}")
    def session_history(session_id: str):
        return engine.session_history(session_id)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
