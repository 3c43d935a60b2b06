"""gw: command-line front end for the chat engine."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ServiceConfig
from .engine import Engine
from .errors import EngineError
from .textutil import canonical_json


def _config_from(params: dict) -> ServiceConfig:
    kwargs = {
        "data_dir": Path(params["data_dir"]),
        "offline_mode": params["offline"],
    }
    for key in ("k", "token_budget", "alpha", "session_decay", "score_floor",
                "max_probes", "kg_depth"):
        if params.get(key) is not None:
            kwargs[key] = params[key]
    if params.get("languages"):
        kwargs["languages"] = tuple(params["languages"].split(","))
    if params.get("kg_fixture"):
        kwargs["kg_fixture"] = Path(params["kg_fixture"])
    if not params["offline"]:
        for flag, key in (("embedding_url", "embedding_base_url"),
                          ("llm_url", "llm_base_url"),
                          ("kg_endpoint", "kg_endpoint")):
            if params.get(flag):
                kwargs[key] = params[flag]
    return ServiceConfig(**kwargs)


def _common_options(fn):
    options = [
        click.option("--data-dir", default="data", show_default=True,
                     help="Directory holding stores, indexes, and session logs."),
        click.option("--offline/--online", default=True, show_default=True,
                     help="Offline mode uses the hashing embedder, the concept "
                          "fixture, and extractive answers."),
        click.option("--k", type=int, default=None, help="Top-k fragments per probe."),
        click.option("--token-budget", type=int, default=None),
        click.option("--alpha", type=float, default=None,
                     help="Max/mean blend for document scores."),
        click.option("--session-decay", type=float, default=None),
        click.option("--score-floor", type=float, default=None),
        click.option("--max-probes", type=int, default=None),
        click.option("--kg-depth", type=int, default=None),
        click.option("--kg-fixture", type=click.Path(exists=True), default=None,
                     help="Concept fixture file for offline enrichment."),
        click.option("--languages", default=None,
                     help="Comma-separated language filter for expansion labels."),
        click.option("--embedding-url", default=None),
        click.option("--llm-url", default=None),
        click.option("--kg-endpoint", default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Chat with a local document collection, with cited, scored sources."""


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.argument("bodies_dir", type=click.Path(exists=True, file_okay=False))
@_common_options
def ingest(manifest, bodies_dir, **params):
    """Load a collection manifest and its document bodies into the store."""
    engine = Engine(_config_from(params))
    try:
        report = engine.ingest(manifest, bodies_dir)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    click.echo(canonical_json(report.to_dict()))


@main.command()
@click.argument("collection_id")
@_common_options
def index(collection_id, **params):
    """Extract terms, enrich, embed, and build the vector index."""
    engine = Engine(_config_from(params))
    try:
        report = engine.build_index(collection_id)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    click.echo(canonical_json(report.to_dict()))


@main.command()
@click.argument("collection_id")
@click.argument("query")
@_common_options
def ask(collection_id, query, **params):
    """One-shot question against an indexed collection."""
    engine = Engine(_config_from(params))
    try:
        session = engine.create_session(collection_id)
        response = engine.ask(session.session_id, query)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    click.echo(canonical_json(response))


@main.command()
@click.argument("collection_id")
@_common_options
def chat(collection_id, **params):
    """Interactive chat; one session, refine freely. Ctrl-D to exit."""
    engine = Engine(_config_from(params))
    try:
        session = engine.create_session(collection_id)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"session {session.session_id} on collection {collection_id}")
    while True:
        try:
            query = click.prompt("you", prompt_suffix="> ")
        except (EOFError, click.Abort):
            click.echo("bye")
            return
        if not query.strip():
            continue
        try:
            response = engine.ask(session.session_id, query)
        except EngineError as exc:
            click.echo(f"error: {exc}", err=True)
            continue
        click.echo(response["answer_text"])
        for citation in response["citations"]:
            click.echo(f"  [{citation['confidence']:.2f}] {citation['title']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8800, show_default=True)
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None,
              help="Serve a static UI build from this directory at /.")
@_common_options
def serve(host, port, ui_dir, **params):
    """Run the HTTP API (and optionally the browser UI)."""
    import uvicorn

    from .service import create_app

    app = create_app(config=_config_from(params), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command("export-manifest")
@click.argument("collection_id")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="Write to a file instead of stdout.")
@_common_options
def export_manifest(collection_id, output, **params):
    """Write a stored collection's manifest back out as JSON."""
    engine = Engine(_config_from(params))
    try:
        data = engine.collection(collection_id)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    payload = json.dumps(data.manifest.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)
    if output:
        Path(output).write_text(payload + "\n", encoding="utf-8")
        click.echo(f"wrote {output}")
    else:
        click.echo(payload)


if __name__ == "__main__":
    main(sys.argv[1:])
