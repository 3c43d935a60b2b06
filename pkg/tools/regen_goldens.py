#!/usr/bin/env python3
"""Regenerate the frozen golden files under tests/golden/.

Run after an intentional change to splitting, retrieval, or the prompt
template, then review the diff before committing.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from corpuschat.config import ServiceConfig  # noqa: E402
from corpuschat.engine import Engine  # noqa: E402
from corpuschat.ingest import Document, DocumentMeta, SplitPolicy, load_manifest, split_document  # noqa: E402
from corpuschat.retrieval import retrieve  # noqa: E402
from corpuschat.synthesis import format_prompt, pack_context  # noqa: E402
from corpuschat.textutil import canonical_json  # noqa: E402

FIXTURES = ROOT / "fixtures"
GOLDEN = ROOT / "tests" / "golden"

MBM_QUERY = "explain male breadwinner model to me"


def regen_split_goldens() -> None:
    body = (FIXTURES / "long_paragraph.txt").read_text(encoding="utf-8")
    doc = Document(meta=DocumentMeta(doc_id="d1", title="T"), body=body)
    frags = split_document(doc, SplitPolicy(max_fragment_chars=2000))
    (GOLDEN / "long_paragraph_spans.json").write_text(
        json.dumps([list(f.char_span) for f in frags], indent=1) + "\n")

    manifest = load_manifest(FIXTURES / "mda-mini.json")
    per_doc = {}
    total = 0
    for meta in manifest.documents:
        doc_body = (FIXTURES / "bodies" / f"{meta.doc_id}.txt").read_text(encoding="utf-8")
        n = len(split_document(Document(meta=meta, body=doc_body)))
        per_doc[meta.doc_id] = n
        total += n
    (GOLDEN / "ingest_counts.json").write_text(
        json.dumps({"total_fragments": total, "per_document": per_doc}, indent=1) + "\n")


def regen_retrieval_golden(tmp_dir: Path) -> None:
    config = ServiceConfig(data_dir=tmp_dir, offline_mode=True,
                           kg_fixture=FIXTURES / "kos-mini.ttl-json")
    engine = Engine(config)
    engine.ingest(FIXTURES / "mda-mini.json", FIXTURES / "bodies")
    engine.build_index("mda-mini")
    data = engine.collection("mda-mini")
    ranked = retrieve(
        query=MBM_QUERY,
        session=None,
        k=config.k,
        fragments=data.fragment_by_id(),
        metas=data.manifest.meta_by_id(),
        vector_index=engine._index_for("mda-mini"),
        extractor=engine.extractor,
        kg=engine.kg,
        embedder=engine.embedder,
        config=config.retrieval_config(),
    )
    (GOLDEN / "retrieval_mbm.json").write_text(canonical_json(ranked.to_dict()) + "\n")

    pack = pack_context(ranked, config.token_budget)
    (GOLDEN / "prompt_mbm.txt").write_text(format_prompt(MBM_QUERY, pack))

    session = engine.create_session("mda-mini")
    response = engine.ask(session.session_id, MBM_QUERY)
    (GOLDEN / "ask_mbm.json").write_text(canonical_json(response) + "\n")


def main() -> None:
    import tempfile

    GOLDEN.mkdir(parents=True, exist_ok=True)
    regen_split_goldens()
    with tempfile.TemporaryDirectory() as tmp:
        regen_retrieval_golden(Path(tmp) / "data")
    print(f"goldens written to {GOLDEN}")


if __name__ == "__main__":
    main()
