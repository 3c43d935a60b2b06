"""Collection loading, paragraph splitting, and the on-disk fragment store.

A collection is a manifest (a documented subset of the Croissant dataset
format) plus one UTF-8 text body per document. Documents are split into
paragraph fragments, the unit every later stage works on. The store writes
one JSON-lines file per collection and is byte-deterministic for identical
input.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
import re
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import DuplicateDocId, EmptyDocument, MalformedManifest, StoreWriteError
from .textutil import canonical_json, normalize_body, sentence_spans

_TERMINAL_PUNCT = re.compile(r"[.!?][\"')\]]*$")

DEFAULT_MANIFEST_VERSION = "1.0"
DEFAULT_CREATED_AT = "1970-01-01T00:00:00Z"
STORE_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class DocumentMeta:
    """Provenance metadata for one document: title, authors, date, source."""

    doc_id: str
    title: str
    authors: tuple[str, ...] = ()
    publication_date: str | None = None
    source_uri: str | None = None
    language: str = "en"

    def __post_init__(self):
        if not self.doc_id:
            raise MalformedManifest("document doc_id must be non-empty", field="doc_id")
        if not self.title:
            raise MalformedManifest("document title must be non-empty", field="title")
        if self.publication_date is not None:
            try:
                _dt.date.fromisoformat(self.publication_date)
            except ValueError:
                raise MalformedManifest(
                    f"publication_date {self.publication_date!r} is not an ISO-8601 date",
                    field="publication_date",
                ) from None

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "authors": list(self.authors),
            "publication_date": self.publication_date,
            "source_uri": self.source_uri,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DocumentMeta":
        return cls(
            doc_id=str(raw.get("doc_id") or ""),
            title=str(raw.get("title") or ""),
            authors=tuple(raw.get("authors") or ()),
            publication_date=raw.get("publication_date"),
            source_uri=raw.get("source_uri"),
            language=raw.get("language") or "en",
        )


@dataclass(frozen=True)
class CollectionManifest:
    collection_id: str
    title: str
    documents: tuple[DocumentMeta, ...]
    created_at: str = DEFAULT_CREATED_AT
    manifest_version: str = DEFAULT_MANIFEST_VERSION

    def __post_init__(self):
        if not self.collection_id:
            raise MalformedManifest("collection_id must be non-empty", field="collection_id")
        seen: set[str] = set()
        for meta in self.documents:
            if meta.doc_id in seen:
                raise DuplicateDocId(f"doc_id {meta.doc_id!r} appears more than once")
            seen.add(meta.doc_id)

    def meta_by_id(self) -> dict[str, DocumentMeta]:
        return {m.doc_id: m for m in self.documents}

    def to_dict(self) -> dict:
        return {
            "collection_id": self.collection_id,
            "title": self.title,
            "documents": [m.to_dict() for m in self.documents],
            "created_at": self.created_at,
            "manifest_version": self.manifest_version,
        }


@dataclass(frozen=True)
class Document:
    meta: DocumentMeta
    body: str


@dataclass(frozen=True)
class Fragment:
    """One paragraph of one document; char_span indexes the normalized body."""

    fragment_id: str
    doc_id: str
    ordinal: int
    text: str
    char_span: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "fragment_id": self.fragment_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "char_span": list(self.char_span),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Fragment":
        return cls(
            fragment_id=raw["fragment_id"],
            doc_id=raw["doc_id"],
            ordinal=raw["ordinal"],
            text=raw["text"],
            char_span=(raw["char_span"][0], raw["char_span"][1]),
        )


@dataclass(frozen=True)
class SplitPolicy:
    """Paragraph split parameters.

    Blank lines delimit paragraphs. Paragraphs longer than
    ``max_fragment_chars`` are re-split at sentence boundaries (hard split
    as a last resort). A fragment shorter than ``min_fragment_chars`` that
    does not end in sentence-terminal punctuation (headings, list stubs) is
    merged into its successor; complete short paragraphs stay intact.
    """

    min_fragment_chars: int = 80
    max_fragment_chars: int = 2000

    def __post_init__(self):
        if self.min_fragment_chars < 1 or self.max_fragment_chars < self.min_fragment_chars:
            raise ValueError("require 1 <= min_fragment_chars <= max_fragment_chars")


@dataclass
class IngestReport:
    documents: int = 0
    fragments: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "fragments": self.fragments,
            "skipped": [{"doc_id": d, "reason": r} for d, r in self.skipped],
        }


def load_manifest(path: str | Path) -> CollectionManifest:
    """Parse a manifest file.

    Accepts the documented JSON subset (``@type`` and unknown keys are
    ignored). Raises MalformedManifest naming the offending field, or
    DuplicateDocId when two documents share an id.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MalformedManifest(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"manifest {path} is not valid JSON: {exc}") from exc
    return manifest_from_dict(raw)


def manifest_from_dict(raw: dict) -> CollectionManifest:
    if not isinstance(raw, dict):
        raise MalformedManifest("manifest root must be a JSON object")
    for key in ("collection_id", "title", "documents"):
        if not raw.get(key):
            raise MalformedManifest(f"manifest is missing required field {key!r}", field=key)
    if not isinstance(raw["documents"], list):
        raise MalformedManifest("manifest field 'documents' must be a list", field="documents")
    documents = tuple(DocumentMeta.from_dict(entry) for entry in raw["documents"])
    return CollectionManifest(
        collection_id=str(raw["collection_id"]),
        title=str(raw["title"]),
        documents=documents,
        created_at=str(raw.get("created_at") or DEFAULT_CREATED_AT),
        manifest_version=str(raw.get("manifest_version") or DEFAULT_MANIFEST_VERSION),
    )


def _paragraph_spans(body: str) -> list[tuple[int, int]]:
    """Spans of blank-line-separated paragraphs, trimmed to non-whitespace."""
    spans = []
    for match in re.finditer(r"[^\n]+(?:\n[ \t]*[^\n\s][^\n]*)*", body):
        start, end = match.start(), match.end()
        while start < end and body[start].isspace():
            start += 1
        while end > start and body[end - 1].isspace():
            end -= 1
        if end > start:
            spans.append((start, end))
    return spans


def _resplit_long(body: str, span: tuple[int, int], policy: SplitPolicy) -> list[tuple[int, int]]:
    """Break an oversized paragraph at sentence boundaries, hard-splitting
    any single sentence that alone exceeds the limit."""
    start, end = span
    pieces: list[tuple[int, int]] = []
    current: tuple[int, int] | None = None
    for s_start, s_end in sentence_spans(body[start:end], offset=start):
        if s_end - s_start > policy.max_fragment_chars:
            if current is not None:
                pieces.append(current)
                current = None
            pos = s_start
            while pos < s_end:
                chunk_end = min(pos + policy.max_fragment_chars, s_end)
                trimmed = _trim(body, pos, chunk_end)
                if trimmed is not None:
                    pieces.append(trimmed)
                pos = chunk_end
            continue
        if current is None:
            current = (s_start, s_end)
        elif s_end - current[0] <= policy.max_fragment_chars:
            current = (current[0], s_end)
        else:
            pieces.append(current)
            current = (s_start, s_end)
    if current is not None:
        pieces.append(current)
    # A stub left at the end folds back into its predecessor when it fits.
    if (
        len(pieces) >= 2
        and pieces[-1][1] - pieces[-1][0] < policy.min_fragment_chars
        and pieces[-1][1] - pieces[-2][0] <= policy.max_fragment_chars
    ):
        tail = pieces.pop()
        prev = pieces.pop()
        pieces.append((prev[0], tail[1]))
    return pieces


def _trim(body: str, start: int, end: int) -> tuple[int, int] | None:
    while start < end and body[start].isspace():
        start += 1
    while end > start and body[end - 1].isspace():
        end -= 1
    return (start, end) if end > start else None


def _is_complete(text: str) -> bool:
    return bool(_TERMINAL_PUNCT.search(text))


def split_document(doc: Document, policy: SplitPolicy | None = None) -> list[Fragment]:
    """Split a document body into paragraph fragments.

    The union of fragment char_spans covers every non-whitespace character
    of the normalized body exactly once, spans are monotone and
    non-overlapping, and the result is a pure function of (body, policy).

    Raises EmptyDocument when the body has no non-whitespace content.
    """
    policy = policy or SplitPolicy()
    body = normalize_body(doc.body)
    if not body.strip():
        raise EmptyDocument(f"document {doc.meta.doc_id!r} has an empty body")

    spans: list[tuple[int, int]] = []
    for para in _paragraph_spans(body):
        if para[1] - para[0] > policy.max_fragment_chars:
            spans.extend(_resplit_long(body, para, policy))
        else:
            spans.append(para)

    # Forward-merge incomplete short fragments (headings and similar stubs).
    merged: list[tuple[int, int]] = []
    idx = 0
    while idx < len(spans):
        start, end = spans[idx]
        while (
            idx + 1 < len(spans)
            and end - start < policy.min_fragment_chars
            and not _is_complete(body[start:end])
            and spans[idx + 1][1] - start <= policy.max_fragment_chars
        ):
            idx += 1
            end = spans[idx][1]
        merged.append((start, end))
        idx += 1

    return [
        Fragment(
            fragment_id=f"{doc.meta.doc_id}:{ordinal}",
            doc_id=doc.meta.doc_id,
            ordinal=ordinal,
            text=body[start:end],
            char_span=(start, end),
        )
        for ordinal, (start, end) in enumerate(merged)
    ]


@dataclass(frozen=True)
class CollectionData:
    """One stored collection: its manifest and every fragment, in order."""

    manifest: CollectionManifest
    fragments: tuple[Fragment, ...]

    def fragment_by_id(self) -> dict[str, Fragment]:
        return {f.fragment_id: f for f in self.fragments}


class FragmentStore:
    """Disk-backed fragment store: one JSON-lines file per collection.

    The first line is a header record carrying the collection manifest;
    each following line is one fragment. Writes replace the whole file
    atomically, so re-ingesting a collection never duplicates and readers
    never observe a partial write.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _collection_path(self, collection_id: str) -> Path:
        return self.root / "collections" / collection_id / "fragments.jsonl"

    def collection_dir(self, collection_id: str) -> Path:
        return self.root / "collections" / collection_id

    def has_collection(self, collection_id: str) -> bool:
        return self._collection_path(collection_id).exists()

    def list_collections(self) -> list[str]:
        base = self.root / "collections"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if (p / "fragments.jsonl").exists())

    def write(self, data: CollectionData) -> None:
        path = self._collection_path(data.manifest.collection_id)
        header = {"type": "header", "format_version": STORE_FORMAT_VERSION}
        header.update(data.manifest.to_dict())
        lines = [canonical_json(header)]
        lines.extend(
            canonical_json({"type": "fragment", **fragment.to_dict()})
            for fragment in data.fragments
        )
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".jsonl.tmp")
            tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            raise StoreWriteError(f"cannot write fragment store for "
                                  f"{data.manifest.collection_id!r}: {exc}") from exc

    def read(self, collection_id: str) -> CollectionData:
        path = self._collection_path(collection_id)
        if not path.exists():
            raise FileNotFoundError(f"no stored collection {collection_id!r}")
        lines = path.read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        manifest = manifest_from_dict(header)
        fragments = tuple(Fragment.from_dict(json.loads(line)) for line in lines[1:])
        return CollectionData(manifest=manifest, fragments=fragments)


def ingest_collection(
    manifest: CollectionManifest,
    doc_bodies: dict[str, str],
    store: FragmentStore,
    policy: SplitPolicy | None = None,
) -> IngestReport:
    """Split every document and persist the collection's fragment store.

    Documents with a missing or empty body are reported in
    ``report.skipped`` without aborting the batch. Re-ingesting the same
    collection_id replaces the stored state.
    """
    policy = policy or SplitPolicy()
    report = IngestReport()
    fragments: list[Fragment] = []
    kept: list[DocumentMeta] = []
    for meta in manifest.documents:
        body = doc_bodies.get(meta.doc_id)
        if body is None:
            report.skipped.append((meta.doc_id, "missing body"))
            continue
        try:
            doc_fragments = split_document(Document(meta=meta, body=body), policy)
        except EmptyDocument:
            report.skipped.append((meta.doc_id, "empty body"))
            continue
        fragments.extend(doc_fragments)
        kept.append(meta)
        report.documents += 1
    if not kept:
        raise StoreWriteError(
            f"collection {manifest.collection_id!r}: every document was skipped, "
            "refusing to store an empty collection"
        )
    report.fragments = len(fragments)
    stored_manifest = replace(manifest, documents=tuple(kept))
    store.write(CollectionData(manifest=stored_manifest, fragments=tuple(fragments)))
    return report


def read_bodies_dir(directory: str | Path, manifest: CollectionManifest) -> dict[str, str]:
    """Load ``{doc_id}.txt`` bodies for every manifest document that has one."""
    directory = Path(directory)
    bodies: dict[str, str] = {}
    for meta in manifest.documents:
        path = directory / f"{meta.doc_id}.txt"
        if path.exists():
            bodies[meta.doc_id] = path.read_text(encoding="utf-8")
    return bodies


def extract_body(path: str | Path, extractor_command: list[str] | None = None) -> str:
    """Read a document body, optionally through an external text extractor.

    Plain text is read directly. For any other source format, pass
    ``extractor_command``: it runs as a subprocess with the file path
    appended and must print UTF-8 text to stdout. Parsing binary formats
    in-process is deliberately not supported.
    """
    path = Path(path)
    if extractor_command:
        result = subprocess.run([*extractor_command, str(path)],
                                capture_output=True, check=True)
        return result.stdout.decode("utf-8")
    return path.read_text(encoding="utf-8")
