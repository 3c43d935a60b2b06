"""Context packing and answer generation with provenance-scored citations.

Ranked document clusters are packed into a token budget one document at a
time: a cluster enters whole or truncated from its lowest-scoring
fragments, never interleaved with another document. The prompt and the
citation list both carry each document's provenance (title, authors, date,
source), and citation confidence is copied unchanged from the cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import Protocol

from .errors import BudgetTooSmall, ProviderUnavailable
from .ingest import DocumentMeta
from .providers import TransportError, with_retries
from .retrieval import RankedRetrieval
from .textutil import split_sentences

PROMPT_TEMPLATE_VERSION = "v1"
OFFLINE_MODEL_ID = "extractive-v1"
_SAFETY_MARGIN = 1.1  # chars/4 is optimistic for some tokenizers


def estimate_tokens(text: str) -> int:
    """chars/4 heuristic with a 10% safety margin; >= 1 for non-empty text."""
    if not text:
        return 0
    return max(1, math.ceil(len(text) / 4 * _SAFETY_MARGIN))


def provenance_header(meta: DocumentMeta) -> str:
    authors = ", ".join(meta.authors) if meta.authors else "unknown"
    date = meta.publication_date or "n.d."
    header = f"{meta.title} — {authors} ({date})"
    if meta.source_uri:
        header += f" — {meta.source_uri}"
    return header


@dataclass(frozen=True)
class PackBlock:
    """One document's slice of the context: header plus fragment texts."""

    provenance_header: str
    fragment_texts: tuple[str, ...]
    doc_meta: DocumentMeta
    confidence: float
    fragment_ids: tuple[str, ...]


@dataclass(frozen=True)
class ContextPack:
    blocks: tuple[PackBlock, ...]
    token_estimate: int


@dataclass(frozen=True)
class Citation:
    doc_meta: DocumentMeta
    confidence: float
    fragment_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_meta.doc_id,
            "title": self.doc_meta.title,
            "authors": list(self.doc_meta.authors),
            "date": self.doc_meta.publication_date,
            "uri": self.doc_meta.source_uri,
            "confidence": self.confidence,
            "fragments": list(self.fragment_ids),
        }


@dataclass(frozen=True)
class Answer:
    text: str
    citations: tuple[Citation, ...]
    model_id: str
    offline: bool

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "citations": [c.to_dict() for c in self.citations],
            "model_id": self.model_id,
            "offline": self.offline,
        }


def pack_context(ranked: RankedRetrieval, budget_tokens: int) -> ContextPack:
    """Pack clusters into the budget in rank order.

    A cluster that cannot fit whole is truncated by dropping its
    lowest-scoring fragments; once a cluster cannot fit its header plus its
    best fragment, packing stops (later clusters are never promoted past
    it). Raises BudgetTooSmall when the top cluster does not fit at all.
    """
    if budget_tokens < 1:
        raise BudgetTooSmall(f"budget of {budget_tokens} tokens is not usable")
    blocks: list[PackBlock] = []
    used = 0
    for rank, cluster in enumerate(ranked.clusters):
        header = provenance_header(cluster.doc_meta)
        header_cost = estimate_tokens(header)
        remaining = budget_tokens - used
        kept = list(cluster.hits)
        while kept:
            cost = header_cost + sum(estimate_tokens(h.fragment.text) for h in kept)
            if cost <= remaining:
                break
            kept.pop()  # hits are sorted by score desc; drop the weakest
        if not kept:
            if rank == 0:
                raise BudgetTooSmall(
                    f"budget {budget_tokens} cannot fit the top document's "
                    f"header and best fragment"
                )
            break
        cost = header_cost + sum(estimate_tokens(h.fragment.text) for h in kept)
        used += cost
        blocks.append(PackBlock(
            provenance_header=header,
            fragment_texts=tuple(h.fragment.text for h in kept),
            doc_meta=cluster.doc_meta,
            confidence=cluster.confidence,
            fragment_ids=tuple(h.fragment.fragment_id for h in kept),
        ))
    return ContextPack(blocks=tuple(blocks), token_estimate=used)


def _template() -> str:
    name = f"prompt_template_{PROMPT_TEMPLATE_VERSION}.txt"
    return resources.files("corpuschat.data").joinpath(name).read_text("utf-8")


def format_prompt(query: str, pack: ContextPack) -> str:
    """Render the versioned prompt template for a packed context."""
    parts = []
    for n, block in enumerate(pack.blocks, start=1):
        body = "\n".join(block.fragment_texts)
        parts.append(f"[SOURCE {n}] {block.provenance_header}\n{body}")
    sources = "\n\n".join(parts)
    return _template().replace("{{SOURCES}}", sources).replace("{{QUERY}}", query.strip())


class LlmProvider(Protocol):
    model_id: str

    def complete(self, messages: list[dict]) -> str:
        ...


class HttpLlmProvider:
    """Chat-completion provider over the JSON protocol.

    Request ``{"model_id", "messages"}`` to ``{base_url}/chat``; response
    ``{"text"}``.
    """

    def __init__(self, base_url: str, model_id: str, transport, attempts: int = 3, sleep=None):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.transport = transport
        self.attempts = attempts
        self._sleep = sleep

    def complete(self, messages: list[dict]) -> str:
        payload = {"model_id": self.model_id, "messages": messages}
        kwargs = {"attempts": self.attempts}
        if self._sleep is not None:
            kwargs["sleep"] = self._sleep
        try:
            response = with_retries(
                lambda: self.transport.post_json(f"{self.base_url}/chat", payload), **kwargs
            )
        except TransportError as exc:
            raise ProviderUnavailable(str(exc), provider="llm") from exc
        return str(response.get("text", ""))


def _citations(pack: ContextPack) -> tuple[Citation, ...]:
    citations = [
        Citation(doc_meta=b.doc_meta, confidence=b.confidence, fragment_ids=b.fragment_ids)
        for b in pack.blocks
    ]
    citations.sort(key=lambda c: (-c.confidence, c.doc_meta.doc_id))
    return tuple(citations)


def _extractive_answer(pack: ContextPack) -> str:
    top = pack.blocks[0]
    sentences = split_sentences(top.fragment_texts[0])
    lead = " ".join(s.strip() for s in sentences[:3])
    return f"Based on {top.doc_meta.title}: {lead}"


def synthesize(query: str, pack: ContextPack, llm: LlmProvider | None = None) -> Answer:
    """Produce an answer with citations for a packed context.

    With no provider (offline mode) the answer is extractive and
    deterministic: the leading sentences of the top document's best
    fragment. Raises BudgetTooSmall for an empty pack and
    ProviderUnavailable when the provider fails or returns nothing.
    """
    if not pack.blocks:
        raise BudgetTooSmall("context pack is empty; nothing fit the budget")
    citations = _citations(pack)
    if llm is None:
        return Answer(
            text=_extractive_answer(pack),
            citations=citations,
            model_id=OFFLINE_MODEL_ID,
            offline=True,
        )
    prompt = format_prompt(query, pack)
    text = llm.complete([{"role": "user", "content": prompt}]).strip()
    if not text:
        raise ProviderUnavailable("provider returned an empty completion", provider="llm")
    return Answer(text=text, citations=citations, model_id=llm.model_id, offline=False)
