"""Linking terms to knowledge-graph concepts and multilingual expansion.

Two client flavors answer the same three lookups (exact label match,
label containment, concept fetch): an offline client loaded from a
concept fixture file, and a SPARQL client that caches every response so
online runs are replayable. Linking picks one concept per term; expansion
walks the concept's related/broader edges and collects labels in other
languages with a per-hop weight decay.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol

from .errors import KgUnavailable, MalformedFixture
from .terms import Term
from .textutil import canonical_json, normalize_surface, request_hash

_IRI_RE = re.compile(r"^\w[\w+.-]*:\S+$")

HOP_DECAY_DEFAULT = 0.5
RELATED_LABEL_CAP = 8
FIXTURE_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class Relation:
    kind: str  # "related", "broader", or a custom predicate tag
    iri: str


@dataclass(frozen=True)
class KgConcept:
    """A concept with multilingual labels and tagged outgoing relations."""

    concept_iri: str
    pref_labels: tuple[tuple[str, str], ...]  # (language, label)
    alt_labels: tuple[tuple[str, str], ...]  # (language, label)
    related: tuple[Relation, ...] = ()
    source_graph: str = ""

    def __post_init__(self):
        if not _IRI_RE.match(self.concept_iri):
            raise MalformedFixture(f"{self.concept_iri!r} is not an IRI")
        if not self.pref_labels:
            raise MalformedFixture(f"concept {self.concept_iri} has no prefLabel")
        seen: set[str] = set()
        for rel in self.related:
            if rel.iri == self.concept_iri:
                raise MalformedFixture(f"concept {self.concept_iri} relates to itself")
            if rel.iri in seen:
                raise MalformedFixture(
                    f"concept {self.concept_iri} lists {rel.iri} more than once"
                )
            seen.add(rel.iri)

    def labels(self) -> list[tuple[str, str, str]]:
        """All labels as (language, label, kind) with prefLabels first."""
        out = [(lang, label, "pref") for lang, label in self.pref_labels]
        out.extend((lang, label, "alt") for lang, label in self.alt_labels)
        return out


@dataclass(frozen=True)
class ExpansionLabel:
    text: str
    language: str
    weight: float

    def to_dict(self) -> dict:
        return {"text": self.text, "language": self.language, "weight": self.weight}


@dataclass(frozen=True)
class EnrichedTerm:
    """A term with its linked concept (if any) and expansion labels."""

    term: Term
    concept: KgConcept | None
    expansion_labels: tuple[ExpansionLabel, ...] = ()

    def __post_init__(self):
        if self.concept is None and self.expansion_labels:
            raise ValueError("an unlinked term cannot carry expansion labels")
        for label in self.expansion_labels:
            if not 0.0 < label.weight <= 1.0:
                raise ValueError(f"expansion weight {label.weight!r} outside (0, 1]")
            if label.weight > self.term.weight + 1e-12:
                raise ValueError("expansion weight exceeds the term weight")

    def to_dict(self) -> dict:
        return {
            "term": self.term.to_dict(),
            "concept_iri": self.concept.concept_iri if self.concept else None,
            "expansion_labels": [l.to_dict() for l in self.expansion_labels],
        }


class KgClient(Protocol):
    def find_exact(self, surface: str) -> list[KgConcept]:
        """Concepts whose pref/alt label equals the normalized surface."""
        ...

    def find_containing(self, surface: str) -> list[tuple[str, KgConcept]]:
        """(label, concept) pairs whose label contains the full surface."""
        ...

    def fetch(self, iri: str) -> KgConcept | None:
        ...


class NullKgClient:
    """Matches nothing; used when no graph is configured."""

    def find_exact(self, surface: str) -> list[KgConcept]:
        return []

    def find_containing(self, surface: str) -> list[tuple[str, KgConcept]]:
        return []

    def fetch(self, iri: str) -> KgConcept | None:
        return None


class SkosFixtureClient:
    """In-memory client over a parsed concept fixture."""

    def __init__(self, concepts: list[KgConcept]):
        self._by_iri = {c.concept_iri: c for c in concepts}
        self._exact: dict[str, list[str]] = {}
        for concept in concepts:
            for _, label, _ in concept.labels():
                key = normalize_surface(label)
                iris = self._exact.setdefault(key, [])
                if concept.concept_iri not in iris:
                    iris.append(concept.concept_iri)
        for rel_iris in self._exact.values():
            rel_iris.sort()

    def __len__(self) -> int:
        return len(self._by_iri)

    def find_exact(self, surface: str) -> list[KgConcept]:
        return [self._by_iri[iri] for iri in self._exact.get(normalize_surface(surface), [])]

    def find_containing(self, surface: str) -> list[tuple[str, KgConcept]]:
        needle = normalize_surface(surface)
        hits: list[tuple[str, KgConcept]] = []
        for iri in sorted(self._by_iri):
            concept = self._by_iri[iri]
            for _, label, _ in concept.labels():
                if needle in normalize_surface(label):
                    hits.append((label, concept))
        return hits

    def fetch(self, iri: str) -> KgConcept | None:
        return self._by_iri.get(iri)


def load_skos_fixture(path: str | Path) -> SkosFixtureClient:
    """Load the documented concept fixture format.

    Validates referential integrity: every related/broader IRI must name a
    concept in the same file. Raises MalformedFixture otherwise.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MalformedFixture(f"cannot read fixture {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFixture(f"fixture {path} is not valid JSON: {exc}") from exc
    rows = raw.get("concepts")
    if not isinstance(rows, list) or not rows:
        raise MalformedFixture("fixture has no 'concepts' list")

    source = f"fixture:{path.name}"
    concepts: list[KgConcept] = []
    for row in rows:
        iri = row.get("iri", "")
        pref = tuple(sorted((lang, label) for lang, label in (row.get("prefLabel") or {}).items()))
        alt_pairs: list[tuple[str, str]] = []
        for lang, labels in (row.get("altLabel") or {}).items():
            alt_pairs.extend((lang, label) for label in labels)
        relations = [Relation(kind="related", iri=i) for i in row.get("related", [])]
        relations.extend(Relation(kind="broader", iri=i) for i in row.get("broader", []))
        concepts.append(
            KgConcept(
                concept_iri=iri,
                pref_labels=pref,
                alt_labels=tuple(sorted(alt_pairs)),
                related=tuple(relations),
                source_graph=source,
            )
        )
    known = {c.concept_iri for c in concepts}
    if len(known) != len(concepts):
        raise MalformedFixture("fixture contains duplicate concept IRIs")
    for concept in concepts:
        for rel in concept.related:
            if rel.iri not in known:
                raise MalformedFixture(
                    f"concept {concept.concept_iri} references unknown IRI {rel.iri}"
                )
    return SkosFixtureClient(concepts)


def _choose_exact(candidates: list[KgConcept]) -> KgConcept:
    return min(candidates, key=lambda c: c.concept_iri)


def _choose_containing(hits: list[tuple[str, KgConcept]]) -> KgConcept:
    # Shortest label wins (closest to the surface); ties fall back to the
    # label text, then the lexicographically smallest IRI.
    best = min(hits, key=lambda h: (len(normalize_surface(h[0])), normalize_surface(h[0]),
                                    h[1].concept_iri))
    return best[1]


def _own_labels(term: Term, concept: KgConcept,
                languages: tuple[str, ...] | None) -> tuple[ExpansionLabel, ...]:
    base = min(1.0, term.weight)
    if base <= 0.0:
        return ()
    surface_key = normalize_surface(term.surface)
    out: list[ExpansionLabel] = []
    seen: set[str] = {surface_key}
    for lang, label, _ in sorted(concept.labels()):
        if languages is not None and lang not in languages:
            continue
        key = normalize_surface(label)
        if key in seen:
            continue
        seen.add(key)
        out.append(ExpansionLabel(text=label, language=lang, weight=base))
    return tuple(out)


def link_term(
    term: Term,
    kg: KgClient,
    languages: tuple[str, ...] | None = None,
) -> EnrichedTerm:
    """Attach the best-matching concept to a term.

    Exact pref/alt label match wins; otherwise the highest-ranked label
    containing the full surface; otherwise the term stays unlinked. Ties
    resolve to the lexicographically smallest IRI. The linked concept's own
    labels (minus the original surface) become hop-zero expansion labels.

    Raises KgUnavailable when the client cannot answer (propagated).
    """
    exact = kg.find_exact(term.surface)
    if exact:
        concept = _choose_exact(exact)
    else:
        containing = kg.find_containing(term.surface)
        if containing:
            concept = _choose_containing(containing)
        else:
            return EnrichedTerm(term=term, concept=None)
    return EnrichedTerm(
        term=term,
        concept=concept,
        expansion_labels=_own_labels(term, concept, languages),
    )


def expand_terms(
    terms: list[EnrichedTerm],
    kg: KgClient,
    languages: tuple[str, ...] | None = None,
    depth: int = 1,
    decay: float = HOP_DECAY_DEFAULT,
    related_cap: int = RELATED_LABEL_CAP,
) -> list[EnrichedTerm]:
    """Extend expansion labels with related-concept labels up to ``depth`` hops.

    Weight decays by ``decay`` per hop from the term's hop-zero base. At
    most ``related_cap`` related labels are added per term, admitted hop by
    hop in a fixed order, so a deeper expansion is always a superset of a
    shallower one. Depth 0 returns the input unchanged.
    """
    if depth not in (0, 1, 2):
        raise ValueError("depth must be 0, 1, or 2")
    if depth == 0:
        return list(terms)

    out: list[EnrichedTerm] = []
    for enriched in terms:
        if enriched.concept is None:
            out.append(enriched)
            continue
        base = min(1.0, enriched.term.weight)
        if base <= 0.0:
            out.append(enriched)
            continue
        seen = {normalize_surface(enriched.term.surface)}
        seen.update(normalize_surface(l.text) for l in enriched.expansion_labels)
        added: list[ExpansionLabel] = []
        visited = {enriched.concept.concept_iri}
        frontier = [enriched.concept]
        for hop in range(1, depth + 1):
            next_frontier: list[KgConcept] = []
            hop_weight = base * (decay ** hop)
            if hop_weight <= 0.0:
                break
            neighbor_iris: list[str] = []
            for concept in frontier:
                neighbor_iris.extend(rel.iri for rel in concept.related)
            for iri in sorted(set(neighbor_iris)):
                if iri in visited:
                    continue
                visited.add(iri)
                neighbor = kg.fetch(iri)
                if neighbor is None:
                    continue
                next_frontier.append(neighbor)
                for lang, label, _ in sorted(neighbor.labels()):
                    if len(added) >= related_cap:
                        break
                    if languages is not None and lang not in languages:
                        continue
                    key = normalize_surface(label)
                    if key in seen:
                        continue
                    seen.add(key)
                    added.append(ExpansionLabel(text=label, language=lang, weight=hop_weight))
            frontier = next_frontier
            if len(added) >= related_cap:
                break
        out.append(replace(enriched, expansion_labels=enriched.expansion_labels + tuple(added)))
    return out


def enrich_terms(
    terms: list[Term],
    kg: KgClient,
    languages: tuple[str, ...] | None = None,
    depth: int = 1,
    decay: float = HOP_DECAY_DEFAULT,
) -> list[EnrichedTerm]:
    """Link then expand a list of terms; order is preserved."""
    linked = [link_term(term, kg, languages) for term in terms]
    return expand_terms(linked, kg, languages=languages, depth=depth, decay=decay)


_SKOS_PREF = "http://www.w3.org/2004/02/skos/core#prefLabel"
_SKOS_ALT = "http://www.w3.org/2004/02/skos/core#altLabel"
_DEFAULT_RELATED_PREDICATES = (
    ("related", "http://www.w3.org/2004/02/skos/core#related"),
    ("broader", "http://www.w3.org/2004/02/skos/core#broader"),
)


class SparqlKgClient:
    """SPARQL-over-HTTP client with a replayable response cache.

    Every SELECT is keyed by (endpoint, query); responses land in a
    JSON-lines cache file, so a second run with the same cache needs no
    network. Raises KgUnavailable on transport failure.
    """

    def __init__(
        self,
        endpoint: str,
        cache_path: str | Path | None = None,
        auth_token: str | None = None,
        related_predicates: tuple[tuple[str, str], ...] = _DEFAULT_RELATED_PREDICATES,
        http_get=None,
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint
        self.cache_path = Path(cache_path) if cache_path else None
        self.auth_token = auth_token
        self.related_predicates = related_predicates
        self.timeout = timeout
        self._http_get = http_get or self._requests_get
        self._cache: dict[str, dict] = {}
        if self.cache_path and self.cache_path.exists():
            for line in self.cache_path.read_text(encoding="utf-8").splitlines():
                row = json.loads(line)
                self._cache[row["request_hash"]] = row["response"]

    def _requests_get(self, endpoint: str, query: str) -> dict:
        import requests

        headers = {"Accept": "application/sparql-results+json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        response = requests.get(endpoint, params={"query": query},
                                headers=headers, timeout=self.timeout)
        response.raise_for_status()
        return response.json()

    def _select(self, query: str) -> list[dict]:
        key = request_hash({"endpoint": self.endpoint, "query": query})
        if key in self._cache:
            payload = self._cache[key]
        else:
            try:
                payload = self._http_get(self.endpoint, query)
            except Exception as exc:
                raise KgUnavailable(f"SPARQL endpoint {self.endpoint} failed: {exc}") from exc
            self._cache[key] = payload
            if self.cache_path:
                self.cache_path.parent.mkdir(parents=True, exist_ok=True)
                with self.cache_path.open("a", encoding="utf-8") as handle:
                    handle.write(canonical_json({
                        "request_hash": key,
                        "response": payload,
                        "fetched_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                    }) + "\n")
        rows = []
        for binding in payload.get("results", {}).get("bindings", []):
            rows.append({var: cell.get("value", "")
                         for var, cell in binding.items()
                         if cell is not None})
        return rows

    @staticmethod
    def _literal(text: str) -> str:
        return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'

    def _concept_iris_where(self, label_filter: str) -> list[str]:
        query = (
            f"SELECT DISTINCT ?c WHERE {{ ?c <{_SKOS_PREF}>|<{_SKOS_ALT}> ?l . "
            f"FILTER({label_filter}) }} ORDER BY ?c LIMIT 50"
        )
        return [row["c"] for row in self._select(query) if row.get("c")]

    def find_exact(self, surface: str) -> list[KgConcept]:
        literal = self._literal(normalize_surface(surface))
        iris = self._concept_iris_where(f"LCASE(STR(?l)) = {literal}")
        concepts = [self.fetch(iri) for iri in iris]
        return [c for c in concepts if c is not None]

    def find_containing(self, surface: str) -> list[tuple[str, KgConcept]]:
        literal = self._literal(normalize_surface(surface))
        query = (
            f"SELECT DISTINCT ?c ?l WHERE {{ ?c <{_SKOS_PREF}>|<{_SKOS_ALT}> ?l . "
            f"FILTER(CONTAINS(LCASE(STR(?l)), {literal})) }} ORDER BY ?c ?l LIMIT 50"
        )
        hits: list[tuple[str, KgConcept]] = []
        for row in self._select(query):
            concept = self.fetch(row["c"]) if row.get("c") else None
            if concept is not None:
                hits.append((row.get("l", ""), concept))
        return hits

    def fetch(self, iri: str) -> KgConcept | None:
        label_query = (
            f"SELECT ?p ?l (LANG(?l) AS ?lang) WHERE {{ <{iri}> ?p ?l . "
            f"VALUES ?p {{ <{_SKOS_PREF}> <{_SKOS_ALT}> }} }} ORDER BY ?p ?lang ?l"
        )
        rows = self._select(label_query)
        pref: list[tuple[str, str]] = []
        alt: list[tuple[str, str]] = []
        for row in rows:
            lang = row.get("lang") or "en"
            target = pref if row.get("p") == _SKOS_PREF else alt
            target.append((lang, row.get("l", "")))
        if not pref and not alt:
            return None
        if not pref:
            pref, alt = alt[:1], alt[1:]

        relations: list[Relation] = []
        seen_rel: set[str] = set()
        for kind, predicate in self.related_predicates:
            rel_query = f"SELECT ?o WHERE {{ <{iri}> <{predicate}> ?o }} ORDER BY ?o LIMIT 50"
            for row in self._select(rel_query):
                target_iri = row.get("o", "")
                if target_iri and target_iri != iri and target_iri not in seen_rel:
                    seen_rel.add(target_iri)
                    relations.append(Relation(kind=kind, iri=target_iri))
        return KgConcept(
            concept_iri=iri,
            pref_labels=tuple(sorted(pref)),
            alt_labels=tuple(sorted(alt)),
            related=tuple(relations),
            source_graph=self.endpoint,
        )
