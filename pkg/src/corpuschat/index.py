"""Exact top-k cosine search over fragment embeddings.

A flat full-scan index: at desk scale (hundreds of documents) exactness is
cheap and lets every search be checked against a brute-force oracle.
Searches are allowed concurrently; upserts take the write lock and swap in
a rebuilt score matrix, so no search observes a partial batch.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .embedding import EmbeddingVector
from .errors import DimensionMismatch, EmptyIndex

INDEX_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class IndexEntry:
    fragment_id: str
    doc_id: str
    vector: EmbeddingVector
    language: str = "en"


@dataclass(frozen=True)
class SearchResult:
    fragment_id: str
    doc_id: str
    score: float
    probe_index: int | None = None  # set by multi_probe_search


class VectorIndex:
    """Flat exact cosine index keyed by fragment_id."""

    def __init__(self, dimension: int, provider_id: str = ""):
        self.dimension = dimension
        self.provider_id = provider_id
        self._entries: dict[str, IndexEntry] = {}
        self._lock = threading.RLock()
        self._ids: list[str] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def upsert(self, entries: Iterable[IndexEntry]) -> int:
        """Insert or replace entries; returns the index size afterwards."""
        entries = list(entries)
        for entry in entries:
            if entry.vector.dimension != self.dimension:
                raise DimensionMismatch(
                    f"entry {entry.fragment_id!r} has dimension "
                    f"{entry.vector.dimension}, index wants {self.dimension}"
                )
        with self._lock:
            for entry in entries:
                self._entries[entry.fragment_id] = entry
            self._rebuild()
            return len(self._entries)

    def _rebuild(self) -> None:
        self._ids = sorted(self._entries)
        if self._ids:
            self._matrix = np.array(
                [self._entries[i].vector.values for i in self._ids], dtype=np.float64
            )
        else:
            self._matrix = None

    def _scores(self, query_vec: EmbeddingVector) -> np.ndarray:
        if query_vec.dimension != self.dimension:
            raise DimensionMismatch(
                f"query dimension {query_vec.dimension} != index dimension {self.dimension}"
            )
        assert self._matrix is not None
        return self._matrix @ np.asarray(query_vec.values, dtype=np.float64)

    def search(
        self,
        query_vec: EmbeddingVector,
        k: int,
        filter: Callable[[IndexEntry], bool] | None = None,
    ) -> list[SearchResult]:
        """Exact top-k by cosine, ties broken by ascending fragment_id.

        Raises EmptyIndex when the index holds no entries; a filter that
        matches nothing returns an empty list instead.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock:
            if not self._entries:
                raise EmptyIndex("search on an empty index")
            scores = self._scores(query_vec)
            if filter is not None:
                keep = [i for i, fid in enumerate(self._ids) if filter(self._entries[fid])]
                if not keep:
                    return []
                positions = np.array(keep)
                sub_scores = scores[positions]
            else:
                positions = np.arange(len(self._ids))
                sub_scores = scores
            # Ids are sorted at build time, so a stable sort on -score keeps
            # equal-score entries in fragment_id order.
            order = np.argsort(-sub_scores, kind="stable")[:k]
            return [
                SearchResult(
                    fragment_id=self._ids[positions[i]],
                    doc_id=self._entries[self._ids[positions[i]]].doc_id,
                    score=float(sub_scores[i]),
                )
                for i in order
            ]

    def multi_probe_candidates(
        self, probes: list[tuple[EmbeddingVector, float]], k: int
    ) -> list[str]:
        """Union of the per-probe top-k fragment_ids, sorted."""
        candidates: set[str] = set()
        for vec, _ in probes:
            candidates.update(r.fragment_id for r in self.search(vec, k))
        return sorted(candidates)

    def multi_probe_search(
        self, probes: list[tuple[EmbeddingVector, float]], k: int
    ) -> list[SearchResult]:
        """Weighted union search across probes.

        Candidates are the union of per-probe top-k; each candidate scores
        max over probes of (weight * cosine) and carries the index of the
        probe that achieved the max.
        """
        if not probes:
            raise ValueError("multi_probe_search requires at least one probe")
        for _, weight in probes:
            if not 0.0 < weight <= 1.0:
                raise ValueError(f"probe weight {weight!r} outside (0, 1]")
        with self._lock:
            candidates = self.multi_probe_candidates(probes, k)
            position = {fid: i for i, fid in enumerate(self._ids)}
            rows = np.array([position[fid] for fid in candidates])
            best_scores = np.full(len(candidates), -np.inf)
            best_probe = np.zeros(len(candidates), dtype=int)
            for probe_index, (vec, weight) in enumerate(probes):
                weighted = self._scores(vec)[rows] * weight
                better = weighted > best_scores
                best_scores[better] = weighted[better]
                best_probe[better] = probe_index
            order = np.argsort(-best_scores, kind="stable")[:k]
            return [
                SearchResult(
                    fragment_id=candidates[i],
                    doc_id=self._entries[candidates[i]].doc_id,
                    score=float(best_scores[i]),
                    probe_index=int(best_probe[i]),
                )
                for i in order
            ]

    def save(self, path: str | Path) -> None:
        """Write header plus one entry per line; atomic replace."""
        path = Path(path)
        with self._lock:
            from .textutil import canonical_json

            lines = [canonical_json({
                "type": "header",
                "format_version": INDEX_FORMAT_VERSION,
                "dimension": self.dimension,
                "provider_id": self.provider_id,
                "count": len(self._entries),
            })]
            for fragment_id in self._ids:
                entry = self._entries[fragment_id]
                lines.append(canonical_json({
                    "fragment_id": entry.fragment_id,
                    "doc_id": entry.doc_id,
                    "language": entry.language,
                    "vector": list(entry.vector.values),
                }))
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        index = cls(dimension=header["dimension"], provider_id=header.get("provider_id", ""))
        entries = []
        for line in lines[1:]:
            raw = json.loads(line)
            entries.append(IndexEntry(
                fragment_id=raw["fragment_id"],
                doc_id=raw["doc_id"],
                language=raw.get("language", "en"),
                vector=EmbeddingVector(values=tuple(raw["vector"]),
                                       provider_id=header.get("provider_id", "")),
            ))
        if entries:
            index.upsert(entries)
        return index
