"""Local retrieval-augmented chat over document collections.

Pipeline: ingest documents into paragraph fragments, extract and enrich
terms through a knowledge graph, embed fragments into a vector index, then
answer queries with document-level cluster ranking and provenance-cited,
confidence-scored sources.
"""

__version__ = "0.1.0"
