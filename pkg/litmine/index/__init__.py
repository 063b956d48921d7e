"""
Embedded full-text index: BM25 search, exact terms aggregations,
snapshot/restore and a read-only HTTP query service.
"""

from .models import FIELD_WEIGHTS, KEYWORD_FIELDS, TEXT_FIELDS, AggregationResult, IndexedDoc, SearchHit
from .search_index import BM25_B, BM25_K1, SearchIndex, SegmentWriter, bm25_idf
from .service import build_index_app
from .snapshot import read_snapshot, restore, snapshot

__all__ = [
    "AggregationResult",
    "BM25_B",
    "BM25_K1",
    "FIELD_WEIGHTS",
    "IndexedDoc",
    "KEYWORD_FIELDS",
    "SearchHit",
    "SearchIndex",
    "SegmentWriter",
    "TEXT_FIELDS",
    "bm25_idf",
    "build_index_app",
    "read_snapshot",
    "restore",
    "snapshot",
]
