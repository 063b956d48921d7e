"""
Embedded inverted index with BM25 search and terms aggregations.

Persistence is a directory of append-only segment files, one per writer:

    <index_root>/segments/segment-<writer_id>.jsonl

Each line is ``{"stamp": <ns>, "writer": <id>, "doc": IndexedDoc}``. A
writer flushes and fsyncs on commit (once per task batch). Readers keep
in-memory postings rebuilt from the segments and pick up new lines on
refresh(); when the same doc_id appears more than once the entry with the
highest (stamp, writer) wins, so re-indexing replaces and never duplicates.
A torn trailing line from a crashed writer is ignored until completed.

Scoring is BM25 (k1=1.2, b=0.75, idf = ln(1 + (N - df + 0.5) / (df + 0.5)))
computed per analyzed field over all indexed docs and summed with field
weights (title x2). The analyzer is features.tokenize.
"""

import json
import logging
import math
import os
import re
import threading
import time
import uuid
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from litmine.errors import StorageIOError, ValidationError
from litmine.features import tokenize

from .models import FIELD_WEIGHTS, KEYWORD_FIELDS, SNIPPET_CHARS, TEXT_FIELDS, AggregationResult, IndexedDoc, SearchHit

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75
SEGMENT_DIR = "segments"
SEGMENT_PATTERN = re.compile(r"^segment-([A-Za-z0-9_-]+)\.jsonl$")


def bm25_idf(n_docs: int, df: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def segment_path(index_root: Union[str, Path], writer_id: str) -> Path:
    return Path(index_root) / SEGMENT_DIR / f"segment-{writer_id}.jsonl"


class SegmentWriter:
    """
    Append-only segment owned by one writer process.

    Example:
        >>> writer = SegmentWriter(index_root)
        >>> writer.index_doc(doc)
        >>> writer.commit()
    """

    def __init__(self, index_root: Union[str, Path], writer_id: Optional[str] = None):
        self.writer_id = writer_id or uuid.uuid4().hex
        if not SEGMENT_PATTERN.match(f"segment-{self.writer_id}.jsonl"):
            raise ValidationError(f"Bad writer id {self.writer_id!r}")
        self.path = segment_path(index_root, self.writer_id)
        self._lock = threading.Lock()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._file = open(self.path, "ab")
        except OSError as e:
            raise StorageIOError(f"Cannot open index segment {self.path}: {e}") from e
        self._last_stamp = 0

    def _stamp(self) -> int:
        stamp = max(time.time_ns(), self._last_stamp + 1)
        self._last_stamp = stamp
        return stamp

    def index_doc(self, doc: IndexedDoc) -> int:
        """Append a doc; returns its stamp."""
        with self._lock:
            stamp = self._stamp()
            line = json.dumps(
                {"stamp": stamp, "writer": self.writer_id, "doc": doc.to_dict()},
                sort_keys=True, separators=(",", ":"), ensure_ascii=False,
            )
            try:
                self._file.write(line.encode("utf-8") + b"\n")
            except OSError as e:
                raise StorageIOError(f"Cannot append to {self.path}: {e}") from e
            return stamp

    def commit(self) -> None:
        """Make appended docs durable and visible to the next refresh."""
        with self._lock:
            try:
                self._file.flush()
                os.fsync(self._file.fileno())
            except OSError as e:
                raise StorageIOError(f"Cannot commit {self.path}: {e}") from e

    def close(self) -> None:
        with self._lock:
            if not self._file.closed:
                self._file.flush()
                self._file.close()


class SearchIndex:
    """
    In-memory postings over the segment files of one index root.

    With ``index_root=None`` the index is purely in memory.

    Example:
        >>> index = SearchIndex("data/index")
        >>> index.search("vaccine trial", limit=10)
        >>> index.aggregate("countries", top_k=10)
    """

    def __init__(self, index_root: Optional[Union[str, Path]] = None, writer_id: Optional[str] = None):
        self.root = Path(index_root) if index_root is not None else None
        self._writer_id = writer_id
        self._writer: Optional[SegmentWriter] = None
        self._lock = threading.RLock()
        self._reset()
        if self.root is not None:
            try:
                (self.root / SEGMENT_DIR).mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise StorageIOError(f"Cannot create index directory {self.root}: {e}") from e
            self.refresh()

    def _reset(self) -> None:
        self._docs: Dict[str, IndexedDoc] = {}
        self._versions: Dict[str, Tuple[int, str]] = {}
        self._postings: Dict[str, Dict[str, Dict[str, int]]] = {f: defaultdict(dict) for f in TEXT_FIELDS}
        self._lengths: Dict[str, Dict[str, int]] = {f: {} for f in TEXT_FIELDS}
        self._total_length: Dict[str, int] = {f: 0 for f in TEXT_FIELDS}
        self._facets: Dict[str, Counter] = {f: Counter() for f in KEYWORD_FIELDS}
        self._offsets: Dict[Path, int] = {}
        self._memory_seq = 0

    # ---------------------------------------------------------------- writes

    def _apply(self, doc: IndexedDoc, version: Tuple[int, str]) -> bool:
        current = self._versions.get(doc.doc_id)
        if current is not None and current >= version:
            return False
        if doc.doc_id in self._docs:
            self._remove(doc.doc_id)
        self._docs[doc.doc_id] = doc
        self._versions[doc.doc_id] = version
        for field_name in TEXT_FIELDS:
            tokens = tokenize(getattr(doc, field_name))
            self._lengths[field_name][doc.doc_id] = len(tokens)
            self._total_length[field_name] += len(tokens)
            for term, tf in Counter(tokens).items():
                self._postings[field_name][term][doc.doc_id] = tf
        for field_name in KEYWORD_FIELDS:
            self._facets[field_name].update(doc.keyword_values(field_name))
        return True

    def _remove(self, doc_id: str) -> None:
        doc = self._docs.pop(doc_id)
        for field_name in TEXT_FIELDS:
            self._total_length[field_name] -= self._lengths[field_name].pop(doc_id, 0)
            postings = self._postings[field_name]
            for term in set(tokenize(getattr(doc, field_name))):
                docs = postings.get(term)
                if docs is not None:
                    docs.pop(doc_id, None)
                    if not docs:
                        del postings[term]
        for field_name in KEYWORD_FIELDS:
            facet = self._facets[field_name]
            for value in doc.keyword_values(field_name):
                facet[value] -= 1
                if facet[value] <= 0:
                    del facet[value]

    def index_doc(self, doc: IndexedDoc) -> None:
        """
        Upsert a document.

        On a persistent index the doc is appended to this process's segment;
        call commit() to make it durable. The doc is visible to this
        instance immediately.
        """
        with self._lock:
            self._memory_seq += 1
            stamp, writer = self._memory_seq, "memory"
            if self.root is not None:
                if self._writer is None:
                    self._writer = SegmentWriter(self.root, self._writer_id)
                stamp = self._writer.index_doc(doc)
                writer = self._writer.writer_id
            self._apply(doc, (stamp, writer))

    def index_docs(self, docs: Iterable[IndexedDoc]) -> int:
        count = 0
        for doc in docs:
            self.index_doc(doc)
            count += 1
        self.commit()
        return count

    def commit(self) -> None:
        with self._lock:
            if self._writer is not None:
                self._writer.commit()

    def close(self) -> None:
        with self._lock:
            if self._writer is not None:
                self._writer.close()
                self._writer = None

    # ---------------------------------------------------------------- refresh

    def segment_files(self) -> List[Path]:
        if self.root is None:
            return []
        seg_dir = self.root / SEGMENT_DIR
        if not seg_dir.is_dir():
            return []
        return sorted(p for p in seg_dir.iterdir() if SEGMENT_PATTERN.match(p.name))

    def refresh(self) -> int:
        """
        Load lines appended to any segment since the last refresh.

        Returns:
            Number of doc versions applied
        """
        applied = 0
        with self._lock:
            for path in self.segment_files():
                offset = self._offsets.get(path, 0)
                try:
                    with open(path, "rb") as f:
                        f.seek(offset)
                        chunk = f.read()
                except OSError as e:
                    raise StorageIOError(f"Cannot read index segment {path}: {e}") from e
                end = chunk.rfind(b"\n")
                if end < 0:
                    continue
                for lineno, line in enumerate(chunk[:end].split(b"\n")):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        doc = IndexedDoc.from_dict(record["doc"])
                        version = (int(record["stamp"]), str(record["writer"]))
                    except (ValueError, KeyError, TypeError, ValidationError) as e:
                        logger.warning("Skipping corrupt entry in %s (offset %d, line %d): %s", path.name, offset, lineno, e)
                        continue
                    if self._apply(doc, version):
                        applied += 1
                self._offsets[path] = offset + end + 1
        if applied:
            logger.debug("Index refresh applied %d doc version(s); %d docs visible", applied, len(self._docs))
        return applied

    def reload(self) -> int:
        """Drop in-memory state and rebuild from the segments."""
        with self._lock:
            self.close()
            self._reset()
            self.refresh()
            return len(self._docs)

    # ---------------------------------------------------------------- reads

    @property
    def doc_count(self) -> int:
        return len(self._docs)

    def get(self, doc_id: str) -> Optional[IndexedDoc]:
        return self._docs.get(doc_id)

    def docs(self) -> List[IndexedDoc]:
        with self._lock:
            return [self._docs[d] for d in sorted(self._docs)]

    def labels(self) -> Dict[str, str]:
        """doc_id -> category map."""
        with self._lock:
            return {doc_id: doc.category for doc_id, doc in self._docs.items()}

    def search(self, query: str, limit: int = 10) -> List[SearchHit]:
        """
        BM25 disjunction over the analyzed fields.

        Query tokens are deduplicated. Hits are ordered by score desc, then
        doc_id asc.

        Raises:
            ValidationError: limit < 1
        """
        if limit < 1:
            raise ValidationError(f"limit must be >= 1, got {limit}")
        terms = list(dict.fromkeys(tokenize(query)))
        if not terms:
            return []

        with self._lock:
            n_docs = len(self._docs)
            scores: Dict[str, float] = defaultdict(float)
            for field_name in TEXT_FIELDS:
                if self._total_length[field_name] == 0:
                    continue
                avgdl = self._total_length[field_name] / n_docs
                weight = FIELD_WEIGHTS[field_name]
                lengths = self._lengths[field_name]
                for term in terms:
                    postings = self._postings[field_name].get(term)
                    if not postings:
                        continue
                    idf = bm25_idf(n_docs, len(postings))
                    for doc_id, tf in postings.items():
                        norm = BM25_K1 * (1.0 - BM25_B + BM25_B * lengths[doc_id] / avgdl)
                        scores[doc_id] += weight * idf * tf * (BM25_K1 + 1.0) / (tf + norm)

            ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:limit]
            return [SearchHit(doc_id, score, self._snippet(self._docs[doc_id])) for doc_id, score in ranked]

    @staticmethod
    def _snippet(doc: IndexedDoc) -> str:
        text = doc.title or doc.abstract
        return text if len(text) <= SNIPPET_CHARS else text[:SNIPPET_CHARS].rstrip() + "..."

    def aggregate(self, field_name: str, top_k: int = 10) -> AggregationResult:
        """
        Exact terms aggregation over a keyword field.

        Raises:
            ValidationError: Unknown field or top_k < 1
        """
        if field_name not in KEYWORD_FIELDS:
            raise ValidationError(f"Cannot aggregate on {field_name!r}; keyword fields are {list(KEYWORD_FIELDS)}")
        if top_k < 1:
            raise ValidationError(f"top must be >= 1, got {top_k}")
        with self._lock:
            buckets = sorted(self._facets[field_name].items(), key=lambda item: (-item[1], item[0]))
        return AggregationResult(field=field_name, buckets=buckets[:top_k])

    def stats(self) -> Dict[str, object]:
        with self._lock:
            return {
                "doc_count": len(self._docs),
                "segments": len(self.segment_files()),
                "terms": {f: len(self._postings[f]) for f in TEXT_FIELDS},
                "root": str(self.root) if self.root else None,
            }
