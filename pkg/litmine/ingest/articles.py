"""
Staging of article files and raw PDFs.

An article file is validated, flattened into an ArticleDoc (metadata row
fields fill publish_time, source and any missing title/abstract) and stored
at staging/<sha>.json, where sha is the SHA1 of the file bytes. Articles
already present in staging or completed are skipped.
"""

import json
import logging
from typing import Any, Dict, List, Optional, Tuple

from litmine.errors import IntegrityError
from litmine.store import BucketId, BucketStore, ObjectRef, sha1_key

from .models import ArticleDoc, Author, MetadataRow
from .schema import ArticleValidator

logger = logging.getLogger(__name__)

_validator = ArticleValidator()


def normalize_country(value: Optional[str]) -> Optional[str]:
    """Trim and title-case an affiliation country; empty gives None."""
    if not value:
        return None
    value = " ".join(value.split())
    return value.title() if value else None


def _author_name(entry: Dict[str, Any]) -> str:
    parts = [entry.get("first") or ""] + list(entry.get("middle") or []) + [entry.get("last") or ""]
    return " ".join(p.strip() for p in parts if p and p.strip())


def _paragraphs(items: Optional[List[Dict[str, Any]]]) -> str:
    return "\n".join(p["text"].strip() for p in items or [] if p.get("text", "").strip())


def build_article(data: Dict[str, Any], sha: str, row: Optional[MetadataRow], default_source: str = "") -> ArticleDoc:
    """Flatten a validated article file into an ArticleDoc."""
    metadata = data.get("metadata") or {}
    authors = [
        Author(
            name=_author_name(entry),
            country=normalize_country((entry.get("affiliation") or {}).get("country")),
        )
        for entry in metadata.get("authors") or []
    ]
    return ArticleDoc(
        sha=sha,
        title=(metadata.get("title") or "").strip() or (row.title if row else ""),
        abstract=_paragraphs(data.get("abstract")) or (row.abstract if row else ""),
        body_text=_paragraphs(data.get("body_text")),
        authors=authors,
        publish_time=row.publish_time if row else None,
        source=(row.source if row and row.source else default_source),
    )


def synthesize_article_file(row: MetadataRow) -> bytes:
    """
    Article file for a metadata-only row (no full text available).

    The encoding is canonical so the same row always hashes to the same sha.
    """
    data = {
        "paper_id": row.record_id,
        "metadata": {"title": row.title, "authors": []},
        "abstract": [{"text": row.abstract}] if row.abstract else [],
        "body_text": [],
    }
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def stage_article(
    store: BucketStore,
    file_bytes: bytes,
    row: Optional[MetadataRow] = None,
    default_source: str = "",
) -> Tuple[ObjectRef, bool]:
    """
    Validate and stage an article file.

    Returns:
        (reference in staging or completed, True if a new object was written)

    Raises:
        IntegrityError: row.sha disagrees with the file checksum
        ArticleSchemaError: File violates the article schema
        ValidationError: Article is entirely empty
    """
    sha = sha1_key(file_bytes)
    if row is not None and row.sha is not None and row.sha != sha:
        raise IntegrityError(
            f"Checksum mismatch for record {row.record_id}: metadata says {row.sha}, file hashes to {sha}"
        )

    key = f"{sha}.json"
    for bucket in (BucketId.STAGING, BucketId.COMPLETED):
        if store.exists(bucket, key):
            logger.debug("Article %s already in %s, skipping", sha, bucket.value)
            return ObjectRef(bucket, key), False

    data = _validator.load(file_bytes)
    doc = build_article(data, sha, row, default_source)
    ref = store.put(BucketId.STAGING, key, doc.serialize(), content_addressed=False)
    logger.debug("Staged article %s (%s)", sha, row.record_id if row else data.get("paper_id"))
    return ref, True


def ingest_article(
    store: BucketStore,
    file_bytes: bytes,
    row: Optional[MetadataRow] = None,
    default_source: str = "",
) -> ObjectRef:
    """Stage one article file and return its reference (idempotent)."""
    ref, _ = stage_article(store, file_bytes, row, default_source)
    return ref


def enqueue_raw_pdf(store: BucketStore, file_bytes: bytes) -> ObjectRef:
    """Store a PDF at raw/<sha>.pdf for later extraction."""
    return store.put(BucketId.RAW, f"{sha1_key(file_bytes)}.pdf", file_bytes)
