"""
Dataset ingest: detect updates, diff by checksum, stage new articles.

Provides:
- parse_metadata / load_metadata: metadata CSV parsing with per-row rejects
- diff_incremental: rows absent from staging and completed
- ingest_article / stage_article: validate and stage one article file
- enqueue_raw_pdf: store PDFs in the raw bucket
- DatasetIngestor: the full parse -> diff -> stage run
- PdfExtractor registry for extract_stub tasks
"""

from .articles import build_article, enqueue_raw_pdf, ingest_article, normalize_country, stage_article, synthesize_article_file
from .extractors import EXTRACTOR_REGISTRY, PdfExtractor, UnconfiguredExtractor, get_extractor
from .loader import DatasetIngestor, IngestLock, diff_incremental
from .metadata import METADATA_COLUMNS, load_metadata, parse_metadata
from .models import ArticleDoc, Author, IngestReport, MetadataReject, MetadataRow, ParsedMetadata
from .schema import ARTICLE_SCHEMA, ArticleValidator

__all__ = [
    "ARTICLE_SCHEMA",
    "ArticleDoc",
    "ArticleValidator",
    "Author",
    "DatasetIngestor",
    "EXTRACTOR_REGISTRY",
    "IngestLock",
    "IngestReport",
    "METADATA_COLUMNS",
    "MetadataReject",
    "MetadataRow",
    "ParsedMetadata",
    "PdfExtractor",
    "UnconfiguredExtractor",
    "build_article",
    "diff_incremental",
    "enqueue_raw_pdf",
    "get_extractor",
    "ingest_article",
    "load_metadata",
    "normalize_country",
    "parse_metadata",
    "stage_article",
    "synthesize_article_file",
]
