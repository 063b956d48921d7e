"""
Metadata CSV parsing.

The dataset metadata file drives the incremental diff. Expected header
(exact column names, any order):

    record_id,sha,title,abstract,publish_time,authors,source

Rows that cannot be turned into a MetadataRow are returned as rejects with
a reason instead of being dropped.
"""

import csv
import io
import logging
from pathlib import Path
from typing import IO, Union

import requests

from litmine.errors import MetadataParseError, ValidationError

from .models import MetadataReject, MetadataRow, ParsedMetadata, parse_publish_time

logger = logging.getLogger(__name__)

METADATA_COLUMNS = ("record_id", "sha", "title", "abstract", "publish_time", "authors", "source")

# Metadata rows can carry full abstracts
csv.field_size_limit(2 ** 27)


def parse_metadata(stream: Union[IO[str], IO[bytes]]) -> ParsedMetadata:
    """
    Parse a UTF-8 metadata CSV stream.

    Args:
        stream: Text or binary file-like object positioned at the header

    Returns:
        ParsedMetadata with one row per well-formed data row and one reject
        per malformed row

    Raises:
        MetadataParseError: Missing header columns or unreadable stream
    """
    if isinstance(stream, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(stream, "mode", ""):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")

    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        raise MetadataParseError(f"Cannot read metadata header: {e}") from e

    if not header:
        raise MetadataParseError("Metadata stream is empty (no header row)")
    missing = [c for c in METADATA_COLUMNS if c not in header]
    if missing:
        raise MetadataParseError(f"Metadata header lacks required columns: {missing}")

    parsed = ParsedMetadata()
    try:
        for record in reader:
            line = reader.line_num
            record_id = (record.get("record_id") or "").strip()
            if None in record or any(record.get(c) is None for c in METADATA_COLUMNS):
                parsed.rejects.append(MetadataReject(line, "wrong number of fields", record_id))
                continue
            if not record_id:
                parsed.rejects.append(MetadataReject(line, "empty record_id"))
                continue

            sha = record["sha"].strip().lower() or None
            try:
                publish_time = parse_publish_time(record["publish_time"])
            except ValueError:
                parsed.rejects.append(
                    MetadataReject(line, f"unparseable publish_time {record['publish_time']!r}", record_id)
                )
                continue

            try:
                parsed.rows.append(
                    MetadataRow(
                        record_id=record_id,
                        sha=sha,
                        title=record["title"].strip(),
                        abstract=record["abstract"].strip(),
                        publish_time=publish_time,
                        authors_raw=record["authors"].strip(),
                        source=record["source"].strip(),
                    )
                )
            except ValidationError as e:
                parsed.rejects.append(MetadataReject(line, str(e), record_id))
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        raise MetadataParseError(f"Cannot read metadata at line {reader.line_num}: {e}") from e

    for reject in parsed.rejects:
        logger.warning("Metadata line %d rejected: %s", reject.line, reject.reason)
    logger.info("Parsed %d metadata rows (%d rejected)", len(parsed.rows), len(parsed.rejects))
    return parsed


def load_metadata(source: Union[str, Path], timeout: float = 30.0) -> ParsedMetadata:
    """
    Parse metadata from a local path or an http(s) URL.

    Raises:
        MetadataParseError: Source missing, unreachable or malformed
    """
    source = str(source)
    if source.startswith(("http://", "https://")):
        logger.info("Fetching metadata from %s", source)
        try:
            response = requests.get(source, timeout=timeout)
            response.raise_for_status()
        except requests.RequestException as e:
            raise MetadataParseError(f"Cannot fetch metadata from {source}: {e}") from e
        return parse_metadata(io.StringIO(response.content.decode("utf-8", errors="replace"), newline=""))

    path = Path(source)
    if not path.is_file():
        raise MetadataParseError(f"Metadata file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        return parse_metadata(f)
