"""
Index snapshots for backup and for the public read replica.

A snapshot file is an uncompressed tar archive followed by an 8-byte
trailer:

    <tar: manifest.json, segments/segment-snapshot.jsonl>  b"LMSN"  <crc32 of tar, u32 big-endian>

The segment holds one line per visible document, sorted by doc_id, so a
snapshot is independent of how many writers built the index. Restore
verifies the trailer and the manifest before it touches the target
directory, then swaps the new segment directory in.
"""

import io
import json
import logging
import shutil
import struct
import tarfile
import tempfile
import zlib
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Union

from litmine.errors import IntegrityError, StorageIOError, ValidationError

from .search_index import SEGMENT_DIR, SearchIndex

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"LMSN"
SNAPSHOT_FORMAT = 1
TRAILER = struct.Struct("!4sI")
MANIFEST_NAME = "manifest.json"
SNAPSHOT_WRITER = "snapshot"
SEGMENT_MEMBER = f"{SEGMENT_DIR}/segment-{SNAPSHOT_WRITER}.jsonl"


def _add_member(tar: tarfile.TarFile, name: str, content: bytes, mtime: float) -> None:
    info = tarfile.TarInfo(name)
    info.size = len(content)
    info.mtime = int(mtime)
    info.mode = 0o644
    tar.addfile(info, io.BytesIO(content))


def snapshot(index: SearchIndex, dst: Union[str, Path]) -> Dict[str, Any]:
    """
    Write the index's refreshed view to a snapshot file.

    Returns:
        The manifest
    """
    index.commit()
    docs = index.docs()
    lines = [
        json.dumps({"stamp": i + 1, "writer": SNAPSHOT_WRITER, "doc": doc.to_dict()},
                   sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        for i, doc in enumerate(docs)
    ]
    segment = ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
    created = datetime.now(timezone.utc)
    manifest = {
        "format": SNAPSHOT_FORMAT,
        "doc_count": len(docs),
        "created_at": created.isoformat(),
        "segments": [SEGMENT_MEMBER],
        "segment_crc32": zlib.crc32(segment) & 0xFFFFFFFF,
    }

    buffer = io.BytesIO()
    with tarfile.open(fileobj=buffer, mode="w", format=tarfile.PAX_FORMAT) as tar:
        _add_member(tar, MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"), created.timestamp())
        _add_member(tar, SEGMENT_MEMBER, segment, created.timestamp())
    archive = buffer.getvalue()

    dst = Path(dst)
    tmp = dst.with_name(dst.name + ".tmp")
    try:
        dst.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(archive + TRAILER.pack(SNAPSHOT_MAGIC, zlib.crc32(archive) & 0xFFFFFFFF))
        tmp.replace(dst)
    except OSError as e:
        raise StorageIOError(f"Cannot write snapshot {dst}: {e}") from e
    logger.info("Snapshot of %d docs written to %s", len(docs), dst)
    return manifest


def read_snapshot(src: Union[str, Path]) -> Dict[str, Any]:
    """
    Verify a snapshot and return its manifest plus segment bytes.

    Raises:
        IntegrityError: Truncated file, bad trailer, checksum mismatch or
            malformed archive
    """
    try:
        content = Path(src).read_bytes()
    except FileNotFoundError as e:
        raise ValidationError(f"Snapshot not found: {src}") from e
    except OSError as e:
        raise StorageIOError(f"Cannot read snapshot {src}: {e}") from e

    if len(content) < TRAILER.size:
        raise IntegrityError(f"Snapshot {src} is truncated")
    archive, trailer = content[:-TRAILER.size], content[-TRAILER.size:]
    magic, crc = TRAILER.unpack(trailer)
    if magic != SNAPSHOT_MAGIC:
        raise IntegrityError(f"Snapshot {src} has no valid trailer (truncated or not a snapshot)")
    if zlib.crc32(archive) & 0xFFFFFFFF != crc:
        raise IntegrityError(f"Snapshot {src} checksum mismatch")

    try:
        with tarfile.open(fileobj=io.BytesIO(archive), mode="r") as tar:
            manifest_file = tar.extractfile(MANIFEST_NAME)
            if manifest_file is None:
                raise IntegrityError(f"Snapshot {src} lacks {MANIFEST_NAME}")
            manifest = json.loads(manifest_file.read().decode("utf-8"))
            segments = {}
            for name in manifest.get("segments") or []:
                if not name.startswith(f"{SEGMENT_DIR}/") or "/" in name[len(SEGMENT_DIR) + 1:]:
                    raise IntegrityError(f"Snapshot {src} names an unexpected member {name!r}")
                member = tar.extractfile(name)
                if member is None:
                    raise IntegrityError(f"Snapshot {src} lacks {name}")
                segments[name] = member.read()
    except (tarfile.TarError, KeyError, ValueError) as e:
        raise IntegrityError(f"Snapshot {src} is malformed: {e}") from e

    if manifest.get("format") != SNAPSHOT_FORMAT:
        raise IntegrityError(f"Snapshot {src} has unsupported format {manifest.get('format')!r}")
    segment = segments.get(SEGMENT_MEMBER, b"")
    if zlib.crc32(segment) & 0xFFFFFFFF != manifest.get("segment_crc32"):
        raise IntegrityError(f"Snapshot {src} segment checksum mismatch")
    return {"manifest": manifest, "segments": segments}


def restore(src: Union[str, Path], index_root: Union[str, Path], force: bool = False) -> SearchIndex:
    """
    Replace the index at ``index_root`` with a snapshot.

    Raises:
        IntegrityError: Corrupt snapshot (existing index untouched)
        ValidationError: Target index is not empty and force is False
    """
    data = read_snapshot(src)
    manifest = data["manifest"]
    index_root = Path(index_root)

    existing = SearchIndex(index_root) if (index_root / SEGMENT_DIR).is_dir() else None
    if existing is not None and existing.doc_count > 0 and not force:
        raise ValidationError(
            f"Index at {index_root} holds {existing.doc_count} docs; restore refused without --force"
        )

    index_root.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".restore-", dir=index_root))
    try:
        for name, content in data["segments"].items():
            (staging / name).parent.mkdir(parents=True, exist_ok=True)
            (staging / name).write_bytes(content)
        check = SearchIndex(staging)
        if check.doc_count != manifest["doc_count"]:
            raise IntegrityError(
                f"Snapshot {src} declares {manifest['doc_count']} docs but holds {check.doc_count}"
            )

        live = index_root / SEGMENT_DIR
        retired = index_root / ".segments-old"
        if retired.exists():
            shutil.rmtree(retired)
        if live.exists():
            live.rename(retired)
        (staging / SEGMENT_DIR).rename(live)
        if retired.exists():
            shutil.rmtree(retired)
    except OSError as e:
        raise StorageIOError(f"Cannot restore into {index_root}: {e}") from e
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    restored = SearchIndex(index_root)
    logger.info("Restored %d docs from %s into %s", restored.doc_count, src, index_root)
    return restored
