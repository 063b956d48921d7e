"""
Incremental ingest: metadata -> checksum diff -> staging.

A run parses the metadata file, keeps only rows whose sha is absent from
both staging and completed, and stages the matching article files. Rows
without a sha are hashed from their article file (or from a synthesized
metadata-only file) at ingest time. Re-running over an unchanged dataset
stages nothing.

Only one run per dataset root may be active; an advisory lock file under
the store root enforces it.
"""

import hashlib
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Set, Union

from litmine.errors import LitmineError, StorageIOError, ValidationError
from litmine.store import BucketId, BucketStore, sha1_key

from .articles import stage_article, synthesize_article_file
from .metadata import load_metadata
from .models import IngestReport, MetadataRow

logger = logging.getLogger(__name__)

STALE_LOCK_AFTER_S = 30.0


def diff_incremental(store: BucketStore, rows: List[MetadataRow]) -> List[MetadataRow]:
    """
    Rows not yet ingested.

    A row is new when its sha is absent from both staging and completed.
    Rows without a sha are always returned; their checksum is computed from
    the article file during ingest.
    """
    new_rows = []
    for row in rows:
        if row.sha is None:
            new_rows.append(row)
            continue
        key = f"{row.sha}.json"
        if store.exists(BucketId.STAGING, key) or store.exists(BucketId.COMPLETED, key):
            continue
        new_rows.append(row)
    logger.info("Incremental diff: %d of %d rows are new", len(new_rows), len(rows))
    return new_rows


class IngestLock:
    """
    Advisory lock file for one dataset root.

    A lock left behind by a dead process is taken over. A lock file without
    a readable pid belongs to a holder that has not written it yet, unless
    it is older than ``stale_after_s``.
    """

    def __init__(self, store_root: Path, dataset_root: str, stale_after_s: float = STALE_LOCK_AFTER_S):
        digest = hashlib.sha1(dataset_root.encode("utf-8")).hexdigest()[:12]
        self.path = Path(store_root) / f".ingest-{digest}.lock"
        self._fd: Optional[int] = None
        self.stale_after_s = stale_after_s

    def acquire(self) -> None:
        for _ in range(2):
            try:
                self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(self._fd, str(os.getpid()).encode())
                return
            except FileExistsError:
                if not self._holder_is_dead():
                    raise ValidationError(f"Another ingest run holds {self.path}")
                logger.warning("Removing stale ingest lock %s", self.path)
                self.path.unlink(missing_ok=True)
            except OSError as e:
                raise StorageIOError(f"Cannot create ingest lock {self.path}: {e}") from e
        raise ValidationError(f"Could not acquire ingest lock {self.path}")

    def _holder_is_dead(self) -> bool:
        try:
            text = self.path.read_text().strip()
            age = time.time() - self.path.stat().st_mtime
        except FileNotFoundError:
            return True
        except OSError:
            return False
        try:
            pid = int(text)
        except ValueError:
            pid = 0
        if pid <= 0:
            return age > self.stale_after_s
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def release(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
            self.path.unlink(missing_ok=True)

    def __enter__(self) -> "IngestLock":
        self.acquire()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.release()


@dataclass
class _RowOutcome:
    created: bool = False
    reason: Optional[str] = None


class DatasetIngestor:
    """
    Runs the parse -> diff -> stage chain for one dataset.

    Example:
        >>> ingestor = DatasetIngestor(store, "cord19/metadata.csv", "cord19/pdf_json")
        >>> report = ingestor.run()
        >>> report.new
        42
    """

    def __init__(
        self,
        store: BucketStore,
        metadata_source: Union[str, Path],
        articles_dir: Optional[Union[str, Path]] = None,
        source_name: str = "",
        max_workers: int = 4,
    ):
        self.store = store
        self.metadata_source = str(metadata_source)
        self.articles_dir = Path(articles_dir) if articles_dir else None
        self.source_name = source_name
        self.max_workers = max(1, max_workers)
        self._files: Dict[str, Path] = {}
        self._claimed: Set[str] = set()
        self._claim_lock = threading.Lock()

    def _index_articles(self) -> None:
        self._files = {}
        if self.articles_dir is None:
            return
        if not self.articles_dir.is_dir():
            raise ValidationError(f"Articles directory not found: {self.articles_dir}")
        for path in sorted(self.articles_dir.rglob("*.json")):
            self._files.setdefault(path.stem, path)
        logger.info("Found %d article files under %s", len(self._files), self.articles_dir)

    def _article_bytes(self, row: MetadataRow) -> bytes:
        if row.sha is not None:
            path = self._files.get(row.sha) or self._files.get(row.record_id)
            if path is None:
                raise ValidationError(f"article file for sha {row.sha} not found")
            return path.read_bytes()
        path = self._files.get(row.record_id)
        if path is not None:
            return path.read_bytes()
        return synthesize_article_file(row)

    def _claim(self, sha: str) -> bool:
        with self._claim_lock:
            if sha in self._claimed:
                return False
            self._claimed.add(sha)
            return True

    def _ingest_row(self, row: MetadataRow) -> _RowOutcome:
        try:
            # Rows sharing a content key stage once per run; the rest count as skipped.
            if row.sha is not None and not self._claim(row.sha):
                return _RowOutcome()
            file_bytes = self._article_bytes(row)
            if row.sha is None and not self._claim(sha1_key(file_bytes)):
                return _RowOutcome()
            _, created = stage_article(self.store, file_bytes, row, self.source_name)
            return _RowOutcome(created=created)
        except StorageIOError:
            raise
        except (LitmineError, OSError) as e:
            logger.warning("Record %s rejected: %s", row.record_id, e)
            return _RowOutcome(reason=f"{row.record_id}: {e}")

    def run(self) -> IngestReport:
        """
        Ingest new articles into staging.

        Raises:
            MetadataParseError: Metadata source missing or malformed
            ValidationError: Another run holds the dataset lock
            StorageIOError: Store failure
        """
        start = time.perf_counter()
        dataset_root = str(self.articles_dir.resolve()) if self.articles_dir else self.metadata_source
        with IngestLock(self.store.root, dataset_root):
            parsed = load_metadata(self.metadata_source)
            self._index_articles()
            self._claimed.clear()

            report = IngestReport(seen=len(parsed.rows) + len(parsed.rejects), rejected=len(parsed.rejects))
            report.reasons.extend(f"line {r.line}: {r.reason}" for r in parsed.rejects)

            candidates = diff_incremental(self.store, parsed.rows)
            report.skipped_existing = len(parsed.rows) - len(candidates)

            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                outcomes = list(pool.map(self._ingest_row, candidates))

            for outcome in outcomes:
                if outcome.reason is not None:
                    report.rejected += 1
                    report.reasons.append(outcome.reason)
                elif outcome.created:
                    report.new += 1
                else:
                    report.skipped_existing += 1

        report.elapsed = (time.perf_counter() - start) * 1000.0
        logger.info(
            "Ingest finished: seen=%d new=%d skipped=%d rejected=%d (%.0f ms)",
            report.seen, report.new, report.skipped_existing, report.rejected, report.elapsed,
        )
        return report
