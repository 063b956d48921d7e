"""
Bucket store - content-addressed object storage on the local filesystem.

Layout:
    <root>/<bucket>/<key>

Four lifecycle buckets exist (raw, staging, completed, ml_models). Keys are
the SHA1 of the object content plus an optional extension. Each bucket keeps
an in-memory key set rebuilt from its directory on startup; the directory is
the source of truth and existence checks reconcile against it with a single
stat, so cost does not depend on bucket cardinality.

Writes go through a temporary file and an atomic rename. Moves copy to the
destination, then delete the source, and treat "already at destination" as
success so they can be repeated after a crash.
"""

import hashlib
import logging
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

from litmine.errors import IntegrityError, NotFoundError, StorageIOError, ValidationError

logger = logging.getLogger(__name__)


class BucketId(Enum):
    """The four lifecycle buckets."""
    RAW = "raw"
    STAGING = "staging"
    COMPLETED = "completed"
    ML_MODELS = "ml_models"

    @classmethod
    def parse(cls, value: Union[str, "BucketId"]) -> "BucketId":
        """Resolve a bucket name (case-sensitive)."""
        if isinstance(value, BucketId):
            return value
        for bucket in cls:
            if bucket.value == value:
                return bucket
        raise ValidationError(
            f"Unknown bucket: {value!r}. Available buckets: {[b.value for b in cls]}"
        )


KEY_EXTENSIONS = ("json", "xml", "pdf", "model", "jsonl", "reason")
KEY_PATTERN = re.compile(r"^([0-9a-f]{40})(?:\.(" + "|".join(KEY_EXTENSIONS) + r"))?$")
POINTER_PATTERN = re.compile(r"^[a-z][a-z0-9_]*$")
POINTER_SUFFIX = ".ptr"


def sha1_key(content: bytes) -> str:
    """Lowercase 40-char hex SHA1 digest of content."""
    return hashlib.sha1(content).hexdigest()


def validate_key(key: str) -> str:
    """
    Check a key against the content-key format.

    Returns:
        The 40-hex digest portion of the key

    Raises:
        ValidationError: If the key is malformed
    """
    match = KEY_PATTERN.match(key) if isinstance(key, str) else None
    if not match:
        raise ValidationError(
            f"Malformed object key: {key!r} "
            f"(expected 40 lowercase hex chars with optional .{{{','.join(KEY_EXTENSIONS)}}})"
        )
    return match.group(1)


def key_digest(key: str) -> str:
    """Hex portion of a well-formed key."""
    return validate_key(key)


def key_extension(key: str) -> Optional[str]:
    """Extension of a well-formed key, or None."""
    validate_key(key)
    _, dot, ext = key.partition(".")
    return ext if dot else None


@dataclass(frozen=True)
class ObjectRef:
    """Location of a stored object."""
    bucket: BucketId
    key: str

    def __post_init__(self):
        validate_key(self.key)

    def __str__(self) -> str:
        return f"{self.bucket.value}/{self.key}"

    def to_dict(self) -> Dict[str, str]:
        return {"bucket": self.bucket.value, "key": self.key}

    @classmethod
    def parse(cls, text: str) -> "ObjectRef":
        """Parse ``<bucket>/<key>``."""
        bucket, sep, key = text.partition("/")
        if not sep:
            raise ValidationError(f"Object reference must be <bucket>/<key>: {text!r}")
        return cls(BucketId.parse(bucket), key)


@dataclass(frozen=True)
class StoredObject:
    """An object read back from the store."""
    ref: ObjectRef
    content: bytes
    size: int
    stored_at: datetime

    @property
    def is_content_addressed(self) -> bool:
        return sha1_key(self.content) == key_digest(self.ref.key)


class BucketStore:
    """
    S3-style bucket abstraction over a local directory tree.

    Safe for concurrent use from threads and processes sharing the same
    root: every mutation is an atomic rename or unlink, and the in-memory
    key sets are guarded by a lock.

    Example:
        >>> store = BucketStore("data/store")
        >>> ref = store.put(BucketId.RAW, sha1_key(b"abc") + ".pdf", b"abc")
        >>> store.exists(BucketId.RAW, ref.key)
        True
    """

    def __init__(self, root: Union[str, Path]):
        """
        Initialize the store and rebuild key sets from disk.

        Args:
            root: Directory holding one subdirectory per bucket
        """
        self.root = Path(root)
        self._lock = threading.Lock()
        self._keys: Dict[BucketId, Set[str]] = {}

        try:
            for bucket in BucketId:
                self.bucket_dir(bucket).mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageIOError(f"Cannot create store at {self.root}: {e}") from e

        for bucket in BucketId:
            self._keys[bucket] = self._scan(bucket)

        logger.debug(
            "Store opened at %s (%s)",
            self.root,
            ", ".join(f"{b.value}={len(k)}" for b, k in self._keys.items()),
        )

    def bucket_dir(self, bucket: BucketId) -> Path:
        return self.root / bucket.value

    def _path(self, bucket: BucketId, key: str) -> Path:
        return self.bucket_dir(bucket) / key

    def _scan(self, bucket: BucketId) -> Set[str]:
        try:
            with os.scandir(self.bucket_dir(bucket)) as entries:
                return {e.name for e in entries if KEY_PATTERN.match(e.name) and e.is_file()}
        except OSError as e:
            raise StorageIOError(f"Cannot list bucket {bucket.value}: {e}") from e

    def _write_atomic(self, path: Path, content: bytes) -> None:
        tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        try:
            with open(tmp, "wb") as f:
                f.write(content)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except OSError as e:
            try:
                tmp.unlink()
            except OSError:
                pass
            raise StorageIOError(f"Cannot write {path}: {e}") from e

    def put(
        self,
        bucket: Union[BucketId, str],
        key: str,
        content: bytes,
        content_addressed: bool = True,
    ) -> ObjectRef:
        """
        Store an object.

        Args:
            bucket: Target bucket
            key: Object key
            content: Object bytes
            content_addressed: Require SHA1(content) to equal the key digest

        Returns:
            Reference to the stored object

        Raises:
            ValidationError: Malformed key
            IntegrityError: Content does not hash to the key, or the key
                already holds different bytes
            StorageIOError: Filesystem failure
        """
        bucket = BucketId.parse(bucket)
        digest = validate_key(key)
        if content_addressed and sha1_key(content) != digest:
            raise IntegrityError(
                f"Checksum violation: content of {bucket.value}/{key} hashes to {sha1_key(content)}"
            )

        ref = ObjectRef(bucket, key)
        path = self._path(bucket, key)
        existing = self._read_if_present(path)
        if existing is not None:
            if existing != content:
                raise IntegrityError(f"Refusing to overwrite {ref} with different content")
            self._remember(bucket, key)
            logger.debug("put %s: identical object already stored", ref)
            return ref

        self._write_atomic(path, content)
        self._remember(bucket, key)
        logger.debug("put %s (%d bytes)", ref, len(content))
        return ref

    def _read_if_present(self, path: Path) -> Optional[bytes]:
        try:
            return path.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as e:
            raise StorageIOError(f"Cannot read {path}: {e}") from e

    def _read_with_mtime(self, path: Path) -> Optional[Tuple[bytes, float]]:
        # stat the open handle: the path may be moved away once it is open
        try:
            with open(path, "rb") as f:
                return f.read(), os.fstat(f.fileno()).st_mtime
        except FileNotFoundError:
            return None
        except OSError as e:
            raise StorageIOError(f"Cannot read {path}: {e}") from e

    def _remember(self, bucket: BucketId, key: str) -> None:
        with self._lock:
            self._keys[bucket].add(key)

    def _forget(self, bucket: BucketId, key: str) -> None:
        with self._lock:
            self._keys[bucket].discard(key)

    def get(self, bucket: Union[BucketId, str], key: str) -> StoredObject:
        """
        Read an object.

        Raises:
            NotFoundError: If the object is absent
        """
        bucket = BucketId.parse(bucket)
        validate_key(key)
        path = self._path(bucket, key)
        found = self._read_with_mtime(path)
        if found is None:
            self._forget(bucket, key)
            raise NotFoundError(f"Object not found: {bucket.value}/{key}")
        content, mtime = found
        stored_at = datetime.fromtimestamp(mtime, tz=timezone.utc)
        return StoredObject(ObjectRef(bucket, key), content, len(content), stored_at)

    def get_bytes(self, bucket: Union[BucketId, str], key: str) -> bytes:
        return self.get(bucket, key).content

    def exists(self, bucket: Union[BucketId, str], key: str) -> bool:
        """
        Constant-time existence check.

        The in-memory key set answers first; a single stat reconciles it
        with writes and moves made by other processes.
        """
        bucket = BucketId.parse(bucket)
        validate_key(key)
        try:
            present = os.path.isfile(self._path(bucket, key))
        except OSError as e:
            raise StorageIOError(f"Cannot stat {bucket.value}/{key}: {e}") from e

        with self._lock:
            known = key in self._keys[bucket]
            if present and not known:
                self._keys[bucket].add(key)
            elif known and not present:
                self._keys[bucket].discard(key)
        return present

    def move(self, src: ObjectRef, dst_bucket: Union[BucketId, str]) -> ObjectRef:
        """
        Move an object between buckets, idempotently.

        Returns:
            Reference in the destination bucket

        Raises:
            NotFoundError: Neither source nor destination holds the key
            IntegrityError: Source and destination hold different bytes
        """
        dst_bucket = BucketId.parse(dst_bucket)
        dst = ObjectRef(dst_bucket, src.key)
        if src.bucket == dst_bucket:
            if not self.exists(src.bucket, src.key):
                raise NotFoundError(f"Object not found: {src}")
            return dst

        src_path = self._path(src.bucket, src.key)
        dst_path = self._path(dst_bucket, src.key)
        content = self._read_if_present(src_path)
        dst_content = self._read_if_present(dst_path)

        if content is None:
            if dst_content is None:
                raise NotFoundError(f"Cannot move {src}: not in {src.bucket.value} or {dst_bucket.value}")
            self._forget(src.bucket, src.key)
            self._remember(dst_bucket, src.key)
            logger.debug("move %s -> %s: already moved", src, dst_bucket.value)
            return dst

        if dst_content is None:
            self._write_atomic(dst_path, content)
        elif dst_content != content:
            raise IntegrityError(f"Cannot move {src}: destination holds different content")
        self._remember(dst_bucket, src.key)

        try:
            src_path.unlink()
        except FileNotFoundError:
            pass
        except OSError as e:
            raise StorageIOError(f"Cannot remove {src}: {e}") from e
        self._forget(src.bucket, src.key)

        logger.debug("move %s -> %s", src, dst_bucket.value)
        return dst

    def delete(self, bucket: Union[BucketId, str], key: str) -> bool:
        """Remove an object if present. Returns True if something was removed."""
        bucket = BucketId.parse(bucket)
        validate_key(key)
        try:
            self._path(bucket, key).unlink()
            removed = True
        except FileNotFoundError:
            removed = False
        except OSError as e:
            raise StorageIOError(f"Cannot remove {bucket.value}/{key}: {e}") from e
        self._forget(bucket, key)
        return removed

    def list(
        self,
        bucket: Union[BucketId, str],
        limit: int = 1000,
        after: Optional[str] = None,
        extension: Optional[str] = None,
    ) -> List[str]:
        """
        List keys in lexicographic order with stable pagination.

        Args:
            bucket: Bucket to list
            limit: Maximum keys to return (>= 1)
            after: Return only keys strictly greater than this one
            extension: Only keys with this extension

        Returns:
            Sorted list of at most ``limit`` keys
        """
        if limit < 1:
            raise ValidationError(f"limit must be >= 1, got {limit}")
        keys = self._snapshot(BucketId.parse(bucket), extension)
        if after is not None:
            keys = [k for k in keys if k > after]
        return keys[:limit]

    def list_all(self, bucket: Union[BucketId, str], extension: Optional[str] = None) -> List[str]:
        """Every key in the bucket (sorted)."""
        return self._snapshot(BucketId.parse(bucket), extension)

    def _snapshot(self, bucket: BucketId, extension: Optional[str]) -> List[str]:
        keys = self._scan(bucket)
        with self._lock:
            self._keys[bucket] = set(keys)
        if extension is not None:
            suffix = f".{extension}"
            keys = {k for k in keys if k.endswith(suffix)}
        return sorted(keys)

    def count(self, bucket: Union[BucketId, str], extension: Optional[str] = None) -> int:
        return len(self._snapshot(BucketId.parse(bucket), extension))

    def write_pointer(self, bucket: Union[BucketId, str], name: str, key: str) -> None:
        """Atomically record a one-line pointer object (e.g. ``current``)."""
        bucket = BucketId.parse(bucket)
        self._check_pointer_name(name)
        validate_key(key)
        self._write_atomic(self.bucket_dir(bucket) / f"{name}{POINTER_SUFFIX}", f"{key}\n".encode())
        logger.info("Pointer %s/%s -> %s", bucket.value, name, key)

    def read_pointer(self, bucket: Union[BucketId, str], name: str) -> Optional[str]:
        """Key a pointer refers to, or None if the pointer was never written."""
        bucket = BucketId.parse(bucket)
        self._check_pointer_name(name)
        content = self._read_if_present(self.bucket_dir(bucket) / f"{name}{POINTER_SUFFIX}")
        if content is None:
            return None
        key = content.decode("utf-8").strip()
        validate_key(key)
        return key

    @staticmethod
    def _check_pointer_name(name: str) -> None:
        if not POINTER_PATTERN.match(name):
            raise ValidationError(f"Malformed pointer name: {name!r}")

    def get_storage_info(self) -> Dict[str, object]:
        """Bucket counts for status output."""
        return {
            "root": str(self.root),
            "buckets": {b.value: self.count(b) for b in BucketId},
        }
