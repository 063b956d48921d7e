"""
Bucket store tests: content keys, idempotent put/move, listing.

Usage:
    pytest tests/test_store.py -v
    pytest tests/test_store.py -v --run-slow   # include latency check
"""

import builtins
import time

import pytest

from litmine.errors import IntegrityError, NotFoundError, ValidationError
from litmine.store import BucketId, BucketStore, ObjectRef, key_extension, sha1_key, validate_key


def put_blob(store: BucketStore, bucket: BucketId, content: bytes, ext: str = "json") -> ObjectRef:
    return store.put(bucket, f"{sha1_key(content)}.{ext}", content)


class TestContentKeys:
    """SHA1 keys and key validation."""

    def test_sha1_known_vectors(self):
        """Digests match the published SHA1 test vectors."""
        assert sha1_key(b"abc") == "a9993e364706816aba3e25717850c26c9cd0d89d"
        assert sha1_key(b"") == "da39a3ee5e6b4b0d3255bfef95601890afd80709"

    @pytest.mark.parametrize("key", [
        "a9993e364706816aba3e25717850c26c9cd0d89d",
        "a9993e364706816aba3e25717850c26c9cd0d89d.json",
        "a9993e364706816aba3e25717850c26c9cd0d89d.model",
    ])
    def test_valid_keys(self, key):
        assert validate_key(key) == key[:40]

    @pytest.mark.parametrize("key", [
        "A9993E364706816ABA3E25717850C26C9CD0D89D",
        "a9993e36",
        "a9993e364706816aba3e25717850c26c9cd0d89d.exe",
        "../a9993e364706816aba3e25717850c26c9cd0d89d",
        "",
    ])
    def test_malformed_keys_rejected(self, key):
        with pytest.raises(ValidationError):
            validate_key(key)

    def test_key_extension(self):
        assert key_extension("da39a3ee5e6b4b0d3255bfef95601890afd80709.pdf") == "pdf"
        assert key_extension("da39a3ee5e6b4b0d3255bfef95601890afd80709") is None

    def test_object_ref_parse(self):
        ref = ObjectRef.parse("staging/da39a3ee5e6b4b0d3255bfef95601890afd80709.json")
        assert ref.bucket == BucketId.STAGING
        assert str(ref) == "staging/da39a3ee5e6b4b0d3255bfef95601890afd80709.json"

    def test_object_ref_unknown_bucket(self):
        with pytest.raises(ValidationError):
            ObjectRef.parse("archive/da39a3ee5e6b4b0d3255bfef95601890afd80709")


class TestPut:
    """put / get / exists."""

    def test_put_then_exists(self, store):
        ref = put_blob(store, BucketId.RAW, b"hello")
        assert store.exists(BucketId.RAW, ref.key)
        assert not store.exists(BucketId.STAGING, ref.key)
        assert store.get_bytes(BucketId.RAW, ref.key) == b"hello"

    def test_put_is_idempotent(self, store):
        first = put_blob(store, BucketId.RAW, b"same bytes")
        second = put_blob(store, BucketId.RAW, b"same bytes")
        assert first == second
        assert store.count(BucketId.RAW) == 1

    def test_checksum_violation(self, store):
        with pytest.raises(IntegrityError):
            store.put(BucketId.RAW, f"{sha1_key(b'one')}.json", b"two")
        assert store.count(BucketId.RAW) == 0

    def test_overwrite_with_different_content_refused(self, store):
        key = f"{sha1_key(b'original')}.json"
        store.put(BucketId.STAGING, key, b"canonical", content_addressed=False)
        with pytest.raises(IntegrityError):
            store.put(BucketId.STAGING, key, b"changed", content_addressed=False)
        assert store.get_bytes(BucketId.STAGING, key) == b"canonical"

    def test_get_missing(self, store):
        with pytest.raises(NotFoundError):
            store.get(BucketId.RAW, sha1_key(b"missing"))

    def test_get_survives_move_after_open(self, store, monkeypatch):
        ref = put_blob(store, BucketId.STAGING, b"moving")
        path = store.bucket_dir(BucketId.STAGING) / ref.key
        real_open = builtins.open
        moved = []

        def open_then_move(file, *args, **kwargs):
            handle = real_open(file, *args, **kwargs)
            if str(file) == str(path) and not moved:
                moved.append(True)
                store.move(ref, BucketId.COMPLETED)
            return handle

        with monkeypatch.context() as patched:
            patched.setattr(builtins, "open", open_then_move)
            obj = store.get(BucketId.STAGING, ref.key)
        assert obj.content == b"moving"
        assert store.exists(BucketId.COMPLETED, ref.key)
        with pytest.raises(NotFoundError):
            store.get(BucketId.STAGING, ref.key)

    def test_bucket_by_name(self, store):
        ref = put_blob(store, "completed", b"x")
        assert ref.bucket == BucketId.COMPLETED
        with pytest.raises(ValidationError):
            store.exists("Completed", ref.key)

    def test_exists_sees_other_process_writes(self, tmp_path):
        """A second handle on the same root sees objects written by the first."""
        a = BucketStore(tmp_path / "shared")
        b = BucketStore(tmp_path / "shared")
        ref = put_blob(a, BucketId.RAW, b"shared")
        assert b.exists(BucketId.RAW, ref.key)
        a.delete(BucketId.RAW, ref.key)
        assert not b.exists(BucketId.RAW, ref.key)


class TestMove:
    """Idempotent move between buckets."""

    def test_move(self, store):
        ref = put_blob(store, BucketId.STAGING, b"article")
        moved = store.move(ref, BucketId.COMPLETED)
        assert moved == ObjectRef(BucketId.COMPLETED, ref.key)
        assert not store.exists(BucketId.STAGING, ref.key)
        assert store.get_bytes(BucketId.COMPLETED, ref.key) == b"article"

    def test_move_twice_is_noop(self, store):
        ref = put_blob(store, BucketId.STAGING, b"article")
        store.move(ref, BucketId.COMPLETED)
        again = store.move(ref, BucketId.COMPLETED)
        assert again.bucket == BucketId.COMPLETED
        assert store.count(BucketId.COMPLETED) == 1
        assert store.count(BucketId.STAGING) == 0

    def test_move_with_copy_already_in_destination(self, store):
        """Crash between copy and delete: the retry finishes the move."""
        ref = put_blob(store, BucketId.STAGING, b"article")
        put_blob(store, BucketId.COMPLETED, b"article")
        store.move(ref, BucketId.COMPLETED)
        assert not store.exists(BucketId.STAGING, ref.key)
        assert store.exists(BucketId.COMPLETED, ref.key)

    def test_move_missing(self, store):
        with pytest.raises(NotFoundError):
            store.move(ObjectRef(BucketId.STAGING, sha1_key(b"nowhere")), BucketId.COMPLETED)

    def test_move_conflicting_destination(self, store):
        key = f"{sha1_key(b'k')}.json"
        store.put(BucketId.STAGING, key, b"v1", content_addressed=False)
        store.put(BucketId.COMPLETED, key, b"v2", content_addressed=False)
        with pytest.raises(IntegrityError):
            store.move(ObjectRef(BucketId.STAGING, key), BucketId.COMPLETED)
        assert store.exists(BucketId.STAGING, key)


class TestListing:
    """Sorted listing and pagination."""

    def test_list_is_sorted(self, store):
        keys = [put_blob(store, BucketId.RAW, str(i).encode()).key for i in range(20)]
        assert store.list(BucketId.RAW, limit=100) == sorted(keys)

    def test_pagination_covers_every_key_once(self, store):
        keys = {put_blob(store, BucketId.RAW, str(i).encode()).key for i in range(25)}
        seen, after = [], None
        while True:
            page = store.list(BucketId.RAW, limit=7, after=after)
            if not page:
                break
            seen.extend(page)
            after = page[-1]
        assert seen == sorted(keys)

    def test_extension_filter(self, store):
        put_blob(store, BucketId.STAGING, b"doc", ext="json")
        put_blob(store, BucketId.STAGING, b"why", ext="reason")
        assert len(store.list_all(BucketId.STAGING, extension="json")) == 1
        assert store.count(BucketId.STAGING) == 2

    def test_bad_limit(self, store):
        with pytest.raises(ValidationError):
            store.list(BucketId.RAW, limit=0)

    def test_pointers(self, store):
        ref = put_blob(store, BucketId.ML_MODELS, b"model", ext="model")
        assert store.read_pointer(BucketId.ML_MODELS, "current") is None
        store.write_pointer(BucketId.ML_MODELS, "current", ref.key)
        assert store.read_pointer(BucketId.ML_MODELS, "current") == ref.key
        assert store.list_all(BucketId.ML_MODELS) == [ref.key]

    def test_storage_info(self, store):
        put_blob(store, BucketId.RAW, b"x")
        info = store.get_storage_info()
        assert info["buckets"] == {"raw": 1, "staging": 0, "completed": 0, "ml_models": 0}


def _exists_latency(store: BucketStore, keys, probes: int = 2000) -> float:
    start = time.perf_counter()
    for i in range(probes):
        store.exists(BucketId.RAW, keys[i % len(keys)])
    return (time.perf_counter() - start) / probes


@pytest.mark.slow
def test_exists_latency_independent_of_bucket_size(tmp_path):
    """exists() on a 100k-object bucket is at most twice as slow as on 1k."""
    small = BucketStore(tmp_path / "small")
    small_keys = [put_blob(small, BucketId.RAW, f"s{i}".encode()).key for i in range(1000)]
    large = BucketStore(tmp_path / "large")
    large_keys = [put_blob(large, BucketId.RAW, f"l{i}".encode()).key for i in range(100_000)]

    _exists_latency(small, small_keys, probes=200)
    _exists_latency(large, large_keys, probes=200)
    t_small = min(_exists_latency(small, small_keys) for _ in range(3))
    t_large = min(_exists_latency(large, large_keys) for _ in range(3))
    assert t_large <= 2 * t_small
