"""
Content-addressed bucket storage.

Provides:
- BucketStore: put / get / exists / move / list over four lifecycle buckets
- BucketId, ObjectRef, StoredObject
- sha1_key: content digest used as object key
"""

from .buckets import (
    KEY_EXTENSIONS,
    BucketId,
    BucketStore,
    ObjectRef,
    StoredObject,
    key_digest,
    key_extension,
    sha1_key,
    validate_key,
)

__all__ = [
    "KEY_EXTENSIONS",
    "BucketId",
    "BucketStore",
    "ObjectRef",
    "StoredObject",
    "key_digest",
    "key_extension",
    "sha1_key",
    "validate_key",
]
