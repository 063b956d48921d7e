"""
Binary model file format.

Layout (little-endian):

    magic        4 bytes   b"LMML"
    version      u8        1
    labels       u32 count, then per label: u16 length + UTF-8 bytes
    feature_dims u32
    hash_seed    u64
    eval_acc     f64
    macro_f1     f64
    trained_at   u16 length + ISO-8601 UTF-8
    train_sha    20 bytes  raw SHA1
    bias         C x f64
    weights      CSR: u64 nnz, (C+1) x u64 indptr, nnz x u32 indices, nnz x f64 data
    crc32        u32 over every preceding byte

The version byte is checked before the checksum so that files written by a
newer format revision report UnsupportedVersionError rather than corruption.

Usage:
    ref = save_model(store, model)          # ml_models/<sha1>.model
    model = load_model(store, ref)
"""

import logging
import struct
import zlib
from datetime import datetime
from typing import Tuple, Union

import numpy as np
from scipy import sparse

from litmine.errors import ModelFormatError, UnsupportedVersionError, ValidationError
from litmine.store import BucketId, BucketStore, ObjectRef, sha1_key

from .maxent import ModelArtifact

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"LMML"
MODEL_VERSION = 1
MODEL_EXTENSION = "model"


def serialize_model(model: ModelArtifact) -> bytes:
    """Encode a model into the versioned binary format."""
    weights = model.weights.tocsr()
    weights.sort_indices()
    parts = [MODEL_MAGIC, struct.pack("<B", MODEL_VERSION), struct.pack("<I", len(model.labels))]
    for label in model.labels:
        encoded = label.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)

    trained_at = model.trained_at.isoformat().encode("utf-8")
    parts.append(struct.pack("<IQdd", model.feature_dims, model.hash_seed, model.eval_accuracy, model.macro_f1))
    parts.append(struct.pack("<H", len(trained_at)))
    parts.append(trained_at)
    parts.append(bytes.fromhex(model.train_set_sha))
    parts.append(np.asarray(model.bias, dtype="<f8").tobytes())

    parts.append(struct.pack("<Q", weights.nnz))
    parts.append(np.asarray(weights.indptr, dtype="<u8").tobytes())
    parts.append(np.asarray(weights.indices, dtype="<u4").tobytes())
    parts.append(np.asarray(weights.data, dtype="<f8").tobytes())

    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    """Sequential reader that reports the offset of every short read."""

    def __init__(self, content: bytes, end: int):
        self.content = content
        self.end = end
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if size < 0 or self.offset + size > self.end:
            raise ModelFormatError(f"Truncated model file while reading {what}", self.offset)
        chunk = self.content[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * itemsize, what), dtype=dtype).copy()


def deserialize_model(content: bytes) -> ModelArtifact:
    """
    Decode a model file.

    Raises:
        UnsupportedVersionError: Version byte is not 1
        ModelFormatError: Bad magic, checksum mismatch, truncation or
            inconsistent payload (message carries the byte offset)
    """
    if len(content) < len(MODEL_MAGIC) + 1:
        raise ModelFormatError("Truncated model file while reading header", len(content))
    if content[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"Bad magic {content[:4]!r}, expected {MODEL_MAGIC!r}", 0)
    version = content[4]
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"Unsupported model format version {version}", 4)
    if len(content) < 9:
        raise ModelFormatError("Truncated model file while reading checksum", len(content))

    end = len(content) - 4
    (stored_crc,) = struct.unpack("<I", content[end:])
    if zlib.crc32(content[:end]) & 0xFFFFFFFF != stored_crc:
        raise ModelFormatError("Model file checksum mismatch", end)

    reader = _Reader(content, end)
    reader.offset = 5
    (num_labels,) = reader.unpack("<I", "label count")
    labels = []
    for _ in range(num_labels):
        (length,) = reader.unpack("<H", "label length")
        raw = reader.take(length, "label")
        try:
            labels.append(raw.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise ModelFormatError(f"Label is not UTF-8: {e}", reader.offset - length) from e

    feature_dims, hash_seed, eval_accuracy, macro_f1 = reader.unpack("<IQdd", "model metadata")
    (ts_length,) = reader.unpack("<H", "timestamp length")
    ts_offset = reader.offset
    try:
        trained_at = datetime.fromisoformat(reader.take(ts_length, "timestamp").decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise ModelFormatError(f"Bad trained_at timestamp: {e}", ts_offset) from e
    train_set_sha = reader.take(20, "training set digest").hex()
    bias = reader.array("<f8", num_labels, "bias")

    weights_offset = reader.offset
    (nnz,) = reader.unpack("<Q", "weight count")
    indptr = reader.array("<u8", num_labels + 1, "weight row pointers")
    indices = reader.array("<u4", nnz, "weight columns")
    data = reader.array("<f8", nnz, "weight values")
    if reader.offset != end:
        raise ModelFormatError(f"{end - reader.offset} unexpected trailing bytes", reader.offset)
    if indptr[0] != 0 or indptr[-1] != nnz or np.any(np.diff(indptr.astype(np.int64)) < 0):
        raise ModelFormatError("Inconsistent weight row pointers", weights_offset)
    if nnz and int(indices.max()) >= feature_dims:
        raise ModelFormatError("Weight column outside feature space", weights_offset)

    weights = sparse.csr_matrix(
        (data.astype(np.float64), indices.astype(np.int32), indptr.astype(np.int64)),
        shape=(num_labels, feature_dims),
    )
    try:
        return ModelArtifact(
            labels=tuple(labels),
            weights=weights,
            bias=bias.astype(np.float64),
            feature_dims=feature_dims,
            hash_seed=hash_seed,
            eval_accuracy=eval_accuracy,
            macro_f1=macro_f1,
            trained_at=trained_at,
            train_set_sha=train_set_sha,
        )
    except ValidationError as e:
        raise ModelFormatError(f"Invalid model payload: {e}", 5) from e


def model_key(model: ModelArtifact) -> str:
    """Content-addressed key the model is stored under."""
    return f"{sha1_key(serialize_model(model))}.{MODEL_EXTENSION}"


def save_model(store: BucketStore, model: ModelArtifact) -> ObjectRef:
    """Write a model to ml_models/<sha1>.model (idempotent)."""
    content = serialize_model(model)
    ref = store.put(BucketId.ML_MODELS, f"{sha1_key(content)}.{MODEL_EXTENSION}", content)
    logger.info("Saved model %s (%d bytes, labels=%s)", ref.key, len(content), list(model.labels))
    return ref


def load_model(store: BucketStore, ref: Union[ObjectRef, str]) -> ModelArtifact:
    """
    Load a model by reference or by key in ml_models.

    Raises:
        NotFoundError: Object missing
        ModelFormatError: Corrupt file
    """
    if isinstance(ref, str):
        ref = ObjectRef.parse(ref) if "/" in ref else ObjectRef(BucketId.ML_MODELS, ref)
    return deserialize_model(store.get_bytes(ref.bucket, ref.key))
