"""
Labeled training data: UTF-8 JSON lines, one ``{"text": ..., "label": ...}``
per line, stored in the ml_models bucket as ``<sha1>.jsonl``.
"""

import json
import logging
from pathlib import Path
from typing import Iterable, List, Union

from litmine.errors import ValidationError
from litmine.store import BucketId, BucketStore, ObjectRef, sha1_key

from .maxent import LabeledExample

logger = logging.getLogger(__name__)


def parse_training_data(content: bytes) -> List[LabeledExample]:
    """
    Decode JSON-lines training data. Blank lines are ignored.

    Raises:
        ValidationError: Undecodable line or missing/non-string fields
    """
    try:
        text = content.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ValidationError(f"Training data is not UTF-8: {e}") from e

    examples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Training data line {lineno}: {e}") from e
        if not isinstance(record, dict):
            raise ValidationError(f"Training data line {lineno}: expected an object")
        label, body = record.get("label"), record.get("text")
        if not isinstance(label, str) or not label.strip():
            raise ValidationError(f"Training data line {lineno}: 'label' must be a non-empty string")
        if not isinstance(body, str):
            raise ValidationError(f"Training data line {lineno}: 'text' must be a string")
        examples.append(LabeledExample(text=body, label=label.strip()))
    return examples


def encode_training_data(examples: Iterable[LabeledExample]) -> bytes:
    lines = [json.dumps(ex.to_dict(), sort_keys=True, ensure_ascii=False) for ex in examples]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def upload_training_data(store: BucketStore, content: bytes) -> ObjectRef:
    """Validate and store training data content-addressed in ml_models."""
    examples = parse_training_data(content)
    ref = store.put(BucketId.ML_MODELS, f"{sha1_key(content)}.jsonl", content)
    logger.info("Stored %d training examples at %s", len(examples), ref)
    return ref


def resolve_training_data(store: BucketStore, data: Union[str, Path]) -> ObjectRef:
    """
    Turn ``--data`` into an ml_models reference.

    A local file is uploaded; otherwise the value is taken as a key in
    ml_models or a ``bucket/key`` reference.
    """
    path = Path(data)
    if path.is_file():
        return upload_training_data(store, path.read_bytes())
    text = str(data)
    ref = ObjectRef.parse(text) if "/" in text else ObjectRef(BucketId.ML_MODELS, text)
    if not store.exists(ref.bucket, ref.key):
        raise ValidationError(f"Training data not found: {text} is neither a file nor a stored object")
    return ref


def load_training_data(store: BucketStore, ref: ObjectRef) -> List[LabeledExample]:
    return parse_training_data(store.get_bytes(ref.bucket, ref.key))
