"""
Keep-the-better-model workflow over the ml_models bucket.

The model with the higher held-out accuracy wins; the incumbent wins ties.
The winner is stored content-addressed and the ``current`` pointer is moved
to it only when it changes, so the accuracy of the current model never
decreases.
"""

import logging
from typing import Optional, Tuple

from litmine.errors import NoModelError, ValidationError
from litmine.store import BucketId, BucketStore, ObjectRef

from .maxent import ModelArtifact
from .model_io import load_model, save_model

logger = logging.getLogger(__name__)

CURRENT_POINTER = "current"


def current_model_ref(store: BucketStore, pointer: str = CURRENT_POINTER) -> Optional[ObjectRef]:
    key = store.read_pointer(BucketId.ML_MODELS, pointer)
    return ObjectRef(BucketId.ML_MODELS, key) if key else None


def load_current_model(store: BucketStore, model_ref: str = CURRENT_POINTER) -> Tuple[ObjectRef, ModelArtifact]:
    """
    Resolve ``model_ref`` (a pointer name or a model key) and load it.

    Raises:
        NoModelError: The pointer was never written
    """
    if model_ref.endswith(".model") or "/" in model_ref:
        ref = ObjectRef.parse(model_ref) if "/" in model_ref else ObjectRef(BucketId.ML_MODELS, model_ref)
    else:
        ref = current_model_ref(store, model_ref)
        if ref is None:
            raise NoModelError(
                f"No '{model_ref}' model in the ml_models bucket; run 'litmine train --data <path>' first"
            )
    return ref, load_model(store, ref)


def select_model(
    candidate: ModelArtifact,
    incumbent: Optional[ModelArtifact],
    store: BucketStore,
    pointer: str = CURRENT_POINTER,
) -> ModelArtifact:
    """
    Keep the better of two models and record it as current.

    Args:
        candidate: Newly trained model
        incumbent: Current model, or None on first training
        store: Store holding the ml_models bucket
        pointer: Pointer name to update

    Returns:
        The winning model

    Raises:
        ValidationError: Label sets differ (migration must be done by hand)
    """
    if incumbent is not None and set(candidate.labels) != set(incumbent.labels):
        raise ValidationError(
            f"Label set mismatch: candidate {sorted(candidate.labels)} vs incumbent "
            f"{sorted(incumbent.labels)}; migrate the current model manually"
        )

    if incumbent is None or candidate.eval_accuracy > incumbent.eval_accuracy:
        winner = candidate
        logger.info(
            "Candidate model kept (accuracy %.4f vs %s)",
            candidate.eval_accuracy,
            f"{incumbent.eval_accuracy:.4f}" if incumbent is not None else "no incumbent",
        )
    else:
        winner = incumbent
        logger.info(
            "Incumbent model kept (accuracy %.4f >= candidate %.4f)",
            incumbent.eval_accuracy, candidate.eval_accuracy,
        )

    ref = save_model(store, winner)
    if store.read_pointer(BucketId.ML_MODELS, pointer) != ref.key:
        store.write_pointer(BucketId.ML_MODELS, pointer, ref.key)
    return winner
