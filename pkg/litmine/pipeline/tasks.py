"""
Task handlers executed on workers.

process       staging/<sha>.json -> parse -> predict -> index -> completed
train         ml_models/<sha>.jsonl -> candidate model in ml_models
extract_stub  raw/<sha>.pdf -> extractor -> staging, PDF archived to completed

Per-key failures never escape a task: they become ``failed`` outcomes whose
reason starts with the failing stage (``parse:``, ``model:``, ``store:``,
``index:``, ``extract:``). A failed article stays in staging next to a
``<sha>.reason`` sidecar.

Within a batch, every document is indexed and the segment committed before
any staging object is moved, so a crash between the two steps leaves the
article in staging and the index entry is simply replaced on retry.
"""

import logging
import threading
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from litmine.classifier import ModelArtifact, TrainConfig, load_model, load_training_data, predict, save_model, train
from litmine.errors import (
    CompatibilityError,
    ExtractionError,
    IntegrityError,
    LitmineError,
    ModelFormatError,
    NotFoundError,
    StorageIOError,
    ValidationError,
)
from litmine.index import IndexedDoc, SegmentWriter
from litmine.ingest import ArticleDoc, get_extractor, stage_article
from litmine.sched import KeyOutcome, KeyResult, TaskCancelled, TaskKind, TaskSpec, Worker
from litmine.store import BucketId, BucketStore, ObjectRef, key_digest

logger = logging.getLogger(__name__)


class Indexer(Protocol):
    def index_doc(self, doc: IndexedDoc) -> object: ...

    def commit(self) -> None: ...


def reason_key(key: str) -> str:
    return f"{key_digest(key)}.reason"


def write_failure_reason(store: BucketStore, key: str, reason: str) -> None:
    """Record why a staged article failed, replacing any earlier reason."""
    sidecar = reason_key(key)
    try:
        store.delete(BucketId.STAGING, sidecar)
        store.put(BucketId.STAGING, sidecar, reason.encode("utf-8"), content_addressed=False)
    except LitmineError as e:
        logger.error("Cannot write failure reason for %s: %s", key, e)


def _fail(store: BucketStore, key: str, reason: str) -> KeyResult:
    logger.warning("Article %s failed: %s", key, reason)
    write_failure_reason(store, key, reason)
    return KeyResult(key, KeyOutcome.FAILED, reason)


def _prepare(key: str, model: ModelArtifact, store: BucketStore, indexer: Indexer) -> Optional[KeyResult]:
    """Read, parse, classify and index one key; None means ready to move."""
    if store.exists(BucketId.COMPLETED, key):
        return KeyResult(key, KeyOutcome.SKIPPED, "already completed")
    try:
        content = store.get_bytes(BucketId.STAGING, key)
    except NotFoundError as e:
        if store.exists(BucketId.COMPLETED, key):
            return KeyResult(key, KeyOutcome.SKIPPED, "already completed")
        return KeyResult(key, KeyOutcome.FAILED, f"store: {e}")
    except (StorageIOError, ValidationError) as e:
        return _fail(store, key, f"store: {e}")

    try:
        doc = ArticleDoc.parse(content)
    except ValidationError as e:
        return _fail(store, key, f"parse: {e}")

    try:
        prediction = predict(model, doc)
    except CompatibilityError as e:
        return _fail(store, key, f"model: {e}")

    try:
        indexer.index_doc(IndexedDoc.from_article(doc, prediction.label))
    except (StorageIOError, ValidationError) as e:
        return _fail(store, key, f"index: {e}")
    return None


def _finish(key: str, store: BucketStore) -> KeyResult:
    try:
        store.move(ObjectRef(BucketId.STAGING, key), BucketId.COMPLETED)
    except (NotFoundError, IntegrityError, StorageIOError) as e:
        return _fail(store, key, f"store: {e}")
    try:
        store.delete(BucketId.STAGING, reason_key(key))
    except LitmineError:
        pass
    return KeyResult(key, KeyOutcome.OK)


def process_keys(
    keys: Sequence[str],
    model: ModelArtifact,
    store: BucketStore,
    indexer: Indexer,
    cancel: Optional[threading.Event] = None,
) -> List[KeyResult]:
    """
    Run the per-article chain over a batch.

    Raises:
        TaskCancelled: cancel was set (the worker was killed)
    """
    results: Dict[str, KeyResult] = {}
    ready: List[str] = []
    for key in keys:
        if cancel is not None and cancel.is_set():
            raise TaskCancelled()
        result = _prepare(key, model, store, indexer)
        if result is None:
            ready.append(key)
        else:
            results[key] = result

    if ready:
        try:
            indexer.commit()
        except StorageIOError as e:
            for key in ready:
                results[key] = _fail(store, key, f"index: {e}")
            ready = []

    for key in ready:
        if cancel is not None and cancel.is_set():
            raise TaskCancelled()
        results[key] = _finish(key, store)
    return [results[key] for key in keys]


def process_one(key: str, model: ModelArtifact, store: BucketStore, indexer: Indexer) -> KeyResult:
    """Process a single staged article (see process_keys)."""
    return process_keys([key], model, store, indexer)[0]


class WorkerContext:
    """
    Per-process resources shared by a worker's slots: the store, one index
    segment writer and a cache of loaded models.
    """

    def __init__(self, store_root: str, index_root: str, extractor: str = "unconfigured"):
        self.store = BucketStore(store_root)
        self.index_root = index_root
        self.extractor_name = extractor
        self._indexer: Optional[SegmentWriter] = None
        self._models: Dict[str, ModelArtifact] = {}
        self._lock = threading.Lock()

    @property
    def indexer(self) -> SegmentWriter:
        with self._lock:
            if self._indexer is None:
                self._indexer = SegmentWriter(self.index_root)
            return self._indexer

    def model(self, key: str) -> ModelArtifact:
        with self._lock:
            cached = self._models.get(key)
        if cached is not None:
            return cached
        model = load_model(self.store, ObjectRef(BucketId.ML_MODELS, key))
        with self._lock:
            self._models[key] = model
        logger.info("Loaded model %s (labels=%s)", key, list(model.labels))
        return model

    def close(self) -> None:
        with self._lock:
            if self._indexer is not None:
                self._indexer.close()
                self._indexer = None


TaskOutput = Tuple[List[KeyResult], Dict[str, object]]


def handle_process(ctx: WorkerContext, spec: TaskSpec, cancel: threading.Event) -> TaskOutput:
    model_key = spec.params.get("model_key")
    if not model_key:
        raise ValidationError("process task lacks params.model_key")
    try:
        model = ctx.model(model_key)
    except (NotFoundError, ModelFormatError, ValidationError) as e:
        reason = f"model: {e}"
        return [_fail(ctx.store, key, reason) for key in spec.keys], {}
    results = process_keys(spec.keys, model, ctx.store, ctx.indexer, cancel)
    return results, {}


def handle_train(ctx: WorkerContext, spec: TaskSpec, cancel: threading.Event) -> TaskOutput:
    data_key = spec.params.get("data_key")
    if not data_key:
        raise ValidationError("train task lacks params.data_key")
    examples = load_training_data(ctx.store, ObjectRef(BucketId.ML_MODELS, data_key))
    config = TrainConfig(
        l2=float(spec.params.get("l2", 1e-4)),
        epochs=int(spec.params.get("epochs", 30)),
        seed=int(spec.params.get("seed", 42)),
    )
    model = train(examples, config)
    if cancel.is_set():
        raise TaskCancelled()
    ref = save_model(ctx.store, model)
    return [], {"candidate_key": ref.key, **model.summary()}


def handle_extract(ctx: WorkerContext, spec: TaskSpec, cancel: threading.Event) -> TaskOutput:
    extractor = get_extractor(ctx.extractor_name)
    results = []
    for key in spec.keys:
        if cancel.is_set():
            raise TaskCancelled()
        if not ctx.store.exists(BucketId.RAW, key):
            if ctx.store.exists(BucketId.COMPLETED, key):
                results.append(KeyResult(key, KeyOutcome.SKIPPED, "already completed"))
            else:
                results.append(KeyResult(key, KeyOutcome.FAILED, "store: not found in raw"))
            continue
        try:
            article = extractor.extract(ctx.store.get_bytes(BucketId.RAW, key))
            stage_article(ctx.store, article)
            ctx.store.move(ObjectRef(BucketId.RAW, key), BucketId.COMPLETED)
            results.append(KeyResult(key, KeyOutcome.OK))
        except ExtractionError as e:
            results.append(KeyResult(key, KeyOutcome.FAILED, f"extract: {e}"))
        except ValidationError as e:
            results.append(KeyResult(key, KeyOutcome.FAILED, f"parse: {e}"))
        except (StorageIOError, IntegrityError) as e:
            results.append(KeyResult(key, KeyOutcome.FAILED, f"store: {e}"))
    return results, {}


TASK_HANDLERS: Dict[TaskKind, Callable[[WorkerContext, TaskSpec, threading.Event], TaskOutput]] = {
    TaskKind.PROCESS: handle_process,
    TaskKind.TRAIN: handle_train,
    TaskKind.EXTRACT_STUB: handle_extract,
}


def build_worker(
    master_addr: str,
    store_root: str,
    index_root: str,
    slots: int = 1,
    heartbeat_interval_s: float = 2.0,
    extractor: str = "unconfigured",
) -> Worker:
    """Worker wired to the pipeline's task handlers."""
    ctx = WorkerContext(store_root, index_root, extractor)

    def bind(handler):
        return lambda spec, cancel: handler(ctx, spec, cancel)

    return Worker(
        master_addr,
        {kind: bind(handler) for kind, handler in TASK_HANDLERS.items()},
        slots=slots,
        heartbeat_interval_s=heartbeat_interval_s,
    )
