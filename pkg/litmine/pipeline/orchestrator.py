"""
Application-server workflows: dataset update checks, processing jobs and
training jobs.

Each workflow is a single control loop that talks to the master through a
MasterClient; all parallelism lives in the workers.

Usage:
    from litmine.pipeline import Orchestrator, PipelineConfig

    orchestrator = Orchestrator(PipelineConfig.load("params.yaml").validate())
    report = orchestrator.check_update()
    summary = orchestrator.run_processing_job()
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

from litmine.classifier import (
    ModelArtifact,
    current_model_ref,
    load_current_model,
    load_model,
    resolve_training_data,
    select_model,
)
from litmine.errors import (
    MetadataParseError,
    NoModelError,
    ValidationError,
)
from litmine.ingest import DatasetIngestor, IngestReport
from litmine.sched import JobSummary, MasterClient, TaskKind, TaskSpec, make_batches
from litmine.store import BucketId, BucketStore, ObjectRef

from .config import PipelineConfig

logger = logging.getLogger(__name__)


@dataclass
class UpdateReport:
    """Outcome of ``litmine update``: ingest plus the follow-up processing job."""
    ingest: IngestReport
    job: Optional[JobSummary] = None
    skipped_reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"ingest": self.ingest.to_dict()}
        if self.job is not None:
            data["job"] = self.job.to_dict()
        if self.skipped_reason is not None:
            data["processing_skipped"] = self.skipped_reason
        return data


@dataclass
class TrainingOutcome:
    candidate_key: str
    kept: bool
    current_key: Optional[str]
    model: ModelArtifact
    job: JobSummary = field(repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "candidate_key": self.candidate_key,
            "kept": self.kept,
            "current_key": self.current_key,
            "job_id": self.job.job_id,
            **self.model.summary(),
        }


class Orchestrator:
    """
    Drives ingest, processing and training against one store and one master.

    Args:
        config: Validated pipeline configuration
        store: Optional pre-built store (defaults to one at config.store_root)
        job_timeout: Seconds to wait for a job before giving up (None = forever)
    """

    def __init__(self, config: PipelineConfig, store: Optional[BucketStore] = None, job_timeout: Optional[float] = None):
        self.config = config
        self.store = store or BucketStore(config.store_root)
        self.job_timeout = job_timeout

    def client(self) -> MasterClient:
        return MasterClient(self.config.master_addr, connect_retries=3).connect()

    def _run_job(self, tasks) -> JobSummary:
        with self.client() as client:
            job_id = client.submit(tasks)
            logger.info("Submitted job %s with %d task(s)", job_id, len(tasks))
            return client.wait(job_id, timeout=self.job_timeout)

    def check_update(
        self,
        metadata_source: Optional[str] = None,
        articles_dir: Optional[str] = None,
        source_name: Optional[str] = None,
    ) -> IngestReport:
        """
        Run the parse -> diff -> stage chain for the configured dataset.

        An unreachable or missing source yields a report with ``error`` set
        and no bucket changes.
        """
        source = metadata_source or self.config.metadata_source
        if not source:
            return IngestReport(error="no metadata_source configured")
        ingestor = DatasetIngestor(
            self.store,
            source,
            articles_dir or self.config.articles_dir,
            source_name=source_name or self.config.source_name,
        )
        try:
            return ingestor.run()
        except (MetadataParseError, ValidationError) as e:
            logger.error("Dataset update failed: %s", e)
            return IngestReport(error=str(e))

    def staged_keys(self):
        return self.store.list_all(BucketId.STAGING, extension="json")

    def run_processing_job(self) -> JobSummary:
        """
        Batch every staged article into process tasks and wait for the job.

        Raises:
            NoModelError: No current model; train first
            MasterConnectionError: Master unreachable
        """
        model_ref, _ = load_current_model(self.store, self.config.model_ref)
        keys = self.staged_keys()
        tasks = make_batches(
            keys,
            batch_size=self.config.batch_size,
            kind=TaskKind.PROCESS,
            params={"model_key": model_ref.key},
        )
        logger.info("Processing %d staged article(s) in %d batch(es) with %s", len(keys), len(tasks), model_ref)
        summary = self._run_job(tasks)
        logger.info(
            "Job %s finished: ok=%d skipped=%d failed=%d in %.0f ms",
            summary.job_id, summary.keys_ok, summary.keys_skipped, summary.keys_failed, summary.wall_time,
        )
        return summary

    def run_extract_job(self) -> JobSummary:
        """Submit extract_stub tasks for every PDF waiting in the raw bucket."""
        keys = self.store.list_all(BucketId.RAW, extension="pdf")
        tasks = make_batches(keys, batch_size=self.config.batch_size, kind=TaskKind.EXTRACT_STUB)
        return self._run_job(tasks)

    def run_training_job(self, data: Union[str, ObjectRef], **overrides: Any) -> TrainingOutcome:
        """
        Train a candidate on a worker and keep the better model.

        Args:
            data: Local JSON-lines path, ``ml_models/<sha>.jsonl`` reference or key
            overrides: l2 / epochs / seed replacing the configured values

        Raises:
            ConflictError: Another training job is running
            ValidationError: Training failed on the worker or label sets differ
        """
        data_ref = resolve_training_data(self.store, data)
        params = {
            "data_key": data_ref.key,
            "l2": overrides.get("l2") or self.config.l2,
            "epochs": overrides.get("epochs") or self.config.epochs,
            "seed": overrides["seed"] if overrides.get("seed") is not None else self.config.seed,
        }
        summary = self._run_job([TaskSpec(kind=TaskKind.TRAIN, params=params)])
        if summary.failed_permanently or not summary.outputs:
            detail = "; ".join(summary.errors) or "no model produced"
            raise ValidationError(f"Training job {summary.job_id} failed: {detail}")

        candidate_key = summary.outputs[0]["candidate_key"]
        candidate = load_model(self.store, ObjectRef(BucketId.ML_MODELS, candidate_key))
        try:
            _, incumbent = load_current_model(self.store)
        except NoModelError:
            incumbent = None

        winner = select_model(candidate, incumbent, self.store)
        current = current_model_ref(self.store)
        kept = winner is candidate
        logger.info("Training job %s: candidate %s %s", summary.job_id, candidate_key, "kept" if kept else "discarded")
        return TrainingOutcome(
            candidate_key=candidate_key,
            kept=kept,
            current_key=current.key if current else None,
            model=winner,
            job=summary,
        )

    def update(self) -> UpdateReport:
        """
        Check the dataset for new articles, then process whatever is staged.

        Processing is skipped (not failed) when no model exists yet.
        """
        report = UpdateReport(ingest=self.check_update())
        if not report.ingest.ok:
            report.skipped_reason = "ingest failed"
            return report
        if not self.staged_keys():
            report.skipped_reason = "staging is empty"
            return report
        try:
            report.job = self.run_processing_job()
        except NoModelError as e:
            report.skipped_reason = str(e)
        return report

    def job_status(self, job_id: str) -> JobSummary:
        with self.client() as client:
            return client.status(job_id)

    def storage_info(self) -> Dict[str, Any]:
        info = self.store.get_storage_info()
        ref = current_model_ref(self.store)
        info["current_model"] = ref.key if ref else None
        return info

