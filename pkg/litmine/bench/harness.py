"""
N x M scaling benchmark.

For every corpus size n and worker count m the harness stages a fresh copy
of the synthetic corpus, starts a master with m workers, runs one
processing job and records the job's wall time (submit to completion, as
measured by the master). Each point is the median over ``repeats`` runs.

The report carries:
- a least-squares fit of wall time against n at m=1 (slope, intercept, r2)
- speedups relative to m=1 at the same n
- the max/min ratio of per-article time at m=1
- whether the doc -> label map was identical for every m at each n

Usage:
    report = run_grid(config, n_set=[1000, 2000], m_set=[1, 2], repeats=3)
    report.write("report.json", csv_path="report.csv")
"""

import hashlib
import json
import logging
import math
import shutil
import statistics
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from litmine.classifier import CURRENT_POINTER, ModelArtifact, TrainConfig, save_model, train
from litmine.errors import LitmineError, StorageIOError, ValidationError
from litmine.index import SearchIndex
from litmine.pipeline.cluster import LocalCluster
from litmine.pipeline.config import PipelineConfig
from litmine.pipeline.orchestrator import Orchestrator
from litmine.store import BucketId, BucketStore

from .corpus import demo_training_data, gen_corpus

logger = logging.getLogger(__name__)

DEFAULT_N_SET = (1000, 2000, 3000, 4000, 5000)
DEFAULT_M_SET = (1, 2, 3, 4)


@dataclass
class BenchPoint:
    """One (n, m) grid point; wall_ms is the median of its repeats."""
    n_articles: int
    m_workers: int
    wall_ms: float = math.nan
    per_article_ms: float = math.nan
    speedup: float = math.nan
    repeats_ms: List[float] = field(default_factory=list)
    doc_count: int = 0
    labels_digest: str = ""
    valid: bool = True
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float

    @classmethod
    def of(cls, xs: Sequence[float], ys: Sequence[float]) -> "LinearFit":
        x = np.asarray(xs, dtype=np.float64)
        y = np.asarray(ys, dtype=np.float64)
        slope, intercept = np.polyfit(x, y, 1)
        residual = float(np.sum((y - (slope * x + intercept)) ** 2))
        total = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - residual / total if total > 0 else 1.0
        return cls(float(slope), float(intercept), r2)


@dataclass
class BenchReport:
    grid: List[BenchPoint]
    linear_fit: Optional[LinearFit] = None
    per_article_ratio: Optional[float] = None
    consistent_across_m: Dict[int, bool] = field(default_factory=dict)
    classifier_eval_accuracy: float = math.nan
    repeats: int = 1
    worker_mode: str = "process"
    notes: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return all(point.valid for point in self.grid)

    def point(self, n: int, m: int) -> BenchPoint:
        for p in self.grid:
            if p.n_articles == n and p.m_workers == m:
                return p
        raise ValidationError(f"No grid point for n={n}, m={m}")

    def summary(self) -> Dict[str, Any]:
        return {
            "valid": self.valid,
            "linear_fit": asdict(self.linear_fit) if self.linear_fit else None,
            "per_article_ratio": self.per_article_ratio,
            "consistent_across_m": {str(n): ok for n, ok in self.consistent_across_m.items()},
            "classifier_eval_accuracy": self.classifier_eval_accuracy,
            "repeats": self.repeats,
            "worker_mode": self.worker_mode,
            "notes": self.notes,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {"grid": [p.to_dict() for p in self.grid], **self.summary()}

    def to_frame(self) -> pd.DataFrame:
        columns = ["n_articles", "m_workers", "wall_ms", "per_article_ms", "speedup", "doc_count", "valid", "error"]
        return pd.DataFrame([p.to_dict() for p in self.grid], columns=columns)

    def write(self, json_path: str, csv_path: Optional[str] = None) -> None:
        try:
            Path(json_path).write_text(json.dumps(self.to_dict(), indent=2, default=str), encoding="utf-8")
            if csv_path:
                self.to_frame().to_csv(csv_path, index=False)
        except OSError as e:
            raise StorageIOError(f"Cannot write bench report: {e}") from e
        logger.info("Bench report written to %s", json_path)


def labels_digest(labels: Dict[str, str]) -> str:
    """Order-independent digest of a doc_id -> label map."""
    h = hashlib.sha1()
    for doc_id in sorted(labels):
        h.update(f"{doc_id}:{labels[doc_id]}\n".encode("utf-8"))
    return h.hexdigest()


def train_demo_model(config: PipelineConfig, per_label: int = 200, seed: int = 7) -> ModelArtifact:
    examples = demo_training_data(per_label=per_label, seed=seed)
    model = train(examples, TrainConfig(l2=config.l2, epochs=config.epochs, seed=config.seed))
    logger.info("Demo model: accuracy %.4f, macro F1 %.4f", model.eval_accuracy, model.macro_f1)
    return model


def _install_model(store: BucketStore, model: ModelArtifact) -> None:
    ref = save_model(store, model)
    store.write_pointer(BucketId.ML_MODELS, CURRENT_POINTER, ref.key)


def run_once(
    config: PipelineConfig,
    corpus_root: Path,
    run_root: Path,
    m: int,
    worker_mode: str,
) -> BenchPoint:
    """Copy the staged corpus, run one processing job on m workers, measure it."""
    store_root, index_root = run_root / "store", run_root / "index"
    shutil.copytree(corpus_root, store_root)
    run_config = config.override({"store_root": str(store_root), "index_root": str(index_root)})
    n = BucketStore(store_root).count(BucketId.STAGING, extension="json")

    with LocalCluster(run_config, workers=m, mode=worker_mode) as cluster:
        orchestrator = Orchestrator(run_config.override({"master_addr": cluster.address}))
        start = time.perf_counter()
        summary = orchestrator.run_processing_job()
        elapsed_ms = (time.perf_counter() - start) * 1000.0

    point = BenchPoint(n_articles=n, m_workers=m)
    point.wall_ms = summary.wall_time if summary.wall_time > 0 else elapsed_ms
    if summary.failed_permanently or summary.keys_failed or summary.keys_ok != n:
        point.valid = False
        point.error = (
            f"job {summary.job_id}: ok={summary.keys_ok} failed={summary.keys_failed} "
            f"failed_tasks={summary.failed_permanently}"
        )
    labels = SearchIndex(index_root).labels()
    point.doc_count = len(labels)
    point.labels_digest = labels_digest(labels)
    return point


def run_point(
    config: PipelineConfig,
    corpus_root: Path,
    workdir: Path,
    n: int,
    m: int,
    repeats: int,
    worker_mode: str,
) -> BenchPoint:
    runs: List[BenchPoint] = []
    for r in range(repeats):
        run_root = workdir / f"run-n{n}-m{m}-r{r}"
        try:
            runs.append(run_once(config, corpus_root, run_root, m, worker_mode))
        except (LitmineError, OSError) as e:
            logger.error("Bench point n=%d m=%d repeat %d failed: %s", n, m, r, e)
            return BenchPoint(n_articles=n, m_workers=m, valid=False, error=str(e))
        finally:
            shutil.rmtree(run_root, ignore_errors=True)

    point = BenchPoint(n_articles=n, m_workers=m)
    point.repeats_ms = [run.wall_ms for run in runs]
    point.wall_ms = statistics.median(point.repeats_ms)
    point.per_article_ms = point.wall_ms / n
    point.doc_count = runs[-1].doc_count
    point.labels_digest = runs[-1].labels_digest
    invalid = [run for run in runs if not run.valid]
    if invalid:
        point.valid = False
        point.error = invalid[0].error
    if len({run.labels_digest for run in runs}) > 1:
        point.valid = False
        point.error = "labels differ between repeats"
    logger.info("n=%d m=%d: median %.1f ms (%.3f ms/article)", n, m, point.wall_ms, point.per_article_ms)
    return point


def analyze(report: BenchReport) -> BenchReport:
    """Fill speedups, the m=1 linear fit and cross-m consistency."""
    n_values = sorted({p.n_articles for p in report.grid})
    m_values = sorted({p.m_workers for p in report.grid})
    base_m = m_values[0]
    if base_m != 1:
        report.notes.append(f"m=1 not in grid; speedups are relative to m={base_m}")

    for n in n_values:
        base = report.point(n, base_m)
        for m in m_values:
            point = report.point(n, m)
            if point.valid and base.valid and point.wall_ms > 0:
                point.speedup = base.wall_ms / point.wall_ms
        digests = {report.point(n, m).labels_digest for m in m_values if report.point(n, m).valid}
        report.consistent_across_m[n] = len(digests) <= 1

    single = [report.point(n, base_m) for n in n_values]
    single = [p for p in single if p.valid]
    if len(single) >= 2:
        report.linear_fit = LinearFit.of([p.n_articles for p in single], [p.wall_ms for p in single])
        per_article = [p.per_article_ms for p in single]
        report.per_article_ratio = max(per_article) / min(per_article)
    else:
        report.notes.append("fewer than two valid single-worker points; no linear fit")
    return report


def run_grid(
    config: PipelineConfig,
    n_set: Sequence[int] = DEFAULT_N_SET,
    m_set: Sequence[int] = DEFAULT_M_SET,
    repeats: int = 3,
    seed: int = 7,
    worker_mode: str = "process",
    workdir: Optional[str] = None,
    per_label: int = 200,
) -> BenchReport:
    """
    Run the full N x M grid.

    A failed job marks its point invalid; the report is still produced.

    Raises:
        ValidationError: Empty sets, non-positive sizes or repeats < 1
    """
    if not n_set or not m_set:
        raise ValidationError("Bench needs at least one n and one m")
    if min(n_set) < 1 or min(m_set) < 1:
        raise ValidationError("Bench sizes and worker counts must be >= 1")
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")

    model = train_demo_model(config, per_label=per_label, seed=seed)
    report = BenchReport(
        grid=[],
        classifier_eval_accuracy=model.eval_accuracy,
        repeats=repeats,
        worker_mode=worker_mode,
    )

    root = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="litmine-bench-"))
    root.mkdir(parents=True, exist_ok=True)
    try:
        for n in sorted(set(n_set)):
            corpus_root = root / f"corpus-n{n}"
            corpus_store = BucketStore(corpus_root)
            gen_corpus(n, seed, corpus_store)
            _install_model(corpus_store, model)
            for m in sorted(set(m_set)):
                report.grid.append(run_point(config, corpus_root, root, n, m, repeats, worker_mode))
            shutil.rmtree(corpus_root, ignore_errors=True)
    finally:
        if workdir is None:
            shutil.rmtree(root, ignore_errors=True)
    return analyze(report)
