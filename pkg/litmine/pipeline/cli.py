"""
The ``litmine`` command line.

Every command prints line-delimited JSON on stdout; logs go to stderr.
Exit codes: 0 success, 1 validation/integrity problems, 2 I/O or network
failures. Errors are printed as ``{"error": ..., "type": ...}``.

Usage:
    litmine --config params.yaml update
    litmine ingest --metadata cord19/metadata.csv --articles cord19/pdf_json
    litmine train --data labeled.jsonl
    litmine master --listen 0.0.0.0:7070
    litmine worker --master 10.0.0.5:7070 --slots 4
    litmine process
    litmine query "vaccine trial" --limit 5
    litmine agg countries --top 10 --csv countries.csv
    litmine snapshot backup.lmsnap
    litmine restore backup.lmsnap --force
    litmine bench --n 1000,2000 --m 1,2 --repeats 3 --out report.json
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from litmine import __version__
from litmine.errors import LitmineError, ValidationError
from litmine.httpd import serve_app
from litmine.index import SearchIndex, build_index_app, restore, snapshot
from litmine.ingest import enqueue_raw_pdf

from .cluster import start_master
from .config import PipelineConfig
from .logs import setup_logging
from .orchestrator import Orchestrator
from .tasks import build_worker

logger = logging.getLogger(__name__)


def emit(record: Any) -> None:
    """Write one JSON line to stdout."""
    if hasattr(record, "to_dict"):
        record = record.to_dict()
    sys.stdout.write(json.dumps(record, sort_keys=True, default=str) + "\n")
    sys.stdout.flush()


def _int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


# ---------------------------------------------------------------- commands

def cmd_update(config: PipelineConfig, args: argparse.Namespace) -> int:
    report = Orchestrator(config).update()
    emit(report)
    return 0 if report.ingest.ok else 1


def cmd_ingest(config: PipelineConfig, args: argparse.Namespace) -> int:
    orchestrator = Orchestrator(config)
    status = 0
    if args.metadata:
        report = orchestrator.check_update(args.metadata, args.articles, args.source)
        emit(report)
        status = 0 if report.ok else 1
    if args.pdfs:
        pdfs = sorted(Path(args.pdfs).rglob("*.pdf"))
        for path in pdfs:
            ref = enqueue_raw_pdf(orchestrator.store, path.read_bytes())
            logger.debug("Queued %s as %s", path, ref)
        emit({"raw_enqueued": len(pdfs)})
    if not args.metadata and not args.pdfs:
        raise ValidationError("ingest needs --metadata and/or --pdfs")
    return status


def cmd_train(config: PipelineConfig, args: argparse.Namespace) -> int:
    outcome = Orchestrator(config).run_training_job(args.data, l2=args.l2, epochs=args.epochs, seed=args.seed)
    emit(outcome)
    return 0


def cmd_process(config: PipelineConfig, args: argparse.Namespace) -> int:
    orchestrator = Orchestrator(config)
    if args.extract:
        emit({"extract": orchestrator.run_extract_job().to_dict()})
    summary = orchestrator.run_processing_job()
    emit(summary)
    return 0 if summary.failed_permanently == 0 else 1


def cmd_master(config: PipelineConfig, args: argparse.Namespace) -> int:
    if args.no_converged:
        config = config.override({"converged": False})
    master = start_master(config, listen=args.listen, http=not args.no_http)
    emit({"master": master.address, "http_port": master.http_port, "converged": config.converged})
    master.wait()
    return 0


def cmd_worker(config: PipelineConfig, args: argparse.Namespace) -> int:
    worker = build_worker(
        args.master or config.master_addr,
        config.store_root,
        config.index_root,
        slots=args.slots or config.worker_slots,
        heartbeat_interval_s=config.heartbeat_interval_s,
        extractor=args.extractor,
    )
    worker.run_forever()
    emit({"worker": worker.worker_id, "tasks_done": worker.tasks_done})
    return 0


def cmd_serve(config: PipelineConfig, args: argparse.Namespace) -> int:
    index = SearchIndex(args.index or config.index_root)
    port = args.port if args.port is not None else config.serve_port
    emit({"serving": args.index or config.index_root, "host": args.host, "port": port, "docs": index.doc_count})
    serve_app(build_index_app(index, refresh_interval_s=args.refresh), args.host, port)
    return 0


def cmd_query(config: PipelineConfig, args: argparse.Namespace) -> int:
    index = SearchIndex(config.index_root)
    for hit in index.search(args.text, limit=args.limit):
        emit(hit)
    return 0


def cmd_agg(config: PipelineConfig, args: argparse.Namespace) -> int:
    result = SearchIndex(config.index_root).aggregate(args.field, top_k=args.top)
    if args.csv:
        frame = pd.DataFrame(result.buckets, columns=[args.field, "count"])
        frame.to_csv(args.csv, index=False)
        emit({"field": args.field, "buckets": len(result.buckets), "csv": args.csv})
    else:
        for key, count in result.buckets:
            emit({"key": key, "count": count})
    return 0


def cmd_status(config: PipelineConfig, args: argparse.Namespace) -> int:
    orchestrator = Orchestrator(config)
    if args.job_id:
        emit(orchestrator.job_status(args.job_id))
    else:
        emit(orchestrator.storage_info())
    return 0


def cmd_snapshot(config: PipelineConfig, args: argparse.Namespace) -> int:
    manifest = snapshot(SearchIndex(config.index_root), args.dst)
    emit({"snapshot": args.dst, **manifest})
    return 0


def cmd_restore(config: PipelineConfig, args: argparse.Namespace) -> int:
    index = restore(args.src, config.index_root, force=args.force)
    emit({"restored": args.src, "index_root": config.index_root, "doc_count": index.doc_count})
    return 0


def cmd_bench(config: PipelineConfig, args: argparse.Namespace) -> int:
    from litmine.bench import run_grid

    report = run_grid(
        config,
        n_set=args.n,
        m_set=args.m,
        repeats=args.repeats,
        seed=args.seed,
        worker_mode=args.mode,
    )
    report.write(args.out, csv_path=args.csv)
    for point in report.grid:
        emit(point)
    emit(report.summary())
    return 0 if report.valid else 1


# ---------------------------------------------------------------- parser

COMMANDS: Dict[str, Callable[[PipelineConfig, argparse.Namespace], int]] = {
    "update": cmd_update,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "process": cmd_process,
    "master": cmd_master,
    "worker": cmd_worker,
    "serve": cmd_serve,
    "query": cmd_query,
    "agg": cmd_agg,
    "status": cmd_status,
    "snapshot": cmd_snapshot,
    "restore": cmd_restore,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="litmine",
        description="Incremental ingestion, classification and search of scholarly articles",
    )
    parser.add_argument("--version", action="version", version=f"litmine {__version__}")
    parser.add_argument("--config", help="YAML (litmine: section) or key=value config file")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-file", help="Also write logs to this file")
    parser.add_argument("--store-root", help="Bucket store directory")
    parser.add_argument("--index-root", help="Index directory")
    parser.add_argument("--master-addr", help="Master host:port")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("update", help="Check the dataset for new articles and process staging")

    ingest = subparsers.add_parser("ingest", help="Stage new articles from a dataset")
    ingest.add_argument("--metadata", help="Metadata CSV path or URL")
    ingest.add_argument("--articles", help="Directory of article JSON files")
    ingest.add_argument("--source", help="Source name for rows without one")
    ingest.add_argument("--pdfs", help="Directory of PDFs to queue in the raw bucket")

    train = subparsers.add_parser("train", help="Train a candidate model and keep the better one")
    train.add_argument("--data", required=True, help="JSON-lines file, ml_models key or bucket/key")
    train.add_argument("--l2", type=float, help="L2 regularization strength")
    train.add_argument("--epochs", type=int, help="Optimizer iterations")
    train.add_argument("--seed", type=int, help="Seed for the evaluation split")

    process = subparsers.add_parser("process", help="Classify, index and archive every staged article")
    process.add_argument("--extract", action="store_true", help="Run extract tasks over raw PDFs first")

    master = subparsers.add_parser("master", help="Run the task master")
    master.add_argument("--listen", help="host:port to listen on (default: master_addr)")
    master.add_argument("--no-converged", action="store_true", help="Do not run an in-process worker")
    master.add_argument("--no-http", action="store_true", help="Disable the HTTP status endpoint")

    worker = subparsers.add_parser("worker", help="Run a worker")
    worker.add_argument("--master", help="Master host:port (default: master_addr)")
    worker.add_argument("--slots", type=int, help="Concurrent task slots")
    worker.add_argument("--extractor", default="unconfigured", help="PDF extractor name")

    serve = subparsers.add_parser("serve", help="Serve the read-only HTTP query API")
    serve.add_argument("--index", help="Index directory (default: index_root)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, help="Port (default: serve_port)")
    serve.add_argument("--refresh", type=float, default=5.0, help="Seconds between segment refreshes")

    query = subparsers.add_parser("query", help="Full-text BM25 search")
    query.add_argument("text")
    query.add_argument("--limit", type=int, default=10)

    agg = subparsers.add_parser("agg", help="Terms aggregation over a keyword field")
    agg.add_argument("field", help="category, countries or source")
    agg.add_argument("--top", type=int, default=10)
    agg.add_argument("--csv", help="Write buckets to this CSV file")

    status = subparsers.add_parser("status", help="Job status, or storage counts without a job id")
    status.add_argument("job_id", nargs="?")

    snap = subparsers.add_parser("snapshot", help="Write an index snapshot file")
    snap.add_argument("dst")

    rest = subparsers.add_parser("restore", help="Restore the index from a snapshot file")
    rest.add_argument("src")
    rest.add_argument("--force", action="store_true", help="Replace a non-empty index")

    bench = subparsers.add_parser("bench", help="Run the N x M scaling benchmark")
    bench.add_argument("--n", type=_int_list, default=[1000, 2000, 3000, 4000, 5000], help="Corpus sizes")
    bench.add_argument("--m", type=_int_list, default=[1, 2, 3, 4], help="Worker counts")
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--seed", type=int, default=7)
    bench.add_argument("--mode", choices=["process", "thread"], default="process")
    bench.add_argument("--out", default="bench_report.json")
    bench.add_argument("--csv", help="Also write the grid as CSV")
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.load(args.config)
    config = config.override(
        {
            "log_level": args.log_level,
            "log_file": args.log_file,
            "store_root": args.store_root,
            "index_root": args.index_root,
            "master_addr": args.master_addr,
        },
        origin="command line",
    )
    return config.validate()


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config(args)
        setup_logging(config.log_level, config.log_file)
        return COMMANDS[args.command](config, args)
    except LitmineError as e:
        logger.error("%s failed: %s", args.command, e)
        emit({"error": str(e), "type": type(e).__name__})
        return e.exit_code
    except OSError as e:
        logger.error("%s failed: %s", args.command, e)
        emit({"error": str(e), "type": type(e).__name__})
        return 2
    except KeyboardInterrupt:
        emit({"error": "interrupted", "type": "KeyboardInterrupt"})
        return 1


if __name__ == "__main__":
    sys.exit(main())
