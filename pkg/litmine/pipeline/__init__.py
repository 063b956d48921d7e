"""
End-to-end workflows and the ``litmine`` command line.

Provides:
- PipelineConfig: layered configuration
- Orchestrator: check_update / run_processing_job / run_training_job
- process_one / process_keys: the per-article chain run on workers
- LocalCluster / start_master: master and worker launchers
"""

from .cluster import LocalCluster, start_master
from .config import PipelineConfig, read_config_file
from .logs import setup_logging
from .orchestrator import Orchestrator, TrainingOutcome, UpdateReport
from .tasks import TASK_HANDLERS, WorkerContext, build_worker, process_keys, process_one, reason_key

__all__ = [
    "LocalCluster",
    "Orchestrator",
    "PipelineConfig",
    "TASK_HANDLERS",
    "TrainingOutcome",
    "UpdateReport",
    "WorkerContext",
    "build_worker",
    "process_keys",
    "process_one",
    "read_config_file",
    "reason_key",
    "setup_logging",
    "start_master",
]
