"""
Master and worker launchers.

``start_master`` builds a master from PipelineConfig (with the converged
in-process worker when enabled). ``LocalCluster`` starts a master plus M
workers on one machine, either as threads (tests) or as separate
``python -m litmine worker`` processes (benchmarks, where the GIL would
otherwise serialize the work).
"""

import logging
import subprocess
import sys
import time
from typing import List, Optional, Union

from litmine.errors import MasterConnectionError, ValidationError
from litmine.sched import Master, MasterClient, Worker, parse_address

from .config import PipelineConfig
from .tasks import build_worker

logger = logging.getLogger(__name__)


def start_master(config: PipelineConfig, listen: Optional[str] = None, http: bool = True) -> Master:
    host, port = parse_address(listen or config.master_addr)

    def local_worker(addr: str) -> Worker:
        return build_worker(
            addr, config.store_root, config.index_root,
            slots=config.worker_slots, heartbeat_interval_s=config.heartbeat_interval_s,
        )

    master = Master(
        host=host,
        port=port,
        http_port=config.http_port if http else None,
        task_timeout_s=config.task_timeout_s,
        heartbeat_interval_s=config.heartbeat_interval_s,
        missed_heartbeats=config.missed_heartbeats,
        max_attempts=config.max_attempts,
        local_worker=local_worker if config.converged else None,
    )
    return master.start()


class LocalCluster:
    """
    Master + M workers on this machine.

    Args:
        config: Store/index roots and timing constants
        workers: Number of workers M (the master is not converged)
        mode: "thread" or "process"

    Example:
        >>> with LocalCluster(config, workers=3) as cluster:
        ...     orchestrator = Orchestrator(config.override({"master_addr": cluster.address}))
    """

    def __init__(self, config: PipelineConfig, workers: int = 1, mode: str = "thread", slots: int = 1):
        if workers < 1:
            raise ValidationError(f"workers must be >= 1, got {workers}")
        if mode not in ("thread", "process"):
            raise ValidationError(f"mode must be 'thread' or 'process', got {mode!r}")
        self.config = config.override({"converged": False})
        self.n_workers = workers
        self.mode = mode
        self.slots = slots
        self.master: Optional[Master] = None
        self.workers: List[Union[Worker, subprocess.Popen]] = []

    @property
    def address(self) -> str:
        if self.master is None:
            raise MasterConnectionError("Cluster is not running")
        return self.master.address

    def start(self, timeout: float = 30.0) -> "LocalCluster":
        self.master = start_master(self.config, listen="127.0.0.1:0", http=False)
        for _ in range(self.n_workers):
            if self.mode == "thread":
                worker = build_worker(
                    self.master.address, self.config.store_root, self.config.index_root,
                    slots=self.slots, heartbeat_interval_s=self.config.heartbeat_interval_s,
                )
                self.workers.append(worker.start())
            else:
                self.workers.append(self._spawn())
        self._wait_for_workers(timeout)
        logger.info("Local cluster on %s with %d %s worker(s)", self.address, self.n_workers, self.mode)
        return self

    def _spawn(self) -> subprocess.Popen:
        assert self.master is not None
        cmd = [
            sys.executable, "-m", "litmine",
            "--log-level", self.config.log_level,
            "--store-root", self.config.store_root,
            "--index-root", self.config.index_root,
            "worker", "--master", self.master.address, "--slots", str(self.slots),
        ]
        return subprocess.Popen(cmd, stdout=subprocess.DEVNULL)

    def _wait_for_workers(self, timeout: float) -> None:
        assert self.master is not None
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.master.stats()["workers_live"] >= self.n_workers:
                return
            time.sleep(0.05)
        self.stop()
        raise MasterConnectionError(f"Only some of {self.n_workers} workers registered within {timeout}s")

    def client(self) -> MasterClient:
        return MasterClient(self.address).connect()

    def kill_worker(self, index: int) -> None:
        """Fault injection: kill worker ``index`` without a goodbye."""
        worker = self.workers[index]
        if isinstance(worker, Worker):
            worker.kill()
        else:
            worker.kill()
            worker.wait(timeout=10)

    def stop(self) -> None:
        for worker in self.workers:
            if isinstance(worker, Worker):
                if worker.running:
                    worker.stop()
            elif worker.poll() is None:
                worker.terminate()
                try:
                    worker.wait(timeout=10)
                except subprocess.TimeoutExpired:
                    worker.kill()
        self.workers = []
        if self.master is not None:
            self.master.stop()
            self.master = None

    def __enter__(self) -> "LocalCluster":
        return self.start()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
