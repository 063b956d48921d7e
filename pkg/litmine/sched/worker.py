"""
Bag-of-tasks worker.

A worker registers with the master, heartbeats on its own thread and runs
one polling loop per slot: ASSIGN -> execute the task handler for the
task's kind -> RESULT. Handlers receive a cancel event that is set only
when the worker is killed, so a killed worker stops between keys.

Usage:
    worker = Worker("127.0.0.1:7070", handlers, slots=2)
    worker.run_forever()
"""

import logging
import os
import socket
import threading
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

from litmine.errors import LitmineError, MasterConnectionError, ValidationError

from .client import MasterClient
from .models import KeyResult, TaskKind, TaskResult, TaskSpec
from .protocol import MessageType

logger = logging.getLogger(__name__)

TaskOutput = Tuple[List[KeyResult], Dict[str, Any]]
TaskHandler = Callable[[TaskSpec, threading.Event], TaskOutput]


class TaskCancelled(Exception):
    """Raised by handlers that notice the cancel event."""


class Worker:
    """
    Worker process (or thread, in converged mode and in tests).

    Args:
        master_addr: host:port of the master
        handlers: Task handler per task kind
        slots: Concurrent tasks
        heartbeat_interval_s: Heartbeat period
        poll_interval_s: Back-off when the queue is empty
    """

    def __init__(
        self,
        master_addr: str,
        handlers: Dict[TaskKind, TaskHandler],
        slots: int = 1,
        heartbeat_interval_s: float = 2.0,
        poll_interval_s: float = 0.05,
        connect_retries: int = 10,
    ):
        if slots < 1:
            raise ValidationError(f"slots must be >= 1, got {slots}")
        self.master_addr = master_addr
        self.handlers = dict(handlers)
        self.slots = slots
        self.heartbeat_interval_s = heartbeat_interval_s
        self.poll_interval_s = poll_interval_s
        self.client = MasterClient(master_addr, connect_retries=connect_retries)
        self.worker_id: Optional[str] = None
        self.tasks_done = 0

        self._stop = threading.Event()
        self._cancel = threading.Event()
        self._threads: List[threading.Thread] = []
        self._counter_lock = threading.Lock()

    @property
    def running(self) -> bool:
        return bool(self._threads) and not self._stop.is_set()

    def start(self) -> "Worker":
        """
        Register and start heartbeat and slot threads.

        Raises:
            MasterConnectionError: Master unreachable
        """
        self.client.connect()
        reply = self.client.request(
            MessageType.REGISTER,
            address=f"{socket.gethostname()}:{os.getpid()}",
            slots=self.slots,
        )
        self.worker_id = reply["worker_id"]
        self.heartbeat_interval_s = float(reply.get("heartbeat_interval_s", self.heartbeat_interval_s))

        threads = [threading.Thread(target=self._heartbeat_loop, name=f"hb-{self.worker_id[:8]}", daemon=True)]
        threads += [
            threading.Thread(target=self._slot_loop, name=f"slot{i}-{self.worker_id[:8]}", daemon=True)
            for i in range(self.slots)
        ]
        for thread in threads:
            thread.start()
        self._threads = threads
        logger.info("Worker %s registered with %s (%d slot(s))", self.worker_id, self.master_addr, self.slots)
        return self

    def stop(self, timeout: float = 30.0) -> None:
        """Finish running tasks, report them and deregister."""
        self._stop.set()
        self._join(timeout)
        if self.client.connected:
            try:
                self.client.request(MessageType.SHUTDOWN, worker_id=self.worker_id)
            except (MasterConnectionError, LitmineError):
                pass
        self.client.close()
        logger.info("Worker %s stopped after %d task(s)", self.worker_id, self.tasks_done)

    def kill(self) -> None:
        """Fault injection: drop the connection and abandon running tasks."""
        logger.warning("Worker %s killed", self.worker_id)
        self._cancel.set()
        self._stop.set()
        self.client.abort()
        self._join(5.0)

    def run_forever(self) -> None:
        self.start()
        try:
            while not self._stop.wait(0.5):
                pass
        except KeyboardInterrupt:
            logger.info("Interrupted, stopping worker")
        self.stop()

    def _join(self, timeout: float) -> None:
        current = threading.current_thread()
        for thread in self._threads:
            if thread is not current:
                thread.join(timeout=timeout)

    # ---------------------------------------------------------------- loops

    def _heartbeat_loop(self) -> None:
        while not self._stop.wait(self.heartbeat_interval_s):
            try:
                reply = self.client.request(MessageType.HEARTBEAT, worker_id=self.worker_id)
            except MasterConnectionError as e:
                if not self._cancel.is_set():
                    logger.error("Worker %s lost the master: %s", self.worker_id, e)
                self._stop.set()
                return
            except LitmineError as e:
                logger.error("Worker %s rejected by master: %s", self.worker_id, e)
                self._stop.set()
                return
            if reply["type"] == MessageType.SHUTDOWN:
                logger.info("Master asked worker %s to shut down", self.worker_id)
                self._stop.set()
                return

    def _slot_loop(self) -> None:
        while not self._stop.is_set():
            try:
                reply = self.client.request(MessageType.ASSIGN, worker_id=self.worker_id)
            except (MasterConnectionError, LitmineError) as e:
                if not self._stop.is_set():
                    logger.error("Worker %s cannot fetch tasks: %s", self.worker_id, e)
                self._stop.set()
                return
            if reply["type"] == MessageType.SHUTDOWN:
                self._stop.set()
                return
            if not reply.get("task"):
                self._stop.wait(self.poll_interval_s)
                continue

            spec = TaskSpec.from_dict(reply["task"])
            result = self.execute(spec)
            if result is None:
                return
            try:
                self.client.request(MessageType.RESULT, worker_id=self.worker_id, result=result.to_dict())
            except (MasterConnectionError, LitmineError) as e:
                logger.error("Worker %s could not report task %s: %s", self.worker_id, spec.task_id, e)
                self._stop.set()
                return
            with self._counter_lock:
                self.tasks_done += 1

    def execute(self, spec: TaskSpec) -> Optional[TaskResult]:
        """
        Run one task through its handler.

        Returns:
            The result, or None when the worker was killed mid-task
        """
        start = time.perf_counter()
        handler = self.handlers.get(spec.kind)
        result = TaskResult(task_id=spec.task_id, worker_id=self.worker_id or "")
        if handler is None:
            result.error = f"no handler for task kind {spec.kind.value}"
            result.retryable = False
        else:
            try:
                per_key, payload = handler(spec, self._cancel)
                result.per_key = per_key
                result.payload = payload
            except TaskCancelled:
                return None
            except ValidationError as e:
                result.error = f"{type(e).__name__}: {e}"
                result.retryable = False
            except Exception as e:
                logger.exception("Task %s raised", spec.task_id)
                result.error = f"{type(e).__name__}: {e}"
        if self._cancel.is_set():
            return None
        result.elapsed = (time.perf_counter() - start) * 1000.0
        logger.debug("Task %s (%s, %d keys) done in %.0f ms", spec.task_id, spec.kind.value, len(spec.keys), result.elapsed)
        return result
