"""
Task ledger: the master's single state machine.

The ledger owns the FIFO queue, the in-flight assignments, the worker
table and the job counters. It is not thread-safe on purpose: the master
applies every mutation from one dispatcher thread.

Invariants kept here:
- a task is in flight on at most one worker
- a dead worker holds no tasks; its tasks are back in the queue (or failed
  permanently once max_attempts is exceeded)
- at most one job containing a train task is unfinished at any time
"""

import logging
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Set

from litmine.errors import ConflictError, NotFoundError, ValidationError

from .models import JobSummary, KeyOutcome, TaskKind, TaskResult, TaskSpec, WorkerInfo, WorkerState

logger = logging.getLogger(__name__)


class TaskState(Enum):
    QUEUED = "queued"
    IN_FLIGHT = "in_flight"
    COMPLETED = "completed"
    FAILED = "failed_permanently"


@dataclass
class _TaskEntry:
    spec: TaskSpec
    job_id: str
    seq: int
    state: TaskState = TaskState.QUEUED
    holder: Optional[str] = None
    deadline: float = 0.0


@dataclass
class _JobEntry:
    summary: JobSummary
    started: float
    task_ids: List[str] = field(default_factory=list)
    finished: Optional[float] = None
    is_training: bool = False
    reported_at: Optional[float] = None


class TaskLedger:
    """
    Bag-of-tasks bookkeeping.

    Args:
        task_timeout_s: In-flight deadline per assignment
        heartbeat_interval_s: Expected heartbeat period
        missed_heartbeats: Beats missed before a worker is declared dead
        max_attempts: Attempts before a task fails permanently
        retention_s: How long a finished job stays queryable after its
            status was reported as done
        clock: Monotonic clock (seconds), injectable for tests
    """

    def __init__(
        self,
        task_timeout_s: float = 600.0,
        heartbeat_interval_s: float = 2.0,
        missed_heartbeats: int = 3,
        max_attempts: int = 5,
        retention_s: float = 3600.0,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.task_timeout_s = task_timeout_s
        self.heartbeat_interval_s = heartbeat_interval_s
        self.missed_heartbeats = missed_heartbeats
        self.max_attempts = max_attempts
        self.retention_s = retention_s
        self.clock = clock

        self._queue: Deque[str] = deque()
        self._tasks: Dict[str, _TaskEntry] = {}
        self._jobs: Dict[str, _JobEntry] = {}
        self._workers: Dict[str, WorkerInfo] = {}
        self._last_seen: Dict[str, float] = {}
        self._seq = 0

    # ---------------------------------------------------------------- workers

    def register_worker(self, address: str, slots: int = 1, worker_id: Optional[str] = None) -> WorkerInfo:
        info = WorkerInfo(address=address, slots=slots, worker_id=worker_id or str(uuid.uuid4()))
        existing = self._workers.get(info.worker_id)
        if existing is not None and existing.state != WorkerState.DEAD:
            raise ValidationError(f"Worker {info.worker_id} is already registered")
        self._workers[info.worker_id] = info
        self._last_seen[info.worker_id] = self.clock()
        logger.info("Worker %s registered from %s with %d slot(s)", info.worker_id, address, slots)
        return info

    def _live_worker(self, worker_id: str) -> WorkerInfo:
        worker = self._workers.get(worker_id)
        if worker is None:
            raise NotFoundError(f"Unknown worker: {worker_id}")
        if worker.state == WorkerState.DEAD:
            raise ValidationError(f"Worker {worker_id} was declared dead; register again")
        return worker

    def heartbeat(self, worker_id: str) -> WorkerInfo:
        worker = self._live_worker(worker_id)
        self._last_seen[worker_id] = self.clock()
        worker.last_heartbeat = datetime.now(timezone.utc)
        return worker

    def workers(self) -> List[WorkerInfo]:
        return list(self._workers.values())

    def live_workers(self) -> List[WorkerInfo]:
        return [w for w in self._workers.values() if w.state != WorkerState.DEAD]

    # ---------------------------------------------------------------- jobs

    def submit(self, specs: List[TaskSpec]) -> str:
        """
        Enqueue a job's tasks in FIFO order.

        Raises:
            ConflictError: A training job is already running
        """
        self._prune()
        is_training = any(spec.kind == TaskKind.TRAIN for spec in specs)
        if is_training:
            running = [j for j in self._jobs.values() if j.is_training and j.finished is None]
            if running:
                raise ConflictError(
                    f"Training job {running[0].summary.job_id} is still running; only one training job at a time"
                )

        summary = JobSummary(job_id=str(uuid.uuid4()), total_tasks=len(specs))
        job = _JobEntry(summary=summary, started=self.clock(), is_training=is_training)
        for spec in specs:
            if spec.task_id in self._tasks:
                raise ValidationError(f"Duplicate task id {spec.task_id}")
            self._seq += 1
            self._tasks[spec.task_id] = _TaskEntry(spec=spec, job_id=summary.job_id, seq=self._seq)
            self._queue.append(spec.task_id)
            job.task_ids.append(spec.task_id)
        self._jobs[summary.job_id] = job
        self._finish_if_done(job)
        logger.info("Job %s submitted with %d task(s)", summary.job_id, len(specs))
        return summary.job_id

    def job_status(self, job_id: str) -> JobSummary:
        """
        Snapshot of a job's counters.

        The first snapshot of a finished job starts its retention window;
        once that passes, the job and its tasks are evicted.

        Raises:
            NotFoundError: Unknown job id
        """
        job = self._jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"Unknown job: {job_id}")
        if job.finished is not None and job.reported_at is None:
            job.reported_at = self.clock()
        end = job.finished if job.finished is not None else self.clock()
        s = job.summary
        return JobSummary(
            job_id=s.job_id,
            total_tasks=s.total_tasks,
            completed=s.completed,
            failed_permanently=s.failed_permanently,
            wall_time=(end - job.started) * 1000.0,
            keys_ok=s.keys_ok,
            keys_skipped=s.keys_skipped,
            keys_failed=s.keys_failed,
            outputs=list(s.outputs),
            errors=list(s.errors),
        )

    def _finish_if_done(self, job: _JobEntry) -> None:
        if job.finished is None and job.summary.done:
            job.finished = self.clock()
            logger.info(
                "Job %s finished: %d completed, %d failed permanently",
                job.summary.job_id, job.summary.completed, job.summary.failed_permanently,
            )

    def _prune(self) -> int:
        """Drop finished jobs whose done status was reported more than retention_s ago."""
        now = self.clock()
        expired = [
            job_id
            for job_id, job in self._jobs.items()
            if job.reported_at is not None and now - job.reported_at >= self.retention_s
        ]
        for job_id in expired:
            for task_id in self._jobs.pop(job_id).task_ids:
                self._tasks.pop(task_id, None)
        if expired:
            logger.debug("Pruned %d finished job(s)", len(expired))
        return len(expired)

    # ---------------------------------------------------------------- dispatch

    def queued(self) -> int:
        return len(self._queue)

    def in_flight(self) -> int:
        return sum(1 for t in self._tasks.values() if t.state == TaskState.IN_FLIGHT)

    def assign_next(self, worker_id: str) -> Optional[TaskSpec]:
        """
        Hand the earliest queued task to a worker with a free slot.

        Raises:
            ValidationError: Worker was declared dead
            NotFoundError: Worker never registered
        """
        worker = self._live_worker(worker_id)
        self._last_seen[worker_id] = self.clock()
        if worker.free_slots <= 0 or not self._queue:
            return None

        task_id = self._queue.popleft()
        entry = self._tasks[task_id]
        entry.state = TaskState.IN_FLIGHT
        entry.holder = worker_id
        entry.deadline = self.clock() + self.task_timeout_s
        worker.in_flight.append(task_id)
        worker.state = WorkerState.BUSY
        logger.debug("Assigned task %s (attempt %d) to worker %s", task_id, entry.spec.attempt, worker_id)
        return entry.spec

    def complete(self, result: TaskResult) -> bool:
        """
        Record a worker's result.

        Late or duplicate results for finished tasks are ignored. A result
        carrying a task-level error counts as a failed attempt. While the
        task is assigned to another worker, only a successful result that
        covers every key is accepted; the current holder keeps its slot
        until it reports.

        Returns:
            True if the result changed the ledger
        """
        entry = self._tasks.get(result.task_id)
        if entry is None:
            self._free_slot(result.worker_id, result.task_id)
            logger.warning("Result for unknown task %s ignored", result.task_id)
            return False
        if entry.state in (TaskState.COMPLETED, TaskState.FAILED):
            self._free_slot(result.worker_id, result.task_id)
            logger.debug("Duplicate result for task %s ignored", result.task_id)
            return False

        job = self._jobs[entry.job_id]
        if entry.holder is not None and entry.holder != result.worker_id:
            # Another worker owns the task now; only a full success can settle it.
            if result.error is not None or not result.covers(entry.spec):
                logger.info(
                    "Stale result for task %s from %s dropped; held by %s",
                    result.task_id, result.worker_id, entry.holder,
                )
                return False
            self._free_slot(result.worker_id, result.task_id)
        else:
            self._release(entry)

        if result.error is not None:
            logger.warning("Task %s failed on worker %s: %s", result.task_id, result.worker_id, result.error)
            if result.retryable:
                self._retry(entry, front=False)
            else:
                self._fail(entry, result.error)
            self._finish_if_done(job)
            return True

        if not result.covers(entry.spec):
            logger.warning("Task %s result does not cover its keys; treating as failed attempt", result.task_id)
            self._retry(entry, front=False)
            self._finish_if_done(job)
            return True

        entry.state = TaskState.COMPLETED
        summary = job.summary
        summary.completed += 1
        summary.keys_ok += result.count(KeyOutcome.OK)
        summary.keys_skipped += result.count(KeyOutcome.SKIPPED)
        summary.keys_failed += result.count(KeyOutcome.FAILED)
        if result.payload:
            summary.outputs.append(result.payload)
        logger.debug("Task %s completed by %s in %.0f ms", result.task_id, result.worker_id, result.elapsed)
        self._finish_if_done(job)
        return True

    def _release(self, entry: _TaskEntry) -> None:
        if entry.state == TaskState.QUEUED:
            try:
                self._queue.remove(entry.spec.task_id)
            except ValueError:
                pass
        if entry.holder:
            self._free_slot(entry.holder, entry.spec.task_id)
        entry.holder = None

    def _free_slot(self, worker_id: str, task_id: str) -> None:
        worker = self._workers.get(worker_id)
        if worker is not None and task_id in worker.in_flight:
            worker.in_flight.remove(task_id)
            if not worker.in_flight and worker.state == WorkerState.BUSY:
                worker.state = WorkerState.IDLE

    def _retry(self, entry: _TaskEntry, front: bool) -> bool:
        entry.spec.attempt += 1
        if entry.spec.attempt > self.max_attempts:
            self._fail(entry, f"exceeded {self.max_attempts} attempts")
            return False
        entry.state = TaskState.QUEUED
        if front:
            self._queue.appendleft(entry.spec.task_id)
        else:
            self._queue.append(entry.spec.task_id)
        return True

    def _fail(self, entry: _TaskEntry, reason: str) -> None:
        entry.state = TaskState.FAILED
        job = self._jobs[entry.job_id]
        job.summary.failed_permanently += 1
        job.summary.errors.append(f"{entry.spec.task_id}: {reason}")
        logger.error("Task %s failed permanently: %s", entry.spec.task_id, reason)

    # ---------------------------------------------------------------- failures

    def handle_failure(self, worker_id: str) -> List[TaskSpec]:
        """
        Declare a worker dead and reschedule its in-flight tasks.

        Rescheduled tasks go back to the head of the queue in submission
        order with attempt + 1; tasks past max_attempts fail permanently.

        Returns:
            Tasks that were re-enqueued
        """
        worker = self._workers.get(worker_id)
        if worker is None:
            return []
        if worker.state != WorkerState.DEAD:
            logger.warning("Worker %s declared dead", worker_id)
        worker.state = WorkerState.DEAD

        # A task settled by an earlier holder's late result may still sit in in_flight.
        entries = sorted(
            (self._tasks[t] for t in worker.in_flight if t in self._tasks and self._tasks[t].state == TaskState.IN_FLIGHT),
            key=lambda e: e.seq,
            reverse=True,
        )
        worker.in_flight.clear()
        rescheduled: List[TaskSpec] = []
        touched: Set[str] = set()
        for entry in entries:
            entry.holder = None
            touched.add(entry.job_id)
            if self._retry(entry, front=True):
                rescheduled.append(entry.spec)
        for job_id in touched:
            self._finish_if_done(self._jobs[job_id])
        rescheduled.reverse()
        if rescheduled:
            logger.warning(
                "Rescheduled %d task(s) from worker %s: %s",
                len(rescheduled), worker_id, [t.task_id for t in rescheduled],
            )
        return rescheduled

    def deregister(self, worker_id: str) -> List[TaskSpec]:
        """Graceful shutdown: same bookkeeping as a failure."""
        return self.handle_failure(worker_id)

    def check_liveness(self) -> List[TaskSpec]:
        """
        Declare silent workers and holders of overdue tasks dead.
        Also evicts finished jobs past their retention window.

        Returns:
            All tasks rescheduled by this check
        """
        self._prune()
        now = self.clock()
        limit = self.heartbeat_interval_s * self.missed_heartbeats
        suspects = {
            worker_id
            for worker_id, worker in self._workers.items()
            if worker.state != WorkerState.DEAD and now - self._last_seen.get(worker_id, now) > limit
        }
        for entry in self._tasks.values():
            if entry.state == TaskState.IN_FLIGHT and entry.holder and now > entry.deadline:
                logger.warning("Task %s exceeded its %.0fs timeout on %s", entry.spec.task_id, self.task_timeout_s, entry.holder)
                suspects.add(entry.holder)

        rescheduled: List[TaskSpec] = []
        for worker_id in sorted(suspects):
            rescheduled.extend(self.handle_failure(worker_id))
        return rescheduled

    def stats(self) -> Dict[str, int]:
        return {
            "queued": self.queued(),
            "in_flight": self.in_flight(),
            "workers_live": len(self.live_workers()),
            "workers_dead": len(self._workers) - len(self.live_workers()),
            "jobs": len(self._jobs),
        }
