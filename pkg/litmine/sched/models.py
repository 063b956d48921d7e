"""
Scheduler data model: tasks, results, workers and job summaries.

All types serialize to plain dicts for the wire protocol.
"""

import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

from litmine.errors import ValidationError

MAX_BATCH = 1000


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class TaskKind(Enum):
    PROCESS = "process"
    TRAIN = "train"
    EXTRACT_STUB = "extract_stub"


class KeyOutcome(Enum):
    OK = "ok"
    SKIPPED = "skipped"
    FAILED = "failed"


class WorkerState(Enum):
    IDLE = "idle"
    BUSY = "busy"
    DEAD = "dead"


@dataclass
class TaskSpec:
    """
    One batch work unit.

    ``keys`` name staging objects for process tasks and raw objects for
    extract_stub tasks; train tasks carry their inputs in ``params``.
    """
    kind: TaskKind
    keys: List[str] = field(default_factory=list)
    task_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    submitted_at: datetime = field(default_factory=_utcnow)
    attempt: int = 1
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = TaskKind(self.kind)
        if len(self.keys) > MAX_BATCH:
            raise ValidationError(f"Task holds {len(self.keys)} keys, limit is {MAX_BATCH}")
        if not self.keys and self.kind in (TaskKind.PROCESS, TaskKind.EXTRACT_STUB):
            raise ValidationError(f"{self.kind.value} task needs at least one key")
        if self.attempt < 1:
            raise ValidationError(f"attempt must be >= 1, got {self.attempt}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "keys": list(self.keys),
            "submitted_at": self.submitted_at.isoformat(),
            "attempt": self.attempt,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TaskSpec":
        return cls(
            kind=TaskKind(data["kind"]),
            keys=list(data.get("keys") or []),
            task_id=data["task_id"],
            submitted_at=datetime.fromisoformat(data["submitted_at"]),
            attempt=int(data.get("attempt", 1)),
            params=dict(data.get("params") or {}),
        )


@dataclass
class KeyResult:
    """Outcome for one key of a task."""
    key: str
    outcome: KeyOutcome
    reason: str = ""

    def to_dict(self) -> Dict[str, str]:
        return {"key": self.key, "outcome": self.outcome.value, "reason": self.reason}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KeyResult":
        return cls(key=data["key"], outcome=KeyOutcome(data["outcome"]), reason=data.get("reason") or "")


@dataclass
class TaskResult:
    """
    Result reported by a worker.

    ``error`` is set when the task as a whole could not run; ``retryable``
    says whether another attempt may succeed.
    """
    task_id: str
    per_key: List[KeyResult] = field(default_factory=list)
    elapsed: float = 0.0
    worker_id: str = ""
    payload: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    retryable: bool = True

    def covers(self, spec: TaskSpec) -> bool:
        return [r.key for r in self.per_key] == list(spec.keys)

    def count(self, outcome: KeyOutcome) -> int:
        return sum(1 for r in self.per_key if r.outcome == outcome)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "per_key": [r.to_dict() for r in self.per_key],
            "elapsed": self.elapsed,
            "worker_id": self.worker_id,
            "payload": self.payload,
            "error": self.error,
            "retryable": self.retryable,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TaskResult":
        return cls(
            task_id=data["task_id"],
            per_key=[KeyResult.from_dict(r) for r in data.get("per_key") or []],
            elapsed=max(0.0, float(data.get("elapsed", 0.0))),
            worker_id=data.get("worker_id") or "",
            payload=dict(data.get("payload") or {}),
            error=data.get("error"),
            retryable=bool(data.get("retryable", True)),
        )


@dataclass
class WorkerInfo:
    """A registered worker as seen by the master."""
    address: str
    slots: int = 1
    worker_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    last_heartbeat: datetime = field(default_factory=_utcnow)
    state: WorkerState = WorkerState.IDLE
    in_flight: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.slots < 1:
            raise ValidationError(f"Worker slots must be >= 1, got {self.slots}")

    @property
    def free_slots(self) -> int:
        return 0 if self.state == WorkerState.DEAD else self.slots - len(self.in_flight)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "worker_id": self.worker_id,
            "address": self.address,
            "slots": self.slots,
            "last_heartbeat": self.last_heartbeat.isoformat(),
            "state": self.state.value,
            "in_flight": list(self.in_flight),
        }


@dataclass
class JobSummary:
    """Counters for one submitted job."""
    job_id: str
    total_tasks: int = 0
    completed: int = 0
    failed_permanently: int = 0
    wall_time: float = 0.0
    keys_ok: int = 0
    keys_skipped: int = 0
    keys_failed: int = 0
    outputs: List[Dict[str, Any]] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.completed + self.failed_permanently >= self.total_tasks

    def to_dict(self) -> Dict[str, Any]:
        return {
            "job_id": self.job_id,
            "total_tasks": self.total_tasks,
            "completed": self.completed,
            "failed_permanently": self.failed_permanently,
            "wall_time": self.wall_time,
            "done": self.done,
            "keys_ok": self.keys_ok,
            "keys_skipped": self.keys_skipped,
            "keys_failed": self.keys_failed,
            "outputs": list(self.outputs),
            "errors": list(self.errors),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "JobSummary":
        return cls(
            job_id=data["job_id"],
            total_tasks=int(data.get("total_tasks", 0)),
            completed=int(data.get("completed", 0)),
            failed_permanently=int(data.get("failed_permanently", 0)),
            wall_time=float(data.get("wall_time", 0.0)),
            keys_ok=int(data.get("keys_ok", 0)),
            keys_skipped=int(data.get("keys_skipped", 0)),
            keys_failed=int(data.get("keys_failed", 0)),
            outputs=list(data.get("outputs") or []),
            errors=list(data.get("errors") or []),
        )


def make_batches(
    keys: List[str],
    batch_size: int = MAX_BATCH,
    kind: TaskKind = TaskKind.PROCESS,
    params: Optional[Dict[str, Any]] = None,
) -> List[TaskSpec]:
    """
    Split keys into order-preserving tasks of at most batch_size keys.

    Raises:
        ValidationError: batch_size outside 1..1000
    """
    if not 1 <= batch_size <= MAX_BATCH:
        raise ValidationError(f"batch_size must be between 1 and {MAX_BATCH}, got {batch_size}")
    return [
        TaskSpec(kind=kind, keys=list(keys[i:i + batch_size]), params=dict(params or {}))
        for i in range(0, len(keys), batch_size)
    ]
