"""
Bag-of-tasks scheduler: batching, FIFO dispatch over a framed TCP protocol,
heartbeats, failure detection and rescheduling.

Provides:
- make_batches: split keys into TaskSpecs of at most 1000 keys
- TaskLedger: the master's state machine
- Master / Worker / MasterClient: the networked engine
"""

from .client import MasterClient
from .ledger import TaskLedger, TaskState
from .master import Master
from .models import (
    MAX_BATCH,
    JobSummary,
    KeyOutcome,
    KeyResult,
    TaskKind,
    TaskResult,
    TaskSpec,
    WorkerInfo,
    WorkerState,
    make_batches,
)
from .protocol import MessageType, parse_address
from .worker import TaskCancelled, TaskHandler, Worker

__all__ = [
    "JobSummary",
    "KeyOutcome",
    "KeyResult",
    "MAX_BATCH",
    "Master",
    "MasterClient",
    "MessageType",
    "TaskCancelled",
    "TaskHandler",
    "TaskKind",
    "TaskLedger",
    "TaskResult",
    "TaskSpec",
    "TaskState",
    "Worker",
    "WorkerInfo",
    "WorkerState",
    "make_batches",
    "parse_address",
]
