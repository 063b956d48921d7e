"""
Synchronous master connection used by workers and by the orchestrator.
"""

import logging
import socket
import threading
import time
from typing import Any, Dict, List, Optional

from litmine.errors import MasterConnectionError

from .models import JobSummary, TaskSpec
from .protocol import MessageType, parse_address, raise_for_error, recv_message, send_message

logger = logging.getLogger(__name__)


class MasterClient:
    """
    One persistent TCP connection to the master.

    Requests are serialized with a lock so the client can be shared by
    several threads (heartbeat + task slots).

    Example:
        >>> with MasterClient("127.0.0.1:7070") as client:
        ...     job_id = client.submit(make_batches(keys))
        ...     summary = client.wait(job_id)
    """

    def __init__(self, addr: str, timeout: float = 30.0, connect_retries: int = 0, retry_delay: float = 0.5):
        self.addr = addr
        self.host, self.port = parse_address(addr)
        self.timeout = timeout
        self.connect_retries = connect_retries
        self.retry_delay = retry_delay
        self._sock: Optional[socket.socket] = None
        self._lock = threading.Lock()

    def connect(self) -> "MasterClient":
        last_error: Optional[OSError] = None
        for attempt in range(self.connect_retries + 1):
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
                self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return self
            except OSError as e:
                last_error = e
                if attempt < self.connect_retries:
                    time.sleep(self.retry_delay)
        raise MasterConnectionError(f"Master unreachable at {self.addr}: {last_error}")

    @property
    def connected(self) -> bool:
        return self._sock is not None

    def request(self, msg_type: MessageType, **fields: Any) -> Dict[str, Any]:
        """
        Send one message and wait for the reply.

        Raises:
            MasterConnectionError: Connection lost
            LitmineError subclasses: The master answered ERROR
        """
        with self._lock:
            if self._sock is None:
                self.connect()
            assert self._sock is not None
            try:
                send_message(self._sock, msg_type, **fields)
                reply = recv_message(self._sock)
            except MasterConnectionError:
                self._drop()
                raise
            if reply is None:
                self._drop()
                raise MasterConnectionError(f"Master at {self.addr} closed the connection")
        return raise_for_error(reply)

    def submit(self, tasks: List[TaskSpec]) -> str:
        reply = self.request(MessageType.SUBMIT, tasks=[t.to_dict() for t in tasks])
        return reply["job_id"]

    def status(self, job_id: str) -> JobSummary:
        reply = self.request(MessageType.STATUS, job_id=job_id)
        return JobSummary.from_dict(reply["job"])

    def wait(self, job_id: str, poll_interval: float = 0.05, timeout: Optional[float] = None) -> JobSummary:
        """Poll until the job is done."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            summary = self.status(job_id)
            if summary.done:
                return summary
            if deadline is not None and time.monotonic() > deadline:
                raise MasterConnectionError(f"Timed out waiting for job {job_id}")
            time.sleep(poll_interval)

    def _drop(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def abort(self) -> None:
        """Cut the connection without a goodbye (the master sees a dropped worker)."""
        sock = self._sock
        if sock is not None:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        with self._lock:
            self._drop()

    def close(self) -> None:
        with self._lock:
            self._drop()

    def __enter__(self) -> "MasterClient":
        if self._sock is None:
            self.connect()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
