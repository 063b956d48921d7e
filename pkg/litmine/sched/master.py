"""
Bag-of-tasks master.

Threads:
- TCP acceptor (socketserver) with one session thread per connection
- dispatcher: applies every ledger command in arrival order, so no two
  state mutations interleave
- liveness monitor: declares silent workers and overdue holders dead
- optional aiohttp status endpoint
- optional in-process worker (converged mode)

A registered worker whose connection drops without SHUTDOWN is declared
dead immediately; its tasks go back to the head of the queue.

Usage:
    master = Master("127.0.0.1", 7070, http_port=8080).start()
    ...
    master.stop()
"""

import logging
import queue
import socket
import socketserver
import threading
from concurrent.futures import Future
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Set, Tuple, TypeVar

from litmine.errors import LitmineError, MasterConnectionError, ValidationError
from litmine.httpd import BackgroundHttpServer

from .ledger import TaskLedger
from .models import JobSummary, TaskResult, TaskSpec, WorkerInfo
from .protocol import MessageType, error_fields, recv_message, send_message
from .status_http import build_status_app

logger = logging.getLogger(__name__)

T = TypeVar("T")
Reply = Tuple[MessageType, Dict[str, Any]]


class _Session(socketserver.BaseRequestHandler):
    """One client or worker connection."""

    server: "_MasterServer"

    def setup(self) -> None:
        self.worker_id: Optional[str] = None
        self.graceful = False
        self.server.master._track(self.request)

    def handle(self) -> None:
        master = self.server.master
        while True:
            try:
                message = recv_message(self.request)
            except MasterConnectionError as e:
                logger.warning("Session %s: %s", self.client_address, e)
                break
            if message is None:
                break
            try:
                msg_type, fields = master._dispatch(self, message)
            except LitmineError as e:
                msg_type, fields = MessageType.ERROR, error_fields(e)
            except (KeyError, TypeError, ValueError) as e:
                msg_type, fields = MessageType.ERROR, error_fields(ValidationError(f"Malformed request: {e}"))
            try:
                send_message(self.request, msg_type, **fields)
            except MasterConnectionError:
                break
            if self.graceful:
                break

    def finish(self) -> None:
        master = self.server.master
        master._untrack(self.request)
        if self.worker_id and not self.graceful and not master.stopping:
            worker_id = self.worker_id
            logger.warning("Connection to worker %s dropped", worker_id)
            try:
                master.call(lambda ledger: ledger.handle_failure(worker_id))
            except MasterConnectionError:
                pass


class _MasterServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: Tuple[str, int], master: "Master"):
        self.master = master
        super().__init__(address, _Session)


class Master:
    """
    Master node hosting the task ledger.

    Args:
        host, port: TCP listen address (port 0 picks a free port)
        http_port: Status endpoint port, or None to disable it
        task_timeout_s, heartbeat_interval_s, missed_heartbeats, max_attempts:
            Ledger timing and retry constants
        local_worker: Factory called with the master address to build the
            in-process worker for converged mode
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 7070,
        http_port: Optional[int] = None,
        task_timeout_s: float = 600.0,
        heartbeat_interval_s: float = 2.0,
        missed_heartbeats: int = 3,
        max_attempts: int = 5,
        local_worker: Optional[Callable[[str], Any]] = None,
    ):
        self.host = host
        self.port = port
        self.http_port = http_port
        self.ledger = TaskLedger(
            task_timeout_s=task_timeout_s,
            heartbeat_interval_s=heartbeat_interval_s,
            missed_heartbeats=missed_heartbeats,
            max_attempts=max_attempts,
        )
        self.local_worker_factory = local_worker
        self.local_worker: Optional[Any] = None
        self.stopping = False

        self._commands: "queue.Queue[Tuple[Callable[[TaskLedger], Any], Future]]" = queue.Queue()
        self._stop = threading.Event()
        self._server: Optional[_MasterServer] = None
        self._threads: List[threading.Thread] = []
        self._sessions: Set[socket.socket] = set()
        self._sessions_lock = threading.Lock()
        self._http: Optional[BackgroundHttpServer] = None

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    # ---------------------------------------------------------------- lifecycle

    def start(self) -> "Master":
        try:
            self._server = _MasterServer((self.host, self.port), self)
        except OSError as e:
            raise MasterConnectionError(f"Cannot listen on {self.host}:{self.port}: {e}") from e
        self.port = self._server.server_address[1]

        for name, target in (
            ("master-dispatch", self._dispatch_loop),
            ("master-liveness", self._liveness_loop),
            ("master-accept", self._server.serve_forever),
        ):
            thread = threading.Thread(target=target, name=name, daemon=True)
            thread.start()
            self._threads.append(thread)
        logger.info("Master listening on %s", self.address)

        if self.http_port is not None:
            self._http = BackgroundHttpServer(build_status_app(self), self.host, self.http_port).start()
            self.http_port = self._http.port

        if self.local_worker_factory is not None:
            self.local_worker = self.local_worker_factory(self.address)
            self.local_worker.start()
            logger.info("Converged mode: in-process worker %s started", self.local_worker.worker_id)
        return self

    def stop(self) -> None:
        self.stopping = True
        if self.local_worker is not None:
            self.local_worker.stop()
            self.local_worker = None
        if self._http is not None:
            self._http.stop()
            self._http = None
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        with self._sessions_lock:
            sessions = list(self._sessions)
        for sock in sessions:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout=5.0)
        self._threads.clear()
        logger.info("Master on %s stopped", self.address)

    def wait(self) -> None:
        """Block until stop() is called or the process is interrupted."""
        try:
            while not self._stop.wait(0.5):
                pass
        except KeyboardInterrupt:
            logger.info("Interrupted, shutting down master")
            self.stop()

    def __enter__(self) -> "Master":
        return self.start()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()

    def _track(self, sock: socket.socket) -> None:
        with self._sessions_lock:
            self._sessions.add(sock)

    def _untrack(self, sock: socket.socket) -> None:
        with self._sessions_lock:
            self._sessions.discard(sock)

    # ---------------------------------------------------------------- command channel

    def call(self, command: Callable[[TaskLedger], T], timeout: float = 30.0) -> T:
        """
        Run a command against the ledger on the dispatcher thread.

        Raises:
            MasterConnectionError: Master is stopped
        """
        if self._stop.is_set():
            raise MasterConnectionError("Master is stopped")
        future: Future = Future()
        self._commands.put((command, future))
        return future.result(timeout=timeout)

    def _dispatch_loop(self) -> None:
        while not self._stop.is_set():
            try:
                command, future = self._commands.get(timeout=0.1)
            except queue.Empty:
                continue
            if not future.set_running_or_notify_cancel():
                continue
            try:
                future.set_result(command(self.ledger))
            except BaseException as e:
                future.set_exception(e)
        while True:
            try:
                _, future = self._commands.get_nowait()
            except queue.Empty:
                break
            future.set_exception(MasterConnectionError("Master is stopped"))

    def _liveness_loop(self) -> None:
        period = min(1.0, self.ledger.heartbeat_interval_s / 2.0)
        while not self._stop.wait(period):
            try:
                self.call(lambda ledger: ledger.check_liveness())
            except MasterConnectionError:
                return

    # ---------------------------------------------------------------- public API

    def submit(self, specs: List[TaskSpec]) -> str:
        return self.call(lambda ledger: ledger.submit(specs))

    def job_status(self, job_id: str) -> JobSummary:
        return self.call(lambda ledger: ledger.job_status(job_id))

    def workers(self) -> List[WorkerInfo]:
        return self.call(lambda ledger: [replace(w, in_flight=list(w.in_flight)) for w in ledger.workers()])

    def stats(self) -> Dict[str, int]:
        return self.call(lambda ledger: ledger.stats())

    # ---------------------------------------------------------------- protocol

    def _dispatch(self, session: _Session, message: Dict[str, Any]) -> Reply:
        msg_type = message["type"]
        worker_id = message.get("worker_id") or session.worker_id

        if msg_type == MessageType.REGISTER:
            info = self.call(lambda ledger: ledger.register_worker(
                message.get("address", f"{session.client_address[0]}:{session.client_address[1]}"),
                int(message.get("slots", 1)),
                message.get("worker_id"),
            ))
            session.worker_id = info.worker_id
            return MessageType.ACK, {
                "worker_id": info.worker_id,
                "heartbeat_interval_s": self.ledger.heartbeat_interval_s,
            }

        if msg_type == MessageType.HEARTBEAT:
            if self.stopping:
                return MessageType.SHUTDOWN, {}
            self.call(lambda ledger: ledger.heartbeat(worker_id))
            return MessageType.ACK, {}

        if msg_type == MessageType.ASSIGN:
            if self.stopping:
                return MessageType.SHUTDOWN, {}

            def assign(ledger: TaskLedger) -> Optional[Dict[str, Any]]:
                spec = ledger.assign_next(worker_id)
                return spec.to_dict() if spec is not None else None

            return MessageType.ASSIGN, {"task": self.call(assign)}

        if msg_type == MessageType.RESULT:
            result = TaskResult.from_dict(message["result"])
            if worker_id:
                result.worker_id = worker_id
            accepted = self.call(lambda ledger: ledger.complete(result))
            return MessageType.ACK, {"accepted": accepted}

        if msg_type == MessageType.SHUTDOWN:
            if worker_id:
                self.call(lambda ledger: ledger.deregister(worker_id))
                logger.info("Worker %s shut down", worker_id)
            session.graceful = True
            return MessageType.ACK, {}

        if msg_type == MessageType.SUBMIT:
            specs = [TaskSpec.from_dict(t) for t in message.get("tasks") or []]
            return MessageType.ACK, {"job_id": self.submit(specs)}

        if msg_type == MessageType.STATUS:
            summary = self.job_status(message["job_id"])
            return MessageType.ACK, {"job": summary.to_dict()}

        raise ValidationError(f"Unexpected message type {msg_type.value}")
