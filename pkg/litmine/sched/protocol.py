"""
Master/worker wire protocol.

Every message is a 4-byte big-endian length prefix followed by a UTF-8 JSON
object with a ``type`` field:

    REGISTER   worker -> master   {address, slots}             -> ACK {worker_id}
    HEARTBEAT  worker -> master   {worker_id}                  -> ACK
    ASSIGN     worker -> master   {worker_id}                  -> ASSIGN {task | null}
    RESULT     worker -> master   {worker_id, result}          -> ACK
    SHUTDOWN   worker -> master   {worker_id}                  -> ACK
    SUBMIT     client -> master   {tasks: [TaskSpec, ...]}     -> ACK {job_id}
    STATUS     client -> master   {job_id}                     -> ACK {job}

The master answers any request it cannot serve with ERROR {error, kind},
and answers ASSIGN/HEARTBEAT with SHUTDOWN when it is stopping.
"""

import json
import socket
import struct
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from litmine.errors import (
    ConflictError,
    LitmineError,
    MasterConnectionError,
    NotFoundError,
    ValidationError,
)

HEADER = struct.Struct("!I")
MAX_FRAME = 64 * 1024 * 1024


class MessageType(Enum):
    REGISTER = "REGISTER"
    HEARTBEAT = "HEARTBEAT"
    ASSIGN = "ASSIGN"
    RESULT = "RESULT"
    SHUTDOWN = "SHUTDOWN"
    SUBMIT = "SUBMIT"
    STATUS = "STATUS"
    ACK = "ACK"
    ERROR = "ERROR"


ERROR_KINDS = {
    "ConflictError": ConflictError,
    "NotFoundError": NotFoundError,
    "ValidationError": ValidationError,
}


def parse_address(addr: str) -> Tuple[str, int]:
    """
    Split ``host:port``.

    Raises:
        ValidationError: Missing host or port outside 0..65535
    """
    host, sep, port = addr.rpartition(":")
    if not sep or not host:
        raise ValidationError(f"Address must be host:port, got {addr!r}")
    try:
        port_num = int(port)
    except ValueError as e:
        raise ValidationError(f"Bad port in address {addr!r}") from e
    if not 0 <= port_num <= 65535:
        raise ValidationError(f"Port out of range in address {addr!r}")
    return host, port_num


def encode_message(msg_type: MessageType, **fields: Any) -> bytes:
    body = json.dumps({"type": msg_type.value, **fields}, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ValidationError(f"Message of {len(body)} bytes exceeds the {MAX_FRAME}-byte frame limit")
    return HEADER.pack(len(body)) + body


def decode_message(body: bytes) -> Dict[str, Any]:
    try:
        message = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MasterConnectionError(f"Malformed frame: {e}") from e
    if not isinstance(message, dict) or "type" not in message:
        raise MasterConnectionError("Frame is not a typed message")
    try:
        message["type"] = MessageType(message["type"])
    except ValueError as e:
        raise MasterConnectionError(f"Unknown message type {message['type']!r}") from e
    return message


def _recv_exact(sock: socket.socket, length: int) -> bytes:
    data = bytearray()
    while len(data) < length:
        chunk = sock.recv(min(65536, length - len(data)))
        if not chunk:
            break
        data.extend(chunk)
    return bytes(data)


def send_message(sock: socket.socket, msg_type: MessageType, **fields: Any) -> None:
    try:
        sock.sendall(encode_message(msg_type, **fields))
    except OSError as e:
        raise MasterConnectionError(f"Send failed: {e}") from e


def recv_message(sock: socket.socket) -> Optional[Dict[str, Any]]:
    """
    Read one message.

    Returns:
        The decoded message, or None when the peer closed the connection
        cleanly between frames

    Raises:
        MasterConnectionError: Truncated or oversized frame, socket error
    """
    try:
        header = _recv_exact(sock, HEADER.size)
        if not header:
            return None
        if len(header) < HEADER.size:
            raise MasterConnectionError("Connection closed inside a frame header")
        (length,) = HEADER.unpack(header)
        if length > MAX_FRAME:
            raise MasterConnectionError(f"Frame of {length} bytes exceeds the {MAX_FRAME}-byte limit")
        body = _recv_exact(sock, length)
    except OSError as e:
        raise MasterConnectionError(f"Receive failed: {e}") from e
    if len(body) < length:
        raise MasterConnectionError(f"Connection closed after {len(body)} of {length} frame bytes")
    return decode_message(body)


def error_fields(error: Exception) -> Dict[str, str]:
    return {"error": str(error), "kind": type(error).__name__}


def raise_for_error(message: Dict[str, Any]) -> Dict[str, Any]:
    """Turn an ERROR reply back into the matching exception."""
    if message["type"] != MessageType.ERROR:
        return message
    cls = ERROR_KINDS.get(message.get("kind", ""), LitmineError)
    raise cls(message.get("error", "master reported an error"))
