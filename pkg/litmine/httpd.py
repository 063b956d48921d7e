"""
Run an aiohttp application on a background thread.

Used by the master's status endpoint and by the index query service when
they live inside a process whose main thread is busy with something else
(the TCP server, a test). ``serve_app`` runs an application in the
foreground for the CLI.
"""

import asyncio
import logging
import threading
from typing import Optional

from aiohttp import web

from litmine.errors import StorageIOError

logger = logging.getLogger(__name__)


class BackgroundHttpServer:
    """
    aiohttp application served from a private event loop thread.

    Example:
        >>> server = BackgroundHttpServer(app, "127.0.0.1", 0).start()
        >>> server.port
        54321
        >>> server.stop()
    """

    def __init__(self, app: web.Application, host: str = "127.0.0.1", port: int = 0):
        self.app = app
        self.host = host
        self.port = port
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._runner: Optional[web.AppRunner] = None
        self._thread: Optional[threading.Thread] = None
        self._ready = threading.Event()
        self._error: Optional[BaseException] = None

    async def _startup(self) -> None:
        self._runner = web.AppRunner(self.app, access_log=None)
        await self._runner.setup()
        site = web.TCPSite(self._runner, self.host, self.port)
        await site.start()
        server = getattr(site, "_server", None)
        if server is not None and server.sockets:
            self.port = server.sockets[0].getsockname()[1]

    def _run(self) -> None:
        self._loop = asyncio.new_event_loop()
        asyncio.set_event_loop(self._loop)
        try:
            self._loop.run_until_complete(self._startup())
        except BaseException as e:
            self._error = e
            self._ready.set()
            return
        self._ready.set()
        self._loop.run_forever()
        if self._runner is not None:
            self._loop.run_until_complete(self._runner.cleanup())
        self._loop.close()

    def start(self, timeout: float = 10.0) -> "BackgroundHttpServer":
        self._thread = threading.Thread(target=self._run, name=f"http-{self.port}", daemon=True)
        self._thread.start()
        self._ready.wait(timeout)
        if self._error is not None:
            raise StorageIOError(f"Cannot start HTTP server on {self.host}:{self.port}: {self._error}")
        logger.info("HTTP server listening on http://%s:%d", self.host, self.port)
        return self

    def stop(self) -> None:
        if self._loop is not None and self._loop.is_running():
            self._loop.call_soon_threadsafe(self._loop.stop)
        if self._thread is not None:
            self._thread.join(timeout=10.0)
            self._thread = None


def serve_app(app: web.Application, host: str, port: int) -> None:
    """Serve an application until interrupted."""
    logger.info("Serving on http://%s:%d", host, port)
    web.run_app(app, host=host, port=port, access_log=None, print=None)
