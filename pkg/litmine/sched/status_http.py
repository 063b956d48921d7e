"""
Master status endpoint.

    GET /jobs/<id>   JobSummary JSON (404 for unknown ids)
    GET /workers     registered workers
    GET /health      queue counters
"""

import asyncio
import logging
from typing import TYPE_CHECKING

from aiohttp import web

from litmine.errors import NotFoundError

if TYPE_CHECKING:
    from .master import Master

logger = logging.getLogger(__name__)


def build_status_app(master: "Master") -> web.Application:
    async def job(request: web.Request) -> web.Response:
        job_id = request.match_info["job_id"]
        loop = asyncio.get_running_loop()
        try:
            summary = await loop.run_in_executor(None, master.job_status, job_id)
        except NotFoundError as e:
            return web.json_response({"error": str(e)}, status=404)
        return web.json_response(summary.to_dict())

    async def workers(request: web.Request) -> web.Response:
        loop = asyncio.get_running_loop()
        infos = await loop.run_in_executor(None, master.workers)
        return web.json_response({"workers": [w.to_dict() for w in infos]})

    async def health(request: web.Request) -> web.Response:
        loop = asyncio.get_running_loop()
        stats = await loop.run_in_executor(None, master.stats)
        return web.json_response({"status": "ok", **stats})

    app = web.Application()
    app.router.add_get("/jobs/{job_id}", job)
    app.router.add_get("/workers", workers)
    app.router.add_get("/health", health)
    return app
