"""
Read-only HTTP query service.

    GET /search?q=<text>&limit=<n>
    GET /agg?field=<category|countries|source>&top=<k>
    GET /stats

The service refreshes its view of the segments every
``refresh_interval_s`` seconds (0 disables refresh, e.g. for a restored
read replica).
"""

import asyncio
import logging
from typing import Optional

from aiohttp import web

from litmine.errors import ValidationError

from .search_index import SearchIndex

logger = logging.getLogger(__name__)

INDEX_KEY = web.AppKey("index", SearchIndex)


def _int_param(request: web.Request, name: str, default: int) -> int:
    raw = request.query.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ValidationError(f"Query parameter {name!r} must be an integer, got {raw!r}") from e


async def search(request: web.Request) -> web.Response:
    index = request.app[INDEX_KEY]
    try:
        hits = index.search(request.query.get("q", ""), limit=_int_param(request, "limit", 10))
    except ValidationError as e:
        return web.json_response({"error": str(e)}, status=400)
    return web.json_response({"hits": [h.to_dict() for h in hits]})


async def aggregate(request: web.Request) -> web.Response:
    index = request.app[INDEX_KEY]
    try:
        result = index.aggregate(request.query.get("field", ""), top_k=_int_param(request, "top", 10))
    except ValidationError as e:
        return web.json_response({"error": str(e)}, status=400)
    return web.json_response(result.to_dict())


async def stats(request: web.Request) -> web.Response:
    return web.json_response(request.app[INDEX_KEY].stats())


def build_index_app(index: SearchIndex, refresh_interval_s: float = 5.0) -> web.Application:
    app = web.Application()
    app[INDEX_KEY] = index
    app.router.add_get("/search", search)
    app.router.add_get("/agg", aggregate)
    app.router.add_get("/stats", stats)

    if refresh_interval_s > 0 and index.root is not None:
        async def refresher(app: web.Application):
            async def loop() -> None:
                while True:
                    await asyncio.sleep(refresh_interval_s)
                    try:
                        await asyncio.get_running_loop().run_in_executor(None, index.refresh)
                    except Exception:
                        logger.exception("Index refresh failed")

            task: Optional[asyncio.Task] = asyncio.create_task(loop())
            yield
            if task is not None:
                task.cancel()

        app.cleanup_ctx.append(refresher)
    return app
