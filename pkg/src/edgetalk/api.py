"""REST + server-sent-events surface over a running gateway.

Endpoints: POST /command, GET /devices, GET /traces/{id}, GET /traces,
GET /health, and the /events SSE stream. When a UI directory is configured it
is served from the same origin at /.
"""

import json
import logging
import threading
from pathlib import Path

import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import SessionQueueFullError, TraceNotFoundError
from .gateway import Gateway

logger = logging.getLogger(__name__)

SSE_KEEPALIVE_SECONDS = 15.0


class CommandRequest(BaseModel):
    session_id: str
    text: str


def create_app(gateway: Gateway) -> FastAPI:
    app = FastAPI(title="edgetalk gateway", version="0.1.0")

    @app.post("/command")
    def submit_command(request: CommandRequest) -> dict:
        try:
            trace = gateway.submit_command(request.session_id, request.text)
        except SessionQueueFullError as exc:
            raise HTTPException(status_code=429, detail=str(exc)) from exc
        return trace.to_dict()

    @app.get("/devices")
    def get_devices() -> list[dict]:
        return gateway.get_devices()

    @app.get("/traces/{trace_id}")
    def get_trace(trace_id: str) -> dict:
        try:
            return gateway.get_trace(trace_id).to_dict()
        except TraceNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/traces")
    def list_traces(session: str | None = None) -> list[dict]:
        return [t.to_dict() for t in gateway.list_traces(session)]

    @app.get("/health")
    def health() -> dict:
        return gateway.health()

    @app.get("/events")
    def events() -> StreamingResponse:
        subscription = gateway.state_stream()

        def stream():
            try:
                while True:
                    event = subscription.get(timeout=SSE_KEEPALIVE_SECONDS)
                    if subscription.closed:
                        return
                    if event is None:
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(event, separators=(',', ':'))}\n\n"
            finally:
                gateway.bus.unsubscribe(subscription)

        return StreamingResponse(stream(), media_type="text/event-stream")

    ui_dir = gateway.config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
        logger.info("serving UI from %s", ui_dir)

    return app


class ApiServer:
    """uvicorn on a background thread; port 0 picks an ephemeral port."""

    def __init__(self, gateway: Gateway, host: str | None = None, port: int | None = None):
        self.app = create_app(gateway)
        self._config = uvicorn.Config(
            self.app,
            host=host if host is not None else gateway.config.api_host,
            port=port if port is not None else gateway.config.api_port,
            log_level="warning",
        )
        self._server = uvicorn.Server(self._config)
        self._thread: threading.Thread | None = None

    def start(self, timeout: float = 10.0) -> "ApiServer":
        self._thread = threading.Thread(target=self._server.run, name="api-server", daemon=True)
        self._thread.start()
        deadline = threading.Event()
        waited = 0.0
        while not self._server.started:
            if waited >= timeout:
                raise RuntimeError("API server failed to start")
            deadline.wait(0.05)
            waited += 0.05
        return self

    @property
    def port(self) -> int:
        servers = getattr(self._server, "servers", [])
        if servers and servers[0].sockets:
            return servers[0].sockets[0].getsockname()[1]
        return self._config.port

    @property
    def url(self) -> str:
        return f"http://{self._config.host}:{self.port}"

    def stop(self) -> None:
        self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
