"""HTTP surface: POST /v1/score and GET /healthz on a threading server."""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .service import RequestError, ScoreService, SidecarConfig

logger = logging.getLogger(__name__)


def _make_handler(service: ScoreService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _send(self, status: int, payload: dict) -> None:
            raw = json.dumps(payload, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def do_GET(self):
            if self.path == "/healthz":
                self._send(200, service.describe())
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path != "/v1/score":
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                self._send(200, service.score(body))
            except (RequestError, json.JSONDecodeError) as exc:
                self._send(400, {"error": str(exc)})
            except Exception as exc:  # noqa: BLE001 - keep the server up
                logger.exception("scoring failed")
                self._send(500, {"error": f"internal error: {exc}"})

        def log_message(self, fmt, *args):
            logger.debug(fmt, *args)

    return Handler


def make_server(config: SidecarConfig, service: ScoreService | None = None) -> ThreadingHTTPServer:
    """Bind the service; pass port 0 to pick a free port (tests)."""
    service = service or ScoreService(config)
    return ThreadingHTTPServer(("0.0.0.0", config.port), _make_handler(service))


def serve(config: SidecarConfig) -> None:
    """Build the backends and serve until interrupted."""
    server = make_server(config)
    host, port = server.server_address[:2]
    logger.info("scoring sidecar listening on %s:%s", host, port)
    print(f"scoring sidecar listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
