# This file is part of radfact_rerank.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

from __future__ import annotations

__all__ = ("StubGenerator",)

import json
import threading
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from lsst.utils.logging import getLogger

_LOG = getLogger(__name__)

Responder = Callable[[dict[str, Any]], tuple[int, Any]]
"""Maps a request body to an HTTP status and a JSON-serializable body (or
raw `bytes`).
"""


class StubGenerator:
    """A local stand-in for a remote generation service, for tests.

    Serves ``POST /generate`` from a background thread.  Each request body
    is passed to ``responder``; requests are recorded in `requests`.

    Parameters
    ----------
    responder : `~collections.abc.Callable`
        Callable returning ``(status, body)`` for a decoded request body.
    """

    def __init__(self, responder: Responder):
        self.responder = responder
        self.requests: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_table(cls, sequences: dict[str, str]) -> StubGenerator:
        """Make a stub answering with fixed sequences keyed by example ID;
        unknown IDs get HTTP 404.
        """

        def respond(body: dict[str, Any]) -> tuple[int, Any]:
            if (sequence := sequences.get(body.get("id", ""))) is None:
                return 404, {"error": "unknown id"}
            return 200, {"generated_sequence": sequence}

        return cls(respond)

    def _make_handler(self) -> type[BaseHTTPRequestHandler]:
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:
                if self.path != "/generate":
                    self._send(404, b'{"error": "not found"}')
                    return
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.requests.append(body)
                status, payload = stub.responder(body)
                self._send(status, payload if isinstance(payload, bytes) else json.dumps(payload).encode())

            def _send(self, status: int, data: bytes) -> None:
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, format: str, *args: Any) -> None:
                _LOG.debug("stub generator: " + format, *args)

        return Handler

    @contextmanager
    def serve(self) -> Iterator[str]:
        """Run the server for the duration of a ``with`` block.

        Yields
        ------
        endpoint : `str`
            Base URL of the running server.
        """
        server = ThreadingHTTPServer(("127.0.0.1", 0), self._make_handler())
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address[:2]
            yield f"http://{host}:{port}"
        finally:
            server.shutdown()
            server.server_close()
            thread.join()
