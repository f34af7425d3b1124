"""In-process HTTP fixture server: serves a dict of path -> HTML and records
every request it sees, so crawler politeness contracts can be asserted."""

from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class _FixtureHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        server = self.server  # type: ignore[assignment]
        with server.lock:
            server.requests.append(self.path)
        body = server.pages.get(self.path)
        if body is None:
            self.send_error(404)
            return
        data = body.encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "text/html; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class FixtureSite(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, pages: dict[str, str], bind=("127.0.0.1", 0)):
        super().__init__(bind, _FixtureHandler)
        self.pages = dict(pages)
        self.requests: list[str] = []
        self.lock = threading.Lock()
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    def start(self) -> "FixtureSite":
        self._thread.start()
        return self

    @property
    def base_url(self) -> str:
        host, port = self.server_address[0], self.server_address[1]
        return f"http://{host}:{port}"

    def stop(self):
        self.shutdown()
        self.server_close()
