"""A 60-line forwarding HTTP proxy used by the demos.

It supports exactly what the probes need: absolute-URI GET forwarding. Real
gateways speak the same dialect, which is why one probe function can drive
both this toy and a commercial backconnect entry point.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from urllib.parse import urlsplit


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = self.request.recv(4096)
            if not chunk:
                return
            data += chunk
        request_line = data.split(b"\r\n", 1)[0].decode("latin-1")
        try:
            method, target, _ = request_line.split(" ", 2)
        except ValueError:
            return
        if method != "GET" or not target.startswith("http://"):
            self.request.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return
        parts = urlsplit(target)
        path = parts.path + (f"?{parts.query}" if parts.query else "")
        rewritten = data.replace(f"GET {target}".encode(),
                                 f"GET {path}".encode(), 1)
        try:
            upstream = socket.create_connection((parts.hostname, parts.port or 80),
                                                timeout=10)
        except OSError:
            self.request.sendall(b"HTTP/1.1 502 Bad Gateway\r\n\r\n")
            return
        with upstream:
            upstream.sendall(rewritten)
            while True:
                chunk = upstream.recv(8192)
                if not chunk:
                    break
                self.request.sendall(chunk)


class LocalProxy(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind=("127.0.0.1", 0)):
        super().__init__(bind, _Handler)
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    def start(self) -> "LocalProxy":
        self._thread.start()
        return self

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def stop(self):
        self.shutdown()
        self.server_close()
