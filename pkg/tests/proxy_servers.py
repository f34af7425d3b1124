"""Loopback proxy fixtures: a forwarding HTTP proxy (absolute-URI GET +
CONNECT) and a minimal SOCKS5 server. Both support binding their egress
socket to a chosen source address and chaining through an upstream proxy,
which is how the two-hop relay fixture is built."""

from __future__ import annotations

import socket
import socketserver
import threading
from urllib.parse import urlsplit


def _pump(a: socket.socket, b: socket.socket):
    def one_way(src, dst):
        try:
            while True:
                data = src.recv(8192)
                if not data:
                    break
                dst.sendall(data)
        except OSError:
            pass
        finally:
            try:
                dst.shutdown(socket.SHUT_WR)
            except OSError:
                pass

    t1 = threading.Thread(target=one_way, args=(a, b), daemon=True)
    t2 = threading.Thread(target=one_way, args=(b, a), daemon=True)
    t1.start()
    t2.start()
    t1.join()
    t2.join()


def _read_headers(sock) -> bytes:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            break
        data += chunk
    return data


class _HTTPProxyHandler(socketserver.BaseRequestHandler):
    def handle(self):
        raw = _read_headers(self.request)
        if not raw:
            return
        request_line = raw.split(b"\r\n", 1)[0].decode("latin-1")
        try:
            method, target, _ = request_line.split(" ", 2)
        except ValueError:
            return
        server = self.server  # type: ignore[assignment]
        if server.require_auth and b"proxy-authorization" not in raw.lower():
            self.request.sendall(b"HTTP/1.1 407 Proxy Authentication Required\r\n"
                                 b"Proxy-Authenticate: Basic realm=p\r\n"
                                 b"Content-Length: 0\r\n\r\n")
            return
        if method == "CONNECT":
            host, _, port = target.partition(":")
            upstream = server.open_upstream(host, int(port or 443), connect=True)
            if upstream is None:
                self.request.sendall(b"HTTP/1.1 502 Bad Gateway\r\n\r\n")
                return
            self.request.sendall(b"HTTP/1.1 200 Connection established\r\n\r\n")
            _pump(self.request, upstream)
            upstream.close()
        elif target.startswith("http://"):
            parts = urlsplit(target)
            host = parts.hostname
            port = parts.port or 80
            upstream = server.open_upstream(host, port, connect=False)
            if upstream is None:
                self.request.sendall(b"HTTP/1.1 502 Bad Gateway\r\n\r\n")
                return
            if server.chain is None:
                path = parts.path + (f"?{parts.query}" if parts.query else "")
                rewritten = raw.replace(f"{method} {target}".encode(),
                                        f"{method} {path}".encode(), 1)
                upstream.sendall(rewritten)
            else:
                upstream.sendall(raw)  # absolute-URI pass-through to next proxy
            _pump(self.request, upstream)
            upstream.close()
        else:
            self.request.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")


class ForwardingHTTPProxy(socketserver.ThreadingTCPServer):
    """One-hop (or chained) forwarding HTTP proxy for loopback tests."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind=("127.0.0.1", 0), egress_source: str | None = None,
                 chain: tuple[str, int] | None = None, require_auth: bool = False):
        super().__init__(bind, _HTTPProxyHandler)
        self.egress_source = egress_source
        self.chain = chain
        self.require_auth = require_auth
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    def open_upstream(self, host, port, connect: bool) -> socket.socket | None:
        target = self.chain if self.chain else (host, port)
        source = (self.egress_source, 0) if self.egress_source else None
        try:
            sock = socket.create_connection(target, timeout=10,
                                            source_address=source)
        except OSError:
            return None
        if connect and self.chain:
            sock.sendall(f"CONNECT {host}:{port} HTTP/1.1\r\n"
                         f"Host: {host}:{port}\r\n\r\n".encode())
            reply = _read_headers(sock)
            if b" 200" not in reply.split(b"\r\n", 1)[0]:
                sock.close()
                return None
        return sock

    def start(self) -> "ForwardingHTTPProxy":
        self._thread.start()
        return self

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def stop(self):
        self.shutdown()
        self.server_close()


class _Socks5Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        server = self.server  # type: ignore[assignment]
        greeting = sock.recv(2)
        if len(greeting) < 2:
            return
        n_methods = greeting[1]
        sock.recv(n_methods)
        if server.credentials:
            sock.sendall(b"\x05\x02")
            header = sock.recv(2)
            if len(header) < 2 or header[0] != 0x01:
                return
            ulen = header[1]
            user = sock.recv(ulen).decode()
            plen = sock.recv(1)[0]
            password = sock.recv(plen).decode()
            if (user, password) != server.credentials:
                sock.sendall(b"\x01\x01")
                return
            sock.sendall(b"\x01\x00")
        else:
            sock.sendall(b"\x05\x00")
        req = sock.recv(4)
        if len(req) < 4 or req[1] != 0x01:
            return
        atyp = req[3]
        if atyp == 0x01:
            host = socket.inet_ntoa(sock.recv(4))
        elif atyp == 0x03:
            n = sock.recv(1)[0]
            host = sock.recv(n).decode()
        else:
            sock.sendall(b"\x05\x08\x00\x01" + b"\x00" * 6)
            return
        port = int.from_bytes(sock.recv(2), "big")
        source = (server.egress_source, 0) if server.egress_source else None
        try:
            upstream = socket.create_connection((host, port), timeout=10,
                                                source_address=source)
        except OSError:
            sock.sendall(b"\x05\x05\x00\x01" + b"\x00" * 6)
            return
        sock.sendall(b"\x05\x00\x00\x01" + b"\x00" * 6)
        _pump(sock, upstream)
        upstream.close()


class Socks5Proxy(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind=("127.0.0.1", 0),
                 credentials: tuple[str, str] | None = None,
                 egress_source: str | None = None):
        super().__init__(bind, _Socks5Handler)
        self.credentials = credentials
        self.egress_source = egress_source
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    def start(self) -> "Socks5Proxy":
        self._thread.start()
        return self

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def stop(self):
        self.shutdown()
        self.server_close()
