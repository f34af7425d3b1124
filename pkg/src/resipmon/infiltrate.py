"""Backconnect exit capture: echo server, gateway probes, campaign stats.

A probe is one minimal GET relayed through a service gateway to an echo
server we operate. The echo server answers with the transport-level client
address it observed plus the probe token, so a successful round trip pins
the exit address without trusting any forwarded headers. Observations go to
an append-only log; statistics are always recomputed from the log.
"""

from __future__ import annotations

import base64
import datetime as dt
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .core import DateDay, IpAddr, ServiceId, parse_ip
from .tables import fmt_count, render_table

log = logging.getLogger(__name__)

# failure classes
GATEWAY_UNREACHABLE = "gateway_unreachable"
PROXY_AUTH_FAILED = "proxy_auth_failed"
RELAY_TIMEOUT = "relay_timeout"
TOKEN_MISMATCH = "token_mismatch"
RELAY_ERROR = "relay_error"

PROTOCOLS = ("http", "https_connect", "socks5")


class ProbeError(Exception):
    def __init__(self, failure_class: str, message: str = "", refused: bool = False):
        super().__init__(message or failure_class)
        self.failure_class = failure_class
        self.refused = refused


# ---------------------------------------------------------------------------
# echo server
# ---------------------------------------------------------------------------

class _EchoHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def do_GET(self):
        parts = urlsplit(self.path)
        if parts.path != "/probe":
            self.send_error(404)
            return
        token = parse_qs(parts.query).get("token", [""])[0]
        if not token:
            self.send_error(400, "missing token")
            return
        client = self.client_address[0]
        body = f"{client}\n{token}\n".encode()
        # log first so the record exists before the caller sees the answer
        self.server.append_log(client, token)  # type: ignore[attr-defined]
        self.send_response(200)
        self.send_header("Content-Type", "text/plain")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class EchoServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, log_path):
        super().__init__(addr, _EchoHandler)
        self.echo_log_path = Path(log_path)
        self._log_lock = threading.Lock()

    def append_log(self, client: str, token: str):
        stamp = dt.datetime.now(dt.timezone.utc).isoformat()
        with self._log_lock:
            with open(self.echo_log_path, "a", encoding="utf-8") as fh:
                fh.write(f"{stamp}\t{client}\t{token}\n")


@dataclass
class EchoHandle:
    server: EchoServer
    thread: threading.Thread

    @property
    def host(self) -> str:
        return self.server.server_address[0]

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}/probe"

    @property
    def log_path(self) -> Path:
        return self.server.echo_log_path

    def stop(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def run_echo_server(bind: tuple[str, int] = ("127.0.0.1", 0),
                    log_path=None) -> EchoHandle:
    """Start the echo server; raises on bind failure."""
    if log_path is None:
        log_path = Path(f"echo_log_{bind[1] or 'auto'}.tsv")
    server = EchoServer(bind, log_path)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return EchoHandle(server, thread)


# ---------------------------------------------------------------------------
# relaying one GET through a proxy gateway
# ---------------------------------------------------------------------------

def _read_http_response(sock) -> tuple[int, bytes]:
    fh = sock.makefile("rb")
    status_line = fh.readline()
    if not status_line.startswith(b"HTTP/"):
        raise ProbeError(RELAY_ERROR, f"bad status line: {status_line[:60]!r}")
    try:
        status = int(status_line.split(b" ", 2)[1])
    except (IndexError, ValueError):
        raise ProbeError(RELAY_ERROR, "unparseable status line")
    length = None
    while True:
        header = fh.readline()
        if header in (b"\r\n", b"\n", b""):
            break
        if header.lower().startswith(b"content-length:"):
            length = int(header.split(b":", 1)[1].strip())
    body = fh.read(length) if length is not None else fh.read()
    return status, body


def _read_connect_reply(sock) -> int:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(1024)
        if not chunk:
            raise ProbeError(RELAY_ERROR, "gateway closed during CONNECT")
        data += chunk
    status_line = data.split(b"\r\n", 1)[0]
    try:
        return int(status_line.split(b" ", 2)[1])
    except (IndexError, ValueError):
        raise ProbeError(RELAY_ERROR, "unparseable CONNECT reply")


def _socks5_handshake(sock, host: str, port: int, credentials):
    methods = b"\x02\x00\x02" if credentials else b"\x01\x00"
    sock.sendall(b"\x05" + methods)
    reply = _recv_exact(sock, 2)
    method = reply[1]
    if method == 0xFF:
        raise ProbeError(PROXY_AUTH_FAILED, "no acceptable auth method")
    if method == 0x02:
        if not credentials:
            raise ProbeError(PROXY_AUTH_FAILED, "gateway demands credentials")
        user, password = credentials
        sock.sendall(b"\x01" + bytes([len(user)]) + user.encode()
                     + bytes([len(password)]) + password.encode())
        auth = _recv_exact(sock, 2)
        if auth[1] != 0:
            raise ProbeError(PROXY_AUTH_FAILED, "credentials rejected")
    try:
        addr = socket.inet_aton(host)
        request = b"\x05\x01\x00\x01" + addr
    except OSError:
        request = b"\x05\x01\x00\x03" + bytes([len(host)]) + host.encode()
    sock.sendall(request + port.to_bytes(2, "big"))
    reply = _recv_exact(sock, 4)
    if reply[1] != 0:
        raise ProbeError(RELAY_ERROR, f"socks connect rejected: {reply[1]}")
    atyp = reply[3]
    if atyp == 0x01:
        _recv_exact(sock, 4 + 2)
    elif atyp == 0x03:
        n = _recv_exact(sock, 1)[0]
        _recv_exact(sock, n + 2)
    elif atyp == 0x04:
        _recv_exact(sock, 16 + 2)


def _recv_exact(sock, n: int) -> bytes:
    data = b""
    while len(data) < n:
        chunk = sock.recv(n - len(data))
        if not chunk:
            raise ProbeError(RELAY_ERROR, "gateway closed mid-handshake")
        data += chunk
    return data


def relay_get(gateway: tuple[str, int], protocol: str, url: str,
              credentials: tuple[str, str] | None = None,
              timeout: float = 10.0) -> tuple[int, bytes]:
    """One GET for `url` relayed through the gateway; returns (status, body).

    The request is a single small GET with a fixed short header set and no
    body. Raises ProbeError carrying a failure class.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown proxy protocol: {protocol}")
    parts = urlsplit(url)
    host = parts.hostname or ""
    port = parts.port or 80
    path = parts.path + (f"?{parts.query}" if parts.query else "")
    try:
        sock = socket.create_connection(gateway, timeout=timeout)
    except OSError as exc:
        raise ProbeError(GATEWAY_UNREACHABLE, str(exc),
                         refused=isinstance(exc, ConnectionRefusedError))
    try:
        sock.settimeout(timeout)
        auth_header = b""
        if credentials and protocol in ("http", "https_connect"):
            raw = f"{credentials[0]}:{credentials[1]}".encode()
            auth_header = b"Proxy-Authorization: Basic " + base64.b64encode(raw) + b"\r\n"
        if protocol == "http":
            request = (f"GET {url} HTTP/1.1\r\nHost: {host}:{port}\r\n".encode()
                       + auth_header + b"Connection: close\r\n\r\n")
            sock.sendall(request)
        elif protocol == "https_connect":
            sock.sendall(f"CONNECT {host}:{port} HTTP/1.1\r\n"
                         f"Host: {host}:{port}\r\n".encode()
                         + auth_header + b"\r\n")
            status = _read_connect_reply(sock)
            if status == 407:
                raise ProbeError(PROXY_AUTH_FAILED, "CONNECT 407")
            if status != 200:
                raise ProbeError(RELAY_ERROR, f"CONNECT {status}")
            sock.sendall(f"GET {path} HTTP/1.1\r\nHost: {host}:{port}\r\n"
                         f"Connection: close\r\n\r\n".encode())
        else:  # socks5
            _socks5_handshake(sock, host, port, credentials)
            sock.sendall(f"GET {path} HTTP/1.1\r\nHost: {host}:{port}\r\n"
                         f"Connection: close\r\n\r\n".encode())
        status, body = _read_http_response(sock)
        if protocol == "http" and status == 407:
            raise ProbeError(PROXY_AUTH_FAILED, "proxy requires auth")
        return status, body
    except socket.timeout:
        raise ProbeError(RELAY_TIMEOUT, "relay timed out")
    finally:
        sock.close()


# ---------------------------------------------------------------------------
# probes and observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeSpec:
    service: ServiceId
    gateway: tuple[str, int]
    proxy_protocol: str  # http | https_connect | socks5
    target: str          # echo URL, operator-controlled
    token: str
    credentials: tuple[str, str] | None = None
    timeout: float = 10.0


@dataclass(frozen=True)
class ExitObservation:
    service: ServiceId
    token: str
    observed_at: dt.datetime
    success: bool
    latency: float
    exit_ip: IpAddr | None = None
    failure_class: str | None = None


def send_probe(spec: ProbeSpec) -> ExitObservation:
    """Relay one echo probe through the gateway and record the exit address.

    The echoed address (line 1) is the transport peer the echo server saw;
    the echoed token (line 2) must round-trip exactly.
    """
    started = time.monotonic()
    observed_at = dt.datetime.now(dt.timezone.utc)

    def failure(failure_class):
        return ExitObservation(spec.service, spec.token, observed_at,
                               success=False,
                               latency=time.monotonic() - started,
                               failure_class=failure_class)

    try:
        status, body = relay_get(spec.gateway, spec.proxy_protocol, _with_token(
            spec.target, spec.token), spec.credentials, spec.timeout)
    except ProbeError as exc:
        return failure(exc.failure_class)
    if status != 200:
        return failure(RELAY_ERROR)
    lines = body.decode("utf-8", errors="replace").splitlines()
    if len(lines) < 2:
        return failure(RELAY_ERROR)
    if lines[1].strip() != spec.token:
        return failure(TOKEN_MISMATCH)
    try:
        exit_ip = parse_ip(lines[0])
    except ValueError:
        return failure(RELAY_ERROR)
    return ExitObservation(spec.service, spec.token, observed_at, success=True,
                           latency=time.monotonic() - started, exit_ip=exit_ip)


def _with_token(target: str, token: str) -> str:
    sep = "&" if "?" in target else "?"
    return f"{target}{sep}token={token}"


# --- observation log: timestamp, service, token, success, failure_class,
#     exit_ip, latency_ms; tab separated, append only -----------------------

def format_observation(obs: ExitObservation) -> str:
    return "\t".join([
        obs.observed_at.isoformat(), obs.service, obs.token,
        "1" if obs.success else "0", obs.failure_class or "",
        str(obs.exit_ip) if obs.exit_ip is not None else "",
        f"{obs.latency * 1000:.1f}",
    ]) + "\n"


def parse_observation(line: str) -> ExitObservation:
    stamp, service, token, success, failure_class, exit_ip, latency_ms = \
        line.rstrip("\n").split("\t")
    return ExitObservation(
        service=service, token=token,
        observed_at=dt.datetime.fromisoformat(stamp),
        success=success == "1",
        latency=float(latency_ms) / 1000.0,
        exit_ip=parse_ip(exit_ip) if exit_ip else None,
        failure_class=failure_class or None)


def read_observation_log(path) -> list[ExitObservation]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            out.append(parse_observation(line))
    return out


class ObservationWriter:
    """Single append-only writer; safe for concurrent probe workers."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, obs: ExitObservation):
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(format_observation(obs))
                fh.flush()

    def logged_tokens(self) -> set[str]:
        if not self.path.exists():
            return set()
        return {obs.token for obs in read_observation_log(self.path)}


# ---------------------------------------------------------------------------
# campaign scheduling
# ---------------------------------------------------------------------------

def schedule_campaign(specs, log_path, rate: float, duration: float | None = None,
                      concurrency: int = 4, resume: bool = True,
                      backoff_base: float = 1.0, backoff_cap: float = 60.0,
                      prober=send_probe) -> int:
    """Emit probes at <= rate/s until duration elapses or specs run out.

    All observations are appended to the log; a crashed campaign restarts
    from the log tail, never reusing a token already logged. Services with
    consecutive failures back off exponentially while the campaign continues.
    Returns the number of probes dispatched this run.
    """
    from concurrent.futures import ThreadPoolExecutor

    if rate <= 0:
        raise ValueError("rate must be positive")
    writer = ObservationWriter(log_path)
    done_tokens = writer.logged_tokens() if resume else set()
    pending = [s for s in specs if s.token not in done_tokens]
    started = time.monotonic()
    next_slot = started
    service_block_until: dict[str, float] = {}
    service_failures: dict[str, int] = {}
    dispatched = 0

    def run_one(spec: ProbeSpec):
        obs = prober(spec)
        writer.append(obs)
        if obs.success:
            service_failures[spec.service] = 0
        else:
            fails = service_failures.get(spec.service, 0) + 1
            service_failures[spec.service] = fails
            service_block_until[spec.service] = time.monotonic() + min(
                backoff_cap, backoff_base * (2 ** (fails - 1)))
        return obs

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = []
        while pending:
            now = time.monotonic()
            if duration is not None and now - started >= duration:
                break
            spec = pending.pop(0)
            blocked = service_block_until.get(spec.service, 0.0)
            if blocked > now:
                pending.append(spec)
                if all(service_block_until.get(s.service, 0.0) > now
                       for s in pending):
                    time.sleep(min(0.05, blocked - now))
                continue
            wait = next_slot - now
            if wait > 0:
                time.sleep(wait)
                if duration is not None and time.monotonic() - started >= duration:
                    pending.insert(0, spec)
                    break
            next_slot = max(next_slot + 1.0 / rate, time.monotonic())
            futures.append(pool.submit(run_one, spec))
            dispatched += 1
        for future in futures:
            future.result()
    return dispatched


# ---------------------------------------------------------------------------
# campaign statistics
# ---------------------------------------------------------------------------

@dataclass
class ServiceCampaign:
    service: ServiceId
    first: DateDay
    last: DateDay
    days: int              # distinct days with at least one successful probe
    unique_resips: int
    successful_probes: int


@dataclass
class CampaignStats:
    per_service: dict[ServiceId, ServiceCampaign]
    overall: ServiceCampaign | None
    # cumulative daily series per service (+ "Overall"): (day, probes, unique ips)
    series: dict[ServiceId, list[tuple[DateDay, int, int]]] = field(default_factory=dict)


def _cumulative(observations: list[ExitObservation]) -> list[tuple[DateDay, int, int]]:
    by_day: dict[DateDay, list[ExitObservation]] = {}
    for obs in observations:
        by_day.setdefault(obs.observed_at.date(), []).append(obs)
    series = []
    seen_ips: set[IpAddr] = set()
    probes = 0
    for day in sorted(by_day):
        daily = by_day[day]
        probes += len(daily)
        seen_ips.update(o.exit_ip for o in daily)
        series.append((day, probes, len(seen_ips)))
    return series


def campaign_stats(observations_or_log) -> CampaignStats:
    """Aggregate successful probes per service plus cumulative daily series."""
    if isinstance(observations_or_log, (str, Path)):
        observations = read_observation_log(observations_or_log)
    else:
        observations = list(observations_or_log)
    successes = [o for o in observations if o.success]
    stats = CampaignStats(per_service={}, overall=None)

    def summarize(service: ServiceId, group: list[ExitObservation]) -> ServiceCampaign:
        obs_days = {o.observed_at.date() for o in group}
        return ServiceCampaign(
            service=service, first=min(obs_days), last=max(obs_days),
            days=len(obs_days),
            unique_resips=len({o.exit_ip for o in group}),
            successful_probes=len(group))

    by_service: dict[ServiceId, list[ExitObservation]] = {}
    for obs in successes:
        by_service.setdefault(obs.service, []).append(obs)
    for service in sorted(by_service):
        stats.per_service[service] = summarize(service, by_service[service])
        stats.series[service] = _cumulative(by_service[service])
    if successes:
        stats.overall = summarize("Overall", successes)
        stats.series["Overall"] = _cumulative(successes)
    return stats


def format_campaign_table(stats: CampaignStats) -> str:
    """Text table: Provider | Period | Days | RESIPs | Probes."""
    headers = ["Provider", "Period", "Days", "RESIPs", "Probes"]
    rows = []
    entries = list(stats.per_service.values())
    if stats.overall:
        entries.append(stats.overall)
    for sc in entries:
        period = f"{sc.first:%m/%d/%y} - {sc.last:%m/%d/%y}"
        rows.append([sc.service, period, str(sc.days),
                     fmt_count(sc.unique_resips), fmt_count(sc.successful_probes)])
    return render_table(headers, rows)
