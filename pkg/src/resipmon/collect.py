"""Direct exit collection from service APIs and DNS, with relay verification.

Direct exits listen on a public ip:port themselves. They are collected by
polling the RESTful endpoints some services expose to customers, or by
resolving the service subdomains that are dynamically mapped to active
exits. A collected entry is verified authentic by relaying one echo probe
through it: the echoed address must equal the entry address, anything else
means the node chains elsewhere and is recorded as a relay mismatch.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import socket
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .core import IpAddr, ServiceId, parse_ip
from .infiltrate import (GATEWAY_UNREACHABLE, ProbeError, RELAY_ERROR,
                         TOKEN_MISMATCH, relay_get)

log = logging.getLogger(__name__)

CONNECTION_REFUSED = "connection_refused"
RELAY_MISMATCH = "relay_mismatch"
UNREACHABLE = "unreachable"


@dataclass(frozen=True)
class DirectResipEntry:
    service: ServiceId
    ip: IpAddr
    port: int
    fetched_at: dt.datetime
    source: str  # api | dns
    proxy_protocol: str | None = None
    credentials: tuple[str, str] | None = None
    subdomain: str | None = None  # the resolved name, for dns-sourced entries

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if self.source not in ("api", "dns"):
            raise ValueError(f"unknown source: {self.source}")
        if self.source == "dns" and not self.subdomain:
            raise ValueError("dns-sourced entry needs its resolved subdomain")

    @property
    def endpoint(self) -> tuple[ServiceId, IpAddr, int]:
        return (self.service, self.ip, self.port)


# ---------------------------------------------------------------------------
# API polling
# ---------------------------------------------------------------------------

class MappingError(ValueError):
    pass


def _walk(value, path: str):
    """Resolve a dotted path against nested JSON objects ('' is the root)."""
    if path in ("", "."):
        return value
    for key in path.split("."):
        if not isinstance(value, dict) or key not in value:
            raise MappingError(f"path {path!r} missing at {key!r}")
        value = value[key]
    return value


@dataclass(frozen=True)
class ApiEndpointConfig:
    """One pollable endpoint plus the field mapping that turns its JSON
    response into entries. The stored sample response must map cleanly; a
    config that cannot parse its own sample is rejected outright."""

    service: ServiceId
    url: str
    mapping: dict  # items/ip/port paths, optional protocol/username/password
    sample_response: object
    poll_interval_s: float = 300.0
    default_protocol: str | None = None

    def __post_init__(self):
        for required in ("items", "ip", "port"):
            if required not in self.mapping:
                raise ValueError(f"mapping lacks {required!r} path")
        entries = map_response(self, self.sample_response,
                               fetched_at=dt.datetime(2000, 1, 1,
                                                      tzinfo=dt.timezone.utc))
        if entries is None:
            raise ValueError(f"{self.service}: sample response does not map")


def map_response(config: ApiEndpointConfig, payload,
                 fetched_at: dt.datetime) -> list[DirectResipEntry] | None:
    """Apply the field mapping; None when the items path itself is broken,
    otherwise the parseable entries (bad rows are skipped)."""
    try:
        items = _walk(payload, config.mapping["items"])
    except MappingError as exc:
        log.warning("%s: %s", config.service, exc)
        return None
    if not isinstance(items, list):
        log.warning("%s: items path is not a list", config.service)
        return None
    entries = []
    for item in items:
        try:
            ip = parse_ip(str(_walk(item, config.mapping["ip"])))
            port = int(_walk(item, config.mapping["port"]))
            credentials = None
            if "username" in config.mapping and "password" in config.mapping:
                credentials = (str(_walk(item, config.mapping["username"])),
                               str(_walk(item, config.mapping["password"])))
            protocol = config.default_protocol
            if "protocol" in config.mapping:
                protocol = str(_walk(item, config.mapping["protocol"]))
            entries.append(DirectResipEntry(
                service=config.service, ip=ip, port=port, fetched_at=fetched_at,
                source="api", proxy_protocol=protocol, credentials=credentials))
        except (MappingError, ValueError) as exc:
            log.warning("%s: entry skipped: %s", config.service, exc)
    return entries


def _default_fetcher(url: str) -> bytes:
    import requests

    resp = requests.get(url, timeout=15)
    resp.raise_for_status()
    return resp.content


def fetch_api_resips(config: ApiEndpointConfig,
                     fetcher: Callable[[str], bytes] | None = None,
                     retries: int = 2, backoff_s: float = 0.5,
                     archive_dir=None,
                     now: dt.datetime | None = None) -> list[DirectResipEntry]:
    """Execute one poll of the endpoint.

    Transport failures retry with backoff and then skip the poll. Entries
    the mapping cannot parse are skipped; when anything is skipped the raw
    response is archived for triage (if an archive directory is set).
    """
    fetcher = fetcher or _default_fetcher
    fetched_at = now or dt.datetime.now(dt.timezone.utc)
    raw = None
    for attempt in range(retries + 1):
        try:
            raw = fetcher(config.url)
            break
        except Exception as exc:
            log.warning("%s: poll attempt %d failed: %s",
                        config.service, attempt + 1, exc)
            if attempt < retries:
                time.sleep(backoff_s * (2 ** attempt))
    if raw is None:
        log.warning("%s: poll skipped after %d attempts", config.service, retries + 1)
        return []
    try:
        payload = json.loads(raw)
    except ValueError:
        _archive(archive_dir, config.service, fetched_at, raw)
        return []
    entries = map_response(config, payload, fetched_at)
    if entries is None:
        _archive(archive_dir, config.service, fetched_at, raw)
        return []
    expected = _item_count(config, payload)
    if expected is not None and len(entries) < expected:
        _archive(archive_dir, config.service, fetched_at, raw)
    return entries


def _item_count(config: ApiEndpointConfig, payload) -> int | None:
    try:
        items = _walk(payload, config.mapping["items"])
        return len(items) if isinstance(items, list) else None
    except MappingError:
        return None


def _archive(archive_dir, service: ServiceId, fetched_at: dt.datetime, raw: bytes):
    if archive_dir is None:
        return
    Path(archive_dir).mkdir(parents=True, exist_ok=True)
    name = f"{service}-{fetched_at:%Y%m%dT%H%M%S%f}.raw"
    (Path(archive_dir) / name).write_bytes(raw)
    log.warning("%s: raw response archived as %s", service, name)


# ---------------------------------------------------------------------------
# DNS resolution
# ---------------------------------------------------------------------------

class ResolveFailure(Exception):
    pass


class Resolver(Protocol):
    def resolve(self, name: str) -> list[str]:
        """All A/AAAA answers for the name; raises ResolveFailure."""


class SystemResolver:
    """Resolves through the operating system (A and AAAA)."""

    def resolve(self, name: str) -> list[str]:
        try:
            infos = socket.getaddrinfo(name, None, proto=socket.IPPROTO_TCP)
        except socket.gaierror as exc:
            raise ResolveFailure(str(exc))
        seen = []
        for info in infos:
            addr = info[4][0]
            if addr not in seen:
                seen.append(addr)
        return seen


class StubResolver:
    def __init__(self, table: dict[str, list[str]]):
        self.table = dict(table)

    def resolve(self, name: str) -> list[str]:
        if name not in self.table:
            raise ResolveFailure(f"NXDOMAIN {name}")
        return list(self.table[name])


@dataclass(frozen=True)
class DnsServiceConfig:
    """Names to query for one service plus the port its exits listen on
    (DNS answers carry no port; services document a fixed one)."""

    service: ServiceId
    names: tuple[str, ...]
    port: int
    protocol: str | None = None


def resolve_dns_resips(configs: Iterable[DnsServiceConfig],
                       resolver: Resolver | None = None,
                       now: dt.datetime | None = None,
                       ) -> tuple[list[DirectResipEntry], list[tuple[str, str]]]:
    """Query every configured name for A/AAAA answers.

    Per-name failures (NXDOMAIN, timeouts) are recorded and the scan
    continues; returns (entries, [(name, failure)]).
    """
    resolver = resolver or SystemResolver()
    fetched_at = now or dt.datetime.now(dt.timezone.utc)
    entries = []
    failures = []
    for config in configs:
        for name in config.names:
            try:
                answers = resolver.resolve(name)
            except ResolveFailure as exc:
                failures.append((name, str(exc)))
                continue
            for answer in answers:
                try:
                    ip = parse_ip(answer)
                except ValueError:
                    failures.append((name, f"bad answer {answer!r}"))
                    continue
                entries.append(DirectResipEntry(
                    service=config.service, ip=ip, port=config.port,
                    fetched_at=fetched_at, source="dns",
                    proxy_protocol=config.protocol, subdomain=name))
    return entries, failures


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationResult:
    ok: bool
    exit_ip: IpAddr | None = None
    failure_class: str | None = None


def verify_direct(entry: DirectResipEntry, echo_url: str,
                  timeout: float = 10.0,
                  token: str | None = None) -> VerificationResult:
    """Relay exactly one echo probe through the entry.

    ok requires the token to round-trip and the echoed address to equal the
    entry address (the direct-exit property); a healthy relay that exits
    elsewhere is a relay_mismatch.
    """
    token = token or uuid.uuid4().hex
    protocol = entry.proxy_protocol or "http"
    sep = "&" if "?" in echo_url else "?"
    url = f"{echo_url}{sep}token={token}"
    try:
        status, body = relay_get((str(entry.ip), entry.port), protocol, url,
                                 credentials=entry.credentials, timeout=timeout)
    except ProbeError as exc:
        failure = exc.failure_class
        if failure == GATEWAY_UNREACHABLE:
            failure = CONNECTION_REFUSED if exc.refused else UNREACHABLE
        return VerificationResult(ok=False, failure_class=failure)
    if status != 200:
        return VerificationResult(ok=False, failure_class=RELAY_ERROR)
    lines = body.decode("utf-8", errors="replace").splitlines()
    if len(lines) < 2:
        return VerificationResult(ok=False, failure_class=RELAY_ERROR)
    if lines[1].strip() != token:
        return VerificationResult(ok=False, failure_class=TOKEN_MISMATCH)
    try:
        exit_ip = parse_ip(lines[0])
    except ValueError:
        return VerificationResult(ok=False, failure_class=RELAY_ERROR)
    if exit_ip != entry.ip:
        return VerificationResult(ok=False, exit_ip=exit_ip,
                                  failure_class=RELAY_MISMATCH)
    return VerificationResult(ok=True, exit_ip=exit_ip)


# ---------------------------------------------------------------------------
# storage: newline-delimited, append-only
# ---------------------------------------------------------------------------

class ResipStore:
    """Flat-file entry storage: service, ip, port, protocol, source,
    subdomain, fetched_at; tab separated."""

    def __init__(self, path):
        self.path = Path(path)

    def append(self, entries: Iterable[DirectResipEntry]) -> int:
        n = 0
        with open(self.path, "a", encoding="utf-8") as fh:
            for e in entries:
                fh.write("\t".join([
                    e.service, str(e.ip), str(e.port), e.proxy_protocol or "",
                    e.source, e.subdomain or "", e.fetched_at.isoformat(),
                ]) + "\n")
                n += 1
        return n

    def load(self) -> list[DirectResipEntry]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            service, ip, port, protocol, source, subdomain, stamp = line.split("\t")
            out.append(DirectResipEntry(
                service=service, ip=parse_ip(ip), port=int(port),
                fetched_at=dt.datetime.fromisoformat(stamp), source=source,
                proxy_protocol=protocol or None, subdomain=subdomain or None))
        return out

    def distinct_endpoints(self) -> set[tuple[ServiceId, IpAddr, int]]:
        return {e.endpoint for e in self.load()}


def load_endpoint_configs(path) -> list[ApiEndpointConfig]:
    """JSON config: a list of endpoint objects with their sample responses."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ApiEndpointConfig(
        service=d["service"], url=d["url"], mapping=d["mapping"],
        sample_response=d["sample_response"],
        poll_interval_s=d.get("poll_interval_s", 300.0),
        default_protocol=d.get("default_protocol")) for d in raw]


def load_dns_configs(path) -> list[DnsServiceConfig]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [DnsServiceConfig(service=d["service"], names=tuple(d["names"]),
                             port=d["port"], protocol=d.get("protocol"))
            for d in raw]
