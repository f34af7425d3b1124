"""
Collecting and verifying direct exits
=====================================

Direct exits listen on a public ip:port themselves. Services hand them out
through RESTful endpoints or by updating DNS records under their domains.
A collected entry is only trusted after a relay check: the echoed address
must equal the entry address, otherwise the node forwards elsewhere.
"""

import datetime as dt
import tempfile
from pathlib import Path

from localproxy import LocalProxy
from resipmon.collect import (ApiEndpointConfig, DirectResipEntry,
                              DnsServiceConfig, ResipStore, StubResolver,
                              fetch_api_resips, resolve_dns_resips,
                              verify_direct)
from resipmon.core import parse_ip
from resipmon.infiltrate import run_echo_server

# --- API channel: a field mapping turns a service's JSON into entries.
# The mapping is validated against a stored sample response up front.
config = ApiEndpointConfig(
    service="demo-svc", url="http://api.demo-svc.invalid/fetch",
    mapping={"items": "data.list", "ip": "ip", "port": "port"},
    sample_response={"data": {"list": [{"ip": "203.0.113.5", "port": 62456}]}})

fake_payload = (b'{"data":{"list":['
                b'{"ip":"203.0.113.5","port":62456},'
                b'{"ip":"203.0.113.9","port":62456}]}}')
entries = fetch_api_resips(config, fetcher=lambda url: fake_payload)
print(f"API poll: {len(entries)} entries, first = "
      f"{entries[0].ip}:{entries[0].port}")

# --- DNS channel: configured names resolve to active exits; the listening
# port comes from per-service documentation since DNS carries none.
resolver = StubResolver({"bj01.demo-svc.example": ["203.0.113.7"],
                         "sh02.demo-svc.example": ["203.0.113.8", "203.0.113.9"]})
dns_config = [DnsServiceConfig("demo-svc",
                               ("bj01.demo-svc.example", "sh02.demo-svc.example",
                                "gone.demo-svc.example"), port=62456)]
dns_entries, failures = resolve_dns_resips(dns_config, resolver)
print(f"DNS scan: {len(dns_entries)} entries, {len(failures)} dead names")

# Storage is a flat append-only file; identical re-polls never grow the
# distinct (service, ip, port) set.
tmp = Path(tempfile.mkdtemp(prefix="demo-collect-"))
store = ResipStore(tmp / "entries.tsv")
store.append(entries + dns_entries)
store.append(entries)  # same poll again
print(f"store: {len(store.load())} rows, "
      f"{len(store.distinct_endpoints())} distinct endpoints")

# --- Verification against a loopback "exit": ok only when the echoed
# address equals the entry address.
echo = run_echo_server(("127.0.0.1", 0), log_path=tmp / "echo.tsv")
exit_node = LocalProxy().start()
entry = DirectResipEntry(service="demo-svc", ip=parse_ip("127.0.0.1"),
                         port=exit_node.address[1],
                         fetched_at=dt.datetime.now(dt.timezone.utc),
                         source="api", proxy_protocol="http")
result = verify_direct(entry, echo.url, timeout=5)
print(f"\nloopback entry verified: ok={result.ok} exit={result.exit_ip}")

dead = DirectResipEntry(service="demo-svc", ip=parse_ip("127.0.0.1"), port=1,
                        fetched_at=dt.datetime.now(dt.timezone.utc),
                        source="api")
print(f"dead entry: ok={verify_direct(dead, echo.url, timeout=2).ok} "
      f"({verify_direct(dead, echo.url, timeout=2).failure_class})")

echo.stop()
exit_node.stop()
