"""
Capturing backconnect exits with an echo server
===============================================

A backconnect service hides its exits behind a gateway. Relaying a tiny GET
through the gateway to a server we control reveals the exit address: the
echo server reports the transport peer it saw, plus the probe token, so a
forged header can never spoof the result.

Everything here runs on loopback: a toy gateway stands in for the service.
"""

import tempfile
import time
from pathlib import Path

from localproxy import LocalProxy
from resipmon.infiltrate import (ProbeSpec, campaign_stats,
                                 format_campaign_table, read_observation_log,
                                 run_echo_server, schedule_campaign, send_probe)

tmp = Path(tempfile.mkdtemp(prefix="demo-infiltrate-"))
echo = run_echo_server(("127.0.0.1", 0), log_path=tmp / "echo.tsv")
gateway = LocalProxy().start()
print(f"echo server: {echo.url}")
print(f"toy gateway: {gateway.address[0]}:{gateway.address[1]}")

# One probe: the echoed address is the exit the gateway used.
spec = ProbeSpec(service="demo-svc", gateway=gateway.address,
                 proxy_protocol="http", target=echo.url, token="demo-0",
                 timeout=5)
observation = send_probe(spec)
print(f"\nprobe success={observation.success} exit={observation.exit_ip} "
      f"latency={observation.latency * 1000:.1f}ms")

# A campaign paces probes (rate limit), funnels observations into an
# append-only log, and resumes from the log after a crash: tokens already
# logged are never probed again.
specs = [ProbeSpec("demo-svc", gateway.address, "http", echo.url,
                   f"demo-{i}", timeout=5) for i in range(25)]
log = tmp / "observations.tsv"
t0 = time.monotonic()
schedule_campaign(specs, log, rate=40, duration=0.3, concurrency=3)
print(f"\ninterrupted campaign wrote {len(read_observation_log(log))} records")
schedule_campaign(specs, log, rate=200, concurrency=3)  # resume
print(f"resumed to {len(read_observation_log(log))} records "
      f"in {time.monotonic() - t0:.1f}s total")

# Stats are always recomputed from the log, never kept in memory.
stats = campaign_stats(log)
print()
print(format_campaign_table(stats))
series = stats.series["demo-svc"]
print(f"cumulative series: {len(series)} day(s), "
      f"final unique exits {series[-1][2]}")

echo.stop()
gateway.stop()
