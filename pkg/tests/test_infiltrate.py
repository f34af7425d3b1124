import datetime as dt
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
import requests

from proxy_servers import ForwardingHTTPProxy, Socks5Proxy
from resipmon.core import parse_ip
from resipmon.infiltrate import (ExitObservation, GATEWAY_UNREACHABLE,
                                 PROXY_AUTH_FAILED, ProbeSpec, TOKEN_MISMATCH,
                                 campaign_stats, format_campaign_table,
                                 format_observation, parse_observation,
                                 read_observation_log, run_echo_server,
                                 schedule_campaign, send_probe)


@pytest.fixture()
def echo(tmp_path):
    handle = run_echo_server(("127.0.0.1", 0), log_path=tmp_path / "echo.tsv")
    yield handle
    handle.stop()


@pytest.fixture()
def proxy():
    server = ForwardingHTTPProxy().start()
    yield server
    server.stop()


# --- echo server -------------------------------------------------------------

def test_echo_two_line_body(echo):
    resp = requests.get(echo.url, params={"token": "abc"}, timeout=5)
    assert resp.status_code == 200
    assert resp.text.splitlines() == ["127.0.0.1", "abc"]


def test_echo_missing_token_400_and_unlogged(echo):
    resp = requests.get(echo.url, timeout=5)
    assert resp.status_code == 400
    assert not echo.log_path.exists() or echo.log_path.read_text() == ""


def test_echo_concurrent_log_integrity(echo):
    def hit(i):
        requests.get(echo.url, params={"token": f"tok-{i}"}, timeout=5)

    threads = [threading.Thread(target=hit, args=(i,)) for i in range(20)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    lines = echo.log_path.read_text().splitlines()
    assert len(lines) == 20
    tokens = set()
    for line in lines:
        stamp, client, token = line.split("\t")
        assert client == "127.0.0.1"
        tokens.add(token)
    assert tokens == {f"tok-{i}" for i in range(20)}


# --- probes ------------------------------------------------------------------

def _spec(echo, gateway, protocol="http", token="t1", **kw):
    return ProbeSpec(service="svc", gateway=gateway, proxy_protocol=protocol,
                     target=echo.url, token=token, timeout=5.0, **kw)


def test_probe_loopback_http(echo, proxy):
    obs = send_probe(_spec(echo, proxy.address))
    assert obs.success
    assert obs.exit_ip == parse_ip("127.0.0.1")
    assert obs.latency > 0
    # token appears exactly once in the echo server's log
    log_tokens = [line.split("\t")[2] for line in
                  echo.log_path.read_text().splitlines()]
    assert log_tokens.count("t1") == 1


def test_probe_loopback_connect(echo, proxy):
    obs = send_probe(_spec(echo, proxy.address, protocol="https_connect"))
    assert obs.success and obs.exit_ip == parse_ip("127.0.0.1")


def test_probe_loopback_socks5(echo):
    socks = Socks5Proxy().start()
    try:
        obs = send_probe(_spec(echo, socks.address, protocol="socks5"))
        assert obs.success and obs.exit_ip == parse_ip("127.0.0.1")
    finally:
        socks.stop()


def test_probe_socks5_with_credentials(echo):
    socks = Socks5Proxy(credentials=("user", "pw")).start()
    try:
        ok = send_probe(_spec(echo, socks.address, protocol="socks5",
                              credentials=("user", "pw")))
        assert ok.success
        bad = send_probe(_spec(echo, socks.address, protocol="socks5",
                               token="t2", credentials=("user", "wrong")))
        assert not bad.success
        assert bad.failure_class == PROXY_AUTH_FAILED
    finally:
        socks.stop()


def test_probe_dead_gateway(echo):
    obs = send_probe(_spec(echo, ("127.0.0.1", 1)))
    assert not obs.success
    assert obs.failure_class == GATEWAY_UNREACHABLE
    assert obs.exit_ip is None


def test_probe_wrong_token_echo(proxy):
    class WrongToken(BaseHTTPRequestHandler):
        def do_GET(self):
            body = b"127.0.0.1\nnot-your-token\n"
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), WrongToken)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/probe"
        spec = ProbeSpec(service="svc", gateway=proxy.address,
                         proxy_protocol="http", target=url, token="real",
                         timeout=5.0)
        obs = send_probe(spec)
        assert not obs.success
        assert obs.failure_class == TOKEN_MISMATCH
    finally:
        server.shutdown()
        server.server_close()


# --- observation log ---------------------------------------------------------

def test_observation_round_trip():
    obs = ExitObservation(
        service="svc", token="tok",
        observed_at=dt.datetime(2021, 4, 10, 12, 0, tzinfo=dt.timezone.utc),
        success=True, latency=0.1234, exit_ip=parse_ip("9.8.7.6"))
    parsed = parse_observation(format_observation(obs))
    assert parsed.service == "svc"
    assert parsed.exit_ip == obs.exit_ip
    assert parsed.success
    assert parsed.latency == pytest.approx(obs.latency, abs=1e-3)


# --- campaigns ---------------------------------------------------------------

def test_campaign_rate_and_log(echo, proxy, tmp_path):
    specs = [_spec(echo, proxy.address, token=f"c-{i}") for i in range(20)]
    log = tmp_path / "log.tsv"
    started = time.monotonic()
    dispatched = schedule_campaign(specs, log, rate=10, concurrency=4)
    elapsed = time.monotonic() - started
    assert dispatched == 20
    assert elapsed >= (20 - 1) / 10  # paced at <= 10 probes/s
    observations = read_observation_log(log)
    assert len(observations) == 20
    assert all(o.success for o in observations)


def test_campaign_duration_zero(echo, proxy, tmp_path):
    log = tmp_path / "log.tsv"
    dispatched = schedule_campaign([_spec(echo, proxy.address)], log,
                                   rate=100, duration=0)
    assert dispatched == 0
    assert not log.exists() or read_observation_log(log) == []


def test_campaign_resume_no_duplicate_tokens(echo, proxy, tmp_path):
    log = tmp_path / "log.tsv"
    specs = [_spec(echo, proxy.address, token=f"r-{i}") for i in range(12)]
    # interrupted run: the duration cuts the campaign mid-way
    schedule_campaign(specs, log, rate=30, duration=0.2, concurrency=2)
    partial = read_observation_log(log)
    assert 0 < len(partial) < 12
    # resume to completion, then once more (idempotent)
    schedule_campaign(specs, log, rate=200, concurrency=2)
    schedule_campaign(specs, log, rate=200, concurrency=2)
    tokens = [o.token for o in read_observation_log(log)]
    assert len(tokens) == 12
    assert sorted(tokens) == sorted(f"r-{i}" for i in range(12))


def test_campaign_backoff_on_dead_service(echo, proxy, tmp_path):
    log = tmp_path / "log.tsv"
    specs = [_spec(echo, ("127.0.0.1", 1), token=f"d-{i}") for i in range(3)]
    specs += [_spec(echo, proxy.address, token=f"ok-{i}") for i in range(3)]
    schedule_campaign(specs, log, rate=200, concurrency=2, backoff_base=0.05)
    observations = read_observation_log(log)
    assert len(observations) == 6
    assert sum(1 for o in observations if o.success) == 3


# --- statistics --------------------------------------------------------------

def _obs(service, token, day, ip, success=True):
    return ExitObservation(
        service=service, token=token,
        observed_at=dt.datetime(2021, 4, day, 8, 0, tzinfo=dt.timezone.utc),
        success=success, latency=0.01,
        exit_ip=parse_ip(ip) if success else None,
        failure_class=None if success else "relay_timeout")


FIXTURE = [
    _obs("A", "t1", 10, "10.0.0.1"),
    _obs("A", "t2", 10, "10.0.0.2"),
    _obs("A", "t3", 12, "10.0.0.1"),
    _obs("B", "t4", 11, "10.0.0.3"),
    _obs("B", "t5", 11, "10.0.0.3"),
    _obs("B", "t6", 11, "10.0.0.3", success=False),
]


def test_campaign_stats_fixture():
    stats = campaign_stats(FIXTURE)
    a, b = stats.per_service["A"], stats.per_service["B"]
    assert (a.unique_resips, a.successful_probes, a.days) == (2, 3, 2)
    assert (b.unique_resips, b.successful_probes, b.days) == (1, 2, 1)
    assert a.first == dt.date(2021, 4, 10) and a.last == dt.date(2021, 4, 12)
    assert stats.overall.unique_resips == 3
    assert stats.overall.successful_probes == 5
    for service in ("A", "B", "Overall"):
        uniques = [u for _, _, u in stats.series[service]]
        assert uniques == sorted(uniques)  # cumulative series never decreases
        assert uniques[-1] == stats.per_service.get(
            service, stats.overall).unique_resips


def test_campaign_stats_empty():
    stats = campaign_stats([])
    assert stats.per_service == {}
    assert stats.overall is None


def test_campaign_stats_unique_equals_bruteforce(echo, proxy, tmp_path):
    log = tmp_path / "log.tsv"
    specs = [_spec(echo, proxy.address, token=f"u-{i}") for i in range(8)]
    schedule_campaign(specs, log, rate=200)
    observations = read_observation_log(log)
    stats = campaign_stats(observations)
    brute = {str(o.exit_ip) for o in observations if o.success}
    assert stats.per_service["svc"].unique_resips == len(brute)


def test_campaign_table_layout():
    table = format_campaign_table(campaign_stats(FIXTURE))
    lines = table.splitlines()
    assert lines[0].split() == ["Provider", "Period", "Days", "RESIPs", "Probes"]
    assert lines[2].startswith("A")
    assert "04/10/21 - 04/12/21" in lines[2]
    assert lines[-1].startswith("Overall")
