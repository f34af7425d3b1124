import datetime as dt

import pytest

from proxy_servers import ForwardingHTTPProxy
from resipmon.collect import (ApiEndpointConfig, CONNECTION_REFUSED,
                              DirectResipEntry, DnsServiceConfig, RELAY_MISMATCH,
                              ResipStore, StubResolver, fetch_api_resips,
                              map_response, resolve_dns_resips, verify_direct)
from resipmon.core import parse_ip
from resipmon.infiltrate import run_echo_server

NOW = dt.datetime(2021, 4, 10, tzinfo=dt.timezone.utc)

SAMPLE = {"code": 0, "data": {"list": [
    {"ip": "1.2.3.4", "port": 8080},
    {"ip": "1.2.3.5", "port": 8081},
    {"ip": "1.2.3.6", "port": 8082},
]}}

CONFIG = ApiEndpointConfig(
    service="svcA", url="http://api.invalid/fetch",
    mapping={"items": "data.list", "ip": "ip", "port": "port"},
    sample_response=SAMPLE)


def test_config_validated_against_sample():
    with pytest.raises(ValueError):
        ApiEndpointConfig(service="bad", url="http://x/",
                          mapping={"items": "nope", "ip": "ip", "port": "port"},
                          sample_response=SAMPLE)
    with pytest.raises(ValueError):
        ApiEndpointConfig(service="bad", url="http://x/",
                          mapping={"items": "data.list", "ip": "ip"},
                          sample_response=SAMPLE)


def test_fetch_parses_sample_fixture():
    entries = fetch_api_resips(CONFIG, fetcher=lambda url: b'{"code":0,"data":{"list":'
                               b'[{"ip":"9.9.9.9","port":1080},'
                               b'{"ip":"9.9.9.10","port":1081},'
                               b'{"ip":"9.9.9.11","port":1082}]}}', now=NOW)
    assert len(entries) == 3
    assert entries[0].ip == parse_ip("9.9.9.9")
    assert entries[0].port == 1080
    assert entries[0].source == "api"
    assert entries[0].fetched_at == NOW


def test_fetch_empty_response_ok():
    entries = fetch_api_resips(CONFIG, fetcher=lambda url: b'{"code":0,"data":{"list":[]}}')
    assert entries == []


def test_fetch_missing_port_archives(tmp_path):
    raw = b'{"code":0,"data":{"list":[{"ip":"9.9.9.9"},{"ip":"9.9.9.10"}]}}'
    entries = fetch_api_resips(CONFIG, fetcher=lambda url: raw,
                               archive_dir=tmp_path, now=NOW)
    assert entries == []
    archived = list(tmp_path.iterdir())
    assert len(archived) == 1
    assert archived[0].read_bytes() == raw


def test_fetch_transport_failure_retries_then_skips(tmp_path):
    calls = []

    def flaky(url):
        calls.append(url)
        raise IOError("conn reset")

    entries = fetch_api_resips(CONFIG, fetcher=flaky, retries=2, backoff_s=0.0)
    assert entries == []
    assert len(calls) == 3


def test_fetch_recovers_after_retry():
    calls = []

    def flaky(url):
        calls.append(url)
        if len(calls) < 2:
            raise IOError("reset")
        return b'{"code":0,"data":{"list":[{"ip":"9.9.9.9","port":80}]}}'

    entries = fetch_api_resips(CONFIG, fetcher=flaky, retries=2, backoff_s=0.0)
    assert len(entries) == 1


def test_map_response_credentials():
    config = ApiEndpointConfig(
        service="svcB", url="http://x/",
        mapping={"items": "", "ip": "addr", "port": "p",
                 "username": "user", "password": "pass"},
        sample_response=[{"addr": "1.1.1.1", "p": 80, "user": "u", "pass": "w"}])
    entries = map_response(config, config.sample_response, NOW)
    assert entries[0].credentials == ("u", "w")


# --- DNS ---------------------------------------------------------------------

def test_resolve_stub_two_addresses():
    resolver = StubResolver({"d1.svc.com": ["1.2.3.4", "1.2.3.5"]})
    configs = [DnsServiceConfig("svc", ("d1.svc.com",), port=62456)]
    entries, failures = resolve_dns_resips(configs, resolver, now=NOW)
    assert len(entries) == 2
    assert failures == []
    assert all(e.source == "dns" and e.subdomain == "d1.svc.com" for e in entries)
    assert all(e.port == 62456 for e in entries)


def test_resolve_all_nxdomain():
    resolver = StubResolver({})
    configs = [DnsServiceConfig("svc", ("dead1.svc.com", "dead2.svc.com"), 80)]
    entries, failures = resolve_dns_resips(configs, resolver)
    assert entries == []
    assert len(failures) == 2


def test_resolve_aaaa_only():
    resolver = StubResolver({"v6.svc.com": ["2001:db8::1"]})
    configs = [DnsServiceConfig("svc", ("v6.svc.com",), 8080)]
    entries, _ = resolve_dns_resips(configs, resolver)
    assert entries[0].ip.version == 6


def test_dns_entries_match_their_pattern():
    from resipmon.pdns import pattern_for_domain

    pattern = pattern_for_domain("svc", "svc.com")
    resolver = StubResolver({"a.svc.com": ["1.1.1.1"], "b.svc.com": ["1.1.1.2"]})
    configs = [DnsServiceConfig("svc", ("a.svc.com", "b.svc.com"), 80)]
    entries, _ = resolve_dns_resips(configs, resolver)
    from resipmon.core import to_apex
    for entry in entries:
        assert pattern.matches(entry.subdomain, to_apex(entry.subdomain))


# --- verification ------------------------------------------------------------

def test_verify_loopback_direct(tmp_path):
    echo = run_echo_server(("127.0.0.1", 0), log_path=tmp_path / "echo.tsv")
    proxy = ForwardingHTTPProxy().start()
    try:
        entry = DirectResipEntry(service="svc", ip=parse_ip("127.0.0.1"),
                                 port=proxy.address[1], fetched_at=NOW,
                                 source="api", proxy_protocol="http")
        result = verify_direct(entry, echo.url, timeout=5)
        assert result.ok
        assert result.exit_ip == entry.ip
    finally:
        echo.stop()
        proxy.stop()


def test_verify_closed_port(tmp_path):
    entry = DirectResipEntry(service="svc", ip=parse_ip("127.0.0.1"), port=1,
                             fetched_at=NOW, source="api")
    result = verify_direct(entry, "http://127.0.0.1:9999/probe", timeout=2)
    assert not result.ok
    assert result.failure_class == CONNECTION_REFUSED


def test_verify_two_hop_chain_is_mismatch(tmp_path):
    echo = run_echo_server(("127.0.0.1", 0), log_path=tmp_path / "echo.tsv")
    hop_b = ForwardingHTTPProxy(bind=("127.0.0.1", 0),
                                egress_source="127.0.0.1").start()
    hop_a = ForwardingHTTPProxy(bind=("127.0.0.2", 0), chain=hop_b.address).start()
    try:
        entry = DirectResipEntry(service="svc", ip=parse_ip("127.0.0.2"),
                                 port=hop_a.address[1], fetched_at=NOW,
                                 source="api", proxy_protocol="http")
        result = verify_direct(entry, echo.url, timeout=5)
        assert not result.ok
        assert result.failure_class == RELAY_MISMATCH
        assert result.exit_ip == parse_ip("127.0.0.1")
    finally:
        echo.stop()
        hop_a.stop()
        hop_b.stop()


def test_verify_sends_exactly_one_probe(tmp_path):
    echo = run_echo_server(("127.0.0.1", 0), log_path=tmp_path / "echo.tsv")
    proxy = ForwardingHTTPProxy().start()
    try:
        entry = DirectResipEntry(service="svc", ip=parse_ip("127.0.0.1"),
                                 port=proxy.address[1], fetched_at=NOW,
                                 source="api")
        verify_direct(entry, echo.url, timeout=5)
        assert len(echo.log_path.read_text().splitlines()) == 1
    finally:
        echo.stop()
        proxy.stop()


# --- storage -----------------------------------------------------------------

def _entry(ip, port, stamp):
    return DirectResipEntry(service="svc", ip=parse_ip(ip), port=port,
                            fetched_at=stamp, source="api")


def test_store_round_trip_and_dedup(tmp_path):
    store = ResipStore(tmp_path / "store.tsv")
    first = [_entry("1.1.1.1", 80, NOW), _entry("1.1.1.2", 81, NOW)]
    store.append(first)
    before = store.distinct_endpoints()
    # identical poll at a later time: distinct endpoints unchanged
    later = NOW + dt.timedelta(hours=1)
    store.append([_entry("1.1.1.1", 80, later), _entry("1.1.1.2", 81, later)])
    assert store.distinct_endpoints() == before
    assert len(store.load()) == 4


def test_entry_invariants():
    with pytest.raises(ValueError):
        _entry("1.1.1.1", 0, NOW)
    with pytest.raises(ValueError):
        DirectResipEntry(service="s", ip=parse_ip("1.1.1.1"), port=80,
                         fetched_at=NOW, source="dns")  # no subdomain
    with pytest.raises(ValueError):
        DirectResipEntry(service="s", ip=parse_ip("1.1.1.1"), port=80,
                         fetched_at=NOW, source="weird")
