import datetime as dt
import ipaddress

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resipmon.core import (DomainError, Interval, covered_days, merge_intervals,
                           parse_cidr, parse_day, parse_ip, to_apex)

D = dt.date


# hand-resolved against the bundled suffix snapshot
APEX_ORACLE = [
    ("ju1.kgvps.com", "kgvps.com"),
    ("example.com", "example.com"),
    ("www.example.co.uk", "example.co.uk"),
    ("a.b.c.example.org", "example.org"),
    ("bj01.shenlongip.com", "shenlongip.com"),
    ("WWW.EXAMPLE.COM", "example.com"),
    ("foo.bar.com.cn", "bar.com.cn"),
    ("x.y.gov.cn", "y.gov.cn"),
    ("site.ac.uk", "site.ac.uk"),
    ("sub.site.ac.uk", "site.ac.uk"),
    ("example.xyz", "example.xyz"),
    ("deep.example.github.io", "example.github.io"),
    ("foo.blogspot.com", "foo.blogspot.com"),
    ("www.ck", "www.ck"),
    ("b.www.ck", "www.ck"),
    ("foo.city.kawasaki.jp", "city.kawasaki.jp"),
    ("x.blah.kawasaki.jp", "x.blah.kawasaki.jp"),
    ("upaix.cn", "upaix.cn"),
    ("91ip.vip", "91ip.vip"),
    ("a.b.example.com.au", "example.com.au"),
    ("unknown.tld-zzz", "unknown.tld-zzz"),
]


@pytest.mark.parametrize("host,expected", APEX_ORACLE)
def test_to_apex_oracle(host, expected):
    assert to_apex(host).name == expected


@pytest.mark.parametrize("host,expected", APEX_ORACLE)
def test_to_apex_idempotent(host, expected):
    apex = to_apex(host)
    assert to_apex(apex.name) == apex


@pytest.mark.parametrize("bad", [
    "com", "co.uk", "uk", "anything.ck", "blah.kawasaki.jp",  # suffix only
    "", " ", "http://x.com", "x..com", "-bad.com", "bad-.com",
    "exa mple.com", "1.2.3.4", "host:8080",
])
def test_to_apex_rejections(bad):
    with pytest.raises(DomainError):
        to_apex(bad)


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(D(2021, 1, 5), D(2021, 1, 1))
    assert Interval(D(2021, 1, 1), D(2021, 1, 3)).day_count == 3


def test_merge_intervals_basics():
    assert merge_intervals([]) == []
    merged = merge_intervals([Interval(D(2021, 1, 1), D(2021, 1, 3)),
                              Interval(D(2021, 1, 3), D(2021, 1, 5))])
    assert merged == [Interval(D(2021, 1, 1), D(2021, 1, 5))]
    # gap of zero uncovered days also merges
    merged = merge_intervals([Interval(D(2021, 1, 1), D(2021, 1, 2)),
                              Interval(D(2021, 1, 3), D(2021, 1, 4))])
    assert merged == [Interval(D(2021, 1, 1), D(2021, 1, 4))]
    # a real gap stays split
    merged = merge_intervals([Interval(D(2021, 1, 1), D(2021, 1, 2)),
                              Interval(D(2021, 1, 5), D(2021, 1, 6))])
    assert len(merged) == 2


_days = st.integers(min_value=0, max_value=400)


@st.composite
def _intervals(draw):
    start = draw(_days)
    length = draw(st.integers(min_value=0, max_value=30))
    base = D(2020, 1, 1)
    return Interval(base + dt.timedelta(days=start),
                    base + dt.timedelta(days=start + length))


@settings(max_examples=200, deadline=None)
@given(st.lists(_intervals(), max_size=60))
def test_merge_intervals_matches_day_enumeration(intervals):
    merged = merge_intervals(intervals)
    # disjoint, sorted, non-adjacent
    for a, b in zip(merged, merged[1:]):
        assert a.last + dt.timedelta(days=1) < b.first
    # union of covered days preserved exactly
    brute = set()
    for iv in intervals:
        day = iv.first
        while day <= iv.last:
            brute.add(day)
            day += dt.timedelta(days=1)
    mine = set()
    for iv in merged:
        day = iv.first
        while day <= iv.last:
            mine.add(day)
            day += dt.timedelta(days=1)
    assert mine == brute
    assert covered_days(intervals) == len(brute)


def test_merge_intervals_thousand():
    rng = np.random.default_rng(11)
    base = D(2019, 6, 1)
    intervals = [Interval(base + dt.timedelta(days=int(s)),
                          base + dt.timedelta(days=int(s + l)))
                 for s, l in zip(rng.integers(0, 900, 1000),
                                 rng.integers(0, 40, 1000))]
    brute = set()
    for iv in intervals:
        for off in range((iv.last - iv.first).days + 1):
            brute.add(iv.first + dt.timedelta(days=off))
    assert covered_days(intervals) == len(brute)


def test_cidr_membership_bitmask_bruteforce():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        raw_ip = int(rng.integers(0, 2 ** 32))
        plen = int(rng.integers(0, 33))
        raw_net = int(rng.integers(0, 2 ** 32))
        mask = ((1 << plen) - 1) << (32 - plen) if plen else 0
        network = ipaddress.ip_network((raw_net & mask, plen))
        ip = ipaddress.ip_address(raw_ip)
        expected = (raw_ip & mask) == (raw_net & mask)
        assert (ip in network) == expected


def test_parse_helpers():
    assert str(parse_ip(" 1.2.3.4 ")) == "1.2.3.4"
    assert parse_ip("::1").version == 6
    assert str(parse_cidr("10.0.0.0/8")) == "10.0.0.0/8"
    with pytest.raises(ValueError):
        parse_cidr("10.0.0.1/8")  # host bits set
    assert parse_day("2021-04-10") == D(2021, 4, 10)
    assert parse_day("2021-04-10T13:59:00+00:00") == D(2021, 4, 10)
