"""Passive-DNS extraction of direct proxy exits and temporal analytics.

Input is a tab-separated stream of aggregate records
(fqdn, rrtype, rdata, first_seen, last_seen, query_count). Records are
matched to services by apex domain (plus optional label globs), and the
matched records drive per-exit lifetimes, daily-active series, usage
volume, and crest/trough evolution metrics.

An aggregate record is taken to mean the address was active on every day of
[first_seen, last_seen]; per-day observations are not recoverable from the
aggregates. Lifetimes are service-specific: the same address under two
services is tracked twice.
"""

from __future__ import annotations

import datetime as dt
import ipaddress
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (ApexDomain, DateDay, DomainError, Interval, IpAddr,
                   ServiceId, covered_days, day_span, merge_intervals,
                   parse_day, parse_ip, to_apex)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PdnsRecord:
    fqdn: str
    rrtype: str  # A | AAAA
    rdata: IpAddr
    first_seen: DateDay
    last_seen: DateDay
    query_count: int

    def __post_init__(self):
        if self.rrtype not in ("A", "AAAA"):
            raise ValueError(f"unknown rrtype: {self.rrtype}")
        expected = 4 if self.rrtype == "A" else 6
        if self.rdata.version != expected:
            raise ValueError(f"{self.rrtype} record with IPv{self.rdata.version} rdata")
        if self.first_seen > self.last_seen:
            raise ValueError("first_seen after last_seen")
        if self.query_count < 0:
            raise ValueError("negative query_count")

    @property
    def interval(self) -> Interval:
        return Interval(self.first_seen, self.last_seen)


def parse_record_line(line: str) -> PdnsRecord:
    fqdn, rrtype, rdata, first, last, count = line.split("\t")
    return PdnsRecord(fqdn.strip().lower(), rrtype.strip(), parse_ip(rdata),
                      parse_day(first), parse_day(last), int(count))


def read_pdns_stream(path) -> tuple[list[PdnsRecord], int]:
    """Parse a stream file; malformed lines are skipped and counted."""
    records = []
    malformed = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            try:
                records.append(parse_record_line(line))
            except (ValueError, IndexError) as exc:
                malformed += 1
                log.warning("%s:%d: bad record: %s", path, lineno, exc)
    return records, malformed


def write_pdns_stream(records: list[PdnsRecord], path, header: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header)
        for r in records:
            fh.write(f"{r.fqdn}\t{r.rrtype}\t{r.rdata}\t{r.first_seen.isoformat()}"
                     f"\t{r.last_seen.isoformat()}\t{r.query_count}\n")


# ---------------------------------------------------------------------------
# service matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ServiceDomainPattern:
    """Which DNS names belong to a service: apex domains plus optional label
    globs over the part left of the apex, where `*` matches one DNS label."""

    service: ServiceId
    apexes: tuple[ApexDomain, ...]
    label_globs: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.apexes:
            raise ValueError("pattern needs at least one apex")

    def matches(self, fqdn: str, apex: ApexDomain) -> bool:
        if apex not in self.apexes:
            return False
        if not self.label_globs:
            return True
        sub = fqdn[:-(len(apex.name) + 1)] if fqdn != apex.name else ""
        return any(_glob_match(glob, sub) for glob in self.label_globs)


def _glob_match(glob: str, sub: str) -> bool:
    if not sub:
        return glob == ""
    glob_labels = glob.split(".")
    sub_labels = sub.split(".")
    if len(glob_labels) != len(sub_labels):
        return False
    return all(g == "*" or g == s for g, s in zip(glob_labels, sub_labels))


def pattern_for_domain(service: ServiceId, resolution_domain: str) -> ServiceDomainPattern:
    """Build a pattern from a resolution domain; a subdomain scopes matching
    to names one label under it (e.g. ju1.kgvps.com -> glob *.ju1)."""
    apex = to_apex(resolution_domain)
    domain = resolution_domain.strip().lower().rstrip(".")
    if domain == apex.name:
        return ServiceDomainPattern(service, (apex,))
    prefix = domain[:-(len(apex.name) + 1)]
    return ServiceDomainPattern(service, (apex,), label_globs=("*." + prefix,))


def load_service_patterns(path=None) -> list[ServiceDomainPattern]:
    """The bundled default: every service known to expose exits through DNS."""
    if path is None:
        text = resources.files("resipmon.data").joinpath(
            "dp_services.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    patterns = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        service, domain = line.split("\t")
        patterns.append(pattern_for_domain(service, domain))
    return patterns


TaggedRecord = tuple[PdnsRecord, ServiceId]


@dataclass
class MatchResult:
    tagged: list[TaggedRecord]
    conflicts: list[tuple[str, tuple[ServiceId, ...]]] = field(default_factory=list)
    matched_records: int = 0
    dropped_records: int = 0


def match_service_domains(records: list[PdnsRecord],
                          patterns: list[ServiceDomainPattern]) -> MatchResult:
    """Tag records with their services; multi-service hits are kept under
    every matching service and reported as conflicts."""
    result = MatchResult(tagged=[])
    apex_cache: dict[str, ApexDomain | None] = {}
    for record in records:
        apex = apex_cache.get(record.fqdn, "")
        if apex == "":
            try:
                apex = to_apex(record.fqdn)
            except DomainError:
                apex = None
            apex_cache[record.fqdn] = apex
        if apex is None:
            result.dropped_records += 1
            continue
        services = tuple(p.service for p in patterns if p.matches(record.fqdn, apex))
        if not services:
            result.dropped_records += 1
            continue
        result.matched_records += 1
        if len(services) > 1:
            result.conflicts.append((record.fqdn, services))
        for service in services:
            result.tagged.append((record, service))
    return result


# ---------------------------------------------------------------------------
# per-exit and per-service analytics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResipLifetime:
    ip: IpAddr
    service: ServiceId
    intervals: tuple[Interval, ...]  # merged, disjoint, sorted
    lifetime_days: int

    def active_on(self, day: DateDay) -> bool:
        return any(iv.covers(day) for iv in self.intervals)


@dataclass
class DpResipSummary:
    service: ServiceId
    ips: set[IpAddr] = field(default_factory=set)
    fqdns: set[str] = field(default_factory=set)

    @property
    def resip_count(self) -> int:
        return len(self.ips)

    @property
    def fqdn_count(self) -> int:
        return len(self.fqdns)


def extract_dp_resips(tagged: list[TaggedRecord]) -> dict[ServiceId, DpResipSummary]:
    out: dict[ServiceId, DpResipSummary] = {}
    for record, service in tagged:
        summary = out.setdefault(service, DpResipSummary(service))
        summary.ips.add(record.rdata)
        summary.fqdns.add(record.fqdn)
    return out


def compute_lifetimes(tagged: list[TaggedRecord]) -> list[ResipLifetime]:
    """Merge each (service, address) pair's observation windows into its
    service-specific lifetime in distinct covered days."""
    grouped: dict[tuple[ServiceId, IpAddr], list[Interval]] = {}
    for record, service in tagged:
        grouped.setdefault((service, record.rdata), []).append(record.interval)
    out = []
    for (service, ip), intervals in grouped.items():
        merged = tuple(merge_intervals(intervals))
        out.append(ResipLifetime(ip, service, merged,
                                 sum(iv.day_count for iv in merged)))
    out.sort(key=lambda lt: (lt.service, str(lt.ip)))
    return out


@dataclass
class DailyActiveSeries:
    service: ServiceId
    days: list[DateDay]
    counts: list[int]

    def as_dict(self) -> dict[DateDay, int]:
        return dict(zip(self.days, self.counts))


def daily_active_series(tagged: list[TaggedRecord],
                        service: ServiceId) -> DailyActiveSeries:
    """Distinct active addresses per day over the service's observed span.

    An address is active on every day of each of its merged observation
    windows, so the series sums to the total of per-address lifetimes.
    """
    mine = [(r, s) for r, s in tagged if s == service]
    if not mine:
        return DailyActiveSeries(service, [], [])
    start = min(r.first_seen for r, _ in mine)
    end = max(r.last_seen for r, _ in mine)
    n_days = day_span(start, end)
    delta = np.zeros(n_days + 1, dtype=np.int64)
    for lifetime in compute_lifetimes(mine):
        for iv in lifetime.intervals:
            delta[(iv.first - start).days] += 1
            delta[(iv.last - start).days + 1] -= 1
    counts = np.cumsum(delta[:-1])
    days = [start + dt.timedelta(days=i) for i in range(n_days)]
    return DailyActiveSeries(service, days, [int(c) for c in counts])


@dataclass
class UsageSummary:
    """Query-volume lower bound for one service; daily usage is kept exact
    so daily_usage * lifetime_days reconstructs total_queries."""

    service: ServiceId
    resip_count: int
    fqdn_count: int
    lifetime_days: int  # whole-day span of the service's observations
    total_queries: int
    daily_usage: Fraction

    @property
    def daily_usage_float(self) -> float:
        return float(self.daily_usage)


def usage_volume(tagged: list[TaggedRecord], service: ServiceId) -> UsageSummary:
    mine = [r for r, s in tagged if s == service]
    if not mine:
        return UsageSummary(service, 0, 0, 0, 0, Fraction(0))
    total = sum(r.query_count for r in mine)
    span = day_span(min(r.first_seen for r in mine), max(r.last_seen for r in mine))
    return UsageSummary(service=service,
                        resip_count=len({r.rdata for r in mine}),
                        fqdn_count=len({r.fqdn for r in mine}),
                        lifetime_days=span, total_queries=total,
                        daily_usage=Fraction(total, span))


@dataclass
class CrestTrough:
    crest_day: DateDay
    crest_value: float
    days_to_crest: int
    trough_day: DateDay | None
    crest_to_trough_days: int | None


def smooth_series(counts: list[int], window: int = 7) -> list[float]:
    """Centered moving average; the window shrinks at the series edges."""
    if window <= 1:
        return [float(c) for c in counts]
    half = window // 2
    out = []
    for i in range(len(counts)):
        lo = max(0, i - half)
        hi = min(len(counts), i + half + 1)
        out.append(sum(counts[lo:hi]) / (hi - lo))
    return out


def crest_trough_metrics(series: DailyActiveSeries, window: int = 7,
                         trough_fraction: float = 0.05) -> CrestTrough:
    """Crest = global max of the smoothed series (earliest on ties); trough =
    first later day the smoothed series drops below trough_fraction * crest."""
    if not series.days:
        raise ValueError("empty series")
    smoothed = smooth_series(series.counts, window)
    crest_idx = max(range(len(smoothed)), key=lambda i: (smoothed[i], -i))
    crest_value = smoothed[crest_idx]
    trough_idx = None
    for i in range(crest_idx + 1, len(smoothed)):
        if smoothed[i] < trough_fraction * crest_value:
            trough_idx = i
            break
    return CrestTrough(
        crest_day=series.days[crest_idx],
        crest_value=crest_value,
        days_to_crest=crest_idx,
        trough_day=series.days[trough_idx] if trough_idx is not None else None,
        crest_to_trough_days=(trough_idx - crest_idx) if trough_idx is not None else None,
    )


def lifetime_cdf(lifetimes: list[ResipLifetime]) -> list[tuple[int, float]]:
    """(days, cumulative fraction of exits with lifetime <= days) rows."""
    if not lifetimes:
        return []
    values = sorted(lt.lifetime_days for lt in lifetimes)
    n = len(values)
    rows = []
    seen = 0
    for days in sorted(set(values)):
        while seen < n and values[seen] <= days:
            seen += 1
        rows.append((days, seen / n))
    return rows


# ---------------------------------------------------------------------------
# synthetic stream generation (hermetic test data)
# ---------------------------------------------------------------------------

DEFAULT_LIFETIME_MIX = ((0.53, 1, 1), (0.38, 2, 9), (0.09, 10, 60))


def gen_pdns_stream(patterns: list[ServiceDomainPattern], ips_per_service: int,
                    seed: int = 0,
                    lifetime_mix=DEFAULT_LIFETIME_MIX,
                    window: tuple[str, str] = ("2019-01-01", "2021-12-31"),
                    noise_records: int = 0) -> list[PdnsRecord]:
    """Synthetic aggregate stream with a configurable lifetime mix.

    Mix rows are (fraction, min_days, max_days); fractions are applied as
    exact proportions of ips_per_service (largest remainder last). Each
    exit's lifetime is split over 1-3 records across 1-3 names so interval
    merging is exercised; records come out shuffled.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    start_day = parse_day(window[0])
    end_day = parse_day(window[1])
    horizon = (end_day - start_day).days + 1
    records: list[PdnsRecord] = []
    used_ips: set[int] = set()

    def fresh_ip() -> IpAddr:
        while True:
            raw = int(rng.integers(0x24000000, 0x78000000))
            if raw not in used_ips:
                used_ips.add(raw)
                return ipaddress.IPv4Address(raw)

    for pattern in patterns:
        apex = pattern.apexes[0]
        if pattern.label_globs:
            prefix = pattern.label_globs[0].split(".", 1)[1] + "."
        else:
            prefix = ""
        names = [f"n{j:03d}.{prefix}{apex.name}" for j in range(8)]
        quotas = [int(frac * ips_per_service) for frac, _, _ in lifetime_mix]
        quotas[-1] += ips_per_service - sum(quotas)
        for (frac, lo, hi), quota in zip(lifetime_mix, quotas):
            for _ in range(quota):
                lifetime = int(rng.integers(lo, hi + 1))
                ip = fresh_ip()
                first_off = int(rng.integers(0, max(1, horizon - lifetime)))
                first = start_day + dt.timedelta(days=first_off)
                last = first + dt.timedelta(days=lifetime - 1)
                pieces = _split_interval(rng, first, last)
                for piece_first, piece_last in pieces:
                    records.append(PdnsRecord(
                        fqdn=names[int(rng.integers(0, len(names)))],
                        rrtype="A", rdata=ip,
                        first_seen=piece_first, last_seen=piece_last,
                        query_count=int(rng.integers(0, 5000))))

    for j in range(noise_records):
        ip = fresh_ip()
        first_off = int(rng.integers(0, horizon))
        first = start_day + dt.timedelta(days=first_off)
        records.append(PdnsRecord(f"www.noise{j:03d}.net", "A", ip, first, first,
                                  int(rng.integers(0, 100))))

    order = rng.permutation(len(records))
    return [records[int(i)] for i in order]


def _split_interval(rng, first: DateDay, last: DateDay) -> list[tuple[DateDay, DateDay]]:
    total = (last - first).days + 1
    n_pieces = int(rng.integers(1, 4))
    if total < n_pieces * 2:
        return [(first, last)]
    cuts = sorted(int(c) for c in rng.choice(total - 1, size=n_pieces - 1,
                                             replace=False))
    bounds = [-1] + cuts + [total - 1]
    pieces = []
    for i in range(n_pieces):
        lo = bounds[i] + 1
        hi = bounds[i + 1]
        overlap = int(rng.integers(0, 2)) if i > 0 else 0
        lo = max(0, lo - overlap)
        pieces.append((first + dt.timedelta(days=lo), first + dt.timedelta(days=hi)))
    return pieces
