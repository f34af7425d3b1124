"""Landscape, overlap, density, and threat-intelligence analytics.

All operations are pure offline aggregations over ip sets and flat-file
feeds. Every emitted percentage sits next to its numerator and denominator
(or is recomputable from the same report), and the text tables have CSV
twins with full precision.
"""

from __future__ import annotations

import datetime as dt
import ipaddress
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .core import Cidr, IpAddr, parse_cidr, parse_ip, parse_timestamp
from .tables import fmt_count, fmt_pct, render_table

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# geo enrichment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeoRecord:
    ip: IpAddr
    matched: bool = False
    country: str | None = None   # ISO code
    region: str | None = None
    city: str | None = None
    asn: int | None = None
    isp: str | None = None
    org_name: str | None = None
    org_type: str | None = None


class GeoTable:
    """Offline prefix table with longest-prefix-match lookups.

    CSV rows: cidr, country, region, city, asn, isp, org_name, org_type.
    Empty CSV fields load as None, never as empty strings.
    """

    def __init__(self, rows: Iterable[tuple[Cidr, dict]]):
        # {(version, prefixlen): {masked int network address: attrs}}
        self._buckets: dict[tuple[int, int], dict[int, dict]] = {}
        for cidr, attrs in rows:
            bucket = self._buckets.setdefault((cidr.version, cidr.prefixlen), {})
            bucket[int(cidr.network_address)] = attrs

    @classmethod
    def from_csv(cls, path) -> "GeoTable":
        import csv

        rows = []
        with open(path, encoding="utf-8") as fh:
            for row in csv.reader(line for line in fh if not line.startswith("#")):
                if not row or row[0].strip() == "cidr":
                    continue
                cidr = parse_cidr(row[0])
                fields = row[1:] + [""] * (7 - len(row[1:]))
                attrs = {
                    "country": fields[0].strip() or None,
                    "region": fields[1].strip() or None,
                    "city": fields[2].strip() or None,
                    "asn": int(fields[3]) if fields[3].strip() else None,
                    "isp": fields[4].strip() or None,
                    "org_name": fields[5].strip() or None,
                    "org_type": fields[6].strip() or None,
                }
                rows.append((cidr, attrs))
        return cls(rows)

    def lookup(self, ip: IpAddr) -> GeoRecord:
        max_bits = 32 if ip.version == 4 else 128
        raw = int(ip)
        lengths = sorted((plen for ver, plen in self._buckets if ver == ip.version),
                         reverse=True)
        for plen in lengths:
            masked = (raw >> (max_bits - plen)) << (max_bits - plen) if plen else 0
            attrs = self._buckets[(ip.version, plen)].get(masked)
            if attrs is not None:
                return GeoRecord(ip=ip, matched=True, **attrs)
        return GeoRecord(ip=ip, matched=False)


class CachedGeoClient:
    """Optional remote filler for table misses: disk cache, request budget."""

    def __init__(self, fetch: Callable[[IpAddr], GeoRecord | None],
                 cache_path, budget: int = 1000):
        self.fetch = fetch
        self.cache_path = Path(cache_path)
        self.budget = budget
        self.spent = 0
        self._cache: dict[str, dict | None] = {}
        if self.cache_path.exists():
            self._cache = json.loads(self.cache_path.read_text(encoding="utf-8"))

    def lookup(self, ip: IpAddr) -> GeoRecord | None:
        key = str(ip)
        if key in self._cache:
            cached = self._cache[key]
            return None if cached is None else GeoRecord(ip=ip, matched=True, **cached)
        if self.spent >= self.budget:
            return None
        self.spent += 1
        record = self.fetch(ip)
        if record is None:
            self._cache[key] = None
        else:
            self._cache[key] = {k: getattr(record, k) for k in
                                ("country", "region", "city", "asn", "isp",
                                 "org_name", "org_type")}
        self.cache_path.write_text(json.dumps(self._cache, sort_keys=True),
                                   encoding="utf-8")
        return self.lookup(ip)


def geo_enrich(ips: Iterable[IpAddr], table: GeoTable,
               client: CachedGeoClient | None = None) -> dict[IpAddr, GeoRecord]:
    """Longest-prefix match against the table; a remote client (when
    configured) fills misses; anything left is an explicit unknown record."""
    out = {}
    for ip in ips:
        record = table.lookup(ip)
        if not record.matched and client is not None:
            remote = client.lookup(ip)
            if remote is not None:
                record = remote
        out[ip] = record
    return out


# ---------------------------------------------------------------------------
# distribution reports
# ---------------------------------------------------------------------------

DIMENSIONS = ("country", "region", "city", "isp", "asn", "/8", "/16")


def _group_key(ip: IpAddr, record: GeoRecord, dimension: str) -> str | None:
    if dimension in ("country", "region", "city", "isp"):
        return getattr(record, dimension)
    if dimension == "asn":
        return f"AS{record.asn}" if record.asn is not None else None
    if dimension in ("/8", "/16"):
        if ip.version != 4:
            return None
        plen = 8 if dimension == "/8" else 16
        network = ipaddress.ip_network((int(ip) >> (32 - plen) << (32 - plen), plen))
        return str(network)
    raise ValueError(f"unknown dimension: {dimension}")


@dataclass
class DimensionTable:
    dimension: str
    total_ips: int
    distinct_groups: int
    rows: list[tuple[str, int, float]]  # (group, count, fraction), ranked
    unknown_ips: int = 0

    def top(self, n: int) -> list[tuple[str, int, float]]:
        return self.rows[:n]


def distribution_report(geo: dict[IpAddr, GeoRecord],
                        dimensions: Iterable[str] = DIMENSIONS,
                        ) -> dict[str, DimensionTable]:
    """Ranked distinct-group tables per dimension; fractions are of the whole
    ip set. Addresses without a value for a dimension are tallied as unknown."""
    out = {}
    total = len(geo)
    for dimension in dimensions:
        counts: dict[str, int] = {}
        unknown = 0
        for ip, record in geo.items():
            key = _group_key(ip, record, dimension)
            if key is None:
                unknown += 1
                continue
            counts[key] = counts.get(key, 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        out[dimension] = DimensionTable(
            dimension=dimension, total_ips=total, distinct_groups=len(counts),
            rows=[(g, c, c / total if total else 0.0) for g, c in ranked],
            unknown_ips=unknown)
    return out


def format_top_table(table: DimensionTable, n: int = 10) -> str:
    """Ranked entity table: Entity | # RESIPs | % RESIPs."""
    rows = [[group, fmt_count(count), fmt_pct(frac)]
            for group, count, frac in table.top(n)]
    return render_table(["Entity", "# RESIPs", "% RESIPs"], rows)


def landscape_summary(groups: dict[str, set[IpAddr]],
                      geo: dict[IpAddr, GeoRecord]) -> list[dict]:
    """Per-group distinct counts: IPs, /16 IPv4, /8 IPv4, AS, Countries, ISPs."""
    rows = []
    for name, ips in groups.items():
        p16 = {_group_key(ip, geo[ip], "/16") for ip in ips if ip.version == 4}
        p8 = {_group_key(ip, geo[ip], "/8") for ip in ips if ip.version == 4}
        asns = {geo[ip].asn for ip in ips if geo[ip].asn is not None}
        countries = {geo[ip].country for ip in ips if geo[ip].country}
        isps = {geo[ip].isp for ip in ips if geo[ip].isp}
        rows.append({"group": name, "ips": len(ips), "p16": len(p16),
                     "p8": len(p8), "asn": len(asns),
                     "countries": len(countries), "isps": len(isps)})
    return rows


def format_landscape_table(rows: list[dict]) -> str:
    """Group overview: Group | IPs | /16 IPv4 | /8 IPv4 | AS | Countries | ISPs."""
    headers = ["Group", "IPs", "/16 IPv4", "/8 IPv4", "AS", "Countries", "ISPs"]
    body = [[r["group"], fmt_count(r["ips"]), fmt_count(r["p16"]),
             fmt_count(r["p8"]), fmt_count(r["asn"]), fmt_count(r["countries"]),
             fmt_count(r["isps"])] for r in rows]
    return render_table(headers, body)


def heatmap_rows(geo: dict[IpAddr, GeoRecord],
                 level: str = "country") -> list[tuple[str, int]]:
    """(region, count) rows, plot-ready."""
    table = distribution_report(geo, dimensions=(level,))[level]
    return [(group, count) for group, count, _ in table.rows]


# ---------------------------------------------------------------------------
# prefix density
# ---------------------------------------------------------------------------

@dataclass
class DensityReport:
    prefix_len: int
    min_fill: float
    rows: list[tuple[Cidr, float]]  # fill-descending
    ipv6_excluded: int = 0

    def member_total(self) -> int:
        size = 1 << (32 - self.prefix_len)
        return round(sum(fill for _, fill in self.rows) * size)


def prefix_density(ips: Iterable[IpAddr], prefix_len: int,
                   min_fill: float = 0.0) -> DensityReport:
    """Fill fraction (distinct members / prefix size) per IPv4 prefix.

    Only prefixes at or above min_fill are returned, fill-descending. IPv6
    addresses are excluded and counted in the report notice.
    """
    if prefix_len not in (8, 16, 24):
        raise ValueError("prefix_len must be 8, 16 or 24")
    size = 1 << (32 - prefix_len)
    members: dict[int, set[int]] = {}
    ipv6 = 0
    for ip in set(ips):
        if ip.version != 4:
            ipv6 += 1
            continue
        members.setdefault(int(ip) >> (32 - prefix_len), set()).add(int(ip))
    if ipv6:
        log.info("prefix_density: %d IPv6 addresses excluded", ipv6)
    rows = []
    for base, member_set in members.items():
        fill = len(member_set) / size
        if fill >= min_fill:
            network = ipaddress.ip_network((base << (32 - prefix_len), prefix_len))
            rows.append((network, fill))
    rows.sort(key=lambda r: (-r[1], int(r[0].network_address)))
    return DensityReport(prefix_len=prefix_len, min_fill=min_fill, rows=rows,
                         ipv6_excluded=ipv6)


# ---------------------------------------------------------------------------
# set intersections and dataset overlap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntersectionRates:
    overlap: int
    rate_a: float | None  # overlap / |A|; None when A is empty
    rate_b: float | None


def intersection_rates(set_a: set, set_b: set) -> IntersectionRates:
    overlap = len(set_a & set_b)
    return IntersectionRates(
        overlap=overlap,
        rate_a=overlap / len(set_a) if set_a else None,
        rate_b=overlap / len(set_b) if set_b else None)


GRANULARITIES = ("ip", "/16", "/8")


def _granular(ips: set[IpAddr], granularity: str) -> set:
    if granularity == "ip":
        return set(ips)
    plen = 16 if granularity == "/16" else 8
    return {int(ip) >> (32 - plen) for ip in ips if ip.version == 4}


@dataclass(frozen=True)
class OverlapCell:
    overlap: int
    pct_prior: float | None  # with the prior dataset as denominator
    pct_ours: float | None   # with our group as denominator


@dataclass
class OverlapMatrix:
    groups: list[str]
    priors: list[str]
    cells: dict[tuple[str, str, str], OverlapCell] = field(default_factory=dict)


def dataset_overlap_matrix(ours: dict[str, set[IpAddr]],
                           priors: dict[str, set[IpAddr]]) -> OverlapMatrix:
    """Per (group, prior, granularity): overlap plus both overlap ratios,
    at address, /16 and /8 granularity."""
    matrix = OverlapMatrix(groups=list(ours), priors=list(priors))
    for group, group_ips in ours.items():
        for prior, prior_ips in priors.items():
            for granularity in GRANULARITIES:
                a = _granular(group_ips, granularity)
                b = _granular(prior_ips, granularity)
                rates = intersection_rates(a, b)
                matrix.cells[(group, prior, granularity)] = OverlapCell(
                    overlap=rates.overlap,
                    pct_prior=rates.rate_b, pct_ours=rates.rate_a)
    return matrix


def format_overlap_cell(cell: OverlapCell) -> str:
    prior_pct = fmt_pct(cell.pct_prior) if cell.pct_prior is not None else "n/a"
    ours_pct = fmt_pct(cell.pct_ours) if cell.pct_ours is not None else "n/a"
    return f"{fmt_count(cell.overlap)}, {prior_pct}, {ours_pct}"


def format_overlap_table(matrix: OverlapMatrix) -> str:
    """One row per group; per prior dataset three columns (IPs, /16 IPv4,
    /8 IPv4), each cell carrying overlap, ratio-to-prior, ratio-to-ours."""
    headers = ["Group"]
    for prior in matrix.priors:
        headers += [f"{prior} IPs", f"{prior} /16 IPv4", f"{prior} /8 IPv4"]
    rows = []
    for group in matrix.groups:
        row = [group]
        for prior in matrix.priors:
            for granularity in GRANULARITIES:
                row.append(format_overlap_cell(matrix.cells[(group, prior, granularity)]))
        rows.append(row)
    note = ("Each cell: overlap value, overlap ratio with the previous dataset "
            "as the denominator, overlap ratio with our dataset as the denominator.")
    return render_table(headers, rows, footnotes=[note])


# ---------------------------------------------------------------------------
# malicious traffic flows
# ---------------------------------------------------------------------------

DEFAULT_CATEGORIES = ("CryptoMining", "Remote control Trojan", "Worm", "Botnet",
                      "Rogue promotion", "Trojan")
OTHER_CATEGORY = "other"


@dataclass(frozen=True)
class MtfRecord:
    src_ip: IpAddr
    category: str
    subcategory: str
    timestamp: dt.datetime
    flow_count: int

    def __post_init__(self):
        if self.flow_count <= 0:
            raise ValueError("flow_count must be positive")


def read_mtf_feed(path) -> list[MtfRecord]:
    """Feed rows: src_ip, category, subcategory, timestamp, flow_count."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        ip, category, subcategory, stamp, flows = line.split("\t")
        out.append(MtfRecord(parse_ip(ip), category, subcategory,
                             parse_timestamp(stamp), int(flows)))
    return out


@dataclass
class CategoryStats:
    category: str
    subcategory: str | None
    mtf_count: int
    mtf_share: float
    resip_count: int
    resip_share: float


@dataclass
class MtfSummary:
    resip_set_size: int
    total_mtfs: int
    per_ip_totals: dict[IpAddr, int]
    threshold_fractions: dict[int, float]     # threshold -> |ips >= t| / set size
    categories: list[CategoryStats]
    subcategories: list[CategoryStats]
    outside_records: int = 0                  # records for ips outside the set
    outside_ips: int = 0


def mtf_summary(records: list[MtfRecord], resip_set: set[IpAddr],
                thresholds: tuple[int, ...] = (1, 5, 10),
                category_vocabulary: tuple[str, ...] = DEFAULT_CATEGORIES,
                ) -> MtfSummary:
    """Per-address flow totals with threshold fractions and category tables.

    Records for addresses outside the set are counted separately and never
    enter the fractions. Categories outside the configured vocabulary pass
    through under "other".
    """
    vocab = set(category_vocabulary)
    totals: dict[IpAddr, int] = {}
    by_category: dict[str, list[MtfRecord]] = {}
    by_subcategory: dict[tuple[str, str], list[MtfRecord]] = {}
    outside: set[IpAddr] = set()
    outside_records = 0
    total_mtfs = 0
    for record in records:
        if record.src_ip not in resip_set:
            outside.add(record.src_ip)
            outside_records += 1
            continue
        category = record.category if record.category in vocab else OTHER_CATEGORY
        totals[record.src_ip] = totals.get(record.src_ip, 0) + record.flow_count
        total_mtfs += record.flow_count
        by_category.setdefault(category, []).append(record)
        by_subcategory.setdefault((category, record.subcategory), []).append(record)

    denominator = len(resip_set)
    fractions = {}
    for threshold in thresholds:
        hits = sum(1 for flows in totals.values() if flows >= threshold)
        fractions[threshold] = hits / denominator if denominator else 0.0

    def stats(key_category, key_sub, group: list[MtfRecord]) -> CategoryStats:
        mtfs = sum(r.flow_count for r in group)
        ips = {r.src_ip for r in group}
        return CategoryStats(
            category=key_category, subcategory=key_sub, mtf_count=mtfs,
            mtf_share=mtfs / total_mtfs if total_mtfs else 0.0,
            resip_count=len(ips),
            resip_share=len(ips) / denominator if denominator else 0.0)

    categories = [stats(c, None, group) for c, group in by_category.items()]
    categories.sort(key=lambda s: -s.mtf_count)
    subcategories = [stats(c, s, group)
                     for (c, s), group in by_subcategory.items()]
    subcategories.sort(key=lambda s: (s.category, -s.mtf_count))
    return MtfSummary(resip_set_size=denominator, total_mtfs=total_mtfs,
                      per_ip_totals=totals, threshold_fractions=fractions,
                      categories=categories, subcategories=subcategories,
                      outside_records=outside_records, outside_ips=len(outside))


def format_mtf_threshold_table(groups: list[tuple[str, MtfSummary]]) -> str:
    """Threshold shares per group: RESIP Group | w MTFs | >= 5 MTFs | >= 10 MTFs."""
    thresholds = sorted(groups[0][1].threshold_fractions) if groups else (1, 5, 10)
    headers = ["RESIP Group"] + [
        "w MTFs" if t == 1 else f">= {t} MTFs" for t in thresholds]
    rows = [[name] + [fmt_pct(summary.threshold_fractions[t]) for t in thresholds]
            for name, summary in groups]
    return render_table(headers, rows)


def format_category_table(summary: MtfSummary, top_n: int = 5) -> str:
    """Malicious Category | MTFs | % MTFs | RESIPs | % RESIPs."""
    headers = ["Malicious Category", "MTFs", "% MTFs", "RESIPs", "% RESIPs"]
    rows = [[s.category, fmt_count(s.mtf_count), fmt_pct(s.mtf_share),
             fmt_count(s.resip_count), fmt_pct(s.resip_share)]
            for s in summary.categories[:top_n]]
    return render_table(headers, rows,
                        footnotes=["MTFs denotes malicious traffic flows."])


def format_subcategory_table(summary: MtfSummary, per_category: int = 5) -> str:
    """Category | Subcategory | % MTFs | % RESIPs."""
    headers = ["Category", "Subcategory", "% MTFs", "% RESIPs"]
    rows = []
    seen: dict[str, int] = {}
    for s in summary.subcategories:
        if seen.get(s.category, 0) >= per_category:
            continue
        seen[s.category] = seen.get(s.category, 0) + 1
        rows.append([s.category, s.subcategory or "",
                     fmt_pct(s.mtf_share), fmt_pct(s.resip_share)])
    return render_table(headers, rows)


def gen_mtf_feed(ips: list[IpAddr], fractions: dict[int, float],
                 seed: int = 0,
                 categories: tuple[str, ...] = ("CryptoMining", "Botnet", "Worm"),
                 ) -> list[MtfRecord]:
    """Synthetic feed whose per-ip totals hit the given threshold fractions
    exactly (fractions maps threshold -> share of ips with totals >= it)."""
    import numpy as np

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = len(ips)
    thresholds = sorted(fractions, reverse=True)  # e.g. [10, 5, 1]
    quota = {t: round(fractions[t] * n) for t in thresholds}
    totals = []
    assigned = 0
    for i, threshold in enumerate(thresholds):
        upper = thresholds[i - 1] if i else None
        count = quota[threshold] - assigned
        for _ in range(count):
            lo = threshold
            hi = (upper - 1) if upper is not None else threshold + 20
            totals.append(int(rng.integers(lo, max(lo, hi) + 1)))
        assigned = quota[threshold]
    totals += [0] * (n - len(totals))
    order = rng.permutation(n)
    stamp = dt.datetime(2021, 6, 1, tzinfo=dt.timezone.utc)
    records = []
    for ip, total in zip(ips, (totals[int(i)] for i in order)):
        remaining = total
        while remaining > 0:
            flows = int(rng.integers(1, remaining + 1))
            category = categories[int(rng.integers(0, len(categories)))]
            records.append(MtfRecord(ip, category, f"{category}-sub",
                                     stamp, flows))
            remaining -= flows
    return records


# ---------------------------------------------------------------------------
# host reports (server-side maliciousness)
# ---------------------------------------------------------------------------

ASSOC_TYPES = ("embedding", "communicating", "hosting")


@dataclass(frozen=True)
class HostReport:
    ip: IpAddr
    malicious_urls: tuple[str, ...] = ()
    malware_assocs: tuple[tuple[str, str], ...] = ()  # (hash, assoc_type)

    def __post_init__(self):
        for _, assoc_type in self.malware_assocs:
            if assoc_type not in ASSOC_TYPES:
                raise ValueError(f"unknown association type: {assoc_type}")


@dataclass(frozen=True)
class MaliciousnessVerdict:
    malicious: bool
    reasons: tuple[str, ...]


def host_maliciousness(report: HostReport) -> MaliciousnessVerdict:
    """Strong-indicator rule: malicious iff the address hosts malicious URLs
    or hosts malware. Embedding/communicating associations are recorded as
    reasons but are weak indicators and never trigger the flag."""
    reasons = []
    malicious = False
    if report.malicious_urls:
        malicious = True
        reasons.append(f"malicious_urls:{len(report.malicious_urls)}")
    counts = {t: 0 for t in ASSOC_TYPES}
    for _, assoc_type in report.malware_assocs:
        counts[assoc_type] += 1
    if counts["hosting"]:
        malicious = True
        reasons.append(f"hosting_malware:{counts['hosting']}")
    for weak in ("embedding", "communicating"):
        if counts[weak]:
            reasons.append(f"weak_{weak}:{counts[weak]}")
    return MaliciousnessVerdict(malicious=malicious, reasons=tuple(reasons))


def read_host_reports(path) -> list[HostReport]:
    """JSONL: {"ip":..., "malicious_urls": [...], "malware": [[hash, type]...]}."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out.append(HostReport(
            ip=parse_ip(d["ip"]),
            malicious_urls=tuple(d.get("malicious_urls", ())),
            malware_assocs=tuple((h, t) for h, t in d.get("malware", ()))))
    return out


# ---------------------------------------------------------------------------
# supply-chain labels and port exposure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SipsRateResult:
    labeled_sips: int
    sample_size: int
    denominator: int
    rate: float | None  # None for an empty denominator


def sips_rate(sample: Iterable[IpAddr], labels: dict[IpAddr, bool],
              exclude_unlabeled: bool = False) -> SipsRateResult:
    """Share of the sample labelled as rapid-redial VPS addresses.

    Unlabeled sample members count toward the denominator unless
    exclude_unlabeled is set (then only labeled ones do).
    """
    sample = list(sample)
    labeled_sips = sum(1 for ip in sample if labels.get(ip) is True)
    if exclude_unlabeled:
        denominator = sum(1 for ip in sample if ip in labels)
    else:
        denominator = len(sample)
    rate = labeled_sips / denominator if denominator else None
    return SipsRateResult(labeled_sips=labeled_sips, sample_size=len(sample),
                          denominator=denominator, rate=rate)


@dataclass
class PortExposure:
    exposed_ips: int                      # distinct addresses with >= 1 port
    per_port: list[tuple[int, int]]       # (port, distinct ip count), ranked


def port_exposure_summary(entries) -> PortExposure:
    """Distinct listening addresses and the ports they expose, from
    collected direct-exit entries."""
    ips: set[IpAddr] = set()
    by_port: dict[int, set[IpAddr]] = {}
    for entry in entries:
        ips.add(entry.ip)
        by_port.setdefault(entry.port, set()).add(entry.ip)
    ranked = sorted(((port, len(members)) for port, members in by_port.items()),
                    key=lambda r: (-r[1], r[0]))
    return PortExposure(exposed_ips=len(ips), per_port=ranked)
