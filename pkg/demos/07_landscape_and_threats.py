"""
Landscape distributions and threat-intelligence joins
=====================================================

With exits collected, the questions become: where do they sit in the
network and the world, how densely do they fill prefixes, how much do
datasets overlap, and what malicious activity shares their addresses.
All of it is offline aggregation over flat files.
"""

import datetime as dt
import ipaddress

import numpy as np

from resipmon.analytics import (GeoTable, HostReport, dataset_overlap_matrix,
                                distribution_report, format_category_table,
                                format_landscape_table,
                                format_mtf_threshold_table,
                                format_overlap_table, format_top_table,
                                gen_mtf_feed, geo_enrich, host_maliciousness,
                                intersection_rates, landscape_summary,
                                mtf_summary, prefix_density, sips_rate)
from resipmon.core import parse_cidr, parse_ip

rng = np.random.default_rng(5)
v4 = lambda raw: parse_ip(str(ipaddress.IPv4Address(int(raw))))

# A synthetic population: one dense home-network range and a sparse tail.
dense = [v4(0x0A640000 + i) for i in range(4000)]          # 10.100.0.0/17-ish
tail = [v4(int(x)) for x in rng.integers(0x30000000, 0xC0000000, 1500)]
ips = list(dict.fromkeys(dense + tail))

# Geo enrichment: longest-prefix match against an offline table.
table = GeoTable([
    (parse_cidr("10.0.0.0/8"), {"country": "CN", "region": "Zhejiang",
                                "city": "Hangzhou", "asn": 4134,
                                "isp": "ChinaNet", "org_name": None,
                                "org_type": None}),
    (parse_cidr("10.100.0.0/16"), {"country": "CN", "region": "Beijing",
                                   "city": "Beijing", "asn": 4808,
                                   "isp": "Unicom Beijing", "org_name": None,
                                   "org_type": None}),
])
geo = geo_enrich(ips, table)
report = distribution_report(geo)
print(format_top_table(report["isp"], n=5))
print(format_landscape_table(landscape_summary({"collected": set(ips)}, geo)))

# Prefix density: fully-filled /24s are the signature of rapid-redial VPS
# ranges rather than organically recruited devices.
density = prefix_density(ips, 24, min_fill=1.0)
print(f"fully filled /24 prefixes: {len(density.rows)}")
density16 = prefix_density(ips, 16, min_fill=0.30)
print(f"/16 prefixes above 30% fill: {len(density16.rows)}")

# Overlap between collection channels, at address and prefix granularity.
channel_a = set(dense[:3000])
channel_b = set(dense[1500:4000]) | set(tail[:200])
rates = intersection_rates(channel_a, channel_b)
print(f"\nchannel overlap: {rates.overlap:,} addresses "
      f"({rates.rate_a:.1%} of A, {rates.rate_b:.1%} of B)")
matrix = dataset_overlap_matrix({"BC": channel_a}, {"prior-2017": channel_b})
print(format_overlap_table(matrix))

# Malicious traffic flows: per-address totals against thresholds, plus
# category tables. The generator constructs per-address totals hitting the
# requested shares exactly.
feed = gen_mtf_feed(ips[:2000], {1: 0.8005, 5: 0.6806, 10: 0.5879}, seed=2)
summary = mtf_summary(feed, set(ips[:2000]))
print(format_mtf_threshold_table([("sample", summary)]))
print(format_category_table(summary))

# Hosting malware (or malicious URLs) is the strong indicator; embedding or
# communicating associations are recorded but never flip the verdict.
verdict = host_maliciousness(HostReport(
    v4(0x0A640001), (), (("deadbeef", "communicating"),)))
print(f"communicating-only report -> malicious={verdict.malicious} "
      f"reasons={list(verdict.reasons)}")

# Share of a sample labelled as rapid-redial ("switch IP in seconds") VPS.
sample = ips[:2000]
labels = {ip: bool(rng.random() < 0.676) for ip in sample}
result = sips_rate(sample, labels)
print(f"\nrapid-redial VPS label rate: {result.labeled_sips}/{result.denominator}"
      f" = {result.rate:.2%}")
