"""
Passive-DNS extraction, lifetimes, and service evolution
========================================================

Services that publish exits through DNS leave a history: every aggregate
passive-DNS record maps a service subdomain to an address over a
[first_seen, last_seen] window with a cumulative query count. From those
aggregates alone we get each exit's service-specific lifetime, per-day
active counts, a usage lower bound, and the service's rise-and-collapse
shape.
"""

from resipmon.core import ApexDomain
from resipmon.pdns import (ServiceDomainPattern, compute_lifetimes,
                           crest_trough_metrics, daily_active_series,
                           extract_dp_resips, gen_pdns_stream, lifetime_cdf,
                           load_service_patterns, match_service_domains,
                           usage_volume)

# The bundled pattern table covers all 42 services known to expose exits
# through DNS, including the shared-infrastructure cases where several
# services resolve under one domain.
bundled = load_service_patterns()
print(f"{len(bundled)} bundled service patterns; e.g. "
      f"{bundled[3].service} resolves under {bundled[3].apexes[0].name} "
      f"(globs {bundled[3].label_globs})")

# A seeded synthetic stream with the short-lifetime mix observed in the
# wild: 53% of exits live exactly one day, 91% under ten days.
patterns = [ServiceDomainPattern("alpha", (ApexDomain("alpha-ip.com"),)),
            ServiceDomainPattern("beta", (ApexDomain("beta-ip.net"),))]
records = gen_pdns_stream(patterns, ips_per_service=600, seed=11,
                          noise_records=200)
print(f"\nsynthetic stream: {len(records)} records (incl. unrelated noise)")

matched = match_service_domains(records, patterns)
print(f"matched {matched.matched_records}, dropped {matched.dropped_records}")

summary = extract_dp_resips(matched.tagged)["alpha"]
print(f"service alpha: {summary.resip_count} exits via {summary.fqdn_count} names")

# Lifetime = distinct days covered by the union of a (service, ip)'s
# observation windows; overlapping records merge.
lifetimes = compute_lifetimes(matched.tagged)
one_day = sum(1 for lt in lifetimes if lt.lifetime_days == 1)
short = sum(1 for lt in lifetimes if lt.lifetime_days < 10)
print(f"\nlifetimes: {one_day / len(lifetimes):.0%} one-day, "
      f"{short / len(lifetimes):.0%} under 10 days")
cdf = lifetime_cdf(lifetimes)
print("lifetime CDF first rows:", cdf[:3])

# Daily active series: an exit counts on every day inside its windows. The
# series total equals the summed lifetimes exactly; that identity is the
# cheapest sanity check on any pipeline change.
series = daily_active_series(matched.tagged, "alpha")
assert sum(series.counts) == sum(lt.lifetime_days for lt in lifetimes
                                 if lt.service == "alpha")
print(f"\ndaily series spans {len(series.days)} days, "
      f"peak {max(series.counts)} active exits")

metrics = crest_trough_metrics(series, window=7, trough_fraction=0.05)
print(f"crest {metrics.crest_value:.1f} on {metrics.crest_day} "
      f"({metrics.days_to_crest} days in); "
      + (f"trough after {metrics.crest_to_trough_days} days"
         if metrics.trough_day else "no trough in view"))

# Query volume is a lower bound on usage (resolver caches absorb repeats).
usage = usage_volume(matched.tagged, "alpha")
print(f"\nusage: {usage.total_queries:,} queries over {usage.lifetime_days} "
      f"days -> {usage.daily_usage_float:,.0f}/day")
assert usage.daily_usage * usage.lifetime_days == usage.total_queries
