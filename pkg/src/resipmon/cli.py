"""Single entry point wiring every stage: `resipmon <module> <op> [flags]`.

All inter-stage data lives in newline-delimited flat files under a data
root, so runs are auditable and diffable. Every output file starts with a
provenance header (tool version, config hash, seeds, input digests) and the
pure-analytics subcommands are byte-deterministic on unchanged inputs.

Exit codes: 0 success, 1 operational/partial failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from . import __version__

DATA_ROOT_ENV = "RESIPMON_DATA_ROOT"


@dataclass
class RunConfig:
    data_root: Path = Path("data")
    n_trees: int = 200
    k_folds: int = 10
    page_cap: int = 100
    crawl_delay_s: float = 0.5
    campaign_rate: float = 1.0  # conservative default: one probe per second
    campaign_concurrency: int = 4
    seeds: dict = dc_field(default_factory=lambda: {
        "classify": 0, "eval": 0, "bootstrap": 0, "synth": 7, "pdns": 0, "mtf": 0})

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        config = cls()
        if env_root := os.environ.get(DATA_ROOT_ENV):
            config.data_root = Path(env_root)
        if not path:
            return config
        parser = configparser.ConfigParser()
        parser.read(path)
        section = parser["resipmon"] if parser.has_section("resipmon") else {}
        for key in ("n_trees", "k_folds", "page_cap", "campaign_concurrency"):
            if key in section:
                setattr(config, key, int(section[key]))
        for key in ("crawl_delay_s", "campaign_rate"):
            if key in section:
                setattr(config, key, float(section[key]))
        if "data_root" in section and not os.environ.get(DATA_ROOT_ENV):
            config.data_root = Path(section["data_root"])
        for key, value in section.items():
            if key.startswith("seed."):
                config.seeds[key[5:]] = int(value)
        return config

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or p.parent != Path("."):
            return p
        self.data_root.mkdir(parents=True, exist_ok=True)
        return self.data_root / p


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance_header(args: argparse.Namespace, inputs: list[Path],
                      seeds: dict | None = None) -> str:
    """Deterministic provenance block: version, config hash, seeds, digests."""
    shown = {k: v for k, v in sorted(vars(args).items())
             if k not in ("func",) and v is not None}
    config_hash = hashlib.sha256(
        json.dumps(shown, sort_keys=True, default=str).encode()).hexdigest()[:16]
    lines = [f"# resipmon {__version__}", f"# config_hash={config_hash}"]
    for name, seed in sorted((seeds or {}).items()):
        lines.append(f"# seed.{name}={seed}")
    for path in inputs:
        lines.append(f"# input {path.name} sha256={_digest(path)}")
    return "".join(line + "\n" for line in lines)


def write_output(path: Path, header: str, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(header + content, encoding="utf-8")
    print(f"wrote {path}")


def read_ip_file(path) -> set:
    from .core import parse_ip

    out = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(parse_ip(line))
    return out


# ---------------------------------------------------------------------------
# features file: apex, label (or ?), then the 72 values
# ---------------------------------------------------------------------------

def write_features(path: Path, header: str, rows) -> None:
    lines = []
    for apex, label, fv in rows:
        values = "\t".join(repr(float(v)) for v in fv.values)
        lines.append(f"{apex}\t{label or '?'}\t{values}\n")
    write_output(path, header, "".join(lines))


def read_features(path):
    import numpy as np

    from .classify import FeatureVector
    from .core import ApexDomain

    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        apex, label = parts[0], parts[1]
        values = np.array([float(v) for v in parts[2:]], dtype=np.float64)
        rows.append((ApexDomain(apex), None if label == "?" else label,
                     FeatureVector(values)))
    return rows


def _featurize_corpus(corpus_path: Path, keywords=None):
    from .classify import extract_features
    from .classify.synth import read_corpus
    from .crawl import detect_and_translate, preprocess

    rows = []
    for site in read_corpus(corpus_path):
        bundle = detect_and_translate(site.bundle)
        fv = extract_features(preprocess(bundle), keywords)
        rows.append((site.apex.name, site.label, fv))
    return rows


# ---------------------------------------------------------------------------
# harvest
# ---------------------------------------------------------------------------

def cmd_harvest_queries(args, config: RunConfig) -> int:
    from .harvest import build_query_jobs, load_query_table

    table = load_query_table(args.table)
    jobs = build_query_jobs(table)
    out = config.resolve(args.out)
    lines = [f"{j.keyword}\t{j.language}\t{j.engine}\t{j.max_results}\n"
             for j in jobs]
    inputs = [Path(args.table)] if args.table else []
    write_output(out, provenance_header(args, inputs), "".join(lines))
    print(f"{len(jobs)} query jobs")
    return 0


def cmd_harvest_ingest(args, config: RunConfig) -> int:
    from .harvest import ingest_search_results

    result = ingest_search_results(args.infile)
    out = config.resolve(args.out)
    lines = []
    for cand in result.candidates:
        example = sorted(cand.source_urls)[0]
        lines.append(f"{cand.apex.name}\t{len(cand.source_urls)}"
                     f"\t{len(cand.discovery_queries)}\t{example}\n")
    write_output(out, provenance_header(args, [Path(args.infile)]), "".join(lines))
    print(f"{result.entries_seen} entries -> {result.distinct_urls} urls -> "
          f"{len(result.candidates)} candidates ({result.skipped} skipped)")
    return 0


# ---------------------------------------------------------------------------
# crawl
# ---------------------------------------------------------------------------

def cmd_crawl_run(args, config: RunConfig) -> int:
    from .crawl import Politeness, crawl_site, write_snapshot_bundle

    politeness = Politeness(delay_s=args.delay if args.delay is not None
                            else config.crawl_delay_s)
    snapshot = crawl_site(args.apex, page_cap=args.cap or config.page_cap,
                          politeness=politeness, base_url=args.base_url)
    write_snapshot_bundle(snapshot, config.resolve(args.out))
    print(f"{snapshot.page_count} pages"
          + (" (homepage unreachable)" if snapshot.fetch_failed else ""))
    return 1 if snapshot.fetch_failed else 0


def cmd_crawl_ingest_snapshots(args, config: RunConfig) -> int:
    from .crawl import BundleError, ingest_snapshot_bundle

    try:
        snapshot = ingest_snapshot_bundle(args.dir)
    except BundleError as exc:
        print(f"bundle rejected: {exc}", file=sys.stderr)
        return 1
    print(f"{snapshot.page_count} pages, apex="
          f"{snapshot.apex.name if snapshot.apex else '-'}")
    return 0


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def cmd_classify_gen_synthetic(args, config: RunConfig) -> int:
    from .classify.synth import gen_corpus, write_corpus

    seed = args.seed if args.seed is not None else config.seeds["synth"]
    sites = gen_corpus(n_rps=args.rps, n_non=args.non, seed=seed)
    out = config.resolve(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(sites, out, header=provenance_header(args, [],
                                                      seeds={"synth": seed}))
    print(f"wrote {out} ({len(sites)} homepages, seed={seed})")
    return 0


def cmd_classify_select_keywords(args, config: RunConfig) -> int:
    from .classify import compute_tfidf_gaps
    from .classify.synth import read_corpus
    from .crawl import detect_and_translate, preprocess

    corpus = [(preprocess(detect_and_translate(site.bundle)), site.label)
              for site in read_corpus(args.corpus)]
    ranked = compute_tfidf_gaps(corpus)
    lines = [f"{s.keyword}\t{s.avg_tfidf_rps!r}\t{s.avg_tfidf_nonrps!r}\t{s.gap!r}\n"
             for s in ranked[:args.top]]
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.corpus)]), "".join(lines))
    return 0


def cmd_classify_featurize(args, config: RunConfig) -> int:
    rows = _featurize_corpus(Path(args.corpus))
    write_features(config.resolve(args.out),
                   provenance_header(args, [Path(args.corpus)]), rows)
    return 0


def _examples_from_features(path):
    from .classify import LabeledExample

    examples = []
    for apex, label, fv in read_features(path):
        if label is None:
            raise ValueError(f"{apex}: unlabeled row in training features")
        examples.append(LabeledExample(apex, fv, label))
    return examples


def cmd_classify_train(args, config: RunConfig) -> int:
    from .classify import builtin_keyword_set, train_forest

    seed = args.seed if args.seed is not None else config.seeds["classify"]
    examples = _examples_from_features(args.features)
    model = train_forest(examples, n_trees=args.trees or config.n_trees,
                         seed=seed, keyword_set=builtin_keyword_set())
    out = config.resolve(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = model.to_dict()
    # a "#" header would break the JSON model format; embed provenance instead
    payload["provenance"] = {
        "header": provenance_header(args, [Path(args.features)],
                                    seeds={"classify": seed}).splitlines()}
    import json as _json
    out.write_text(_json.dumps(payload, sort_keys=True,
                               separators=(",", ":")) + "\n", encoding="utf-8")
    print(f"wrote {out} ({model.n_trees} trees, seed={seed})")
    return 0


def cmd_classify_predict(args, config: RunConfig) -> int:
    from .classify import ForestModel, predict

    model = ForestModel.load(args.model)
    lines = []
    for apex, _, fv in read_features(args.features):
        label, score = predict(model, fv)
        lines.append(f"{apex.name}\t{label}\t{score!r}\n")
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.model), Path(args.features)]),
                 "".join(lines))
    return 0


def cmd_classify_eval(args, config: RunConfig) -> int:
    from .classify import kfold_eval

    seed = args.seed if args.seed is not None else config.seeds["eval"]
    k = args.k or config.k_folds
    examples = _examples_from_features(args.features)
    report = kfold_eval(examples, k=k, seed=seed,
                        n_trees=args.trees or config.n_trees)
    header = provenance_header(args, [Path(args.features)], seeds={"eval": seed})
    write_output(config.resolve(args.out), header, report.dumps())
    print(f"precision={report.precision:.4f} recall={report.recall:.4f} "
          f"f1={report.f1:.4f} (k={k})")
    return 0


def cmd_classify_bootstrap(args, config: RunConfig) -> int:
    from .classify import ForestModel
    from .classify.bootstrap import (append_groundtruth, bootstrap_round,
                                     read_labels_in, write_pending)

    seed = args.seed if args.seed is not None else config.seeds["bootstrap"]
    model = ForestModel.load(args.model)
    candidates = [(apex, fv) for apex, _, fv in read_features(args.features)]
    labels_in = read_labels_in(args.labels_in) if args.labels_in else None
    result = bootstrap_round(model, candidates, sample_n=args.sample_n,
                             seed=seed, round_index=args.round_index,
                             labels_in=labels_in, threshold=args.threshold)
    write_pending(result.pending, config.resolve(args.pending),
                  header=provenance_header(args, [Path(args.model)],
                                           seeds={"bootstrap": seed}))
    if result.confirmed and args.groundtruth:
        append_groundtruth([(e.apex.name, e.label, e.provenance)
                            for e in result.confirmed],
                           config.resolve(args.groundtruth))
    print(f"round {result.round_index}: {result.positives_total} positives, "
          f"{result.sampled} sampled, {len(result.confirmed)} confirmed, "
          f"{result.rejected} rejected"
          + (" [exhausted]" if result.exhausted else ""))
    return 0


# ---------------------------------------------------------------------------
# infiltrate
# ---------------------------------------------------------------------------

def _parse_hostport(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host, int(port)


def cmd_infiltrate_echo(args, config: RunConfig) -> int:
    from .infiltrate import run_echo_server

    handle = run_echo_server(_parse_hostport(args.bind),
                             log_path=config.resolve(args.log))
    print(f"echo server on {handle.url}, log {handle.log_path}")
    try:
        handle.thread.join()
    except KeyboardInterrupt:
        handle.stop()
    return 0


def cmd_infiltrate_probe(args, config: RunConfig) -> int:
    from .infiltrate import ProbeSpec, format_observation, send_probe
    import uuid

    spec = ProbeSpec(service=args.service, gateway=_parse_hostport(args.gateway),
                     proxy_protocol=args.protocol, target=args.target,
                     token=args.token or uuid.uuid4().hex,
                     credentials=(args.username, args.password)
                     if args.username else None,
                     timeout=args.timeout)
    obs = send_probe(spec)
    sys.stdout.write(format_observation(obs))
    return 0 if obs.success else 1


def read_probe_specs(path):
    from .infiltrate import ProbeSpec

    specs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        service, gateway, protocol, user, password, target, token = line.split("\t")
        specs.append(ProbeSpec(
            service=service, gateway=_parse_hostport(gateway),
            proxy_protocol=protocol, target=target, token=token,
            credentials=(user, password) if user else None))
    return specs


def cmd_infiltrate_campaign(args, config: RunConfig) -> int:
    from .infiltrate import schedule_campaign

    specs = read_probe_specs(args.specs)
    dispatched = schedule_campaign(
        specs, config.resolve(args.log),
        rate=args.rate or config.campaign_rate, duration=args.duration,
        concurrency=args.concurrency or config.campaign_concurrency,
        resume=not args.no_resume)
    print(f"dispatched {dispatched} probes, log {config.resolve(args.log)}")
    return 0


def cmd_infiltrate_stats(args, config: RunConfig) -> int:
    from .infiltrate import campaign_stats, format_campaign_table

    stats = campaign_stats(args.log)
    header = provenance_header(args, [Path(args.log)])
    write_output(config.resolve(args.out_table), header,
                 format_campaign_table(stats))
    series_lines = ["service,day,cumulative_probes,cumulative_unique_ips\n"]
    for service, series in stats.series.items():
        for day, probes, unique in series:
            series_lines.append(f"{service},{day.isoformat()},{probes},{unique}\n")
    write_output(config.resolve(args.out_series), header, "".join(series_lines))
    sys.stdout.write(format_campaign_table(stats))
    return 0


# ---------------------------------------------------------------------------
# collect
# ---------------------------------------------------------------------------

def cmd_collect_api(args, config: RunConfig) -> int:
    from .collect import ResipStore, fetch_api_resips, load_endpoint_configs

    store = ResipStore(config.resolve(args.store))
    total = 0
    failures = 0
    for endpoint in load_endpoint_configs(args.config_file):
        entries = fetch_api_resips(endpoint, archive_dir=args.archive)
        if not entries:
            failures += 1
        total += store.append(entries)
    print(f"{total} entries appended to {store.path}"
          + (f" ({failures} endpoint(s) yielded nothing)" if failures else ""))
    return 1 if failures else 0


def cmd_collect_dns(args, config: RunConfig) -> int:
    from .collect import ResipStore, load_dns_configs, resolve_dns_resips

    configs = load_dns_configs(args.config_file)
    entries, failures = resolve_dns_resips(configs)
    store = ResipStore(config.resolve(args.store))
    store.append(entries)
    print(f"{len(entries)} entries, {len(failures)} failed names")
    return 0


def cmd_collect_verify(args, config: RunConfig) -> int:
    from .collect import ResipStore, verify_direct

    entries = ResipStore(args.store).load()
    if args.limit:
        entries = entries[:args.limit]
    lines = []
    ok_count = 0
    for entry in entries:
        result = verify_direct(entry, args.echo, timeout=args.timeout)
        ok_count += result.ok
        lines.append(f"{entry.service}\t{entry.ip}\t{entry.port}"
                     f"\t{int(result.ok)}\t{result.failure_class or ''}"
                     f"\t{result.exit_ip or ''}\n")
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.store)]), "".join(lines))
    print(f"{ok_count}/{len(entries)} verified direct")
    return 0


# ---------------------------------------------------------------------------
# pdns
# ---------------------------------------------------------------------------

def _load_patterns(path):
    from .pdns import load_service_patterns

    return load_service_patterns(path)


def cmd_pdns_gen_synthetic(args, config: RunConfig) -> int:
    from .pdns import gen_pdns_stream, load_service_patterns, write_pdns_stream

    patterns = load_service_patterns(args.patterns)
    if args.services:
        patterns = patterns[:args.services]
    seed = args.seed if args.seed is not None else config.seeds["pdns"]
    records = gen_pdns_stream(patterns, ips_per_service=args.ips, seed=seed,
                              noise_records=args.noise)
    out = config.resolve(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pdns_stream(records, out,
                      header=provenance_header(args, [], seeds={"pdns": seed}))
    print(f"wrote {out} ({len(records)} records, seed={seed})")
    return 0


def _matched(args):
    from .pdns import match_service_domains, read_pdns_stream

    records, malformed = read_pdns_stream(args.infile)
    result = match_service_domains(records, _load_patterns(args.patterns))
    return result, malformed


def cmd_pdns_match(args, config: RunConfig) -> int:
    result, malformed = _matched(args)
    lines = [f"{service}\t{r.fqdn}\t{r.rrtype}\t{r.rdata}\t{r.first_seen}"
             f"\t{r.last_seen}\t{r.query_count}\n" for r, service in result.tagged]
    header = provenance_header(args, [Path(args.infile)])
    write_output(config.resolve(args.out), header, "".join(lines))
    print(f"{result.matched_records} matched, {result.dropped_records} dropped, "
          f"{malformed} malformed, {len(result.conflicts)} multi-service")
    return 0


def cmd_pdns_lifetimes(args, config: RunConfig) -> int:
    from .pdns import compute_lifetimes, lifetime_cdf

    result, _ = _matched(args)
    lifetimes = compute_lifetimes(result.tagged)
    header = provenance_header(args, [Path(args.infile)])
    lines = ["service,ip,lifetime_days,intervals\n"]
    for lt in lifetimes:
        spans = ";".join(f"{iv.first}..{iv.last}" for iv in lt.intervals)
        lines.append(f"{lt.service},{lt.ip},{lt.lifetime_days},{spans}\n")
    write_output(config.resolve(args.out), header, "".join(lines))
    if args.cdf:
        cdf_lines = ["lifetime_days,cumulative_fraction\n"]
        cdf_lines += [f"{days},{frac!r}\n" for days, frac in lifetime_cdf(lifetimes)]
        write_output(config.resolve(args.cdf), header, "".join(cdf_lines))
    print(f"{len(lifetimes)} (service, ip) lifetimes")
    return 0


def cmd_pdns_daily(args, config: RunConfig) -> int:
    from .pdns import daily_active_series

    result, _ = _matched(args)
    series = daily_active_series(result.tagged, args.service)
    lines = ["day,active_resips\n"]
    lines += [f"{day.isoformat()},{count}\n"
              for day, count in zip(series.days, series.counts)]
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.infile)]), "".join(lines))
    return 0


def cmd_pdns_usage(args, config: RunConfig) -> int:
    from .pdns import usage_volume

    result, _ = _matched(args)
    services = sorted({s for _, s in result.tagged})
    if args.service:
        services = [args.service]
    lines = ["service,resips,fqdns,lifetime_days,total_queries,daily_usage\n"]
    for service in services:
        u = usage_volume(result.tagged, service)
        lines.append(f"{u.service},{u.resip_count},{u.fqdn_count},"
                     f"{u.lifetime_days},{u.total_queries},"
                     f"{float(u.daily_usage)!r}\n")
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.infile)]), "".join(lines))
    return 0


def cmd_pdns_evolution(args, config: RunConfig) -> int:
    from .pdns import crest_trough_metrics, daily_active_series, smooth_series

    result, _ = _matched(args)
    series = daily_active_series(result.tagged, args.service)
    if not series.days:
        print(f"no records for service {args.service}", file=sys.stderr)
        return 1
    metrics = crest_trough_metrics(series, window=args.window,
                                   trough_fraction=args.trough_fraction)
    smoothed = smooth_series(series.counts, args.window)
    lines = ["day,active,smoothed\n"]
    lines += [f"{day.isoformat()},{count},{s!r}\n"
              for day, count, s in zip(series.days, series.counts, smoothed)]
    header = provenance_header(args, [Path(args.infile)])
    write_output(config.resolve(args.out), header, "".join(lines))
    summary = {"service": args.service,
               "crest_day": metrics.crest_day.isoformat(),
               "crest_value": metrics.crest_value,
               "days_to_crest": metrics.days_to_crest,
               "trough_day": metrics.trough_day.isoformat()
               if metrics.trough_day else None,
               "crest_to_trough_days": metrics.crest_to_trough_days}
    write_output(config.resolve(args.summary), header,
                 json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# analytics
# ---------------------------------------------------------------------------

def _geo(args):
    from .analytics import GeoTable, geo_enrich

    ips = read_ip_file(args.ips)
    table = GeoTable.from_csv(args.geo)
    return ips, geo_enrich(ips, table)


def cmd_analytics_gen_synthetic(args, config: RunConfig) -> int:
    import ipaddress

    from .analytics import gen_mtf_feed
    from .core import parse_ip

    seed = args.seed if args.seed is not None else config.seeds["mtf"]
    ips = [parse_ip(str(ipaddress.IPv4Address(0x0A000000 + i)))
           for i in range(args.ips)]
    fractions = {1: args.w1, 5: args.w5, 10: args.w10}
    records = gen_mtf_feed(ips, fractions, seed=seed)
    feed_path = config.resolve(args.out)
    feed_path.parent.mkdir(parents=True, exist_ok=True)
    with open(feed_path, "w", encoding="utf-8") as fh:
        fh.write(provenance_header(args, [], seeds={"mtf": seed}))
        for r in records:
            fh.write(f"{r.src_ip}\t{r.category}\t{r.subcategory}"
                     f"\t{r.timestamp.isoformat()}\t{r.flow_count}\n")
    ips_path = config.resolve(args.out_ips)
    ips_path.write_text("".join(f"{ip}\n" for ip in ips), encoding="utf-8")
    print(f"wrote {feed_path} ({len(records)} records) and {ips_path}")
    return 0


def cmd_analytics_enrich(args, config: RunConfig) -> int:
    _, geo = _geo(args)
    lines = ["ip,matched,country,region,city,asn,isp\n"]
    for ip in sorted(geo, key=str):
        r = geo[ip]
        lines.append(f"{ip},{int(r.matched)},{r.country or ''},{r.region or ''},"
                     f"{r.city or ''},{r.asn if r.asn is not None else ''},"
                     f"{r.isp or ''}\n")
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.ips), Path(args.geo)]),
                 "".join(lines))
    return 0


def cmd_analytics_dist(args, config: RunConfig) -> int:
    from .analytics import distribution_report, format_top_table
    from .tables import to_csv_rows

    _, geo = _geo(args)
    tables = distribution_report(geo, dimensions=(args.dimension,))
    table = tables[args.dimension]
    header = provenance_header(args, [Path(args.ips), Path(args.geo)])
    write_output(config.resolve(args.out), header, format_top_table(table, args.top))
    csv_rows = [[g, str(c), repr(f)] for g, c, f in table.rows]
    write_output(config.resolve(args.out_csv), header,
                 to_csv_rows(["group", "count", "fraction"], csv_rows))
    print(f"{table.distinct_groups} distinct {args.dimension} groups")
    return 0


def cmd_analytics_density(args, config: RunConfig) -> int:
    from .analytics import prefix_density

    ips = read_ip_file(args.ips)
    report = prefix_density(ips, args.prefix_len, args.min_fill)
    lines = ["prefix,fill\n"]
    lines += [f"{cidr},{fill!r}\n" for cidr, fill in report.rows]
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.ips)]), "".join(lines))
    print(f"{len(report.rows)} prefixes at fill >= {args.min_fill}"
          + (f" ({report.ipv6_excluded} IPv6 excluded)"
             if report.ipv6_excluded else ""))
    return 0


def cmd_analytics_intersect(args, config: RunConfig) -> int:
    from .analytics import intersection_rates

    a = read_ip_file(args.set_a)
    b = read_ip_file(args.set_b)
    rates = intersection_rates(a, b)
    print(f"overlap={rates.overlap}"
          f" rate_a={rates.rate_a if rates.rate_a is not None else 'undefined'}"
          f" rate_b={rates.rate_b if rates.rate_b is not None else 'undefined'}")
    return 0


def cmd_analytics_overlap(args, config: RunConfig) -> int:
    from .analytics import dataset_overlap_matrix, format_overlap_table

    ours = {name: read_ip_file(path)
            for name, path in (pair.split("=", 1) for pair in args.groups)}
    priors = {name: read_ip_file(path)
              for name, path in (pair.split("=", 1) for pair in args.priors)}
    matrix = dataset_overlap_matrix(ours, priors)
    header = provenance_header(args, [])
    write_output(config.resolve(args.out), header, format_overlap_table(matrix))
    sys.stdout.write(format_overlap_table(matrix))
    return 0


def cmd_analytics_mtf(args, config: RunConfig) -> int:
    from .analytics import (format_category_table, format_mtf_threshold_table,
                            format_subcategory_table, mtf_summary, read_mtf_feed)

    records = read_mtf_feed(args.feed)
    resips = read_ip_file(args.ips)
    summary = mtf_summary(records, resips)
    header = provenance_header(args, [Path(args.feed), Path(args.ips)])
    content = (format_mtf_threshold_table([(args.group, summary)]) + "\n"
               + format_category_table(summary) + "\n"
               + format_subcategory_table(summary))
    write_output(config.resolve(args.out), header, content)
    sys.stdout.write(content)
    return 0


def cmd_analytics_hostrep(args, config: RunConfig) -> int:
    from .analytics import host_maliciousness, read_host_reports

    lines = []
    malicious = 0
    for report in read_host_reports(args.reports):
        verdict = host_maliciousness(report)
        malicious += verdict.malicious
        lines.append(f"{report.ip}\t{int(verdict.malicious)}"
                     f"\t{';'.join(verdict.reasons)}\n")
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.reports)]), "".join(lines))
    print(f"{malicious} malicious")
    return 0


def cmd_analytics_sips(args, config: RunConfig) -> int:
    from .analytics import sips_rate
    from .core import parse_ip

    sample = read_ip_file(args.sample)
    labels = {}
    for line in Path(args.labels).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        ip, flag = line.split("\t")
        labels[parse_ip(ip)] = flag.strip().lower() in ("1", "true", "yes")
    result = sips_rate(sample, labels, exclude_unlabeled=args.exclude_unlabeled)
    rate = f"{result.rate * 100:.2f}%" if result.rate is not None else "undefined"
    print(f"{result.labeled_sips}/{result.denominator} = {rate} "
          f"(sample {result.sample_size})")
    return 0


def cmd_analytics_ports(args, config: RunConfig) -> int:
    from .analytics import port_exposure_summary
    from .collect import ResipStore

    entries = ResipStore(args.store).load()
    exposure = port_exposure_summary(entries)
    lines = ["port,ips\n"]
    lines += [f"{port},{count}\n" for port, count in exposure.per_port]
    write_output(config.resolve(args.out),
                 provenance_header(args, [Path(args.store)]), "".join(lines))
    print(f"{exposure.exposed_ips} addresses exposing at least one port")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resipmon",
        description="Residential-proxy service discovery, capture, and measurement.")
    parser.add_argument("--config", help="INI config file")
    modules = parser.add_subparsers(dest="module")

    # harvest
    harvest = modules.add_parser("harvest").add_subparsers(dest="op")
    p = harvest.add_parser("queries", help="emit search query jobs")
    p.add_argument("--table", help="keyword table (default: bundled)")
    p.add_argument("--out", default="query_jobs.tsv")
    p.set_defaults(func=cmd_harvest_queries)
    p = harvest.add_parser("ingest", help="group search results into candidates")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default="candidates.tsv")
    p.set_defaults(func=cmd_harvest_ingest)

    # crawl
    crawl = modules.add_parser("crawl").add_subparsers(dest="op")
    p = crawl.add_parser("run", help="crawl one site statically")
    p.add_argument("--apex", required=True)
    p.add_argument("--base-url")
    p.add_argument("--cap", type=int)
    p.add_argument("--delay", type=float)
    p.add_argument("--out", required=True, help="snapshot bundle directory")
    p.set_defaults(func=cmd_crawl_run)
    p = crawl.add_parser("ingest-snapshots", help="validate a rendered bundle")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_crawl_ingest_snapshots)

    # classify
    classify = modules.add_parser("classify").add_subparsers(dest="op")
    p = classify.add_parser("gen-synthetic", help="generate a labeled corpus")
    p.add_argument("--rps", type=int, default=110)
    p.add_argument("--non", type=int, default=1050)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="corpus.jsonl")
    p.set_defaults(func=cmd_classify_gen_synthetic)
    p = classify.add_parser("select-keywords", help="rank words by tf-idf gap")
    p.add_argument("--corpus", required=True)
    p.add_argument("--top", type=int, default=50)
    p.add_argument("--out", default="keyword_ranking.tsv")
    p.set_defaults(func=cmd_classify_select_keywords)
    p = classify.add_parser("featurize")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default="features.tsv")
    p.set_defaults(func=cmd_classify_featurize)
    p = classify.add_parser("train")
    p.add_argument("--features", required=True)
    p.add_argument("--trees", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_classify_train)
    p = classify.add_parser("predict")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default="predictions.tsv")
    p.set_defaults(func=cmd_classify_predict)
    p = classify.add_parser("eval")
    p.add_argument("--features", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trees", type=int)
    p.add_argument("--out", default="eval_report.json")
    p.set_defaults(func=cmd_classify_eval)
    p = classify.add_parser("bootstrap")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--sample-n", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--round", dest="round_index", type=int, default=1)
    p.add_argument("--pending", default="pending_labels.tsv")
    p.add_argument("--labels-in")
    p.add_argument("--groundtruth")
    p.set_defaults(func=cmd_classify_bootstrap)

    # infiltrate
    infiltrate = modules.add_parser("infiltrate").add_subparsers(dest="op")
    p = infiltrate.add_parser("echo", help="run the echo server")
    p.add_argument("--bind", default="127.0.0.1:8099")
    p.add_argument("--log", default="echo_log.tsv")
    p.set_defaults(func=cmd_infiltrate_echo)
    p = infiltrate.add_parser("probe", help="send one probe through a gateway")
    p.add_argument("--service", required=True)
    p.add_argument("--gateway", required=True, help="host:port")
    p.add_argument("--protocol", default="http",
                   choices=("http", "https_connect", "socks5"))
    p.add_argument("--target", required=True, help="echo URL")
    p.add_argument("--token")
    p.add_argument("--username")
    p.add_argument("--password")
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_infiltrate_probe)
    p = infiltrate.add_parser("campaign")
    p.add_argument("--specs", required=True)
    p.add_argument("--log", default="observations.tsv")
    p.add_argument("--rate", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_infiltrate_campaign)
    p = infiltrate.add_parser("stats")
    p.add_argument("--log", required=True)
    p.add_argument("--out-table", default="campaign_table.txt")
    p.add_argument("--out-series", default="campaign_series.csv")
    p.set_defaults(func=cmd_infiltrate_stats)

    # collect
    collect = modules.add_parser("collect").add_subparsers(dest="op")
    p = collect.add_parser("api", help="poll configured endpoints once")
    p.add_argument("--config", dest="config_file", required=True)
    p.add_argument("--store", default="direct_entries.tsv")
    p.add_argument("--archive")
    p.set_defaults(func=cmd_collect_api)
    p = collect.add_parser("dns", help="resolve configured names once")
    p.add_argument("--config", dest="config_file", required=True)
    p.add_argument("--store", default="direct_entries.tsv")
    p.set_defaults(func=cmd_collect_dns)
    p = collect.add_parser("verify")
    p.add_argument("--store", required=True)
    p.add_argument("--echo", required=True, help="echo URL")
    p.add_argument("--limit", type=int)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--out", default="verification.tsv")
    p.set_defaults(func=cmd_collect_verify)

    # pdns
    pdns = modules.add_parser("pdns").add_subparsers(dest="op")
    p = pdns.add_parser("gen-synthetic")
    p.add_argument("--services", type=int, help="use the first N bundled services")
    p.add_argument("--patterns", help="pattern file (default: bundled)")
    p.add_argument("--ips", type=int, default=500, help="exits per service")
    p.add_argument("--noise", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="pdns_stream.tsv")
    p.set_defaults(func=cmd_pdns_gen_synthetic)
    for name, func, extra in (
            ("match", cmd_pdns_match, ()),
            ("lifetimes", cmd_pdns_lifetimes, ("cdf",)),
            ("daily", cmd_pdns_daily, ("service",)),
            ("usage", cmd_pdns_usage, ("service?",)),
            ("evolution", cmd_pdns_evolution, ("service", "evolution"))):
        p = pdns.add_parser(name)
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--patterns", help="pattern file (default: bundled)")
        if "service" in extra:
            p.add_argument("--service", required=True)
        if "service?" in extra:
            p.add_argument("--service")
        if "cdf" in extra:
            p.add_argument("--cdf", help="also write the lifetime CDF here")
        if "evolution" in extra:
            p.add_argument("--window", type=int, default=7)
            p.add_argument("--trough-fraction", type=float, default=0.05)
            p.add_argument("--summary", default=f"{name}_summary.json")
        p.add_argument("--out", default=f"{name}.csv")
        p.set_defaults(func=func)

    # analytics
    analytics = modules.add_parser("analytics").add_subparsers(dest="op")
    p = analytics.add_parser("gen-synthetic", help="generate an MTF feed")
    p.add_argument("--ips", type=int, default=2000)
    p.add_argument("--w1", type=float, default=0.8005)
    p.add_argument("--w5", type=float, default=0.6806)
    p.add_argument("--w10", type=float, default=0.5879)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="mtf_feed.tsv")
    p.add_argument("--out-ips", default="mtf_ips.txt")
    p.set_defaults(func=cmd_analytics_gen_synthetic)
    p = analytics.add_parser("enrich")
    p.add_argument("--ips", required=True)
    p.add_argument("--geo", required=True, help="prefix table CSV")
    p.add_argument("--out", default="enriched.csv")
    p.set_defaults(func=cmd_analytics_enrich)
    p = analytics.add_parser("dist")
    p.add_argument("--ips", required=True)
    p.add_argument("--geo", required=True)
    p.add_argument("--dimension", default="country")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", default="distribution.txt")
    p.add_argument("--out-csv", default="distribution.csv")
    p.set_defaults(func=cmd_analytics_dist)
    p = analytics.add_parser("density")
    p.add_argument("--ips", required=True)
    p.add_argument("--prefix-len", type=int, default=24)
    p.add_argument("--min-fill", type=float, default=0.0)
    p.add_argument("--out", default="density.csv")
    p.set_defaults(func=cmd_analytics_density)
    p = analytics.add_parser("intersect")
    p.add_argument("--a", dest="set_a", required=True)
    p.add_argument("--b", dest="set_b", required=True)
    p.set_defaults(func=cmd_analytics_intersect)
    p = analytics.add_parser("overlap")
    p.add_argument("--groups", nargs="+", required=True, metavar="NAME=IPFILE")
    p.add_argument("--priors", nargs="+", required=True, metavar="NAME=IPFILE")
    p.add_argument("--out", default="overlap.txt")
    p.set_defaults(func=cmd_analytics_overlap)
    p = analytics.add_parser("mtf")
    p.add_argument("--feed", required=True)
    p.add_argument("--ips", required=True)
    p.add_argument("--group", default="sample")
    p.add_argument("--out", default="mtf_report.txt")
    p.set_defaults(func=cmd_analytics_mtf)
    p = analytics.add_parser("hostrep")
    p.add_argument("--reports", required=True)
    p.add_argument("--out", default="host_verdicts.tsv")
    p.set_defaults(func=cmd_analytics_hostrep)
    p = analytics.add_parser("sips")
    p.add_argument("--sample", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--exclude-unlabeled", action="store_true")
    p.set_defaults(func=cmd_analytics_sips)
    p = analytics.add_parser("ports")
    p.add_argument("--store", required=True)
    p.add_argument("--out", default="port_exposure.csv")
    p.set_defaults(func=cmd_analytics_ports)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "module", None) or not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    config = RunConfig.load(args.config)
    try:
        return args.func(args, config)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
