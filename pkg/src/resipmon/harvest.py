"""Turn exported search-engine results into deduplicated service candidates.

Live search-engine querying is deliberately not implemented; query jobs are
built for an external runner and its result exports are ingested here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable
from urllib.parse import urldefrag, urlsplit

from .core import ApexDomain, DomainError, to_apex

log = logging.getLogger(__name__)

ENGINES = ("google", "bing", "baidu")
LANGUAGES = ("en", "zh")
MAX_RESULTS_CAP = 1000


@dataclass(frozen=True)
class SearchQueryJob:
    keyword: str
    language: str
    engine: str
    max_results: int = MAX_RESULTS_CAP

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language: {self.language}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine: {self.engine}")
        if not 1 <= self.max_results <= MAX_RESULTS_CAP:
            raise ValueError(f"max_results outside 1..{MAX_RESULTS_CAP}")

    @property
    def query_id(self) -> str:
        return f"{self.engine}:{self.language}:{self.keyword}"


@dataclass(frozen=True)
class SearchResultEntry:
    url: str
    query_id: str
    rank: int


@dataclass
class RpsCandidate:
    """One candidate service website, keyed by apex domain."""

    apex: ApexDomain
    source_urls: set[str] = field(default_factory=set)
    discovery_queries: set[str] = field(default_factory=set)


def load_query_table(path=None) -> list[dict]:
    """Read the keyword table: rows with an English and a Chinese variant."""
    if path is None:
        text = resources.files("resipmon.data").joinpath(
            "query_keywords.tsv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"query table row needs 3 columns: {line!r}")
        rows.append({"row_id": parts[0], "en": parts[1], "zh": parts[2]})
    return rows


def build_query_jobs(query_table: list[dict],
                     engines: Iterable[str] = ENGINES,
                     max_results: int = MAX_RESULTS_CAP) -> list[SearchQueryJob]:
    """One job per (keyword variant, engine) combination."""
    if not query_table:
        raise ValueError("empty query table")
    jobs = []
    for row in query_table:
        for lang in LANGUAGES:
            keyword = row.get(lang, "").strip()
            if not keyword:
                continue
            for engine in engines:
                jobs.append(SearchQueryJob(keyword, lang, engine, max_results))
    return jobs


def _strip_fragment(url: str) -> str:
    # fragments never change server responses; query strings are kept
    return urldefrag(url)[0]


@dataclass
class CandidateIngest:
    candidates: list[RpsCandidate]
    entries_seen: int = 0
    distinct_urls: int = 0
    skipped: int = 0


def parse_entries_file(path) -> tuple[list[SearchResultEntry], int]:
    """Parse a result export: tab-separated (url, keyword, language, engine, rank)."""
    entries = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                log.warning("%s:%d: expected 5 fields, got %d", path, lineno, len(parts))
                skipped += 1
                continue
            url, keyword, language, engine, rank = parts
            try:
                job = SearchQueryJob(keyword, language, engine)
                entries.append(SearchResultEntry(url, job.query_id, int(rank)))
            except ValueError as exc:
                log.warning("%s:%d: %s", path, lineno, exc)
                skipped += 1
    return entries, skipped


def ingest_search_results(path) -> CandidateIngest:
    """Deduplicate result URLs and group them into per-apex candidates.

    Unparseable lines are skipped with a warning and counted. Output order
    is by apex, independent of input order.
    """
    entries, skipped = parse_entries_file(path)
    result = CandidateIngest(candidates=[], entries_seen=len(entries) + skipped,
                             skipped=skipped)
    by_url: dict[str, SearchResultEntry] = {}
    queries_per_url: dict[str, set[str]] = {}
    for entry in entries:
        url = _strip_fragment(entry.url)
        by_url.setdefault(url, entry)
        queries_per_url.setdefault(url, set()).add(entry.query_id)
    result.distinct_urls = len(by_url)

    grouped: dict[ApexDomain, RpsCandidate] = {}
    for url in by_url:
        host = urlsplit(url).hostname
        if not host:
            log.warning("unparseable url skipped: %r", url)
            result.skipped += 1
            continue
        try:
            apex = to_apex(host)
        except DomainError as exc:
            log.warning("url host rejected: %s", exc)
            result.skipped += 1
            continue
        cand = grouped.setdefault(apex, RpsCandidate(apex))
        cand.source_urls.add(url)
        cand.discovery_queries.update(queries_per_url[url])
    result.candidates = [grouped[a] for a in sorted(grouped)]
    return result
