import random

import pytest

from resipmon.harvest import (SearchQueryJob, build_query_jobs,
                              ingest_search_results, load_query_table)


def test_bundled_table_builds_78_jobs():
    table = load_query_table()
    jobs = build_query_jobs(table)
    assert len(jobs) == 13 * 2 * 3
    assert jobs[0].keyword == "residential ip provider"
    assert {j.engine for j in jobs} == {"google", "bing", "baidu"}


def test_single_row_single_engine():
    jobs = build_query_jobs([{"row_id": "1", "en": "isp proxy", "zh": ""}],
                            engines=("google",))
    assert len(jobs) == 1
    assert jobs[0] == SearchQueryJob("isp proxy", "en", "google", 1000)


def test_empty_table_rejected():
    with pytest.raises(ValueError):
        build_query_jobs([])


def test_job_invariants():
    with pytest.raises(ValueError):
        SearchQueryJob("x", "en", "google", max_results=2000)
    with pytest.raises(ValueError):
        SearchQueryJob("x", "fr", "google")


ENTRY = "{url}\t{kw}\t{lang}\t{engine}\t{rank}\n"


def _write_entries(tmp_path, rows):
    path = tmp_path / "entries.tsv"
    path.write_text("".join(
        ENTRY.format(url=u, kw=k, lang=l, engine=e, rank=r)
        for u, k, l, e, r in rows), encoding="utf-8")
    return path


def test_ingest_empty(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("", encoding="utf-8")
    result = ingest_search_results(path)
    assert result.candidates == []


def test_ingest_groups_and_dedups(tmp_path):
    rows = [
        ("http://a.one.com/x", "isp proxy", "en", "google", 1),
        ("http://b.one.com/y", "isp proxy", "en", "google", 2),
        ("http://a.one.com/x#frag", "isp proxy", "en", "bing", 3),  # dup via fragment
        ("http://one.com/", "rotating proxy", "en", "google", 4),
        ("http://two.net/p", "isp proxy", "en", "google", 5),
        ("http://two.net/p", "isp proxy", "en", "baidu", 6),        # dup url
        ("http://three.org/q", "isp proxy", "zh", "baidu", 7),
    ]
    result = ingest_search_results(_write_entries(tmp_path, rows))
    assert result.entries_seen == 7
    assert result.distinct_urls == 5
    assert len(result.candidates) == 3
    by_apex = {c.apex.name: c for c in result.candidates}
    assert sorted(by_apex) == ["one.com", "three.org", "two.net"]
    assert sorted(len(c.source_urls) for c in result.candidates) == [1, 1, 3]
    # every source url's apex round-trips to its candidate's apex
    from resipmon.core import to_apex
    from urllib.parse import urlsplit
    for cand in result.candidates:
        for url in cand.source_urls:
            assert to_apex(urlsplit(url).hostname) == cand.apex


def test_ingest_order_independent(tmp_path):
    rows = [(f"http://site{i % 5}.com/p{i}", "isp proxy", "en", "google", i + 1)
            for i in range(40)]
    baseline = ingest_search_results(_write_entries(tmp_path, rows))
    shuffled = rows[:]
    random.Random(3).shuffle(shuffled)
    other = ingest_search_results(_write_entries(tmp_path, shuffled))
    assert [(c.apex, sorted(c.source_urls)) for c in baseline.candidates] == \
           [(c.apex, sorted(c.source_urls)) for c in other.candidates]


def test_ingest_skips_bad_lines(tmp_path):
    path = tmp_path / "entries.tsv"
    path.write_text(
        "http://ok.com/a\tisp proxy\ten\tgoogle\t1\n"
        "not a record\n"
        "http://ok.com/b\tisp proxy\tzz\tgoogle\t2\n",  # bad language
        encoding="utf-8")
    result = ingest_search_results(path)
    assert result.skipped == 2
    assert len(result.candidates) == 1
    assert result.entries_seen >= result.distinct_urls >= len(result.candidates)
