"""
Discovering proxy-service candidates from search results
=========================================================

The discovery stage never scrapes search engines itself. It builds the
query jobs an external runner executes, then ingests the exported result
files and collapses them into per-apex-domain candidates.
"""

import tempfile
from pathlib import Path

from resipmon.harvest import build_query_jobs, ingest_search_results, load_query_table

# The bundled keyword table pairs every English query with its Chinese
# variant; three engines are queried per variant.
table = load_query_table()
jobs = build_query_jobs(table)
print(f"{len(table)} keyword rows -> {len(jobs)} query jobs")
for job in jobs[:4]:
    print("  ", job.query_id)

# A result export is one (url, keyword, language, engine, rank) row per hit.
# Duplicates and URL fragments are normal; the apex domain is the identity
# that matters, because one service = one website.
export = """\
http://fastproxy.example/pricing\tresidential proxy service\ten\tgoogle\t1
http://fastproxy.example/pricing#plans\tresidential proxy service\ten\tbing\t1
http://blog.fastproxy.example/post\trotating proxy\ten\tgoogle\t7
http://shop.unrelated.example/\trotating proxy\ten\tgoogle\t8
not a parseable line
"""
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "results.tsv"
    path.write_text(export, encoding="utf-8")
    result = ingest_search_results(path)

print(f"\n{result.entries_seen} entries, {result.distinct_urls} distinct urls, "
      f"{result.skipped} skipped")
for candidate in result.candidates:
    print(f"  {candidate.apex.name}: {len(candidate.source_urls)} urls via "
          f"{len(candidate.discovery_queries)} queries")
