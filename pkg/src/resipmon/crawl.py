"""Crawl candidate websites and reduce homepages to classifier-ready text.

A site is fetched breadth-first from its homepage, never leaving its apex
domain and never fetching a URL twice. Sites rendered elsewhere (e.g. by a
headless-browser tool) arrive as snapshot bundles: a manifest plus one raw
HTML file per page, checksummed.

The homepage text is split into five components (title, the description /
keywords / tags metadata fields, and the visible body text), optionally
translated, then tokenized for feature extraction. Two token views are kept:
keyword matching runs on the pre-lemmatization lowercase tokens (so "ip" and
"ips" stay distinct), while the lemmatized view serves corpus statistics.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import html.parser
import logging
import re
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Protocol
from urllib.parse import urldefrag, urljoin, urlsplit

from .core import ApexDomain, DomainError, parse_timestamp, to_apex

log = logging.getLogger(__name__)

# kw_pos components, in feature-vector order; "body" is handled separately
POS_COMPONENTS = ("title", "keywords_meta", "description_meta", "tags_meta")

DEFAULT_PAGE_CAP = 100


class BundleError(ValueError):
    """A snapshot bundle that fails its manifest contract."""


@dataclass(frozen=True)
class Politeness:
    delay_s: float = 0.5
    timeout_s: float = 10.0
    user_agent: str = "resipmon-crawler/0.1 (measurement research)"


@dataclass(frozen=True)
class PageFetch:
    url: str
    fetch_time: dt.datetime
    html: bytes
    render_mode: str = "static"  # static | dynamic


@dataclass
class WebsiteSnapshot:
    apex: ApexDomain | None
    pages: list[PageFetch] = field(default_factory=list)
    fetch_failed: bool = False
    errors: list[tuple[str, str]] = field(default_factory=list)

    @property
    def page_count(self) -> int:
        return len(self.pages)

    @property
    def homepage(self) -> PageFetch | None:
        return self.pages[0] if self.pages else None


def _canonical(url: str) -> str:
    return urldefrag(url)[0]


def _site_key(url: str) -> str | None:
    """Apex of the URL's host, or the literal host for addresses that have
    none (IP-literal fixture servers)."""
    host = urlsplit(url).hostname
    if not host:
        return None
    try:
        return to_apex(host).name
    except DomainError:
        return host.lower()


def crawl_site(apex: ApexDomain | str, page_cap: int = DEFAULT_PAGE_CAP,
               politeness: Politeness = Politeness(),
               base_url: str | None = None,
               session=None) -> WebsiteSnapshot:
    """Breadth-first same-apex crawl starting at the homepage.

    Each page is fetched at most once and cross-apex links are never
    followed. Per-page failures are recorded and the crawl continues; an
    unreachable homepage yields an empty snapshot with the failure flag set.
    """
    import requests

    if isinstance(apex, str):
        apex = ApexDomain(apex.lower())
    start = _canonical(base_url or f"http://{apex.name}/")
    origin = _site_key(start)
    session = session or requests.Session()
    snapshot = WebsiteSnapshot(apex=apex)
    queue = [start]
    seen = {start}
    first = True
    while queue and len(snapshot.pages) < page_cap:
        url = queue.pop(0)
        if not first:
            time.sleep(politeness.delay_s)
        try:
            resp = session.get(url, timeout=politeness.timeout_s,
                               headers={"User-Agent": politeness.user_agent})
            body = resp.content
            if resp.status_code >= 400:
                raise IOError(f"status {resp.status_code}")
        except Exception as exc:
            snapshot.errors.append((url, str(exc)))
            if first:
                snapshot.fetch_failed = True
                return snapshot
            continue
        snapshot.pages.append(PageFetch(url, dt.datetime.now(dt.timezone.utc), body))
        first = False
        for link in extract_links(body, base=url):
            link = _canonical(link)
            if link not in seen and _site_key(link) == origin:
                seen.add(link)
                queue.append(link)
    return snapshot


# ---------------------------------------------------------------------------
# snapshot bundle format (shared with the external renderer)
#
# <dir>/manifest.tsv    rows: relative_filename, url, fetch_time ISO-8601,
#                       render_mode, sha256 hex of the file bytes.
#                       "#"-prefixed lines are comments. Homepage first.
# <dir>/<file>.html     raw page bytes, UTF-8.
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.tsv"


def write_snapshot_bundle(snapshot: WebsiteSnapshot, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, page in enumerate(snapshot.pages):
        name = f"page_{i:04d}.html"
        (directory / name).write_bytes(page.html)
        digest = hashlib.sha256(page.html).hexdigest()
        rows.append("\t".join([name, page.url, page.fetch_time.isoformat(),
                               page.render_mode, digest]))
    manifest = directory / MANIFEST_NAME
    manifest.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return manifest


def ingest_snapshot_bundle(directory) -> WebsiteSnapshot:
    """Load a rendered bundle, verifying every page checksum."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.is_file():
        raise BundleError(f"no {MANIFEST_NAME} in {directory}")
    pages = []
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise BundleError(f"manifest row needs 5 fields: {line!r}")
        name, url, fetch_time, render_mode, digest = parts
        path = directory / name
        if not path.is_file():
            raise BundleError(f"bundle page missing: {name}")
        data = path.read_bytes()
        actual = hashlib.sha256(data).hexdigest()
        if actual != digest.lower():
            raise BundleError(f"checksum mismatch for page {name}")
        pages.append(PageFetch(url, parse_timestamp(fetch_time),
                               data, render_mode))
    apex = None
    if pages:
        host = urlsplit(pages[0].url).hostname
        try:
            apex = to_apex(host) if host else None
        except DomainError:
            apex = None
    return WebsiteSnapshot(apex=apex, pages=pages)


# ---------------------------------------------------------------------------
# homepage text extraction
# ---------------------------------------------------------------------------

_SKIP_TAGS = {"script", "style", "template", "noscript"}


class _PageParser(html.parser.HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.title_parts: list[str] = []
        self.metas: dict[str, str] = {}
        self.body_parts: list[str] = []
        self.any_parts: list[str] = []
        self.links: list[str] = []
        self.saw_body = False
        self._skip_depth = 0
        self._in_title = False
        self._in_body = False

    def handle_starttag(self, tag, attrs):
        attrs = dict(attrs)
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
        elif tag == "title":
            self._in_title = True
        elif tag == "body":
            self.saw_body = True
            self._in_body = True
        elif tag == "meta":
            name = (attrs.get("name") or "").strip().lower()
            if name:
                self.metas.setdefault(name, attrs.get("content") or "")
        elif tag == "a":
            href = attrs.get("href")
            if href:
                self.links.append(href)

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS and self._skip_depth:
            self._skip_depth -= 1
        elif tag == "title":
            self._in_title = False
        elif tag == "body":
            self._in_body = False

    def handle_data(self, data):
        if self._skip_depth:
            return
        if self._in_title:
            self.title_parts.append(data)
            return
        self.any_parts.append(data)
        if self._in_body:
            self.body_parts.append(data)


@dataclass(frozen=True)
class TextBundle:
    """The five text components of a homepage."""

    title: str = ""
    description_meta: str = ""
    keywords_meta: str = ""
    tags_meta: str = ""
    body_text: str = ""
    language: str = "und"
    translated: bool = False
    parse_fallback: bool = False
    translate_failed: bool = False

    def components(self) -> dict[str, str]:
        return {"title": self.title, "keywords_meta": self.keywords_meta,
                "description_meta": self.description_meta,
                "tags_meta": self.tags_meta, "body": self.body_text}


def _norm_space(text: str) -> str:
    return " ".join(text.split())


def extract_text_bundle(page_html: bytes | str) -> TextBundle:
    """Pull the five text components out of homepage HTML.

    Body text is the visible text of the document body with script and style
    content removed; when no body element exists, all visible non-title text
    stands in. A parse failure falls back to regex tag stripping, flagged.
    """
    if isinstance(page_html, bytes):
        page_html = page_html.decode("utf-8", errors="replace")
    parser = _PageParser()
    try:
        parser.feed(page_html)
        parser.close()
    except Exception:
        return _fallback_extract(page_html)
    body_src = parser.body_parts if parser.saw_body else parser.any_parts
    return TextBundle(
        title=_norm_space("".join(parser.title_parts)),
        description_meta=_norm_space(parser.metas.get("description", "")),
        keywords_meta=_norm_space(parser.metas.get("keywords", "")),
        tags_meta=_norm_space(parser.metas.get("tags", "")),
        body_text=_norm_space(" ".join(body_src)),
    )


def _fallback_extract(page_html: str) -> TextBundle:
    title = ""
    m = re.search(r"<title[^>]*>(.*?)</title>", page_html, re.I | re.S)
    if m:
        title = _norm_space(m.group(1))
    metas = {}
    for m in re.finditer(r"<meta\s[^>]*>", page_html, re.I):
        tag = m.group(0)
        nm = re.search(r"name\s*=\s*[\"']([^\"']+)[\"']", tag, re.I)
        ct = re.search(r"content\s*=\s*[\"']([^\"']*)[\"']", tag, re.I)
        if nm and ct:
            metas.setdefault(nm.group(1).lower(), ct.group(1))
    stripped = re.sub(r"<(script|style)[^>]*>.*?</\1>", " ", page_html, flags=re.I | re.S)
    stripped = re.sub(r"<[^>]*>", " ", stripped)
    return TextBundle(title=title,
                      description_meta=_norm_space(metas.get("description", "")),
                      keywords_meta=_norm_space(metas.get("keywords", "")),
                      tags_meta=_norm_space(metas.get("tags", "")),
                      body_text=_norm_space(stripped),
                      parse_fallback=True)


def extract_links(page_html: bytes | str, base: str) -> list[str]:
    if isinstance(page_html, bytes):
        page_html = page_html.decode("utf-8", errors="replace")
    parser = _PageParser()
    try:
        parser.feed(page_html)
        parser.close()
    except Exception:
        return []
    out = []
    for href in parser.links:
        absolute = urljoin(base, href.strip())
        if urlsplit(absolute).scheme in ("http", "https"):
            out.append(absolute)
    return out


# ---------------------------------------------------------------------------
# language detection and translation
# ---------------------------------------------------------------------------

_HAN_RE = re.compile(r"[㐀-䶿一-鿿豈-﫿]")


def detect_language(text: str) -> str:
    """Cheap two-way detection: Han-dominated text is zh, otherwise en."""
    han = len(_HAN_RE.findall(text))
    letters = len(re.findall(r"[^\W\d_]", text))
    if han and (letters == 0 or han / letters >= 0.15):
        return "zh"
    return "en"


class Translator(Protocol):
    def translate(self, text: str, source: str, target: str = "en") -> str: ...


class TableTranslator:
    """Offline stand-in translator backed by a phrase table (longest match)."""

    def __init__(self, table: dict[str, str]):
        self.table = dict(table)
        self._order = sorted(self.table, key=len, reverse=True)

    def translate(self, text: str, source: str, target: str = "en") -> str:
        for phrase in self._order:
            text = text.replace(phrase, " " + self.table[phrase] + " ")
        return _norm_space(text)


def detect_and_translate(bundle: TextBundle,
                         translator: Translator | None = None) -> TextBundle:
    """Detect the bundle language; translate to English when possible.

    Without a translator (or on translator failure) the bundle passes
    through unchanged apart from the recorded language; downstream bilingual
    keyword matching compensates. This never aborts the pipeline.
    """
    sample = " ".join(bundle.components().values())
    lang = detect_language(sample)
    if lang == "en":
        return replace(bundle, language="en")
    if translator is None:
        return replace(bundle, language=lang)
    try:
        translated = {
            "title": translator.translate(bundle.title, lang),
            "description_meta": translator.translate(bundle.description_meta, lang),
            "keywords_meta": translator.translate(bundle.keywords_meta, lang),
            "tags_meta": translator.translate(bundle.tags_meta, lang),
            "body_text": translator.translate(bundle.body_text, lang),
        }
    except Exception as exc:
        log.warning("translation failed, passing through: %s", exc)
        return replace(bundle, language=lang, translate_failed=True)
    return replace(bundle, language="en", translated=True, **translated)


# ---------------------------------------------------------------------------
# tokenization, stopwords, lemmatization
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def load_stopwords(path=None) -> frozenset[str]:
    if path is None:
        text = resources.files("resipmon.data").joinpath(
            "stopwords_en.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines()
                     if w.strip() and not w.startswith("#"))


_STOPWORDS: frozenset[str] | None = None


def _default_stopwords() -> frozenset[str]:
    global _STOPWORDS
    if _STOPWORDS is None:
        _STOPWORDS = load_stopwords()
    return _STOPWORDS


def _split_scripts(run: str) -> list[str]:
    """Split a word run at Han/non-Han boundaries; CJK text carries no spaces."""
    parts = []
    current = []
    current_han = None
    for ch in run:
        is_han = bool(_HAN_RE.match(ch))
        if current_han is None or is_han == current_han:
            current.append(ch)
        else:
            parts.append("".join(current))
            current = [ch]
        current_han = is_han
    if current:
        parts.append("".join(current))
    return parts


def tokenize(text: str) -> list[str]:
    tokens = []
    for run in _WORD_RE.findall(text.lower()):
        tokens.extend(_split_scripts(run))
    return tokens


def is_cjk_token(token: str) -> bool:
    return bool(_HAN_RE.match(token[:1])) if token else False


def lemmatize(token: str) -> str:
    """Rule-based suffix stripper: -ies→y, -es/-s drop, -ing/-ed drop (stem ≥ 3)."""
    if is_cjk_token(token) or token.isdigit():
        return token
    t = token
    if t.endswith("ies") and len(t) >= 5:
        t = t[:-3] + "y"
    elif t.endswith("es") and len(t) >= 4 and t[-3] in "sxz":
        t = t[:-2]
    elif t.endswith("s") and len(t) >= 2 and not t.endswith(("ss", "us", "is")):
        t = t[:-1]
    if t.endswith("ing") and len(t) - 3 >= 3:
        t = t[:-3]
    elif t.endswith("ed") and len(t) - 2 >= 3:
        t = t[:-2]
    return t


@dataclass(frozen=True)
class TokenizedBundle:
    """Per-component token lists. Token fields hold the pre-lemmatization
    lowercase view used for keyword matching; `lemmas` holds the lemmatized
    view for corpus statistics."""

    title: tuple[str, ...] = ()
    keywords_meta: tuple[str, ...] = ()
    description_meta: tuple[str, ...] = ()
    tags_meta: tuple[str, ...] = ()
    body: tuple[str, ...] = ()
    lemmas: tuple[tuple[str, ...], ...] = ((), (), (), (), ())
    language: str = "en"
    translated: bool = False

    @property
    def body_token_count(self) -> int:
        return len(self.body)

    def component_tokens(self, name: str) -> tuple[str, ...]:
        return getattr(self, name)


def preprocess(bundle: TextBundle,
               stopwords: frozenset[str] | None = None) -> TokenizedBundle:
    """Tokenize, drop stopwords, and lemmatize each text component.

    body_token_count is measured after stopword removal and before
    lemmatization. Deterministic, and idempotent on its own token view.
    """
    stop = _default_stopwords() if stopwords is None else frozenset(stopwords)
    fields = {}
    lemma_views = []
    for name in ("title", "keywords_meta", "description_meta", "tags_meta", "body"):
        text = bundle.components()[name]
        tokens = tuple(t for t in tokenize(text) if t not in stop)
        fields[name] = tokens
        lemma_views.append(tuple(lemmatize(t) for t in tokens))
    return TokenizedBundle(lemmas=tuple(lemma_views),
                           language=bundle.language,
                           translated=bundle.translated, **fields)
