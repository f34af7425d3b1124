"""Keyword selection and the 72-dimension feature layout.

The classifier reduces a homepage to keyword statistics over its five text
components. For each of the 12 keywords: an occurrence count in the body
tokens (kw_num) and its share of the body (kw_ratio); then one binary
presence flag (kw_pos) per keyword per non-body component. 12*2 + 4*12 = 72.

Keywords are matched case-insensitively against pre-lemmatization tokens, so
"ip" and "ips" remain distinct features. Untranslated Chinese pages fall back
to a bundled table of Chinese surface forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..crawl import POS_COMPONENTS, TokenizedBundle, is_cjk_token

RPS = "RPS"
NON_RPS = "NonRPS"

KEYWORD_COUNT = 12
N_FEATURES = KEYWORD_COUNT * 2 + len(POS_COMPONENTS) * KEYWORD_COUNT


@dataclass(frozen=True)
class KeywordSpec:
    """One keyword with its class-average tf-idf scores and their gap."""

    keyword: str
    avg_tfidf_rps: float
    avg_tfidf_nonrps: float

    @property
    def gap(self) -> float:
        return self.avg_tfidf_rps - self.avg_tfidf_nonrps


@dataclass(frozen=True)
class KeywordSet:
    """The ordered 12-keyword feature basis."""

    specs: tuple[KeywordSpec, ...]
    set_id: str = "custom"

    def __post_init__(self):
        if len(self.specs) != KEYWORD_COUNT:
            raise ValueError(f"keyword set needs exactly {KEYWORD_COUNT} entries, "
                             f"got {len(self.specs)}")
        if len({s.keyword for s in self.specs}) != KEYWORD_COUNT:
            raise ValueError("duplicate keyword in set")

    @property
    def keywords(self) -> tuple[str, ...]:
        return tuple(s.keyword for s in self.specs)


_BUILTIN: KeywordSet | None = None
_ZH_SURFACE: dict[str, tuple[str, ...]] | None = None


def builtin_keyword_set() -> KeywordSet:
    """The bundled 12-keyword set, fixed order."""
    global _BUILTIN
    if _BUILTIN is None:
        specs = []
        text = resources.files("resipmon.data").joinpath(
            "rps_keywords.tsv").read_text(encoding="utf-8")
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            kw, rps_avg, non_avg = line.split("\t")
            specs.append(KeywordSpec(kw, float(rps_avg), float(non_avg)))
        _BUILTIN = KeywordSet(tuple(specs), set_id="builtin-12")
    return _BUILTIN


def zh_surface_table() -> dict[str, tuple[str, ...]]:
    global _ZH_SURFACE
    if _ZH_SURFACE is None:
        table = {}
        text = resources.files("resipmon.data").joinpath(
            "keyword_surface_zh.tsv").read_text(encoding="utf-8")
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            kw, forms = line.split("\t")
            table[kw] = tuple(f.strip() for f in forms.split(",") if f.strip())
        _ZH_SURFACE = table
    return _ZH_SURFACE


# ---------------------------------------------------------------------------
# feature vector
# ---------------------------------------------------------------------------

def kw_num_index(k: int) -> int:
    return 2 * k


def kw_ratio_index(k: int) -> int:
    return 2 * k + 1


def kw_pos_index(component_idx: int, k: int) -> int:
    return 2 * KEYWORD_COUNT + component_idx * KEYWORD_COUNT + k


def feature_names(keywords: KeywordSet) -> list[str]:
    names = []
    for kw in keywords.keywords:
        names += [f"kw_num[{kw}]", f"kw_ratio[{kw}]"]
    for comp in POS_COMPONENTS:
        names += [f"kw_pos[{comp},{kw}]" for kw in keywords.keywords]
    return names


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray  # float64, shape (72,)

    def __post_init__(self):
        if self.values.shape != (N_FEATURES,):
            raise ValueError(f"feature vector must have {N_FEATURES} values")

    def validate(self, n_keywords: int = KEYWORD_COUNT) -> None:
        v = self.values
        nums = v[0:2 * n_keywords:2]
        ratios = v[1:2 * n_keywords:2]
        pos = v[2 * n_keywords:]
        if not np.all(nums >= 0) or not np.all(nums == np.floor(nums)):
            raise ValueError("kw_num values must be non-negative integers")
        if not np.all((ratios >= 0.0) & (ratios <= 1.0)):
            raise ValueError("kw_ratio values must lie in [0, 1]")
        if not np.all((pos == 0.0) | (pos == 1.0)):
            raise ValueError("kw_pos values must be binary")


def _matcher(bundle: TokenizedBundle, keywords: KeywordSet):
    """Per-keyword token predicate, with the Chinese fallback when needed."""
    use_zh = bundle.language == "zh" and not bundle.translated
    surfaces = zh_surface_table() if use_zh else {}

    def matches(keyword: str, token: str) -> bool:
        if token == keyword:
            return True
        if use_zh and is_cjk_token(token):
            return any(form in token for form in surfaces.get(keyword, ()))
        return False

    return matches


def extract_features(bundle: TokenizedBundle,
                     keywords: KeywordSet | None = None) -> FeatureVector:
    """Compute the 72 keyword features for one tokenized homepage."""
    keywords = keywords or builtin_keyword_set()
    matches = _matcher(bundle, keywords)
    values = np.zeros(N_FEATURES, dtype=np.float64)
    body = bundle.body
    n_body = bundle.body_token_count
    for k, kw in enumerate(keywords.keywords):
        num = sum(1 for t in body if matches(kw, t))
        values[kw_num_index(k)] = num
        values[kw_ratio_index(k)] = num / n_body if n_body else 0.0
    for ci, comp in enumerate(POS_COMPONENTS):
        tokens = bundle.component_tokens(comp)
        for k, kw in enumerate(keywords.keywords):
            if any(matches(kw, t) for t in tokens):
                values[kw_pos_index(ci, k)] = 1.0
    return FeatureVector(values)


# ---------------------------------------------------------------------------
# tf-idf keyword selection
# ---------------------------------------------------------------------------

def compute_tfidf_gaps(corpus: list[tuple[TokenizedBundle, str]]) -> list[KeywordSpec]:
    """Rank every corpus word by its class-average tf-idf gap.

    tf(word, doc) = count / doc token count; idf(word) = ln(N / df) over the
    whole corpus. A word's tf-idf is averaged within each class with absent
    words contributing zero, and the gap is the positive-class average minus
    the negative-class average, sorted descending.
    """
    docs = [(bundle.body, label) for bundle, label in corpus]
    n_rps = sum(1 for _, lab in docs if lab == RPS)
    n_non = len(docs) - n_rps
    if n_rps == 0 or n_non == 0:
        raise ValueError("corpus must contain both classes")
    n_docs = len(docs)

    df: dict[str, int] = {}
    for tokens, _ in docs:
        for word in set(tokens):
            df[word] = df.get(word, 0) + 1

    sums = {word: [0.0, 0.0] for word in df}  # [RPS total, NonRPS total]
    for tokens, label in docs:
        if not tokens:
            continue
        length = len(tokens)
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        side = 0 if label == RPS else 1
        for word, cnt in counts.items():
            tf = cnt / length
            sums[word][side] += tf * math.log(n_docs / df[word])

    specs = [KeywordSpec(word, total[0] / n_rps, total[1] / n_non)
             for word, total in sums.items()]
    specs.sort(key=lambda s: (-s.gap, s.keyword))
    return specs


def select_keywords(corpus: list[tuple[TokenizedBundle, str]],
                    set_id: str = "selected-12") -> KeywordSet:
    """Top 12 gap-ranked words as a feature basis."""
    ranked = compute_tfidf_gaps(corpus)
    if len(ranked) < KEYWORD_COUNT:
        raise ValueError(f"corpus vocabulary smaller than {KEYWORD_COUNT}")
    return KeywordSet(tuple(ranked[:KEYWORD_COUNT]), set_id=set_id)
