"""Seeded synthetic homepage corpus for classifier tests and benchmarks.

Emits proxy-shop-template and generic-template homepages as text bundles.
Both classes draw filler from the same vocabulary; the positive class leans
on the builtin keywords at elevated rates, with a small share of weak
positives and keyword-touching negatives so the task is not degenerate.
A slice of either class is generated in Chinese to exercise the untranslated
fallback path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import ApexDomain
from ..crawl import TextBundle, detect_and_translate, preprocess
from .features import KeywordSet, NON_RPS, RPS, builtin_keyword_set, extract_features
from .forest import LabeledExample

FILLER = (
    "network service fast secure global bandwidth server customer account "
    "login dashboard support contact about team news blog article report "
    "game music video photo travel hotel flight recipe kitchen garden health "
    "doctor school student course learn book library market store cart "
    "shipping delivery order weather sports football score league movie "
    "review ticket event city guide map local restaurant menu coffee fashion "
    "style shoes watch camera phone laptop software update download install "
    "windows linux android cloud hosting domain website page search result "
    "ranking traffic speed test tool api data chart finance bank credit loan "
    "invest stock wallet insurance policy legal court tax job career salary "
    "resume interview hire plan feature connect session country region "
    "unlimited premium trial signup email address billing refund terms"
).split()

FILLER_ZH = ("网络 服务器 客户 登录 支持 联系 团队 新闻 博客 文章 报告 游戏 音乐 视频 "
             "照片 旅行 酒店 航班 健康 学校 学生 课程 图书 市场 商店 订单 天气 体育 "
             "电影 城市 指南 地图 餐厅 咖啡 时尚 手机 软件 更新 下载 安装 云 域名 "
             "网站 页面 搜索 结果 流量 速度 测试 工具 数据 金融 银行 保险 工作").split()

# body-token emission rate per keyword for a full-strength positive page
KEYWORD_RATES = {
    "proxy": 0.060, "proxies": 0.040, "ip": 0.050, "residential": 0.030,
    "ips": 0.020, "free": 0.015, "http": 0.015, "buy": 0.015, "price": 0.010,
    "rotating": 0.010, "pricing": 0.008, "provider": 0.010,
}

ZH_SURFACE = {"proxy": "代理", "proxies": "代理", "ip": "ip", "residential": "住宅",
              "ips": "ip", "free": "免费", "http": "http", "buy": "购买",
              "price": "价格", "rotating": "旋转", "pricing": "定价",
              "provider": "供应商"}

WEAK_NEGATIVE_WORDS = ("free", "buy", "price", "ip")


@dataclass
class SynthSite:
    apex: ApexDomain
    bundle: TextBundle
    label: str


def _body_tokens(rng, rates: dict[str, float], filler: list[str],
                 length: int) -> list[str]:
    tokens = []
    keywords = list(rates)
    probs = np.array([rates[k] for k in keywords])
    p_any = probs.sum()
    for _ in range(length):
        if rng.random() < p_any:
            tokens.append(keywords[rng.choice(len(keywords), p=probs / p_any)])
        else:
            tokens.append(filler[rng.integers(0, len(filler))])
    return tokens


def _rps_site(rng, idx: int, chinese: bool) -> SynthSite:
    weak = rng.random() < 0.04
    scale = 1 / 6 if weak else 1.0
    length = int(rng.integers(80, 301))
    if chinese:
        rates = {ZH_SURFACE[k]: v * scale for k, v in KEYWORD_RATES.items()
                 if ZH_SURFACE[k] != "ip"}
        rates["ip"] = KEYWORD_RATES["ip"] * scale
        body = " ".join(_body_tokens(rng, rates, FILLER_ZH, length))
        title = "住宅代理 ip 供应商" if rng.random() < 0.9 else "网络 服务"
        keywords_meta = "住宅代理, 代理, ip" if rng.random() < 0.8 else ""
        description = "购买 住宅 代理 服务" if rng.random() < 0.7 else ""
    else:
        rates = {k: v * scale for k, v in KEYWORD_RATES.items()}
        body = " ".join(_body_tokens(rng, rates, list(FILLER), length))
        title_pool = ("buy residential proxies", "rotating residential ip proxies",
                      "residential proxy provider", "premium proxies pricing")
        generic_title = rng.random() < (0.5 if weak else 0.08)
        title = ("cloud network services" if generic_title
                 else str(title_pool[rng.integers(0, len(title_pool))]))
        keywords_meta = ("residential proxy, proxies, rotating ip"
                         if rng.random() < (0.6 if weak else 0.85) else "")
        description = ("buy residential proxies at the best price"
                       if rng.random() < (0.5 if weak else 0.75) else "")
    tags = "proxy, residential" if not chinese and rng.random() < 0.3 else ""
    bundle = TextBundle(title=title, description_meta=description,
                        keywords_meta=keywords_meta, tags_meta=tags,
                        body_text=body)
    return SynthSite(ApexDomain(f"svc{idx:04d}.com"), bundle, RPS)


def _non_rps_site(rng, idx: int, chinese: bool) -> SynthSite:
    length = int(rng.integers(80, 301))
    if chinese:
        body_tokens = [FILLER_ZH[rng.integers(0, len(FILLER_ZH))]
                       for _ in range(length)]
        title = "新闻 网站"
        description = ""
    else:
        body_tokens = [FILLER[rng.integers(0, len(FILLER))] for _ in range(length)]
        if rng.random() < 0.02:  # keyword-touching negative
            for _ in range(int(rng.integers(1, 4))):
                word = WEAK_NEGATIVE_WORDS[rng.integers(0, len(WEAK_NEGATIVE_WORDS))]
                body_tokens[rng.integers(0, length)] = word
        title_pool = ("daily news and weather", "online store for shoes",
                      "travel guide and hotels", "free recipes and kitchen tips",
                      "sports scores and league tables")
        title = str(title_pool[rng.integers(0, len(title_pool))])
        description = "latest articles and reviews" if rng.random() < 0.4 else ""
    bundle = TextBundle(title=title, description_meta=description,
                        body_text=" ".join(body_tokens))
    return SynthSite(ApexDomain(f"web{idx:04d}.org"), bundle, NON_RPS)


def gen_corpus(n_rps: int = 110, n_non: int = 1050, seed: int = 7) -> list[SynthSite]:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sites = []
    for i in range(n_rps):
        sites.append(_rps_site(rng, i, chinese=rng.random() < 0.15))
    for i in range(n_non):
        sites.append(_non_rps_site(rng, i, chinese=rng.random() < 0.05))
    return sites


def to_examples(sites: list[SynthSite],
                keywords: KeywordSet | None = None) -> list[LabeledExample]:
    """Run sites through the normal preprocessing + feature path."""
    keywords = keywords or builtin_keyword_set()
    examples = []
    for site in sites:
        bundle = detect_and_translate(site.bundle)
        tokenized = preprocess(bundle)
        examples.append(LabeledExample(site.apex,
                                       extract_features(tokenized, keywords),
                                       site.label, provenance="synthetic"))
    return examples


def write_corpus(sites: list[SynthSite], path, header: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header)
        for site in sites:
            b = site.bundle
            fh.write(json.dumps({
                "apex": site.apex.name, "label": site.label, "title": b.title,
                "description_meta": b.description_meta,
                "keywords_meta": b.keywords_meta, "tags_meta": b.tags_meta,
                "body_text": b.body_text}, ensure_ascii=False,
                sort_keys=True) + "\n")


def read_corpus(path) -> list[SynthSite]:
    sites = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        d = json.loads(line)
        bundle = TextBundle(title=d["title"],
                            description_meta=d["description_meta"],
                            keywords_meta=d["keywords_meta"],
                            tags_meta=d["tags_meta"], body_text=d["body_text"])
        sites.append(SynthSite(ApexDomain(d["apex"]), bundle, d["label"]))
    return sites
