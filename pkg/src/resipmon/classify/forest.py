"""Random forest over the 72 keyword features, built from scratch.

Every tree is grown on a bootstrap resample drawn from its own PRNG stream
derived from (seed, tree index), so training is deterministic for a fixed
input order and seed, and trees could be built concurrently without changing
the result. Splits minimize Gini impurity over a random subset of
floor(sqrt(72)) = 8 features per node, thresholds are midpoints between
consecutive distinct sorted values, and ties break to the lowest feature
index, then the lowest threshold. Nodes grow until pure or below 2 samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import ApexDomain
from .features import (FeatureVector, KeywordSet, KeywordSpec, N_FEATURES,
                       NON_RPS, RPS)


@dataclass(frozen=True)
class LabeledExample:
    apex: ApexDomain
    features: FeatureVector
    label: str  # RPS | NonRPS
    provenance: str = "prior_work"  # prior_work | top_sites | bootstrap_round_<n>


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf. Leaves carry the class
    counts of their training samples."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    n0: list[int] = field(default_factory=list)
    n1: list[int] = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.n0.append(0)
        self.n1.append(0)
        return len(self.feature) - 1

    def vote(self, x: np.ndarray) -> int:
        """Predicted class of one sample; leaf ties break to the positive class."""
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] \
                else self.right[node]
        return 1 if self.n1[node] >= self.n0[node] else 0

    def to_dict(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right,
                "n0": self.n0, "n1": self.n1}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(feature=list(d["feature"]),
                   threshold=[float(t) for t in d["threshold"]],
                   left=list(d["left"]), right=list(d["right"]),
                   n0=list(d["n0"]), n1=list(d["n1"]))


def best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray,
               features: list[int]) -> tuple[float, int, float] | None:
    """Lowest weighted Gini split among the candidate features.

    Returns (weighted_gini, feature, threshold) or None when every candidate
    column is constant on the node. Candidates are scanned in ascending
    feature order and only strict improvements are kept, which implements the
    tie-break; within one feature np.argmin keeps the lowest threshold.
    """
    n = idx.size
    ysub = y[idx]
    total1 = int(ysub.sum())
    total0 = n - total1
    best: tuple[float, int, float] | None = None
    for f in sorted(features):
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sy = ysub[order]
        cuts = np.nonzero(sv[1:] != sv[:-1])[0]
        if cuts.size == 0:
            continue
        cum1 = np.cumsum(sy)
        left_n = cuts + 1
        left_1 = cum1[cuts]
        left_0 = left_n - left_1
        right_n = n - left_n
        right_1 = total1 - left_1
        right_0 = total0 - left_0
        gini_l = 1.0 - (left_0 ** 2 + left_1 ** 2) / (left_n ** 2)
        gini_r = 1.0 - (right_0 ** 2 + right_1 ** 2) / (right_n ** 2)
        weighted = (left_n * gini_l + right_n * gini_r) / n
        j = int(np.argmin(weighted))
        if best is None or weighted[j] < best[0]:
            pos = cuts[j]
            thr = (sv[pos] + sv[pos + 1]) / 2.0
            best = (float(weighted[j]), f, float(thr))
    return best


def _grow_tree(X: np.ndarray, y: np.ndarray, sample: np.ndarray,
               max_features: int, rng: np.random.Generator) -> Tree:
    n_features = X.shape[1]
    tree = Tree()
    root = tree.add_node()
    stack = [(root, sample)]
    while stack:
        node, idx = stack.pop()
        ysub = y[idx]
        ones = int(ysub.sum())
        zeros = idx.size - ones
        tree.n0[node] = zeros
        tree.n1[node] = ones
        if zeros == 0 or ones == 0 or idx.size < 2:
            continue
        candidates = rng.choice(n_features, size=min(max_features, n_features),
                                replace=False)
        split = best_split(X, y, idx, [int(f) for f in candidates])
        if split is None:
            continue
        _, f, thr = split
        go_left = X[idx, f] <= thr
        left_id = tree.add_node()
        right_id = tree.add_node()
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = left_id
        tree.right[node] = right_id
        stack.append((right_id, idx[~go_left]))
        stack.append((left_id, idx[go_left]))
    return tree


@dataclass
class ForestModel:
    trees: list[Tree]
    n_trees: int
    seed: int
    max_features: int
    n_features: int = N_FEATURES
    keyword_set: KeywordSet | None = None

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Positive-vote fraction for each row of X."""
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"feature matrix must have {self.n_features} columns")
        votes = np.zeros(X.shape[0], dtype=np.int32)
        for tree in self.trees:
            votes += np.fromiter((tree.vote(row) for row in X), dtype=np.int32,
                                 count=X.shape[0])
        return votes / len(self.trees)

    def to_dict(self) -> dict:
        d = {"format": "resipmon-forest/1", "n_trees": self.n_trees,
             "seed": self.seed, "max_features": self.max_features,
             "n_features": self.n_features,
             "trees": [t.to_dict() for t in self.trees]}
        if self.keyword_set is not None:
            d["keyword_set"] = {
                "set_id": self.keyword_set.set_id,
                "keywords": [{"keyword": s.keyword,
                              "avg_tfidf_rps": s.avg_tfidf_rps,
                              "avg_tfidf_nonrps": s.avg_tfidf_nonrps}
                             for s in self.keyword_set.specs]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        ks = None
        if "keyword_set" in d:
            ks = KeywordSet(tuple(KeywordSpec(s["keyword"], s["avg_tfidf_rps"],
                                              s["avg_tfidf_nonrps"])
                                  for s in d["keyword_set"]["keywords"]),
                            set_id=d["keyword_set"]["set_id"])
        return cls(trees=[Tree.from_dict(t) for t in d["trees"]],
                   n_trees=d["n_trees"], seed=d["seed"],
                   max_features=d["max_features"], n_features=d["n_features"],
                   keyword_set=ks)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ForestModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_forest(examples: list[LabeledExample], n_trees: int = 200,
                 seed: int = 0, keyword_set: KeywordSet | None = None) -> ForestModel:
    """Grow the ensemble; deterministic for a fixed input order and seed."""
    labels = {e.label for e in examples}
    if labels != {RPS, NON_RPS}:
        raise ValueError("training data must contain both classes")
    X = np.stack([e.features.values for e in examples]).astype(np.float64)
    y = np.fromiter((1 if e.label == RPS else 0 for e in examples),
                    dtype=np.int64, count=len(examples))
    n = X.shape[0]
    max_features = max(1, math.floor(math.sqrt(X.shape[1])))
    streams = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        sample = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X, y, sample, max_features, rng))
    return ForestModel(trees=trees, n_trees=n_trees, seed=seed,
                       max_features=max_features, n_features=X.shape[1],
                       keyword_set=keyword_set)


def predict(model: ForestModel, features: FeatureVector) -> tuple[str, float]:
    """(label, score): score is the RPS vote fraction, RPS wins at >= 0.5."""
    values = np.asarray(features.values, dtype=np.float64)
    if values.shape != (model.n_features,):
        raise ValueError(f"feature vector must have {model.n_features} values")
    score = float(model.scores(values.reshape(1, -1))[0])
    return (RPS if score >= 0.5 else NON_RPS), score
