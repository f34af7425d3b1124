"""Stratified k-fold evaluation of the forest classifier."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import NON_RPS, RPS
from .forest import LabeledExample, train_forest


@dataclass
class EvalReport:
    """Pooled precision/recall/F1 for the positive class across all folds."""

    precision: float
    recall: float
    f1: float
    folds: int
    per_fold: list[tuple[float, float, float]]
    confusion: dict[str, int]  # tp / fp / fn / tn pooled over folds
    n_trees: int
    seed: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "f1": self.f1, "folds": self.folds,
                "per_fold": [list(f) for f in self.per_fold],
                "confusion": self.confusion,
                "n_trees": self.n_trees, "seed": self.seed}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def stratified_folds(labels: list[str], k: int, seed: int) -> list[list[int]]:
    """Deal each class's shuffled indices round-robin into k folds."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in (RPS, NON_RPS):
        idxs = np.array([i for i, lab in enumerate(labels) if lab == label])
        if idxs.size < k:
            raise ValueError(f"class {label} has {idxs.size} examples, "
                             f"fewer than k={k}")
        idxs = idxs[rng.permutation(idxs.size)]
        for fold_i in range(k):
            folds[fold_i].extend(int(i) for i in idxs[fold_i::k])
    return [sorted(f) for f in folds]


def kfold_eval(examples: list[LabeledExample], k: int = 10, seed: int = 0,
               n_trees: int = 200) -> EvalReport:
    """Stratified cross validation with a pooled confusion matrix."""
    if k < 2:
        raise ValueError("k must be at least 2")
    labels = [e.label for e in examples]
    folds = stratified_folds(labels, k, seed)
    pooled = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    per_fold = []
    for fold_i, test_idx in enumerate(folds):
        test_set = set(test_idx)
        train = [e for i, e in enumerate(examples) if i not in test_set]
        fold_seed = int(np.random.SeedSequence([seed, fold_i]).generate_state(1)[0])
        model = train_forest(train, n_trees=n_trees, seed=fold_seed)
        X = np.stack([examples[i].features.values for i in test_idx])
        scores = model.scores(X)
        tp = fp = fn = tn = 0
        for i, score in zip(test_idx, scores):
            predicted_rps = score >= 0.5
            actual_rps = examples[i].label == RPS
            if predicted_rps and actual_rps:
                tp += 1
            elif predicted_rps:
                fp += 1
            elif actual_rps:
                fn += 1
            else:
                tn += 1
        pooled["tp"] += tp
        pooled["fp"] += fp
        pooled["fn"] += fn
        pooled["tn"] += tn
        per_fold.append(_prf(tp, fp, fn))
    precision, recall, f1 = _prf(pooled["tp"], pooled["fp"], pooled["fn"])
    return EvalReport(precision=precision, recall=recall, f1=f1, folds=k,
                      per_fold=per_fold, confusion=pooled,
                      n_trees=n_trees, seed=seed)
