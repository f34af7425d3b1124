"""Proxy-service website classifier: keyword features + random forest."""

from .features import (FeatureVector, KeywordSet, KeywordSpec, N_FEATURES,
                       NON_RPS, RPS, builtin_keyword_set, compute_tfidf_gaps,
                       extract_features, feature_names, select_keywords)
from .forest import ForestModel, LabeledExample, Tree, predict, train_forest
from .evaluate import EvalReport, kfold_eval, stratified_folds
from .bootstrap import BootstrapRound, bootstrap_round

__all__ = [
    "FeatureVector", "KeywordSet", "KeywordSpec", "N_FEATURES", "NON_RPS",
    "RPS", "builtin_keyword_set", "compute_tfidf_gaps", "extract_features",
    "feature_names", "select_keywords", "ForestModel", "LabeledExample",
    "Tree", "predict", "train_forest", "EvalReport", "kfold_eval",
    "stratified_folds", "BootstrapRound", "bootstrap_round",
]
