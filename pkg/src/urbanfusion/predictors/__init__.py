"""Classifiers behind one fit/predict interface, plus evaluation helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SpecInvalid
from .evaluation import (
    ClassCounts,
    CvResult,
    Metrics,
    class_counts,
    confusion_metrics,
    cross_validate,
    roc_curve,
    stratified_folds,
    write_metrics_table,
    write_roc,
)
from .mlp import Mlp
from .svm import Svm
from .tree import RepTree

# Defaults mirror the reference parameter table.
DEFAULTS = {
    "reptree": {"min_leaf": 2, "max_depth": None, "prune": True, "holdout": 0.25},
    "mlp": {"hidden": 10, "learning_rate": 0.3, "momentum": 0.2, "epochs": 1000},
    "svm": {"C": 1.0, "gamma": None, "eps": 0.001, "max_iter": 100_000},
    "furia": {"grow_fraction": 2 / 3, "min_precision": 0.5, "max_rules": 50},
}


@dataclass(frozen=True)
class PredictorSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise SpecInvalid(f"unknown predictor kind {self.kind!r}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise SpecInvalid(f"{self.kind}: unknown parameters {sorted(unknown)}")

    def resolved(self) -> dict:
        return {**DEFAULTS[self.kind], **self.params}


def build(spec: PredictorSpec):
    """Untrained model for ``spec``."""
    p = spec.resolved()
    if spec.kind == "reptree":
        return RepTree(seed=spec.seed, **p)
    if spec.kind == "mlp":
        return Mlp(seed=spec.seed, **p)
    if spec.kind == "svm":
        return Svm(seed=spec.seed, **p)
    from ..fuzzy import FuzzyClassifier

    return FuzzyClassifier(seed=spec.seed, **p)


def train(spec: PredictorSpec, X, y):
    return build(spec).fit(X, y)


__all__ = [
    "ClassCounts",
    "CvResult",
    "DEFAULTS",
    "Metrics",
    "Mlp",
    "PredictorSpec",
    "RepTree",
    "Svm",
    "build",
    "class_counts",
    "confusion_metrics",
    "cross_validate",
    "roc_curve",
    "stratified_folds",
    "train",
    "write_metrics_table",
    "write_roc",
]
