"""Confusion counts, derived metrics, stratified k-fold CV and ROC points."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import TooFewRows


@dataclass(frozen=True)
class ClassCounts:
    """One-vs-rest confusion counts for a single class."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    """Ratios of a :class:`ClassCounts`; ``None`` where the denominator is zero."""

    recall: float | None
    precision: float | None
    sensitivity: float | None
    specificity: float | None
    accuracy: float | None


def _ratio(num, den):
    return num / den if den > 0 else None


def confusion_metrics(c: ClassCounts) -> Metrics:
    recall = _ratio(c.tp, c.tp + c.fn)
    return Metrics(
        recall=recall,
        precision=_ratio(c.tp, c.tp + c.fp),
        sensitivity=recall,
        specificity=_ratio(c.tn, c.tn + c.fp),
        accuracy=_ratio(c.tp + c.tn, c.total),
    )


def class_counts(y_true, y_pred, classes) -> dict:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    out = {}
    for c in classes:
        t, p = y_true == c, y_pred == c
        out[c] = ClassCounts(
            int(np.count_nonzero(t & p)),
            int(np.count_nonzero(~t & p)),
            int(np.count_nonzero(~t & ~p)),
            int(np.count_nonzero(t & ~p)),
        )
    return out


def stratified_folds(y, k: int = 10, seed: int = 0) -> np.ndarray:
    """Fold id per row; each class is shuffled and dealt round-robin.

    The dealing continues across classes, so fold sizes differ by at most one
    and each class is spread over the folds within one row.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(y) < k:
        raise TooFewRows(f"{len(y)} rows cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=int)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    return fold


@dataclass(frozen=True, eq=False)
class CvResult:
    classes: tuple
    counts: dict
    predictions: np.ndarray
    scores: np.ndarray
    folds: np.ndarray
    y_true: np.ndarray

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.predictions == self.y_true))

    def metrics(self) -> dict:
        return {c: confusion_metrics(self.counts[c]) for c in self.classes}

    def roc_point(self, positive) -> tuple[float, float]:
        """(FPR, TPR) of the operating point for one class."""
        c = self.counts[positive]
        return (c.fp / max(1, c.fp + c.tn), c.tp / max(1, c.tp + c.fn))

    def roc_curve(self, positive):
        return roc_curve(self.y_true == positive, self.scores[:, self.classes.index(positive)])


def roc_curve(is_pos, score):
    """Threshold sweep; returns arrays (fpr, tpr, thresholds), highest threshold first."""
    is_pos = np.asarray(is_pos, dtype=bool)
    score = np.asarray(score, dtype=float)
    order = np.argsort(-score, kind="stable")
    s, p = score[order], is_pos[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(p)[distinct]
    fps = np.cumsum(~p)[distinct]
    npos, nneg = max(1, p.sum()), max(1, (~p).sum())
    return (np.r_[0.0, fps / nneg], np.r_[0.0, tps / npos], np.r_[np.inf, s[distinct]])


def cross_validate(spec, X, y, k: int = 10, seed: int | None = None) -> CvResult:
    """Out-of-fold predictions of ``spec`` under stratified k-fold CV."""
    from . import build

    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    seed = spec.seed if seed is None else seed
    folds = stratified_folds(y, k, seed)
    classes = tuple(np.unique(y).tolist())
    pred = np.empty(len(y), dtype=y.dtype)
    scores = np.zeros((len(y), len(classes)))
    for f in range(k):
        test = folds == f
        model = build(spec).fit(X[~test], y[~test])
        pred[test] = model.predict(X[test])
        s = model.predict_scores(X[test])
        for j, c in enumerate(model.classes_):
            scores[test, classes.index(c)] = s[:, j]
    return CvResult(classes, class_counts(y, pred, classes), pred, scores, folds, y)


def write_metrics_table(result: CvResult, path, label: str = "") -> None:
    """Per-class rows: TP FP TN FN Recall Precision Sensitivity Specificity Accuracy."""
    fmt = lambda v: "" if v is None else f"{v:.4f}"  # noqa: E731
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "class", "tp", "fp", "tn", "fn", "recall", "precision", "sensitivity",
                    "specificity", "accuracy"])
        for c in result.classes:
            cc, m = result.counts[c], confusion_metrics(result.counts[c])
            w.writerow([label, c, cc.tp, cc.fp, cc.tn, cc.fn, fmt(m.recall), fmt(m.precision),
                        fmt(m.sensitivity), fmt(m.specificity), fmt(m.accuracy)])
        w.writerow([label, "overall", "", "", "", "", "", "", "", "", f"{result.accuracy:.4f}"])


def write_roc(result: CvResult, path, label: str = "") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "class", "kind", "threshold", "fpr", "tpr"])
        for c in result.classes:
            fpr, tpr = result.roc_point(c)
            w.writerow([label, c, "operating", "", f"{fpr:.6f}", f"{tpr:.6f}"])
            for a, b, t in zip(*result.roc_curve(c)):
                w.writerow([label, c, "sweep", f"{t:.6f}", f"{a:.6f}", f"{b:.6f}"])
