"""Backward feature elimination over pluggable predictors."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import FEATURE_NAMES
from .errors import PredictorFailure, TooFewFeatures
from .predictors import PredictorSpec, build


@dataclass(frozen=True)
class LadderStep:
    size: int
    subset: tuple
    accuracy: float
    # Every subset tried at this level with its test accuracy.
    tried: tuple = ()


@dataclass(frozen=True)
class Hierarchy:
    ladders: dict
    agreement: dict
    exclusive: dict


def split_60_40(n: int, seed: int = 0, train_fraction: float = 0.6):
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(train_fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def _score(spec, X, y, train, test, cols, names):
    try:
        model = build(spec)
        if hasattr(model, "feature_names"):
            model.feature_names = [names[c] for c in cols]
        model.fit(X[np.ix_(train, cols)], y[train])
        return float(np.mean(model.predict(X[np.ix_(test, cols)]) == y[test]))
    except Exception as exc:
        raise PredictorFailure(spec.kind, [names[c] for c in cols], exc) from exc


def eliminate(spec: PredictorSpec, X, y, feature_names: Sequence[str] = FEATURE_NAMES, seed: int = 0,
              resplit_per_level: bool = False) -> list[LadderStep]:
    """Ladder from all features down to one for a single predictor.

    Each level drops the feature whose removal gives the best test accuracy;
    ties go to the lexicographically smallest sorted subset.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    names = list(feature_names)
    if X.shape[1] < 2:
        raise TooFewFeatures(f"need >= 2 features, got {X.shape[1]}")
    train, test = split_60_40(len(y), seed)
    current = list(range(X.shape[1]))
    ladder = [LadderStep(len(current), tuple(sorted(names[c] for c in current)),
                         _score(spec, X, y, train, test, current, names))]
    level = 0
    while len(current) > 1:
        level += 1
        if resplit_per_level:
            train, test = split_60_40(len(y), seed + level)
        tried = []
        for drop in current:
            cols = [c for c in current if c != drop]
            key = tuple(sorted(names[c] for c in cols))
            tried.append((key, _score(spec, X, y, train, test, cols, names), cols))
        best = max(tried, key=lambda t: t[1])[1]
        key, acc, cols = min((t for t in tried if t[1] >= best - 1e-12), key=lambda t: t[0])
        current = cols
        ladder.append(LadderStep(len(cols), key, acc, tuple((k, a) for k, a, _ in tried)))
    return ladder


def backward_eliminate(specs: Sequence[PredictorSpec], X, y, feature_names: Sequence[str] = FEATURE_NAMES,
                       seed: int = 0, resplit_per_level: bool = False, top_k: int = 1) -> Hierarchy:
    """Ladders for every predictor plus their agreement per subset size.

    ``agreement[size]`` holds the subsets that appear among the ``top_k`` best
    tried subsets of that size for every predictor; ``exclusive`` lists, per
    predictor, ladder subsets no other predictor's ladder contains.
    """
    labels = [f"{s.kind}" if [t.kind for t in specs].count(s.kind) == 1 else f"{s.kind}#{i}"
              for i, s in enumerate(specs)]
    ladders = {lab: eliminate(s, X, y, feature_names, seed, resplit_per_level) for lab, s in zip(labels, specs)}
    agreement = {}
    sizes = [st.size for st in next(iter(ladders.values()))]
    for size in sizes:
        sets = []
        for ladder in ladders.values():
            step = next(st for st in ladder if st.size == size)
            if step.tried:
                ranked = sorted(step.tried, key=lambda t: (-t[1], t[0]))[:top_k]
                sets.append({k for k, _ in ranked})
            else:
                sets.append({step.subset})
        agreement[size] = sorted(set.intersection(*sets)) if sets else []
    exclusive = {}
    for lab, ladder in ladders.items():
        others = {st.subset for o, lad in ladders.items() if o != lab for st in lad}
        exclusive[lab] = [st.subset for st in ladder if st.subset not in others]
    return Hierarchy(ladders, agreement, exclusive)


def write_hierarchy(h: Hierarchy, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predictor", "level", "size", "subset", "accuracy", "exclusive"])
        for lab, ladder in h.ladders.items():
            excl = set(h.exclusive.get(lab, ()))
            for level, st in enumerate(ladder):
                w.writerow([lab, level, st.size, ";".join(st.subset), f"{st.accuracy:.6f}", int(st.subset in excl)])
        for size, subsets in sorted(h.agreement.items(), reverse=True):
            for sub in subsets:
                w.writerow(["agreement", "", size, ";".join(sub), "", ""])
