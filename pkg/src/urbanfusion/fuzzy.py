"""Fuzzy unordered rule induction.

Crisp interval rules are learned per class by separate-and-conquer (grow on a
seeded two-thirds sample with FOIL gain, prune on the remaining third by
Laplace precision). Each antecedent is then softened into a trapezoid whose
support is widened outward as far as that improves the rule's fuzzy Laplace
precision on the training data. Rows are classified by the strongest
certainty-weighted rule; a row no rule touches gets the majority class.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import FEATURE_NAMES
from .errors import EmptyTrain, NoCoverage, SingleClass, UntrainedModel

INF = math.inf
MAX_CANDIDATES = 200


@dataclass(frozen=True)
class CrispRule:
    """Conjunction of ``(feature, op, threshold)`` with op in {"<=", ">="}."""

    antecedents: tuple
    consequent: str
    coverage: int = 0
    correct: int = 0
    holdout_precision: float = float("nan")

    def bounds(self, feature_names) -> dict:
        """Feature index -> [lower, upper] interval of the rule."""
        out = {}
        for name, op, thr in self.antecedents:
            lo, hi = out.get(feature_names.index(name), [-INF, INF])
            out[feature_names.index(name)] = [thr, hi] if op == ">=" else [lo, thr]
        return out

    def covers(self, X, feature_names) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        mask = np.ones(len(X), dtype=bool)
        for f, (lo, hi) in self.bounds(feature_names).items():
            mask &= (X[:, f] >= lo) & (X[:, f] <= hi)
        return mask

    def __str__(self):
        body = " AND ".join(f"{n} {op} {t:.6g}" for n, op, t in self.antecedents) or "TRUE"
        return f"IF {body} THEN {self.consequent}"


def trapezoid(x, a: float, b: float, c: float, d: float) -> np.ndarray:
    """Membership: 1 on [b, c], linear on [a, b] and [c, d], 0 outside [a, d]."""
    x = np.asarray(x, dtype=float)
    mu = np.ones_like(x)
    if b > -INF:
        if a < b:
            mu = np.where(x < b, np.clip((x - a) / (b - a), 0.0, 1.0), mu)
        else:
            mu = np.where(x < b, 0.0, mu)
    if c < INF:
        if d > c:
            mu = np.where(x > c, np.minimum(mu, np.clip((d - x) / (d - c), 0.0, 1.0)), mu)
        else:
            mu = np.where(x > c, 0.0, mu)
    return mu


@dataclass(frozen=True)
class FuzzyRule:
    """Per-feature trapezoids ``(feature, a, b, c, d)``, a consequent and a certainty factor."""

    antecedents: tuple
    consequent: str
    certainty_factor: float

    def membership(self, X, feature_names) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        mu = np.ones(len(X))
        for name, a, b, c, d in self.antecedents:
            mu *= trapezoid(X[:, feature_names.index(name)], a, b, c, d)
        return mu

    def firing(self, X, feature_names) -> np.ndarray:
        return self.membership(X, feature_names) * self.certainty_factor

    def __str__(self):
        parts = [f"{n} in [{a!r}, {b!r}, {c!r}, {d!r}]" for n, a, b, c, d in self.antecedents]
        return f"IF {' AND '.join(parts) or 'TRUE'} THEN {self.consequent} CF={self.certainty_factor!r}"


def _laplace(p, n):
    return (p + 1.0) / (p + n + 2.0)


def _best_antecedent(X, pos, cov):
    """FOIL-gain best ``(gain, feature, op, threshold)`` refining the covered rows."""
    p = int(np.count_nonzero(pos & cov))
    n = int(np.count_nonzero(~pos & cov))
    base = math.log2(p / (p + n))
    best = (0.0, -1, "", 0.0)
    Xc, yc = X[cov], pos[cov]
    for f in range(X.shape[1]):
        order = np.argsort(Xc[:, f], kind="stable")
        xs, ys = Xc[order, f], yc[order]
        split = np.flatnonzero(xs[1:] > xs[:-1])
        if split.size == 0:
            continue
        cp = np.cumsum(ys)[split].astype(float)
        cn = (split + 1) - cp
        thr = 0.5 * (xs[split] + xs[split + 1])
        for op, pp, nn in (("<=", cp, cn), (">=", p - cp, n - cn)):
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = np.where(pp > 0, pp * (np.log2(pp / (pp + nn)) - base), -INF)
            k = int(np.argmax(gain))
            if gain[k] > best[0] + 1e-12:
                best = (float(gain[k]), f, op, float(thr[k]))
    return best


def _apply(X, ants, mask=None):
    cov = np.ones(len(X), dtype=bool) if mask is None else mask.copy()
    for f, op, t in ants:
        cov &= X[:, f] <= t if op == "<=" else X[:, f] >= t
    return cov


def _grow(X, pos):
    ants = []
    cov = np.ones(len(X), dtype=bool)
    while np.any(~pos & cov) and np.any(pos & cov):
        gain, f, op, t = _best_antecedent(X, pos, cov)
        if f < 0:
            break
        ants.append((f, op, t))
        cov &= X[:, f] <= t if op == "<=" else X[:, f] >= t
    return ants


def _merge(ants, feature_names):
    """Keep the tightest bound per (feature, op), ordered by first appearance."""
    tight = {}
    for f, op, t in ants:
        key = (f, op)
        if key not in tight:
            tight[key] = t
        else:
            tight[key] = min(tight[key], t) if op == "<=" else max(tight[key], t)
    return tuple((feature_names[f], op, t) for (f, op), t in tight.items())


def induce_crisp(X, y, feature_names: Sequence[str] = FEATURE_NAMES, seed: int = 0,
                 grow_fraction: float = 2 / 3, min_precision: float = 0.5,
                 max_rules: int = 50) -> list[CrispRule]:
    """Unordered crisp rule set with rules for every class."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    names = list(feature_names)
    if len(y) == 0:
        raise EmptyTrain("no training rows")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClass(f"only class {classes[0]!r} present")
    rng = np.random.default_rng(seed)
    rules = []
    for cls in classes:
        is_pos = y == cls
        alive = np.ones(len(y), dtype=bool)
        n_rules = 0
        while n_rules < max_rules and np.any(alive & is_pos):
            idx = np.flatnonzero(alive)
            grow = np.zeros(len(y), dtype=bool)
            for group in (idx[is_pos[idx]], idx[~is_pos[idx]]):
                perm = group[rng.permutation(len(group))]
                grow[perm[: int(math.ceil(grow_fraction * len(perm)))]] = True
            prune = alive & ~grow
            gi = np.flatnonzero(grow)
            ants = _grow(X[gi], is_pos[gi])
            if not ants:
                break
            # Keep the prefix with the best Laplace precision on the pruning rows.
            best_len, best_score = 1, -1.0
            pi = np.flatnonzero(prune)
            for L in range(1, len(ants) + 1):
                cov = _apply(X[pi], ants[:L])
                score = _laplace(np.count_nonzero(cov & is_pos[pi]), np.count_nonzero(cov & ~is_pos[pi]))
                if score > best_score + 1e-12:
                    best_len, best_score = L, score
            ants = ants[:best_len]
            cov_p = _apply(X[pi], ants)
            if cov_p.any():
                precision = np.count_nonzero(cov_p & is_pos[pi]) / np.count_nonzero(cov_p)
            else:
                cov_g = _apply(X[gi], ants)
                precision = np.count_nonzero(cov_g & is_pos[gi]) / max(1, np.count_nonzero(cov_g))
            if precision < min_precision:
                break
            cov_all = _apply(X, ants)
            rules.append(CrispRule(_merge(ants, names), str(cls), int(cov_all.sum()),
                                   int(np.count_nonzero(cov_all & is_pos)), float(precision)))
            n_rules += 1
            newly = alive & cov_all
            if not newly.any():
                break
            alive &= ~cov_all
    return rules


def _candidates(values: np.ndarray, edge: float, outward: int) -> np.ndarray:
    """Distinct values beyond ``edge`` (outward=-1: below, +1: above), nearest first, capped."""
    v = np.unique(values[values < edge] if outward < 0 else values[values > edge])
    if outward < 0:
        v = v[::-1]
    if v.size > MAX_CANDIDATES:
        near = v[: MAX_CANDIDATES // 2]
        far = v[MAX_CANDIDATES // 2 :]
        v = np.concatenate([near, far[np.linspace(0, far.size - 1, MAX_CANDIDATES // 2).astype(int)]])
    return v


def fuzzify(rule: CrispRule, X, y, feature_names: Sequence[str] = FEATURE_NAMES) -> FuzzyRule:
    """Soften each antecedent of ``rule`` into a trapezoid.

    Antecedents are processed in order; each one's support edge is moved out to
    the candidate value maximising fuzzy Laplace precision with the other
    antecedents at their current shape. Ties go to the widest support; if no
    extension beats the crisp edge, it stays crisp.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    names = list(feature_names)
    if not rule.covers(X, names).any():
        raise NoCoverage(f"rule covers no training row: {rule}")
    is_pos = y == rule.consequent
    traps = {f: [lo, lo, hi, hi] for f, (lo, hi) in rule.bounds(names).items()}

    def mu_except(skip_f):
        m = np.ones(len(X))
        for g, (a, b, c, d) in traps.items():
            if g != skip_f:
                m *= trapezoid(X[:, g], a, b, c, d)
        return m

    for name, op, _ in rule.antecedents:
        f = names.index(name)
        a, b, c, d = traps[f]
        other = mu_except(f)
        # Keep the opposite side of this feature fixed while moving one edge.
        side_other = trapezoid(X[:, f], -INF, -INF, c, d) if op == ">=" else trapezoid(X[:, f], a, b, INF, INF)
        base = other * side_other
        live = base > 0
        x, w, pos = X[live, f], base[live], is_pos[live]
        edge = b if op == ">=" else c
        cands = _candidates(x, edge, -1 if op == ">=" else 1)
        crisp_mu = (x >= edge) if op == ">=" else (x <= edge)
        best_val = _laplace(np.sum(w * crisp_mu * pos), np.sum(w * crisp_mu * ~pos))
        best_edge = edge
        if cands.size:
            if op == ">=":
                ramp = np.clip((x[None, :] - cands[:, None]) / (edge - cands[:, None]), 0.0, 1.0)
            else:
                ramp = np.clip((cands[:, None] - x[None, :]) / (cands[:, None] - edge), 0.0, 1.0)
            ramp = np.where(crisp_mu[None, :], 1.0, ramp)
            tp = ramp @ (w * pos)
            tot = ramp @ w
            purity = (tp + 1.0) / (tot + 2.0)
            top = purity.max()
            if top >= best_val - 1e-12:
                # Candidates are ordered nearest first, so the last maximiser is the widest.
                k = int(np.flatnonzero(purity >= top - 1e-12)[-1])
                best_edge = float(cands[k])
        if op == ">=":
            traps[f][0] = best_edge
        else:
            traps[f][3] = best_edge
    mu = np.ones(len(X))
    for g, (a, b, c, d) in traps.items():
        mu *= trapezoid(X[:, g], a, b, c, d)
    cf = _laplace(float(np.sum(mu * is_pos)), float(np.sum(mu * ~is_pos)))
    ants = tuple((names[g], *map(float, t)) for g, t in traps.items())
    return FuzzyRule(ants, rule.consequent, cf)


def classify_fuzzy(rules: Sequence[FuzzyRule], X, feature_names: Sequence[str] = FEATURE_NAMES,
                   default: str | None = None):
    """Labels and winning firing degrees; rows no rule fires on get ``default``."""
    if not rules:
        raise ValueError("rule set is empty")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    names = list(feature_names)
    classes = sorted({r.consequent for r in rules})
    strength = np.zeros((len(X), len(classes)))
    for r in rules:
        j = classes.index(r.consequent)
        strength[:, j] = np.maximum(strength[:, j], r.firing(X, names))
    best = strength.argmax(axis=1)
    labels = np.array(classes, dtype=object)[best]
    score = strength[np.arange(len(X)), best]
    if default is not None:
        labels = np.where(score > 0, labels, default)
    return labels, score


class FuzzyClassifier:
    def __init__(self, grow_fraction: float = 2 / 3, min_precision: float = 0.5, max_rules: int = 50,
                 feature_names: Sequence[str] | None = None, seed: int = 0):
        self.grow_fraction = grow_fraction
        self.min_precision = min_precision
        self.max_rules = max_rules
        self.feature_names = feature_names
        self.seed = seed
        self.classes_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        names = list(self.feature_names) if self.feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
        self.names_ = names
        self.crisp_ = induce_crisp(X, y, names, self.seed, self.grow_fraction, self.min_precision, self.max_rules)
        self.rules_ = [fuzzify(r, X, y, names) for r in self.crisp_]
        self.classes_, counts = np.unique(y, return_counts=True)
        self.majority_ = str(self.classes_[int(np.argmax(counts))])
        self.prior_ = counts / counts.sum()
        return self

    def predict_scores(self, X) -> np.ndarray:
        if self.classes_ is None:
            raise UntrainedModel("fuzzy classifier has not been trained")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s = np.zeros((len(X), len(self.classes_)))
        for r in self.rules_:
            j = int(np.flatnonzero(self.classes_ == r.consequent)[0])
            s[:, j] = np.maximum(s[:, j], r.firing(X, self.names_))
        silent = s.sum(axis=1) == 0
        s[silent] = self.prior_
        return s / s.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        if self.classes_ is None:
            raise UntrainedModel("fuzzy classifier has not been trained")
        if not self.rules_:
            return np.full(len(np.atleast_2d(X)), self.majority_, dtype=object)
        return classify_fuzzy(self.rules_, X, self.names_, self.majority_)[0]


@dataclass(frozen=True)
class RangeSegment:
    feature: str
    lo: float
    hi: float
    tag: str


def rule_ranges(rules: Sequence[FuzzyRule], observed: dict) -> list[RangeSegment]:
    """Partition each feature's observed range by what the rules say about it.

    ``observed`` maps feature name to ``(min, max)``. A segment is tagged with
    a class when only that class's rule cores cover it, ``fuzzy`` when only
    supports cover it, and ``inconclusive`` when nothing or conflicting cores
    cover it. Only rules constraining the feature are considered.
    """
    out = []
    for feat, (vmin, vmax) in observed.items():
        traps = [(r.consequent, a, b, c, d) for r in rules for n, a, b, c, d in r.antecedents if n == feat]
        if not traps or vmax <= vmin:
            out.append(RangeSegment(feat, float(vmin), float(vmax), "inconclusive"))
            continue
        cuts = {float(vmin), float(vmax)}
        for _, a, b, c, d in traps:
            cuts.update(v for v in (a, b, c, d) if vmin < v < vmax)
        cuts = sorted(cuts)
        segs = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (lo + hi)
            cores = {cls for cls, a, b, c, d in traps if b <= mid <= c}
            supports = any(a < mid < d for _, a, b, c, d in traps)
            if len(cores) == 1:
                tag = cores.pop()
            elif cores:
                tag = "inconclusive"
            else:
                tag = "fuzzy" if supports else "inconclusive"
            if segs and segs[-1][2] == tag:
                segs[-1][1] = hi
            else:
                segs.append([lo, hi, tag])
        out.extend(RangeSegment(feat, lo, hi, tag) for lo, hi, tag in segs)
    return out


def write_rules(rules: Sequence[FuzzyRule], path) -> None:
    Path(path).write_text("".join(str(r) + "\n" for r in rules), encoding="utf-8")


_RULE_RE = re.compile(r"^IF (?P<body>.*) THEN (?P<cls>\S+) CF=(?P<cf>\S+)$")
_ANT_RE = re.compile(r"(\w+) in \[([^,\]]+), ([^,\]]+), ([^,\]]+), ([^,\]]+)\]")


def read_rules(path) -> list[FuzzyRule]:
    rules = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        m = _RULE_RE.match(line.strip())
        if not m:
            continue
        ants = tuple((g[0], *(float(v) for v in g[1:])) for g in _ANT_RE.findall(m["body"]))
        rules.append(FuzzyRule(ants, m["cls"], float(m["cf"])))
    return rules


def write_ranges(segments: Sequence[RangeSegment], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "lo", "hi", "tag"])
        for s in segments:
            w.writerow([s.feature, repr(s.lo), repr(s.hi), s.tag])
