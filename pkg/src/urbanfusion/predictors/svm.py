"""Soft-margin RBF support vector machine solved by SMO.

The dual ``min 1/2 a'Qa - e'a`` subject to ``0 <= a <= C`` and ``y'a = 0`` is
solved two coordinates at a time, with the maximal-violating-pair / second
order working set rule. Several classes are handled one-vs-rest.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptyTrain, NoConvergence, SingleClass, UntrainedModel

TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo(K: np.ndarray, y: np.ndarray, C: float = 1.0, eps: float = 1e-3, max_iter: int = 100_000):
    """Solve the binary dual for labels ``y`` in {-1, +1}.

    Returns ``(alpha, rho, objective_trace)``; the trace holds the dual
    objective ``e'a - 1/2 a'Qa`` after every update.
    """
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    trace = []
    for it in range(max_iter):
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(yg[up])])
        m_up = yg[i]
        m_low = yg[low].min()
        if m_up - m_low < eps:
            break
        cand = low & (yg < m_up)
        b = m_up - yg[cand]
        a = diag[i] + diag[cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        quad = quad if quad > 0 else TAU
        step = (yg[i] - yg[j]) / quad
        ai_old, aj_old = alpha[i], alpha[j]
        s = y[i] * ai_old + y[j] * aj_old
        ai = min(max(ai_old + y[i] * step, 0.0), C)
        aj = y[j] * (s - y[i] * ai)
        aj = min(max(aj, 0.0), C)
        ai = y[i] * (s - y[j] * aj)
        dai, daj = ai - ai_old, aj - aj_old
        alpha[i], alpha[j] = ai, aj
        grad += y * (K[:, i] * (y[i] * dai) + K[:, j] * (y[j] * daj))
        trace.append(-0.5 * float(alpha @ (grad - 1.0)))
    else:
        raise NoConvergence(f"SMO did not reach tolerance {eps} within {max_iter} iterations")
    yg = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = -float(yg[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = yg[up].max() if up.any() else 0.0
        lo = yg[low].min() if low.any() else 0.0
        rho = -0.5 * float(hi + lo)
    return alpha, rho, np.array(trace)


class Svm:
    """RBF SVM on standardised features; ``gamma=None`` means 1 / n_features."""

    def __init__(self, C: float = 1.0, gamma: float | None = None, eps: float = 1e-3,
                 max_iter: int = 100_000, seed: int = 0):
        self.C = C
        self.gamma = gamma
        self.eps = eps
        self.max_iter = max_iter
        self.seed = seed
        self.classes_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if len(y) == 0:
            raise EmptyTrain("no training rows")
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise SingleClass(f"only class {self.classes_[0]!r} present")
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        Xs = (X - self.mean_) / self.scale_
        self.gamma_ = self.gamma if self.gamma is not None else 1.0 / X.shape[1]
        K = rbf_kernel(Xs, Xs, self.gamma_)
        targets = self.classes_[1:] if len(self.classes_) == 2 else self.classes_
        self.machines_ = []
        self.objective_traces_ = []
        for cls in targets:
            ys = np.where(y == cls, 1.0, -1.0)
            alpha, rho, trace = smo(K, ys, self.C, self.eps, self.max_iter)
            sv = alpha > 0
            self.machines_.append((Xs[sv], (alpha * ys)[sv], rho))
            self.objective_traces_.append(trace)
        return self

    def decision_function(self, X) -> np.ndarray:
        if self.classes_ is None:
            raise UntrainedModel("SVM has not been trained")
        Xs = (np.asarray(X, dtype=float) - self.mean_) / self.scale_
        cols = []
        for sv, coef, rho in self.machines_:
            cols.append(rbf_kernel(Xs, sv, self.gamma_) @ coef - rho if len(sv) else np.full(len(Xs), -rho))
        return np.column_stack(cols)

    def predict_scores(self, X) -> np.ndarray:
        """Logistic squashing of decision values, one column per class."""
        d = self.decision_function(X)
        if len(self.classes_) == 2:
            p = 1.0 / (1.0 + np.exp(-d[:, 0]))
            return np.column_stack([1 - p, p])
        s = 1.0 / (1.0 + np.exp(-d))
        return s / s.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        d = self.decision_function(X)
        if len(self.classes_) == 2:
            return self.classes_[(d[:, 0] > 0).astype(int)]
        return self.classes_[d.argmax(axis=1)]
