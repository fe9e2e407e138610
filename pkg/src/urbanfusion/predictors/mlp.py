"""One-hidden-layer perceptron trained by full-batch gradient descent with momentum."""

from __future__ import annotations

import numpy as np

from ..errors import EmptyTrain, NonFiniteLoss, SingleClass, UntrainedModel


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Mlp:
    def __init__(self, hidden: int = 10, learning_rate: float = 0.3, momentum: float = 0.2,
                 epochs: int = 1000, seed: int = 0):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.seed = seed
        self.classes_ = None

    def _forward(self, Xs):
        h = _sigmoid(Xs @ self.W1 + self.b1)
        return h, _softmax(h @ self.W2 + self.b2)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if len(y) == 0:
            raise EmptyTrain("no training rows")
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise SingleClass(f"only class {self.classes_[0]!r} present")
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        Xs = (X - self.mean_) / self.scale_
        n, nf = Xs.shape
        k = len(self.classes_)
        rng = np.random.default_rng(self.seed)
        self.W1 = rng.uniform(-0.5, 0.5, (nf, self.hidden))
        self.b1 = rng.uniform(-0.5, 0.5, self.hidden)
        self.W2 = rng.uniform(-0.5, 0.5, (self.hidden, k))
        self.b2 = rng.uniform(-0.5, 0.5, k)
        T = np.eye(k)[yi]
        params = [self.W1, self.b1, self.W2, self.b2]
        velocity = [np.zeros_like(p) for p in params]
        curve = []
        for _ in range(self.epochs + 1):
            h, out = self._forward(Xs)
            loss = -float(np.mean(np.log(np.clip(out[np.arange(n), yi], 1e-300, None))))
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} after {len(curve)} epochs")
            curve.append(loss)
            if len(curve) > self.epochs:
                break
            d_out = (out - T) / n
            d_h = (d_out @ self.W2.T) * h * (1 - h)
            grads = [Xs.T @ d_h, d_h.sum(axis=0), h.T @ d_out, d_out.sum(axis=0)]
            for p, v, g in zip(params, velocity, grads):
                v *= self.momentum
                v -= self.learning_rate * g
                p += v
        self.loss_curve_ = np.array(curve)
        return self

    def predict_scores(self, X) -> np.ndarray:
        if self.classes_ is None:
            raise UntrainedModel("MLP has not been trained")
        return self._forward((np.asarray(X, dtype=float) - self.mean_) / self.scale_)[1]

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_scores(X).argmax(axis=1)]
