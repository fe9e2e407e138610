"""Batch self-organizing map on a hexagonal grid with U-, F- and L-matrices."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyData, Untrained


def hex_coords(width: int, height: int) -> np.ndarray:
    """Node centres (row-major, node = r * width + c) with unit neighbour spacing."""
    r, c = np.divmod(np.arange(width * height), width)
    return np.column_stack([c + 0.5 * (r % 2), r * np.sqrt(3) / 2])


def hex_neighbors(width: int, height: int) -> list:
    xy = hex_coords(width, height)
    d = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1))
    return [np.flatnonzero((row > 0.5) & (row < 1.0 + 1e-9)) for row in d]


@dataclass
class SomGrid:
    width: int = 20
    height: int = 20
    codebook: np.ndarray | None = None
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    trained: bool = False
    qe_rough: float = float("nan")
    qe_fine: float = float("nan")
    qe_curve: list = field(default_factory=list)

    def _check(self):
        if not self.trained:
            raise Untrained("SOM has not been trained")

    def scaled(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def bmu(self, X, scaled: bool = False) -> np.ndarray:
        self._check()
        Z = np.asarray(X, dtype=float) if scaled else self.scaled(X)
        return _bmu(Z, self.codebook)


def _bmu(Z, W):
    d = (Z * Z).sum(axis=1)[:, None] - 2.0 * Z @ W.T + (W * W).sum(axis=1)[None, :]
    return d.argmin(axis=1)


def _qe(Z, W, bmu):
    return float(np.mean(np.linalg.norm(Z - W[bmu], axis=1)))


def train_som(X, width: int = 20, height: int = 20, epochs: int = 25, finetune: int = 20,
              seed: int = 0, sigma_start: float | None = None) -> SomGrid:
    """Batch training in unit-variance space.

    The Gaussian neighbourhood width falls linearly from ``max(width, height)/2``
    to 1 over the rough epochs, then from 1 to 0.5 while fine-tuning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyData("SOM needs a non-empty 2-D data matrix")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
    scale = np.where(sd > 0, sd, 1.0)
    Z = (X - mean) / scale
    rng = np.random.default_rng(seed)
    W = rng.uniform(Z.min(axis=0), Z.max(axis=0), size=(width * height, X.shape[1]))
    xy = hex_coords(width, height)
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
    s0 = max(width, height) / 2 if sigma_start is None else sigma_start
    sigmas = list(np.linspace(s0, 1.0, epochs)) + list(np.linspace(1.0, 0.5, finetune))
    grid = SomGrid(width, height, W, mean, scale)
    curve = []
    for e, sigma in enumerate(sigmas):
        bmu = _bmu(Z, W)
        H = np.exp(-d2 / (2.0 * sigma * sigma))
        hits = np.bincount(bmu, minlength=len(W)).astype(float)
        sums = np.zeros_like(W)
        np.add.at(sums, bmu, Z)
        num = H @ sums
        den = H @ hits
        ok = den > 1e-12
        W = np.where(ok[:, None], num / np.where(ok, den, 1.0)[:, None], W)
        curve.append(_qe(Z, W, _bmu(Z, W)))
        if e == epochs - 1:
            grid.qe_rough = curve[-1]
    grid.codebook = W
    grid.qe_fine = curve[-1] if finetune else grid.qe_rough
    grid.qe_curve = curve
    grid.trained = True
    return grid


def u_matrix(som: SomGrid) -> np.ndarray:
    som._check()
    W = som.codebook
    out = np.array([np.linalg.norm(W[nb] - W[k], axis=1).mean() for k, nb in
                    enumerate(hex_neighbors(som.width, som.height))])
    return out.reshape(som.height, som.width)


def f_matrix(som: SomGrid, feature: int) -> np.ndarray:
    """Component plane of one feature in original units."""
    som._check()
    return (som.codebook[:, feature] * som.scale[feature] + som.mean[feature]).reshape(som.height, som.width)


@dataclass(frozen=True)
class LMatrix:
    label: np.ndarray
    participant: np.ndarray
    hits: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.hits == 0


def l_matrix(som: SomGrid, X, labels, participants=None, prefer: str = "A") -> LMatrix:
    """Majority label and participant per node; ties go to ``prefer``, empty nodes get ''."""
    som._check()
    bmu = som.bmu(X)
    labels = np.asarray(labels, dtype=object)
    pids = np.asarray(participants if participants is not None else [""] * len(bmu), dtype=object)
    n = som.width * som.height
    lab = np.full(n, "", dtype=object)
    pid = np.full(n, "", dtype=object)
    hits = np.bincount(bmu, minlength=n)
    for k in np.flatnonzero(hits):
        rows = bmu == k
        cnt = Counter(labels[rows].tolist())
        top = max(cnt.values())
        winners = sorted(c for c, v in cnt.items() if v == top)
        lab[k] = prefer if prefer in winners else winners[0]
        pc = Counter(pids[rows].tolist())
        ptop = max(pc.values())
        pid[k] = sorted(p for p, v in pc.items() if v == ptop)[0]
    shape = (som.height, som.width)
    return LMatrix(lab.reshape(shape), pid.reshape(shape), hits.reshape(shape))


def write_grid(grid: np.ndarray, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(grid):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row])
