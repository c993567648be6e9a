"""Linear softmax classifier trained by Adam on mean negative log-likelihood."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc


@dataclass
class ClassifierConfig:
    lr: float = 1e-3
    epochs: int = 30
    batch: int = 128
    seed: int = 0


@dataclass
class SoftmaxClassifier:
    classes: tuple[str, ...]
    W: np.ndarray
    b: np.ndarray

    def logits(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.W + self.b

    def log_proba(self, X: np.ndarray) -> np.ndarray:
        z = self.logits(X)
        z = z - z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.logits(X), axis=1)

    def predict(self, X: np.ndarray) -> list[str]:
        return [self.classes[i] for i in self.predict_index(X)]

    def nll(self, X: np.ndarray, labels) -> float:
        idx = self.encode(labels)
        return float(-self.log_proba(X)[np.arange(len(idx)), idx].mean())

    def encode(self, labels) -> np.ndarray:
        pos = {c: i for i, c in enumerate(self.classes)}
        return np.array([pos[c] for c in labels], dtype=np.int64)


def nll_loss(logits: nc.Tensor, targets: np.ndarray) -> nc.Tensor:
    logp = nc.log_softmax(logits, axis=1)
    return -logp[np.arange(len(targets)), targets].mean()


def train_softmax(features: np.ndarray, labels, classes, config: ClassifierConfig | None = None) -> SoftmaxClassifier:
    """Fit a linear softmax classifier over the candidate label set ``classes``.

    Class order is sorted by id so argmax ties resolve to the lowest id.
    """
    config = config or ClassifierConfig()
    classes = tuple(sorted(set(classes)))
    X = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ValueError("features and labels differ in length")
    present = set(labels)
    empty = [c for c in classes if c not in present]
    if empty:
        raise ValueError(f"classes without training rows: {empty}")
    stray = present - set(classes)
    if stray:
        raise ValueError(f"labels outside the candidate set: {sorted(stray)}")
    pos = {c: i for i, c in enumerate(classes)}
    y = np.array([pos[c] for c in labels], dtype=np.int64)
    d, k = X.shape[1], len(classes)
    if k == 1:
        return SoftmaxClassifier(classes, np.zeros((d, 1)), np.zeros(1))

    rng = np.random.default_rng(config.seed)
    W = nc.parameter(np.zeros((d, k)))
    b = nc.parameter(np.zeros(k))
    opt = nc.Adam([W, b], lr=config.lr)
    n = len(y)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            opt.minimize(nll_loss(nc.Tensor(X[idx]) @ W + b, y[idx]))
    return SoftmaxClassifier(classes, W.data.copy(), b.data.copy())
