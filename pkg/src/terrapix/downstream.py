"""Lightweight adaptation heads and evaluation metrics for frozen embeddings."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import (
    CoincidentCentroids,
    EmptyModel,
    EmptySplit,
    LengthMismatch,
    SingleCluster,
)


@dataclass
class ProbeConfig:
    hidden: tuple = (256, 128)
    task: str = "classify"  # "classify" or "regress"
    n_classes: int = 2
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 256
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("classify", "regress"):
            raise ValueError("task must be classify or regress")
        if self.task == "classify" and self.n_classes < 2:
            raise ValueError("classification needs at least 2 classes")


@dataclass
class LabeledSet:
    embeddings: np.ndarray  # (N, D)
    labels: np.ndarray  # (N,) int class ids or float targets
    split: str = ""

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        self.labels = np.asarray(self.labels)
        if not np.isfinite(self.embeddings).all():
            raise ValueError("embeddings must be finite")
        if self.embeddings.shape[0] != self.labels.shape[0]:
            raise LengthMismatch("embeddings and labels differ in length")

    def __len__(self):
        return self.labels.shape[0]


def _build_mlp(in_dim: int, cfg: ProbeConfig) -> nn.Sequential:
    layers = []
    prev = in_dim
    for width in cfg.hidden:
        layers += [nn.Linear(prev, width), nn.ReLU(inplace=True)]
        prev = width
    out_dim = cfg.n_classes if cfg.task == "classify" else 1
    layers.append(nn.Linear(prev, out_dim))
    return nn.Sequential(*layers)


class Probe:
    """Fitted MLP head over frozen embeddings."""

    def __init__(self, model: nn.Sequential, cfg: ProbeConfig):
        self.model = model
        self.cfg = cfg

    def predict(self, embeddings: np.ndarray) -> np.ndarray:
        self.model.eval()
        with torch.no_grad():
            out = self.model(torch.from_numpy(np.asarray(embeddings, dtype=np.float32)))
        if self.cfg.task == "classify":
            return out.argmax(dim=1).numpy()
        return out.squeeze(-1).numpy()


def _val_score(probe: Probe, val: LabeledSet) -> float:
    preds = probe.predict(val.embeddings)
    if probe.cfg.task == "classify":
        return float(np.mean(preds == val.labels))
    return -float(np.sqrt(np.mean((preds - val.labels.astype(np.float64)) ** 2)))


def train_probe(train: LabeledSet, val: LabeledSet, cfg: ProbeConfig) -> Probe:
    """Train the head; returns the best-validation checkpoint."""
    if len(train) == 0 or len(val) == 0:
        raise EmptySplit("train and val sets must be non-empty")
    torch.manual_seed(cfg.seed)
    model = _build_mlp(train.embeddings.shape[1], cfg)
    probe = Probe(model, cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    if cfg.task == "classify":
        loss_fn = nn.CrossEntropyLoss()
        y = torch.from_numpy(train.labels.astype(np.int64))
    else:
        loss_fn = nn.MSELoss()
        y = torch.from_numpy(train.labels.astype(np.float32))
    x = torch.from_numpy(train.embeddings)
    rng = np.random.default_rng(cfg.seed)

    best_score, best_state, stale = -np.inf, None, 0
    for _ in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(train))
        for start in range(0, len(train), cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            out = model(x[sel])
            loss = loss_fn(out if cfg.task == "classify" else out.squeeze(-1), y[sel])
            opt.zero_grad()
            loss.backward()
            opt.step()
        score = _val_score(probe, val)
        if score > best_score:
            best_score, stale = score, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale > cfg.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    return probe


# ---------------------------------------------------------------------------
# kNN classifier
# ---------------------------------------------------------------------------

@dataclass
class KnnModel:
    points: np.ndarray
    labels: np.ndarray
    k: int


def knn_fit(points: np.ndarray, labels: np.ndarray, k: int) -> KnnModel:
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if points.shape[0] == 0:
        raise EmptyModel("kNN needs at least one training point")
    if k > points.shape[0]:
        raise ValueError("k must not exceed the number of training points")
    return KnnModel(points=points, labels=labels, k=k)


def knn_predict(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """Majority vote over the k nearest (Euclidean); ties -> smallest class id."""
    if model is None:
        raise EmptyModel("kNN model not fitted")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    out = np.empty(queries.shape[0], dtype=np.int64)
    for start in range(0, queries.shape[0], 4096):
        block = queries[start : start + 4096]
        d2 = ((block[:, None, :] - model.points[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argpartition(d2, model.k - 1, axis=1)[:, : model.k]
        for i, row in enumerate(nearest):
            votes = np.bincount(model.labels[row])
            out[start + i] = int(np.flatnonzero(votes == votes.max())[0])
    return out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def f1(preds, labels, averaging: str = "macro") -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise LengthMismatch("preds and labels differ in length")
    if averaging not in ("macro", "weighted"):
        raise ValueError("averaging must be macro or weighted")
    classes = np.unique(np.concatenate([preds, labels]))
    scores, weights = [], []
    for c in classes:
        tp = np.sum((preds == c) & (labels == c))
        fp = np.sum((preds == c) & (labels != c))
        fn = np.sum((preds != c) & (labels == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
        weights.append(np.sum(labels == c))
    scores = np.asarray(scores, dtype=np.float64)
    if averaging == "macro":
        return float(scores.mean())
    weights = np.asarray(weights, dtype=np.float64)
    return float((scores * weights).sum() / weights.sum())


def regression_metrics(preds, targets) -> tuple:
    """(rmse, r2, mean_bias) with mean_bias = mean(pred - target)."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise LengthMismatch("preds and targets must be equal non-empty vectors")
    err = preds - targets
    rmse = float(np.sqrt(np.mean(err**2)))
    ss_res = float(np.sum(err**2))
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return rmse, float(r2), float(err.mean())


def _pairwise(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def silhouette(points, labels) -> float:
    """Mean of (b - a) / max(a, b); singleton-cluster points score 0."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise SingleCluster("silhouette needs at least 2 clusters")
    dist = _pairwise(points)
    scores = np.zeros(points.shape[0])
    for i in range(points.shape[0]):
        own = labels == labels[i]
        if own.sum() == 1:
            continue  # singleton convention: s = 0
        a = dist[i, own].sum() / (own.sum() - 1)
        b = min(dist[i, labels == c].mean() for c in classes if c != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def davies_bouldin(points, labels) -> float:
    """(1/k) * sum_i max_{j != i} (sigma_i + sigma_j) / d(c_i, c_j)."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise SingleCluster("Davies-Bouldin needs at least 2 clusters")
    centroids = np.stack([points[labels == c].mean(axis=0) for c in classes])
    scatter = np.array(
        [np.linalg.norm(points[labels == c] - centroids[i], axis=1).mean()
         for i, c in enumerate(classes)]
    )
    k = classes.size
    total = 0.0
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if i == j:
                continue
            sep = np.linalg.norm(centroids[i] - centroids[j])
            if sep <= 1e-12:
                raise CoincidentCentroids("cluster centroids coincide")
            worst = max(worst, (scatter[i] + scatter[j]) / sep)
        total += worst
    return float(total / k)
