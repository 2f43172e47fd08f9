"""k-means clustering and label-agreement metrics (ACC, NMI)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class ClusteringResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations_used: int


def _sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (
        (x * x).sum(axis=1, keepdims=True)
        + (centers * centers).sum(axis=1)
        - 2.0 * x @ centers.T
    )
    return np.maximum(d, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center drawn with probability proportional
    to the squared distance from the nearest already-chosen center."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # all points coincide with a chosen center
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(
    x: np.ndarray, centers: np.ndarray, max_iter: int
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    n, k = x.shape[0], centers.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        d2 = _sq_distances(x, centers)
        new_labels = d2.argmin(axis=1)
        dist_to_assigned = d2[np.arange(n), new_labels]
        # refill empty clusters with the farthest point, stolen from a cluster
        # that keeps at least one member (pigeonhole guarantees a donor)
        counts = np.bincount(new_labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            donors = counts[new_labels] >= 2
            far = int(np.where(donors, dist_to_assigned, -1.0).argmax())
            counts[new_labels[far]] -= 1
            new_labels[far] = j
            counts[j] = 1
            dist_to_assigned[far] = 0.0
        history.append(float(dist_to_assigned.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = np.zeros_like(centers)
        np.add.at(centers, labels, x)
        centers /= counts[:, None]
    inertia = float(_sq_distances(x, centers)[np.arange(n), labels].sum())
    return labels, centers, inertia, iterations, history


def kmeans(
    x: np.ndarray, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300
) -> ClusteringResult:
    """Best of ``restarts`` Lloyd runs (by inertia), each from k-means++ seeding.

    Restart r uses the generator seeded with (seed, r), so results are
    reproducible and restarts could run independently.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"kmeans expects a matrix, got ndim={x.ndim}")
    if k > x.shape[0]:
        raise ValueError(f"kmeans: k={k} exceeds the number of samples {x.shape[0]}")
    if k < 1 or restarts < 1:
        raise ValueError("kmeans: k and restarts must be at least 1")
    best: ClusteringResult | None = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        centers = _kmeans_pp_init(x, k, rng)
        labels, centroids, inertia, iters, _ = _lloyd(x, centers, max_iter)
        if best is None or inertia < best.inertia:
            best = ClusteringResult(labels, centroids, inertia, iters)
    return best


def _contingency(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(
            f"label vectors must be equal-length 1-D, got {pred.shape} and {truth.shape}"
        )
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Clustering accuracy: best one-to-one cluster/class matching, found by
    solving the assignment problem on the negated contingency table."""
    table = _contingency(pred, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(-padded)
    return float(padded[rows, cols].sum()) / len(pred)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred: np.ndarray, truth: np.ndarray) -> float:
    """Normalized mutual information with geometric-mean normalization.

    Both partitions trivial (single cluster) gives 1.0; exactly one trivial
    gives 0.0.
    """
    table = _contingency(pred, truth)
    n = int(table.sum())
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    if len(a) == 1 and len(b) == 1:
        return 1.0
    if len(a) == 1 or len(b) == 1:
        return 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(a, b)[nz] / (n * n)
    mi = float((pij * np.log(pij / outer)).sum())
    return mi / np.sqrt(_entropy(a, n) * _entropy(b, n))
