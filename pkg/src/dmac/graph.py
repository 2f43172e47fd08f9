"""Closed-form sample-to-anchor graphs and the operators derived from them.

Each row of the graph solves, exactly, the sparsity-regularized affinity
problem over the probability simplex: minimize sum_j d_ij * s_ij + g * ||s||^2
subject to s >= 0, sum(s) = 1, where d_ij are squared distances and the
regularizer g is fixed per row so that exactly k anchors receive weight.  The
resulting weights are nonincreasing in distance.

Graphs are built from detached values: the row solver sorts distances, so it
is not differentiable and never participates in the gradient tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSE_GRAPH_CAP = 4096


@dataclass
class AnchorGraph:
    """Sparse n x m row-stochastic graph: k weighted anchors per sample."""

    n_samples: int
    n_anchors: int
    indices: np.ndarray   # (n, k) anchor ids, int64
    weights: np.ndarray   # (n, k) nonnegative, each row sums to 1
    degrees: np.ndarray   # (m,) column sums of the dense graph
    gamma: np.ndarray     # (n,) per-row regularizer implied by the closed form

    def to_dense(self) -> np.ndarray:
        s = np.zeros((self.n_samples, self.n_anchors))
        np.put_along_axis(s, self.indices, self.weights, axis=1)
        return s

    def scaled_transpose(self) -> np.ndarray:
        """D^(-1/2) S^T with zero-degree anchors mapped to zero rows."""
        inv_sqrt = np.sqrt(_degree_pinv(self.degrees))
        return (self.to_dense() * inv_sqrt[None, :]).T

    def entries(self):
        """Yield (sample, anchor, weight) triples with positive weight."""
        for i in range(self.n_samples):
            for j, w in zip(self.indices[i], self.weights[i]):
                if w > 0:
                    yield i, int(j), float(w)


def solve_anchor_graph(z: np.ndarray, u: np.ndarray, k: int) -> AnchorGraph:
    """Connect each sample to its k nearest anchors with simplex weights.

    With ascending squared distances d_1 <= ... <= d_m per row, the weight on
    the j-th nearest anchor is (d_{k+1} - d_j) / (k*d_{k+1} - sum_{h<=k} d_h).
    Ties in the sort break by anchor index.  A degenerate row (the k+1 nearest
    distances all equal, or k = m) falls back to uniform 1/k weights.
    """
    z = np.asarray(z, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if z.ndim != 2 or u.ndim != 2 or z.shape[1] != u.shape[1]:
        raise ValueError(f"incompatible shapes {z.shape} and {u.shape}")
    n, m = z.shape[0], u.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"neighbor count k={k} must lie in [1, {m}]")

    d = (
        (z * z).sum(axis=1, keepdims=True)
        + (u * u).sum(axis=1)
        - 2.0 * z @ u.T
    )
    np.maximum(d, 0.0, out=d)

    if k == m:
        indices = np.broadcast_to(np.arange(m, dtype=np.int64), (n, m)).copy()
        weights = np.full((n, m), 1.0 / m)
        gamma = np.zeros(n)
    else:
        order = np.argsort(d, axis=1, kind="stable")
        indices = order[:, :k].astype(np.int64)
        d_near = np.take_along_axis(d, order[:, : k + 1], axis=1)
        d_cut = d_near[:, k:]
        denom = k * d_cut - d_near[:, :k].sum(axis=1, keepdims=True)
        degenerate = denom[:, 0] <= 1e-12
        safe = np.where(degenerate[:, None], 1.0, denom)
        weights = (d_cut - d_near[:, :k]) / safe
        weights[degenerate] = 1.0 / k
        gamma = np.where(degenerate, 0.0, denom[:, 0] / 2.0)

    degrees = np.bincount(indices.ravel(), weights=weights.ravel(), minlength=m)
    return AnchorGraph(
        n_samples=n,
        n_anchors=m,
        indices=indices,
        weights=weights,
        degrees=degrees,
        gamma=gamma,
    )


def _degree_pinv(degrees: np.ndarray) -> np.ndarray:
    inv = np.zeros_like(degrees)
    nz = degrees > 0
    inv[nz] = 1.0 / degrees[nz]
    return inv


def propagation_operator(graph: AnchorGraph) -> np.ndarray:
    """Anchor-to-anchor operator D^(-1) S^T S; rows of zero-degree anchors are
    zero (diagonal pseudo-inverse)."""
    s = graph.to_dense()
    return _degree_pinv(graph.degrees)[:, None] * (s.T @ s)


def full_sample_graph(graph: AnchorGraph, cap: int = DENSE_GRAPH_CAP) -> np.ndarray:
    """Materialize the induced sample graph S D^(-1) S^T.

    Only for inspection at small n; raises above ``cap`` because every training
    quantity can be computed without it (the structure loss uses the trace
    form).
    """
    if graph.n_samples > cap:
        raise ValueError(
            f"refusing to materialize a {graph.n_samples}x{graph.n_samples} graph "
            f"(cap {cap}); use the trace-form structure loss instead"
        )
    s = graph.to_dense()
    return (s * _degree_pinv(graph.degrees)[None, :]) @ s.T
