"""Training objectives: cross-view consistency, structure preservation, and
their weighted combination with the anchor entropy term."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import AnchorGraph


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


def mutual_information(f_a, f_b) -> Tensor:
    """MI of the joint cluster distribution pooled over anchors.

    The joint is P = (1/m) F_a^T F_b, a c x c matrix summing to one whose
    marginals are the mean cluster distributions of each view.  Entries are
    clamped at 1e-12 inside the logarithms only.  Zero when either argument
    has identical rows, and symmetric in its arguments.
    """
    f_a = ad._as_tensor(f_a)
    f_b = ad._as_tensor(f_b)
    if f_a.shape != f_b.shape:
        raise ValueError(f"distribution shapes disagree: {f_a.shape} vs {f_b.shape}")
    m, c = f_a.shape
    p = (1.0 / m) * ad.matmul(ad.transpose(f_a), f_b)
    ones_row = Tensor(np.ones((1, c)))
    ones_col = Tensor(np.ones((c, 1)))
    p_rows = ad.matmul(ad.rowsum(p), ones_row)   # row marginal broadcast over columns
    p_cols = ad.matmul(ones_col, ad.colsum(p))   # column marginal broadcast over rows
    log_ratio = ad.safe_log(p) - ad.safe_log(p_rows) - ad.safe_log(p_cols)
    return ad.sum_all(p * log_ratio)


def consistency_loss(fs) -> Tensor:
    """Negated mutual information summed over unordered view pairs."""
    fs = list(fs)
    if len(fs) < 2:
        warnings.warn(
            "consistency loss needs at least two views; returning 0", RuntimeWarning,
            stacklevel=2,
        )
        return Tensor(np.zeros((1, 1)))
    total = None
    for a in range(len(fs)):
        for b in range(a + 1, len(fs)):
            mi = mutual_information(fs[a], fs[b])
            total = mi if total is None else total + mi
    return -total


def structure_preservation_loss(z, graph: AnchorGraph) -> Tensor:
    """Smoothness of the embedding over the anchor-induced sample graph,
    computed as ||Z||_F^2 - ||D^(-1/2) S^T Z||_F^2 so the n x n graph is never
    built."""
    z = ad._as_tensor(z)
    if z.rows != graph.n_samples:
        raise ValueError(
            f"embedding has {z.rows} rows but the graph covers {graph.n_samples} samples"
        )
    projector = Tensor(graph.scaled_transpose())
    t = ad.matmul(projector, z)
    return ad.sum_all(z * z) - ad.sum_all(t * t)


def joint_loss(l_anchor: Tensor, l_consistency: Tensor, l_structure: Tensor,
               weights: LossWeights) -> Tensor:
    """Total objective: anchor entropy + alpha * consistency + beta * structure."""
    for name, t in (("anchor", l_anchor), ("consistency", l_consistency),
                    ("structure", l_structure)):
        if t.shape != (1, 1):
            raise ValueError(f"{name} loss must be scalar, got shape {t.shape}")
    return l_anchor + weights.alpha * l_consistency + weights.beta * l_structure
