"""Learnable anchors: initialization, perturbation generation, sample-anchor
similarity, and the entropy loss that sharpens it.

Anchors start as k-means centroids of the fused embedding and stay constant;
what trains is an additive perturbation built by two small MLPs (mean and
deviation heads over the initial anchors) combined with a frozen standard
normal draw, so the perturbation is a deterministic, differentiable function
of the network weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import EncoderSpec, Layer, init_encoder
from .evaluation import kmeans


@dataclass
class PerturbNetParams:
    """Separate weight stacks for the mean and deviation heads."""

    mu_layers: list[Layer]
    sigma_layers: list[Layer]

    @classmethod
    def create(cls, dim: int, hidden: int | None = None, seed: int = 0) -> "PerturbNetParams":
        hidden = dim if hidden is None else hidden
        mu = init_encoder(EncoderSpec([dim, hidden, dim], seed=seed))
        sigma = init_encoder(EncoderSpec([dim, hidden, dim], seed=seed + 1))
        return cls(mu_layers=mu, sigma_layers=sigma)

    def all_tensors(self) -> list[Tensor]:
        return [t for layer in self.mu_layers + self.sigma_layers for t in layer]


@dataclass
class AnchorState:
    """Everything needed to rebuild the current anchors."""

    u_hat: np.ndarray           # initial anchors, never differentiated
    epsilon_base: np.ndarray    # frozen standard-normal draw, same shape
    mu: Tensor
    sigma: Tensor
    epsilon: Tensor
    u: Tensor | None = None


def anchor_count(n: int, c: int) -> int:
    """Default anchor budget: floor(sqrt(n*c)), clamped to [c, n]."""
    if n < 1 or c < 2:
        raise ValueError(f"need n >= 1 and c >= 2, got n={n}, c={c}")
    return max(c, min(n, int(math.isqrt(n * c))))


def init_anchors(z: np.ndarray, m: int, seed: int = 0, restarts: int = 2) -> np.ndarray:
    """Initial anchors = k-means centroids of the (detached) fused embedding."""
    z = np.asarray(z, dtype=np.float64)
    if m > z.shape[0]:
        raise ValueError(f"cannot place {m} anchors on {z.shape[0]} samples")
    return kmeans(z, m, seed=seed, restarts=restarts).centroids


def _mlp(x: Tensor, layers: list[Layer]) -> Tensor:
    h = x
    for i, (w, b) in enumerate(layers):
        h = ad.matmul(h, w) + b
        if i < len(layers) - 1:
            h = ad.relu(h)
    return h


def generate_perturbation(
    u_hat: np.ndarray, params: PerturbNetParams, epsilon_base: np.ndarray
) -> tuple[Tensor, Tensor, Tensor]:
    """mu = MLP_mu(U0), sigma = softplus(MLP_sigma(U0)), eps = mu + sigma*base.

    The base draw is fixed, so eps is deterministic in the parameters and
    gradients flow into both heads.
    """
    u0 = Tensor(u_hat)
    mu = _mlp(u0, params.mu_layers)
    sigma = ad.softplus(_mlp(u0, params.sigma_layers))
    epsilon = mu + sigma * Tensor(epsilon_base)
    return mu, sigma, epsilon


def perturbed_anchors(state: AnchorState) -> Tensor:
    """U = U0 + eps; the initial anchors contribute no gradient."""
    return Tensor(state.u_hat) + state.epsilon


def make_anchor_state(
    u_hat: np.ndarray,
    params: PerturbNetParams,
    epsilon_base: np.ndarray,
    enabled: bool = True,
) -> AnchorState:
    """Assemble the anchor state; with ``enabled`` False the perturbation is
    an exact zero and the anchors equal their initialization."""
    if enabled:
        mu, sigma, epsilon = generate_perturbation(u_hat, params, epsilon_base)
    else:
        zero = np.zeros_like(u_hat)
        mu, sigma, epsilon = Tensor(zero), Tensor(zero), Tensor(zero)
    state = AnchorState(
        u_hat=np.asarray(u_hat, dtype=np.float64),
        epsilon_base=epsilon_base,
        mu=mu,
        sigma=sigma,
        epsilon=epsilon,
    )
    state.u = perturbed_anchors(state)
    return state


def anchor_similarity(z_view, u) -> Tensor:
    """Student-t affinity between samples and anchors, normalized per row:
    q_ij proportional to 1 / (1 + ||z_i - u_j||^2)."""
    z_view = ad._as_tensor(z_view)
    u = ad._as_tensor(u)
    d = ad.pairwise_sqdist(z_view, u)
    weights = ad.reciprocal(d + 1.0)
    return ad.row_normalize(weights)


def assignment_entropy(q: Tensor) -> Tensor:
    """Mean row entropy of a similarity matrix: (-1/n) sum q log q."""
    n = q.rows
    plogp = q * ad.safe_log(q)
    return (-1.0 / n) * ad.sum_all(plogp)


def anchor_learning_loss(qs) -> Tensor:
    """Sum of mean row entropies across views.  Zero when every sample commits
    to a single anchor; v*log(m) when every row is uniform."""
    if not qs:
        raise ValueError("anchor_learning_loss needs at least one similarity matrix")
    total = assignment_entropy(qs[0])
    for q in qs[1:]:
        total = total + assignment_entropy(q)
    return total
