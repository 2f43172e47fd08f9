"""Per-view MLP encoders and average fusion of view embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

Layer = tuple[Tensor, Tensor]  # (weight, bias)

ACTIVATIONS = {
    "relu": ad.relu,
    "softplus": ad.softplus,
    "identity": lambda t: t,
}


@dataclass
class EncoderSpec:
    """Widths from input to output, e.g. [d_in, 256, 64, d_z]."""

    widths: list[int]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("an encoder needs at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(spec: EncoderSpec) -> list[Layer]:
    rng = np.random.default_rng(spec.seed)
    layers = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        w = Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True)
        b = Tensor(np.zeros((1, fan_out)), requires_grad=True)
        layers.append((w, b))
    return layers


def encode_view(x, layers: Sequence[Layer], activation: str = "relu") -> Tensor:
    """Run one view through its MLP: hidden layers use ``activation``, the
    output layer is linear."""
    h = ad._as_tensor(x)
    if h.cols != layers[0][0].rows:
        raise ValueError(
            f"view has {h.cols} features but the encoder expects {layers[0][0].rows}"
        )
    act = ACTIVATIONS[activation]
    for i, (w, b) in enumerate(layers):
        h = ad.matmul(h, w) + b
        if i < len(layers) - 1:
            h = act(h)
    return h


def fuse(embeddings: Sequence[Tensor]) -> Tensor:
    """Average the per-view embeddings into the shared one."""
    if not embeddings:
        raise ValueError("fuse needs at least one embedding")
    shape = embeddings[0].shape
    for i, z in enumerate(embeddings):
        if z.shape != shape:
            raise ValueError(
                f"embedding {i} has shape {z.shape}, expected {shape}; "
                "all views must share n and the embedding width"
            )
    total = embeddings[0]
    for z in embeddings[1:]:
        total = total + z
    return (1.0 / len(embeddings)) * total
