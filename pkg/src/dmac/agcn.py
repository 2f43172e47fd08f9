"""Graph convolution over the anchor-to-anchor operator.

Each view owns its own weight stack.  Layer l maps F to phi(A F W_l) where A
is the view's propagation operator; hidden layers use ReLU and the last layer
is a row softmax whose width is the cluster count, so each output row is a
distribution of one anchor over clusters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import ACTIVATIONS, glorot_uniform


@dataclass
class AgcnParams:
    """Per-view convolution weights (no biases)."""

    layers: list[Tensor]
    activation: str = "relu"

    @classmethod
    def create(cls, widths: list[int], activation: str = "relu", seed: int = 0) -> "AgcnParams":
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = np.random.default_rng(seed)
        layers = [
            Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True)
            for fan_in, fan_out in zip(widths[:-1], widths[1:])
        ]
        return cls(layers=layers, activation=activation)


def agcn_forward(a_hat, u, params: AgcnParams) -> Tensor:
    """Propagate the anchors through the stack; rows of the result are
    probability vectors."""
    a = ad._as_tensor(a_hat)
    h = ad._as_tensor(u)
    if a.rows != a.cols or a.rows != h.rows:
        raise ValueError(
            f"operator shape {a.shape} does not match {h.rows} anchors"
        )
    act = ACTIVATIONS[params.activation]
    for i, w in enumerate(params.layers):
        if h.cols != w.rows:
            raise ValueError(
                f"layer {i}: features of width {h.cols} cannot enter weights {w.shape}"
            )
        h = ad.matmul(ad.matmul(a, h), w)
        h = act(h) if i < len(params.layers) - 1 else ad.softmax_rows(h)
    return h
