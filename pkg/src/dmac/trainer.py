"""End-to-end training loop: encode, fuse, perturb anchors, build graphs,
propagate, score, and update all parameters with RMSprop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .agcn import AgcnParams, agcn_forward
from .anchors import (
    PerturbNetParams,
    anchor_count,
    anchor_learning_loss,
    anchor_similarity,
    init_anchors,
    make_anchor_state,
)
from .autodiff import Tape, Tensor, backward
from .datasets import MultiViewDataset
from .encoders import EncoderSpec, encode_view, fuse, init_encoder
from .evaluation import accuracy, kmeans, nmi
from .graph import AnchorGraph, propagation_operator, solve_anchor_graph
from .losses import (
    LossWeights,
    consistency_loss,
    joint_loss,
    structure_preservation_loss,
)
from .optim import RMSprop

DEFAULT_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)


class NonFiniteLossError(RuntimeError):
    """Raised when a loss component stops being finite during training."""


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    n_anchors: int | None = None
    k_neighbors: int = 5
    embedding_dim: int = 32
    encoder_hidden: tuple[int, ...] = (256, 64)
    perturb_hidden: int | None = None
    agcn_hidden: tuple[int, ...] = (32,)
    learning_rate: float = 1e-3
    epochs: int = 100
    anchor_refresh_period: int = 20
    seed: int = 0
    disable_perturbation: bool = False
    disable_consistency: bool = False
    rmsprop_rho: float = 0.99
    rmsprop_eps: float = 1e-8
    kmeans_restarts: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.anchor_refresh_period < 1:
            raise ValueError("anchor_refresh_period must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")
        self.encoder_hidden = tuple(self.encoder_hidden)
        self.agcn_hidden = tuple(self.agcn_hidden)
        LossWeights(self.alpha, self.beta)  # validates both


@dataclass
class EpochLosses:
    total: float
    anchor: float
    consistency: float
    structure: float

    def as_row(self) -> list[float]:
        return [self.total, self.anchor, self.consistency, self.structure]


@dataclass
class TrainResult:
    embedding: np.ndarray
    labels: np.ndarray
    loss_history: list[EpochLosses]
    epoch_seconds: list[float]
    metrics: dict | None
    anchors: np.ndarray
    anchor_graphs: list[AnchorGraph]
    config: TrainConfig

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1].total


def derive_seed(*parts: int) -> int:
    """Deterministic child seed from integer tags."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0] >> 1)


class TrainingSession:
    """Owns all parameters and the per-epoch step for one dataset/config pair.

    Nothing here is shared between threads; concurrent sessions must each live
    on their own thread.
    """

    def __init__(self, dataset: MultiViewDataset, cfg: TrainConfig):
        self.dataset = dataset
        self.cfg = cfg
        self.m = cfg.n_anchors or anchor_count(dataset.n, dataset.n_clusters)
        if self.m > dataset.n:
            raise ValueError(f"{self.m} anchors exceed {dataset.n} samples")
        self.k = min(cfg.k_neighbors, max(1, self.m - 1))
        d_z = cfg.embedding_dim

        self.encoders = []
        for v, x in enumerate(dataset.views):
            widths = [x.shape[1], *cfg.encoder_hidden, d_z]
            spec = EncoderSpec(widths, seed=derive_seed(cfg.seed, 0, v))
            self.encoders.append(init_encoder(spec))
        self.perturb = PerturbNetParams.create(
            d_z, hidden=cfg.perturb_hidden, seed=derive_seed(cfg.seed, 1)
        )
        self.agcns = [
            AgcnParams.create(
                [d_z, *cfg.agcn_hidden, dataset.n_clusters],
                seed=derive_seed(cfg.seed, 2, v),
            )
            for v in range(dataset.n_views)
        ]
        self.optimizer = RMSprop(
            self.parameters(),
            learning_rate=cfg.learning_rate,
            decay_rho=cfg.rmsprop_rho,
            epsilon_stab=cfg.rmsprop_eps,
        )
        self.u_hat: np.ndarray | None = None
        self.epsilon_base: np.ndarray | None = None
        self.anchor_state = None
        self.graphs: list[AnchorGraph] = []
        self.last_embedding: np.ndarray | None = None

    def parameters(self) -> list[Tensor]:
        params = [t for layers in self.encoders for layer in layers for t in layer]
        params.extend(self.perturb.all_tensors())
        params.extend(t for a in self.agcns for t in a.layers)
        return params

    def encode_all(self) -> tuple[list[Tensor], Tensor]:
        zs = [
            encode_view(x, layers)
            for x, layers in zip(self.dataset.views, self.encoders)
        ]
        return zs, fuse(zs)

    def fused_embedding(self) -> np.ndarray:
        """Current fused embedding as plain data (no recording)."""
        _, z = self.encode_all()
        return z.data

    def refresh_anchors(self, epoch: int) -> None:
        """Re-seat the initial anchors on the current embedding and redraw the
        base perturbation."""
        z = self.fused_embedding()
        self.u_hat = init_anchors(z, self.m, seed=derive_seed(self.cfg.seed, 3, epoch))
        rng = np.random.default_rng(derive_seed(self.cfg.seed, 4, epoch))
        self.epsilon_base = rng.standard_normal(self.u_hat.shape)

    def compute_losses(self, graphs: list[AnchorGraph] | None = None):
        """Differentiable forward pass.

        When ``graphs`` is None (the training path) the anchor graphs are
        rebuilt from the current detached embeddings and anchors; a frozen list
        can be passed instead, which is what makes gradient checking against
        finite differences well-defined.
        Returns (joint, parts dict, graphs).
        """
        cfg = self.cfg
        zs, z = self.encode_all()
        self.last_embedding = z.data
        state = make_anchor_state(
            self.u_hat, self.perturb, self.epsilon_base,
            enabled=not cfg.disable_perturbation,
        )
        self.anchor_state = state
        if graphs is None:
            graphs = [
                solve_anchor_graph(z_a.data, state.u.data, self.k) for z_a in zs
            ]
        qs = [anchor_similarity(z_a, state.u) for z_a in zs]
        fs = [
            agcn_forward(propagation_operator(g), state.u, params)
            for g, params in zip(graphs, self.agcns)
        ]
        l_anchor = anchor_learning_loss(qs)
        if self.dataset.n_views >= 2:
            l_consistency = consistency_loss(fs)
        else:
            l_consistency = Tensor(np.zeros((1, 1)))
        l_structure = None
        for g in graphs:
            term = structure_preservation_loss(z, g)
            l_structure = term if l_structure is None else l_structure + term
        zero = Tensor(np.zeros((1, 1)))
        joint = joint_loss(
            zero if cfg.disable_perturbation else l_anchor,
            zero if cfg.disable_consistency else l_consistency,
            l_structure,
            LossWeights(cfg.alpha, cfg.beta),
        )
        parts = {
            "anchor": l_anchor,
            "consistency": l_consistency,
            "structure": l_structure,
            "total": joint,
        }
        return joint, parts, graphs

    def run_epoch(self, epoch: int) -> EpochLosses:
        if epoch % self.cfg.anchor_refresh_period == 0 or self.u_hat is None:
            self.refresh_anchors(epoch)
        with Tape():
            joint, parts, graphs = self.compute_losses()
            losses = EpochLosses(
                total=parts["total"].item(),
                anchor=parts["anchor"].item(),
                consistency=parts["consistency"].item(),
                structure=parts["structure"].item(),
            )
            for name in ("anchor", "consistency", "structure", "total"):
                if not math.isfinite(parts[name].item()):
                    raise NonFiniteLossError(
                        f"{name} loss became non-finite at epoch {epoch}"
                    )
            backward(joint)
        self.optimizer.step()
        self.optimizer.zero_grad()
        self.graphs = graphs
        return losses


def train(dataset: MultiViewDataset, cfg: TrainConfig) -> TrainResult:
    """Run the configured number of epochs and cluster the converged embedding."""
    session = TrainingSession(dataset, cfg)
    history: list[EpochLosses] = []
    seconds: list[float] = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        history.append(session.run_epoch(epoch))
        seconds.append(time.perf_counter() - t0)
    # one recording-free pass so embedding, anchors, and graphs all reflect the
    # final parameters
    _, _, graphs = session.compute_losses()
    embedding = session.last_embedding
    result = kmeans(
        embedding,
        dataset.n_clusters,
        seed=derive_seed(cfg.seed, 5),
        restarts=cfg.kmeans_restarts,
    )
    metrics = None
    if dataset.labels is not None:
        metrics = {
            "acc": accuracy(result.labels, dataset.labels),
            "nmi": nmi(result.labels, dataset.labels),
        }
    return TrainResult(
        embedding=embedding,
        labels=result.labels,
        loss_history=history,
        epoch_seconds=seconds,
        metrics=metrics,
        anchors=session.anchor_state.u.data.copy(),
        anchor_graphs=graphs,
        config=cfg,
    )


@dataclass
class GridCell:
    alpha: float
    beta: float
    result: TrainResult


def grid_search(
    dataset: MultiViewDataset,
    cfg: TrainConfig,
    alphas=DEFAULT_GRID,
    betas=DEFAULT_GRID,
) -> list[GridCell]:
    """One full training per (alpha, beta) cell.

    Cells are ranked by accuracy when ground truth is available, otherwise by
    final loss (lower is better); best first.
    """
    cells = []
    for alpha in alphas:
        for beta in betas:
            result = train(dataset, replace(cfg, alpha=alpha, beta=beta))
            cells.append(GridCell(alpha=alpha, beta=beta, result=result))
    if dataset.labels is not None:
        cells.sort(key=lambda c: -c.result.metrics["acc"])
    else:
        cells.sort(key=lambda c: c.result.final_loss)
    return cells
