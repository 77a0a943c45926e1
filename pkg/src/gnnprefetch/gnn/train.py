"""Link-prediction training loop and Top-k hit-rate evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..graph_constructor import DomainGraph
from ..walk_session import WalkDataset
from .model import GraphOperators, ModelParams, backward, forward, init_params
from .optim import Adam

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.005
    weight_decay: float = 1e-4
    topk: int = 5
    seed: int = 0
    temperature: float = 0.1
    layer: str = "sage"
    hidden_dim: int = 128
    embed_dim: int = 64
    num_layers: int = 3
    batch_size: int | None = 1024  # None = full batch

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")

    def dims(self, in_dim: int) -> tuple[int, ...]:
        return (in_dim,) + (self.hidden_dim,) * (self.num_layers - 1) + (self.embed_dim,)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_topk: list[float] = field(default_factory=list)

    def to_csv(self, k: int = 5) -> str:
        lines = [f"epoch,train_loss,val_top{k}"]
        lines += [f"{e},{loss!r},{hit!r}" for e, (loss, hit)
                  in enumerate(zip(self.train_loss, self.val_topk), 1)]
        return "\n".join(lines) + "\n"


def evaluate_topk(Z: np.ndarray, pairs, k: int = 5) -> float:
    """Fraction of ``(u, v)`` pairs whose ``v`` ranks in the top ``k`` by ``Z_u . Z_w``.

    ``u`` itself is never a candidate; equal scores rank by ascending node id.
    """
    if len(pairs) == 0:
        raise ValueError("no pairs to evaluate")
    U = np.array([p[0][-1] if isinstance(p[0], (tuple, list)) else p[0] for p in pairs])
    V = np.array([p[1] for p in pairs])
    rows = np.arange(len(U))
    S = Z[U] @ Z.T
    S[rows, U] = -np.inf
    sv = S[rows, V][:, None]
    ids = np.arange(Z.shape[0])[None, :]
    rank = (S > sv).sum(axis=1) + ((S == sv) & (ids < V[:, None])).sum(axis=1)
    hits = (rank < k) & (U != V)
    return float(hits.mean())


def train(graph: DomainGraph | GraphOperators, features: np.ndarray, dataset: WalkDataset,
          cfg: TrainConfig, params: ModelParams | None = None
          ) -> tuple[ModelParams, TrainHistory]:
    """Adam training on the train split; validation Top-k is measured after every epoch.

    With ``cfg.batch_size`` set, each epoch walks a seeded shuffle of the
    train pairs in fixed-size minibatches. The recorded loss is the
    pair-weighted mean over the epoch's batches.
    """
    if not dataset.train or not dataset.val:
        raise ValueError("dataset needs nonempty train and val splits")
    ops = graph if isinstance(graph, GraphOperators) else GraphOperators(graph)
    if params is None:
        params = init_params(cfg.dims(features.shape[1]), cfg.layer, cfg.seed)
    opt = Adam(cfg.learning_rate, cfg.weight_decay)
    history = TrainHistory()
    rng = np.random.default_rng(cfg.seed)
    pairs = dataset.train
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_size is None or cfg.batch_size >= len(pairs):
            batches = [pairs]
        else:
            order = rng.permutation(len(pairs))
            batches = [[pairs[i] for i in order[s:s + cfg.batch_size]]
                       for s in range(0, len(pairs), cfg.batch_size)]
        total = 0.0
        for batch in batches:
            loss, grads = backward(params, features, ops, batch, cfg.temperature)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}")
            opt.step(params, grads)
            total += loss * len(batch)
        loss = total / len(pairs)
        Z = forward(params, features, ops)
        hit = evaluate_topk(Z, dataset.val, cfg.topk)
        history.train_loss.append(loss)
        history.val_topk.append(hit)
        log.debug("epoch %3d loss %.5f val top%d %.4f", epoch, loss, cfg.topk, hit)
    return params, history
