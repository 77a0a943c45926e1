"""Three-layer GNN encoder, next-node softmax loss and its exact gradients."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..graph_constructor import DomainGraph
from .layers import activate, mean_aggregator, normalize_adjacency

LAYER_TYPES = ("sage", "gcn")
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    layer: str
    dims: tuple[int, ...]
    weights: list[dict[str, np.ndarray]]

    def __post_init__(self):
        if self.layer not in LAYER_TYPES:
            raise ValueError(f"layer must be one of {LAYER_TYPES}")
        if len(self.weights) != len(self.dims) - 1:
            raise ValueError("need one weight block per layer")
        for l, block in enumerate(self.weights):
            d_in, d_out = self.dims[l], self.dims[l + 1]
            for name, arr in block.items():
                want = (d_out,) if name == "bias" else (d_in, d_out)
                if arr.shape != want:
                    raise ValueError(f"layer {l} {name} has shape {arr.shape}, expected {want}")

    def named(self):
        for l, block in enumerate(self.weights):
            for name in sorted(block):
                yield f"{l}.{name}", block[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.layer, self.dims,
                           [{k: v.copy() for k, v in b.items()} for b in self.weights])


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


def init_params(dims, layer: str = "sage", seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases. GCN layers carry a single ``W``."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in dims)
    weights = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        if layer == "sage":
            weights.append({"W_self": glorot(rng, d_in, d_out),
                            "W_neigh": glorot(rng, d_in, d_out),
                            "bias": np.zeros(d_out)})
        else:
            weights.append({"W": glorot(rng, d_in, d_out)})
    return ModelParams(layer, dims, weights)


class GraphOperators:
    """Propagation matrices of one graph, built once and reused every epoch."""

    def __init__(self, graph: DomainGraph):
        self.n = graph.n
        self.norm_adj = normalize_adjacency(graph)
        self.mean = mean_aggregator(graph)
        self.mean_t = self.mean.transpose()


def _operators(graph) -> GraphOperators:
    return graph if isinstance(graph, GraphOperators) else GraphOperators(graph)


def _layer_activation(l: int, num_layers: int) -> str:
    return "identity" if l == num_layers - 1 else "relu"


def row_normalize(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(H, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return H / safe[:, None], norms


def forward(params: ModelParams, features: np.ndarray, graph, cache: list | None = None
            ) -> np.ndarray:
    """Row-L2-normalized node embeddings. Fills ``cache`` for :func:`backward`."""
    ops = _operators(graph)
    H = features
    L = len(params.weights)
    for l, block in enumerate(params.weights):
        if params.layer == "sage":
            agg = ops.mean.matmul(H)
            pre = H @ block["W_self"] + agg @ block["W_neigh"] + block["bias"]
        else:
            agg = ops.norm_adj.matmul(H)
            pre = agg @ block["W"]
        out = activate(pre, _layer_activation(l, L))
        if cache is not None:
            cache.append((H, agg, pre))
        H = out
    Z, norms = row_normalize(H)
    if cache is not None:
        cache.append((Z, norms))
    return Z


def _batch_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    if len(batch) == 0:
        raise ValueError("empty batch")
    U = np.array([b[0][-1] if isinstance(b[0], (tuple, list)) else b[0] for b in batch],
                 dtype=np.int64)
    V = np.array([b[1] for b in batch], dtype=np.int64)
    return U, V


def _unique_pairs(U: np.ndarray, V: np.ndarray, n: int
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse repeated pairs into ``(U, V, count)``; the mean loss is unchanged."""
    keys, counts = np.unique(U * n + V, return_counts=True)
    return keys // n, keys % n, counts.astype(np.float64)


def _logsumexp(S: np.ndarray) -> np.ndarray:
    m = S.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(S - m).sum(axis=1, keepdims=True)))[:, 0]


def linkpred_loss(Z: np.ndarray, batch, temperature: float = 0.1) -> float:
    """Mean cross-entropy of each true successor under a softmax over all nodes.

    ``batch`` holds ``(u, v)`` pairs; ``u`` may also be a context tuple, in
    which case its last node is used.
    """
    U, V = _batch_arrays(batch)
    S = Z[U] @ Z.T / temperature
    return float(np.mean(_logsumexp(S) - S[np.arange(len(U)), V]))


def _weighted_loss(Z: np.ndarray, U, V, w, temperature: float):
    S = Z[U] @ Z.T / temperature
    lse = _logsumexp(S)
    loss = float(w @ (lse - S[np.arange(len(U)), V]) / w.sum())
    return loss, S, lse


def backward(params: ModelParams, features: np.ndarray, graph, batch,
             temperature: float = 0.1) -> tuple[float, ModelParams]:
    """Loss and exact gradients w.r.t. every parameter, by reverse accumulation."""
    ops = _operators(graph)
    cache: list = []
    Z = forward(params, features, ops, cache)
    U, V, w = _unique_pairs(*_batch_arrays(batch), ops.n)
    loss, S, lse = _weighted_loss(Z, U, V, w, temperature)

    dS = np.exp(S - lse[:, None])
    dS[np.arange(len(U)), V] -= 1.0
    dS *= (w / (w.sum() * temperature))[:, None]
    dZ = dS.T @ Z[U]
    np.add.at(dZ, U, dS @ Z)

    _, norms = cache.pop()
    safe = np.where(norms > 0, norms, 1.0)
    dH = (dZ - Z * np.sum(Z * dZ, axis=1, keepdims=True)) / safe[:, None]
    dH[norms == 0] = 0.0

    grads = []
    L = len(params.weights)
    for l in reversed(range(L)):
        H, agg, pre = cache[l]
        block = params.weights[l]
        dpre = dH if _layer_activation(l, L) == "identity" else dH * (pre > 0)
        if params.layer == "sage":
            g = {"W_self": H.T @ dpre, "W_neigh": agg.T @ dpre, "bias": dpre.sum(axis=0)}
            dH = dpre @ block["W_self"].T + ops.mean_t.matmul(dpre @ block["W_neigh"].T)
        else:
            g = {"W": agg.T @ dpre}
            dH = ops.norm_adj.matmul(dpre @ block["W"].T)  # symmetric
        grads.append(g)
    grads.reverse()
    return loss, ModelParams(params.layer, params.dims, grads)


# --------------------------------------------------------------------------
# checkpoints and CSV exports


def save_checkpoint(params: ModelParams, path: str | os.PathLike, extra: dict | None = None):
    doc = {
        "version": CHECKPOINT_VERSION,
        "layer": params.layer,
        "dims": list(params.dims),
        "weights": [{k: v.tolist() for k, v in sorted(b.items())} for b in params.weights],
    }
    if extra:
        doc["meta"] = extra
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path: str | os.PathLike) -> ModelParams:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    try:
        weights = [{k: np.asarray(v, dtype=np.float64) for k, v in b.items()}
                   for b in doc["weights"]]
        return ModelParams(doc["layer"], tuple(doc["dims"]), weights)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed checkpoint: {exc!r}") from exc


def embeddings_csv(Z: np.ndarray) -> str:
    header = "node_id," + ",".join(f"e{j}" for j in range(Z.shape[1]))
    rows = [f"{i}," + ",".join(repr(float(x)) for x in row) for i, row in enumerate(Z)]
    return "\n".join([header, *rows]) + "\n"


def read_embeddings_csv(path: str | os.PathLike) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("node_id,e0"):
        raise ValueError(f"{path}:1: expected header 'node_id,e0,...'")
    dim = len(lines[0].split(",")) - 1
    Z = np.zeros((len(lines) - 1, dim))
    for lineno, line in enumerate(lines[1:], 2):
        cells = line.split(",")
        if len(cells) != dim + 1:
            raise ValueError(f"{path}:{lineno}: expected {dim + 1} columns, got {len(cells)}")
        i = int(cells[0])
        if i != lineno - 2:
            raise ValueError(f"{path}:{lineno}: node ids must be consecutive from 0")
        Z[i] = [float(c) for c in cells[1:]]
    return Z
