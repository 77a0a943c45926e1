"""Message-passing primitives: sparse propagation matrices and GCN/SAGE layers.

Dense blocks are numpy float64 arrays. Propagation matrices are kept as
row-sorted ``(row, col, value)`` triples; every row holds at least its
self entry, which lets products run through ``np.add.reduceat``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph_constructor import DomainGraph

ACTIVATIONS = ("relu", "identity")


@dataclass
class SparseRows:
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    n: int

    def __post_init__(self):
        order = np.lexsort((self.cols, self.rows))
        self.rows = self.rows[order]
        self.cols = self.cols[order]
        self.values = self.values[order]
        counts = np.bincount(self.rows, minlength=self.n)
        if np.any(counts == 0):
            raise ValueError("every row needs at least one entry")
        self._starts = np.concatenate(([0], np.cumsum(counts)[:-1]))

    def matmul(self, X: np.ndarray) -> np.ndarray:
        return np.add.reduceat(self.values[:, None] * X[self.cols], self._starts, axis=0)

    def transpose(self) -> "SparseRows":
        return SparseRows(self.cols.copy(), self.rows.copy(), self.values.copy(), self.n)

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        A[self.rows, self.cols] = self.values
        return A


class NormAdjacency(SparseRows):
    """``D^-1/2 (A + I) D^-1/2`` over the undirected projection."""


def _closed_neighborhoods(graph: DomainGraph) -> list[list[int]]:
    return [sorted(nv | {v}) for v, nv in enumerate(graph.undirected_neighbors())]


def normalize_adjacency(graph: DomainGraph) -> NormAdjacency:
    hoods = _closed_neighborhoods(graph)
    deg = np.array([len(h) for h in hoods], dtype=np.float64)
    rows = np.array([v for v, h in enumerate(hoods) for _ in h], dtype=np.int64)
    cols = np.array([u for h in hoods for u in h], dtype=np.int64)
    return NormAdjacency(rows, cols, 1.0 / np.sqrt(deg[rows] * deg[cols]), graph.n)


def mean_aggregator(graph: DomainGraph) -> SparseRows:
    """Row ``v`` averages over ``v`` and its undirected neighbors."""
    hoods = _closed_neighborhoods(graph)
    rows = np.array([v for v, h in enumerate(hoods) for _ in h], dtype=np.int64)
    cols = np.array([u for h in hoods for u in h], dtype=np.int64)
    size = np.array([len(h) for h in hoods], dtype=np.float64)
    return SparseRows(rows, cols, 1.0 / size[rows], graph.n)


def activate(X: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(X, 0.0)
    if activation == "identity":
        return X
    raise ValueError(f"unknown activation {activation!r}")


def _check(H: np.ndarray, W: np.ndarray, n: int):
    if H.ndim != 2 or W.ndim != 2:
        raise ValueError("H and W must be 2-D")
    if H.shape[0] != n:
        raise ValueError(f"H has {H.shape[0]} rows but the graph has {n} nodes")
    if H.shape[1] != W.shape[0]:
        raise ValueError(f"cannot multiply H {H.shape} by W {W.shape}")


def gcn_layer(H: np.ndarray, norm_adj: SparseRows, W: np.ndarray,
              activation: str = "relu") -> np.ndarray:
    _check(H, W, norm_adj.n)
    return activate(norm_adj.matmul(H) @ W, activation)


def sage_layer(H: np.ndarray, neighborhoods: SparseRows | DomainGraph, W_self: np.ndarray,
               W_neigh: np.ndarray, bias: np.ndarray, activation: str = "relu") -> np.ndarray:
    """``sigma(h_v W_self + mean_{u in N(v) + v} h_u W_neigh + b)`` for every node."""
    if isinstance(neighborhoods, DomainGraph):
        neighborhoods = mean_aggregator(neighborhoods)
    _check(H, W_self, neighborhoods.n)
    if W_neigh.shape != W_self.shape or bias.shape != (W_self.shape[1],):
        raise ValueError("W_self, W_neigh and bias shapes disagree")
    return activate(H @ W_self + neighborhoods.matmul(H) @ W_neigh + bias, activation)
