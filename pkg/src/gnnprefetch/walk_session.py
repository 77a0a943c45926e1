"""Simulated navigation sessions via second-order (node2vec-style) biased walks."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph_constructor import DomainGraph

START_POLICIES = ("uniform", "root_only", "degree_weighted")
SPLITS = ("train", "val", "test")


@dataclass
class WalkConfig:
    num_walkers: int = 1000
    walk_length: int = 20
    p: float = 1.0
    q: float = 0.5
    seed: int = 0
    start_policy: str = "uniform"

    def __post_init__(self):
        if self.num_walkers < 0:
            raise ValueError("num_walkers must be >= 0")
        if self.walk_length < 2:
            raise ValueError("walk_length must be >= 2")
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be strictly positive")
        if self.start_policy not in START_POLICIES:
            raise ValueError(f"start_policy must be one of {START_POLICIES}")


Pair = tuple[tuple[int, ...], int]


@dataclass
class WalkDataset:
    train: list[Pair] = field(default_factory=list)
    val: list[Pair] = field(default_factory=list)
    test: list[Pair] = field(default_factory=list)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def split(self, name: str) -> list[Pair]:
        return getattr(self, name)


class Walker:
    """Adjacency view of a graph prepared for repeated walks."""

    def __init__(self, graph: DomainGraph):
        self.graph = graph
        self.out = graph.out_neighbors()
        self.out_sets = [set(a) for a in self.out]

    def transition_weights(self, prev: int | None, cur: int, p: float, q: float
                           ) -> tuple[list[int], np.ndarray]:
        nbrs = self.out[cur]
        if prev is None:
            return nbrs, np.ones(len(nbrs))
        near = self.out_sets[prev]
        w = np.empty(len(nbrs))
        for i, x in enumerate(nbrs):
            if x == prev:
                w[i] = 1.0 / p
            elif x in near:
                w[i] = 1.0
            else:
                w[i] = 1.0 / q
        return nbrs, w

    def walk(self, start: int, cfg: WalkConfig, rng: np.random.Generator) -> list[int]:
        trace = [start]
        prev = None
        cur = start
        while len(trace) < cfg.walk_length:
            nbrs, w = self.transition_weights(prev, cur, cfg.p, cfg.q)
            if not nbrs:
                break
            cdf = np.cumsum(w)
            i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            prev, cur = cur, nbrs[min(i, len(nbrs) - 1)]
            trace.append(cur)
        return trace


def transition_weights(graph: DomainGraph, prev: int | None, cur: int, p: float, q: float
                       ) -> dict[int, float]:
    """Unnormalized next-step weights over the out-neighbors of ``cur``.

    ``1/p`` for stepping back to ``prev``, ``1`` for out-neighbors of
    ``prev``, ``1/q`` for everything else; all ``1`` on the first step.
    A sink yields an empty mapping.
    """
    nbrs, w = Walker(graph).transition_weights(prev, cur, p, q)
    return dict(zip(nbrs, w.tolist()))


def biased_walk(graph: DomainGraph, start: int, cfg: WalkConfig, rng: np.random.Generator
                ) -> list[int]:
    if not 0 <= start < graph.n:
        raise ValueError(f"start node {start} out of range")
    return Walker(graph).walk(start, cfg, rng)


def start_nodes(graph: DomainGraph, cfg: WalkConfig, rng: np.random.Generator) -> np.ndarray:
    n = graph.n
    if cfg.start_policy == "root_only":
        return np.full(cfg.num_walkers, graph.root_id, dtype=np.int64)
    if cfg.start_policy == "degree_weighted":
        deg = np.zeros(n)
        for u, _ in graph.edges:
            deg[u] += 1
        if deg.sum() > 0:
            return rng.choice(n, size=cfg.num_walkers, p=deg / deg.sum())
    return rng.integers(0, n, size=cfg.num_walkers)


def generate_sessions(graph: DomainGraph, cfg: WalkConfig) -> list[list[int]]:
    """``num_walkers`` traces, fully determined by ``cfg.seed``."""
    if graph.n == 0:
        raise ValueError("cannot walk an empty graph")
    rng = np.random.default_rng(cfg.seed)
    walker = Walker(graph)
    return [walker.walk(int(s), cfg, rng) for s in start_nodes(graph, cfg, rng)]


def sliding_windows(trace: list[int], n: int = 1) -> list[Pair]:
    if n < 1:
        raise ValueError("window length must be >= 1")
    return [(tuple(trace[i:i + n]), trace[i + n]) for i in range(len(trace) - n)]


def split_counts(total: int, ratios=(0.70, 0.15, 0.15)) -> tuple[int, int, int]:
    """Floor the val/test shares; train takes the remainder."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    n_val = math.floor(ratios[1] * total + 1e-9)
    n_test = math.floor(ratios[2] * total + 1e-9)
    return total - n_val - n_test, n_val, n_test


def split_dataset(pairs: list[Pair], ratios=(0.70, 0.15, 0.15), seed: int = 0) -> WalkDataset:
    if not pairs:
        raise ValueError("no pairs to split")
    n_train, n_val, _ = split_counts(len(pairs), ratios)
    order = np.random.default_rng(seed).permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    return WalkDataset(shuffled[:n_train], shuffled[n_train:n_train + n_val],
                       shuffled[n_train + n_val:])


# --------------------------------------------------------------------------
# JSON Lines I/O


def write_traces(traces: list[list[int]], path: str | os.PathLike):
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(json.dumps({"nodes": [int(x) for x in t]}) + "\n")


def _read_jsonl(path: str | os.PathLike):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: column {exc.colno}: {exc.msg}") from exc


def read_traces(path: str | os.PathLike) -> list[list[int]]:
    traces = []
    for lineno, rec in _read_jsonl(path):
        if not isinstance(rec, dict) or not isinstance(rec.get("nodes"), list):
            raise ValueError(f"{path}:{lineno}: expected {{\"nodes\": [...]}}")
        traces.append([int(x) for x in rec["nodes"]])
    return traces


def write_dataset(ds: WalkDataset, path: str | os.PathLike):
    with open(path, "w", encoding="utf-8") as fh:
        for name in SPLITS:
            for ctx, target in ds.split(name):
                fh.write(json.dumps({"context": [int(c) for c in ctx], "target": int(target),
                                     "split": name}) + "\n")


def read_dataset(path: str | os.PathLike) -> WalkDataset:
    ds = WalkDataset()
    for lineno, rec in _read_jsonl(path):
        try:
            split = rec["split"]
            pair = (tuple(int(c) for c in rec["context"]), int(rec["target"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{Path(path)}:{lineno}: malformed pair record: {exc!r}") from exc
        if split not in SPLITS:
            raise ValueError(f"{path}:{lineno}: unknown split {split!r}")
        ds.split(split).append(pair)
    return ds
