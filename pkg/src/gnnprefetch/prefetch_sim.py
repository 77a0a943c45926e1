"""Trace-replay cache simulator with embedding-driven prefetching."""

from __future__ import annotations

import logging
from collections import Counter, OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

log = logging.getLogger(__name__)

CACHE_POLICIES = ("unbounded", "lru")


@dataclass
class CacheCounters:
    hits: int = 0
    misses: int = 0
    prefetch_inserts: int = 0
    evictions: int = 0
    prefetch_hits: int = 0  # hits whose entry was last inserted by a prefetch

    def add(self, other: "CacheCounters"):
        for name, value in asdict(other).items():
            setattr(self, name, getattr(self, name) + value)


class LocalCache:
    """In-process key store; ``lru`` evicts the least-recently-touched entry."""

    def __init__(self, policy: str = "unbounded", capacity: int | None = None,
                 audit: bool = False):
        if policy not in CACHE_POLICIES:
            raise ValueError(f"policy must be one of {CACHE_POLICIES}")
        if policy == "lru" and (capacity is None or capacity < 1):
            raise ValueError("lru cache needs a capacity >= 1")
        self.policy = policy
        self.capacity = capacity if policy == "lru" else None
        self.store: OrderedDict[int, str] = OrderedDict()  # node -> "prefetch" | "demand"
        self.counters = CacheCounters()
        self.audit = [] if audit else None

    def __contains__(self, node: int) -> bool:
        return node in self.store

    def __len__(self) -> int:
        return len(self.store)

    def _record(self, *event):
        if self.audit is not None:
            self.audit.append(event)

    def _insert(self, node: int, origin: str):
        if node in self.store:
            self.store.move_to_end(node)
            self.store[node] = origin
            return
        self.store[node] = origin
        if self.capacity is not None and len(self.store) > self.capacity:
            victim, _ = self.store.popitem(last=False)
            self.counters.evictions += 1
            self._record("evict", victim)

    def prefetch(self, node: int):
        self.counters.prefetch_inserts += 1
        self._insert(node, "prefetch")
        self._record("prefetch", node)

    def access(self, node: int) -> bool:
        """Look up ``node``; a miss loads it from the backing store and caches it."""
        if node in self.store:
            self.counters.hits += 1
            if self.store[node] == "prefetch":
                self.counters.prefetch_hits += 1
            self.store.move_to_end(node)
            self._record("hit", node)
            return True
        self.counters.misses += 1
        self._insert(node, "demand")
        self._record("miss", node)
        return False

    def reset(self):
        self.store.clear()

    def show(self) -> str:
        return "Cache: " + ", ".join(f"{k} (cached)" for k in self.store)


def _top_ids(scores: np.ndarray, count: int) -> list[int]:
    # descending score, ascending id among equal scores
    order = np.lexsort((np.arange(len(scores)), -scores))
    return [int(i) for i in order[:count]]


def cosine_scores(Z: np.ndarray, current: int) -> np.ndarray:
    norms = np.linalg.norm(Z, axis=1)
    denom = norms * norms[current]
    dots = Z @ Z[current]
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


class PrefetchManager:
    """Predicts the ``top_k`` nodes most similar to the one just accessed and preloads them."""

    def __init__(self, embeddings: np.ndarray, cache: LocalCache, top_k: int = 5):
        n = embeddings.shape[0]
        if not 1 <= top_k < n:
            raise ValueError(f"top_k must satisfy 1 <= top_k < {n}")
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        self.cache = cache
        self.top_k = top_k

    def predict_next(self, current: int) -> list[int]:
        top = _top_ids(cosine_scores(self.embeddings, current), self.top_k + 1)
        if current in top:
            top.remove(current)
        return top[:self.top_k]

    def prefetch(self, current: int) -> list[int]:
        predicted = self.predict_next(current)
        log.info("Prefetching for Node %d: Predicted Next Nodes -> %s", current, predicted)
        for node in predicted:
            self.cache.prefetch(node)
        log.debug("%s", self.cache.show())
        return predicted


class MarkovPredictor:
    """First-order transition counts; falls back to global popularity."""

    def __init__(self, traces: list[list[int]], num_nodes: int, top_k: int = 5):
        if not traces:
            raise ValueError("markov baseline needs training traces")
        self.top_k = top_k
        self.transitions: dict[int, Counter] = {}
        popularity = np.zeros(num_nodes)
        for t in traces:
            for node in t:
                popularity[node] += 1
            for a, b in zip(t, t[1:]):
                self.transitions.setdefault(a, Counter())[b] += 1
        self.popular = _top_ids(popularity, num_nodes)

    def predict_next(self, current: int) -> list[int]:
        succ = self.transitions.get(current, Counter())
        ranked = [v for v, _ in sorted(succ.items(), key=lambda kv: (-kv[1], kv[0]))
                  if v != current][:self.top_k]
        # pad with popular nodes so every predictor spends the same prefetch budget
        for v in self.popular:
            if len(ranked) >= self.top_k:
                break
            if v != current and v not in ranked:
                ranked.append(v)
        return ranked


class NoPrefetch:
    def predict_next(self, current: int) -> list[int]:
        return []


@dataclass
class ReplayResult:
    counters: CacheCounters = field(default_factory=CacheCounters)
    useful_prefetches: int = 0

    @property
    def accesses(self) -> int:
        return self.counters.hits + self.counters.misses

    @property
    def hit_rate(self) -> float:
        return self.counters.hits / self.accesses if self.accesses else 0.0

    @property
    def prefetch_precision(self) -> float:
        c = self.counters.prefetch_inserts
        return self.useful_prefetches / c if c else 0.0

    @property
    def coverage(self) -> float:
        return self.counters.prefetch_hits / self.accesses if self.accesses else 0.0

    def summary(self) -> dict:
        return {"hit_rate": self.hit_rate, "prefetch_precision": self.prefetch_precision,
                "coverage": self.coverage, "accesses": self.accesses,
                **asdict(self.counters)}


def replay(traces: list[list[int]], predictor, policy: str = "unbounded",
           capacity: int | None = None, reset_between_traces: bool = True,
           audit: list | None = None) -> ReplayResult:
    """Access every node in order, prefetching the predictor's picks after each access."""
    if not traces:
        raise ValueError("no traces to replay")
    result = ReplayResult()
    cache = LocalCache(policy, capacity, audit=audit is not None)
    for ti, trace in enumerate(traces):
        if reset_between_traces:
            cache.reset()
        # for precision: a prefetch at position i is useful if the node shows up later
        last_seen = {node: i for i, node in enumerate(trace)}
        for i, node in enumerate(trace):
            cache.access(node)
            for pred in predictor.predict_next(node):
                cache.prefetch(pred)
                if last_seen.get(pred, -1) > i:
                    result.useful_prefetches += 1
        if audit is not None:
            audit.extend((ti,) + e for e in cache.audit)
            cache.audit.clear()
    result.counters = cache.counters
    return result


@dataclass
class SimulationReport:
    hit_rate: float
    prefetch_precision: float
    coverage: float
    counters: dict
    baselines: dict
    config: dict

    def to_dict(self) -> dict:
        return {"hit_rate": self.hit_rate, "prefetch_precision": self.prefetch_precision,
                "coverage": self.coverage, "counters": self.counters,
                "baselines": self.baselines, "config": self.config}


def simulate(embeddings: np.ndarray, traces: list[list[int]], top_k: int = 5,
             policy: str = "unbounded", capacity: int | None = None,
             train_traces: list[list[int]] | None = None,
             baselines=("no_prefetch", "markov"),
             reset_between_traces: bool = True) -> SimulationReport:
    """Replay ``traces`` with GNN prefetching and with each requested baseline."""
    kw = dict(policy=policy, capacity=capacity, reset_between_traces=reset_between_traces)
    manager = PrefetchManager(embeddings, LocalCache(policy, capacity), top_k)
    gnn = replay(traces, manager, **kw)
    base = {}
    for name in baselines:
        if name == "no_prefetch":
            base[name] = replay(traces, NoPrefetch(), **kw).summary()
        elif name == "markov":
            if not train_traces:
                raise ValueError("markov baseline needs train_traces")
            pred = MarkovPredictor(train_traces, embeddings.shape[0], top_k)
            base[name] = replay(traces, pred, **kw).summary()
        else:
            raise ValueError(f"unknown baseline {name!r}")
    summary = gnn.summary()
    config = {"top_k": top_k, "cache_policy": policy, "capacity": capacity,
              "traces": len(traces), "reset_between_traces": reset_between_traces}
    return SimulationReport(summary.pop("hit_rate"), summary.pop("prefetch_precision"),
                            summary.pop("coverage"), summary, base, config)
