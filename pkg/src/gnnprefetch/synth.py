"""Deterministic synthetic directory trees for the headline experiment."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph_constructor import add_cross_links, build_graph
from .route_mapper import MirrorSnapshot, scan_filesystem

WORDS = ("cache", "node", "graph", "index", "page", "route", "file", "data", "layer",
         "model", "walk", "edge", "trace", "fetch", "query", "block", "table", "store")


@dataclass
class SyntheticTreeSpec:
    branching: int = 4
    depth: int = 4
    files_per_dir: int = 2
    cross_link_count: int = 5
    seed: int = 0
    min_words: int = 20
    max_words: int = 400
    max_images: int = 3

    def __post_init__(self):
        if self.branching < 1 or self.depth < 1:
            raise ValueError("branching and depth must be positive")
        if self.files_per_dir < 0 or self.cross_link_count < 0:
            raise ValueError("files_per_dir and cross_link_count must be >= 0")
        if not 0 <= self.min_words <= self.max_words:
            raise ValueError("need 0 <= min_words <= max_words")

    def directory_count(self) -> int:
        return sum(self.branching ** i for i in range(self.depth + 1))

    def file_count(self) -> int:
        return self.files_per_dir * self.directory_count()

    def node_count(self) -> int:
        return self.directory_count() + self.file_count()

    def tree_edge_count(self) -> int:
        # parent -> child for every non-root node, plus file -> parent back-links
        return self.node_count() - 1 + self.file_count()


def write_tree(spec: SyntheticTreeSpec, dest: str | os.PathLike) -> Path:
    """Materialize the tree on disk; files are small HTML pages with random text."""
    dest = Path(dest)
    rng = np.random.default_rng(spec.seed)
    dest.mkdir(parents=True, exist_ok=True)
    level = [dest]
    for lvl in range(spec.depth + 1):
        nxt = []
        for d in level:
            for f in range(spec.files_per_dir):
                n_words = int(rng.integers(spec.min_words, spec.max_words + 1))
                n_images = int(rng.integers(0, spec.max_images + 1))
                words = " ".join(WORDS[i] for i in rng.integers(0, len(WORDS), n_words))
                imgs = "".join(f'<img src="img{i}.png">' for i in range(n_images))
                (d / f"f{f}.html").write_text(
                    f"<html><body><p>{words}</p>{imgs}</body></html>\n", encoding="utf-8")
            if lvl < spec.depth:
                for b in range(spec.branching):
                    child = d / f"d{b}"
                    child.mkdir(exist_ok=True)
                    nxt.append(child)
        level = nxt
    return dest


def make_snapshot(spec: SyntheticTreeSpec, out_dir: str | os.PathLike) -> MirrorSnapshot:
    """Write ``<out_dir>/tree`` plus ``<out_dir>/manifest.json``.

    Cross-links are sampled between directories and stored in the manifest
    as extra directory outlinks, so every later stage sees them.
    """
    out_dir = Path(out_dir)
    write_tree(spec, out_dir / "tree")
    snap = scan_filesystem(out_dir / "tree")
    snap.root = "tree"
    if spec.cross_link_count:
        graph = add_cross_links(build_graph(snap), spec.cross_link_count, spec.seed)
        by_path = {p.path: p for p in snap.pages}
        for u, v in graph.edges[-spec.cross_link_count:]:
            by_path[graph.nodes[u].path].outlinks.append(graph.nodes[v].path)
    snap.write_manifest(out_dir)
    return snap
