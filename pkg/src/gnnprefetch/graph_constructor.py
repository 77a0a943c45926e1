"""Directed domain graph with per-node features, plus JSON/GEXF/CSV export."""

from __future__ import annotations

import json
import logging
import os
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace
from html.parser import HTMLParser
from pathlib import Path

import numpy as np

from .route_mapper import MirrorSnapshot

log = logging.getLogger(__name__)

GRAPH_VERSION = 1
GEXF_NS = "http://gexf.net/1.2"
NODE_KINDS = ("page", "directory", "file")


class GraphFormatError(ValueError):
    """Serialized graph is malformed or does not match the schema."""


@dataclass
class FeatureVector:
    out_degree: int = 0
    in_degree: int = 0
    pagerank: float = 0.0
    clustering: float = 0.0
    depth: int = 0
    word_count: int = 0
    image_count: int = 0

    def as_list(self) -> list[float]:
        return [float(getattr(self, name)) for name in FEATURE_NAMES]


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))
_INT_FEATURES = {"out_degree", "in_degree", "depth", "word_count", "image_count"}


@dataclass
class GraphNode:
    id: int
    path: str
    kind: str
    features: FeatureVector = field(default_factory=FeatureVector)


@dataclass
class DomainGraph:
    nodes: list[GraphNode]
    edges: list[tuple[int, int]]
    root_id: int = 0
    dropped_links: int = 0

    @property
    def n(self) -> int:
        return len(self.nodes)

    def validate(self):
        n = self.n
        if n == 0:
            raise GraphFormatError("graph has no nodes")
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise GraphFormatError(f"node ids must be dense 0..N-1 (got {node.id} at {i})")
        if len({node.path for node in self.nodes}) != n:
            raise GraphFormatError("node paths are not unique")
        if not 0 <= self.root_id < n:
            raise GraphFormatError(f"root_id {self.root_id} out of range")
        seen = set()
        for e in self.edges:
            u, v = e
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edge {e} references a missing node")
            if e in seen:
                raise GraphFormatError(f"duplicate edge {e}")
            seen.add(e)

    def out_neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
        return adj

    def undirected_neighbors(self) -> list[set[int]]:
        """Neighbor sets of the undirected projection, self-loops dropped."""
        nbrs: list[set[int]] = [set() for _ in range(self.n)]
        for u, v in self.edges:
            if u != v:
                nbrs[u].add(v)
                nbrs[v].add(u)
        return nbrs

    def feature_matrix(self, standardize: bool = True) -> np.ndarray:
        """``n x 7`` float64 features, z-scored per column by default.

        Constant columns standardize to zero.
        """
        X = np.array([node.features.as_list() for node in self.nodes], dtype=np.float64)
        if standardize:
            mu = X.mean(axis=0)
            sd = X.std(axis=0)
            sd[sd == 0] = 1.0
            X = (X - mu) / sd
        return X


# --------------------------------------------------------------------------
# structural metrics


def pagerank(graph: DomainGraph, damping: float = 0.85, tol: float = 1e-8,
             max_iters: int = 200) -> np.ndarray:
    """Power iteration with uniform teleport; dangling mass is spread uniformly."""
    n = graph.n
    if n == 0:
        raise ValueError("pagerank of an empty graph")
    src = np.array([u for u, _ in graph.edges], dtype=np.int64)
    dst = np.array([v for _, v in graph.edges], dtype=np.int64)
    outdeg = np.bincount(src, minlength=n).astype(np.float64)
    dangling = outdeg == 0
    w = np.zeros(len(src))
    if len(src):
        w = 1.0 / outdeg[src]

    r = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        flow = np.zeros(n)
        np.add.at(flow, dst, r[src] * w)
        new = damping * (flow + r[dangling].sum() / n) + (1.0 - damping) / n
        new /= new.sum()
        delta = np.abs(new - r).sum()
        r = new
        if delta < tol:
            break
    return r


def clustering_coefficient(graph: DomainGraph) -> np.ndarray:
    """Local clustering on the undirected projection; degree < 2 scores 0."""
    nbrs = graph.undirected_neighbors()
    out = np.zeros(graph.n)
    for v, nv in enumerate(nbrs):
        k = len(nv)
        if k < 2:
            continue
        links = sum(len(nbrs[u] & nv) for u in nv) // 2
        out[v] = 2.0 * links / (k * (k - 1))
    return out


def depth_from_root(graph: DomainGraph) -> np.ndarray:
    """BFS hop count along edge direction; unreachable nodes get ``N``."""
    n = graph.n
    depth = np.full(n, n, dtype=np.int64)
    adj = graph.out_neighbors()
    depth[graph.root_id] = 0
    queue = deque([graph.root_id])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if depth[v] == n:
                depth[v] = depth[u] + 1
                queue.append(v)
    return depth


class _TextParser(HTMLParser):
    _SKIP = {"script", "style"}

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.chunks: list[str] = []
        self.images = 0
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag == "img":
            self.images += 1
        elif tag in self._SKIP:
            self._skip_depth += 1

    def handle_startendtag(self, tag, attrs):
        if tag == "img":
            self.images += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth:
            self._skip_depth -= 1

    def handle_data(self, data):
        if not self._skip_depth:
            self.chunks.append(data)


def content_features(html: str) -> tuple[int, int]:
    """``(word_count, image_count)`` of a page's tag-stripped text."""
    parser = _TextParser()
    parser.feed(html)
    parser.close()
    # tags separate words even without surrounding whitespace
    words = " ".join(parser.chunks).split()
    return len(words), parser.images


def degree_distribution(graph: DomainGraph) -> list[tuple[int, int]]:
    """Sorted ``(degree, node count)`` pairs over the undirected projection."""
    counts: dict[int, int] = {}
    for nv in graph.undirected_neighbors():
        counts[len(nv)] = counts.get(len(nv), 0) + 1
    return sorted(counts.items())


def degree_histogram_csv(graph: DomainGraph) -> str:
    lines = ["degree,count"] + [f"{d},{c}" for d, c in degree_distribution(graph)]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# construction


def compute_features(graph: DomainGraph, content: dict[int, tuple[int, int]] | None = None
                     ) -> DomainGraph:
    """Return ``graph`` with structural features recomputed.

    Content counts come from ``content`` when given, otherwise the counts
    already stored on the nodes are kept.
    """
    n = graph.n
    outdeg = np.zeros(n, dtype=np.int64)
    indeg = np.zeros(n, dtype=np.int64)
    for u, v in graph.edges:
        outdeg[u] += 1
        indeg[v] += 1
    pr = pagerank(graph)
    cc = clustering_coefficient(graph)
    depth = depth_from_root(graph)
    nodes = []
    for node in graph.nodes:
        i = node.id
        if content is not None:
            words, images = content.get(i, (0, 0))
        else:
            words, images = node.features.word_count, node.features.image_count
        feat = FeatureVector(int(outdeg[i]), int(indeg[i]), float(pr[i]), float(cc[i]),
                             int(depth[i]), int(words), int(images))
        nodes.append(replace(node, features=feat))
    return replace(graph, nodes=nodes)


def build_graph(snapshot: MirrorSnapshot, manifest_dir: str | os.PathLike | None = None
                ) -> DomainGraph:
    """One node per record, one edge per outlink whose target is in the snapshot.

    With ``manifest_dir`` given, page and file contents are read from disk
    for the word/image counts; directories always count zero.
    """
    if not snapshot.pages:
        raise ValueError("cannot build a graph from an empty snapshot")
    ids = {}
    nodes = []
    for i, page in enumerate(snapshot.pages):
        if page.path in ids:
            raise ValueError(f"duplicate page path {page.path!r}")
        ids[page.path] = i
        nodes.append(GraphNode(i, page.path, page.kind))

    edges = []
    seen = set()
    dropped = 0
    for page in snapshot.pages:
        u = ids[page.path]
        for target in page.outlinks:
            v = ids.get(target)
            if v is None:
                dropped += 1
                continue
            if (u, v) not in seen:
                seen.add((u, v))
                edges.append((u, v))
    if dropped:
        log.info("dropped %d dangling outlinks", dropped)

    content = {}
    if manifest_dir is not None:
        for page in snapshot.pages:
            if page.kind == "directory":
                continue
            path = snapshot.content_path(manifest_dir, page)
            try:
                text = path.read_text(encoding="utf-8", errors="replace")
            except OSError as exc:
                log.warning("cannot read %s: %s", path, exc)
                continue
            content[ids[page.path]] = content_features(text)

    graph = DomainGraph(nodes, edges, root_id=0, dropped_links=dropped)
    return compute_features(graph, content)


def add_cross_links(graph: DomainGraph, count: int, rng_seed: int) -> DomainGraph:
    """Add ``count`` new directed edges between random distinct directory pairs.

    Web graphs (no directory nodes) sample among all nodes. Features are
    recomputed on the result.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return graph
    candidates = [node.id for node in graph.nodes if node.kind == "directory"]
    if not candidates and all(node.kind == "page" for node in graph.nodes):
        candidates = [node.id for node in graph.nodes]
    if len(candidates) < 2:
        raise ValueError("need at least two candidate nodes for cross-links")
    existing = set(graph.edges)
    cand = set(candidates)
    free = len(cand) * (len(cand) - 1) - sum(
        1 for u, v in existing if u != v and u in cand and v in cand)
    if count > free:
        raise ValueError(f"only {free} cross-links are possible, {count} requested")

    rng = np.random.default_rng(rng_seed)
    edges = list(graph.edges)
    added = 0
    while added < count:
        i, j = rng.choice(len(candidates), size=2, replace=False)
        e = (candidates[i], candidates[j])
        if e in existing:
            continue
        existing.add(e)
        edges.append(e)
        added += 1
    return compute_features(replace(graph, edges=edges))


# --------------------------------------------------------------------------
# serialization


def to_dict(graph: DomainGraph) -> dict:
    return {
        "version": GRAPH_VERSION,
        "root_id": graph.root_id,
        "dropped_links": graph.dropped_links,
        "nodes": [{"id": node.id, "path": node.path, "kind": node.kind,
                   "features": asdict(node.features)} for node in graph.nodes],
        "edges": [[u, v] for u, v in graph.edges],
    }


def to_json(graph: DomainGraph) -> str:
    return json.dumps(to_dict(graph), indent=1) + "\n"


def from_json(text: str, source: str = "<graph>") -> DomainGraph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(
            f"{source}: line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}") from exc
    if not isinstance(data, dict):
        raise GraphFormatError(f"{source}: top level must be an object")
    if data.get("version", GRAPH_VERSION) != GRAPH_VERSION:
        raise GraphFormatError(f"{source}: unsupported graph version {data.get('version')!r}")
    try:
        nodes = []
        for i, rec in enumerate(data["nodes"]):
            feats = rec["features"]
            if set(feats) != set(FEATURE_NAMES):
                raise GraphFormatError(f"{source}: nodes[{i}].features has keys {sorted(feats)}")
            fv = FeatureVector(**{k: (int(feats[k]) if k in _INT_FEATURES else float(feats[k]))
                                  for k in FEATURE_NAMES})
            if rec["kind"] not in NODE_KINDS:
                raise GraphFormatError(f"{source}: nodes[{i}] has bad kind {rec['kind']!r}")
            nodes.append(GraphNode(int(rec["id"]), str(rec["path"]), rec["kind"], fv))
        edges = [(int(u), int(v)) for u, v in data["edges"]]
        graph = DomainGraph(nodes, edges, int(data["root_id"]), int(data.get("dropped_links", 0)))
    except GraphFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"{source}: malformed graph document: {exc!r}") from exc
    graph.validate()
    return graph


def load_graph(path: str | os.PathLike) -> DomainGraph:
    path = Path(path)
    return from_json(path.read_text(encoding="utf-8"), source=str(path))


def to_gexf(graph: DomainGraph) -> str:
    """Static directed GEXF 1.2 document with one attvalue per feature."""
    ET.register_namespace("", GEXF_NS)
    q = lambda tag: f"{{{GEXF_NS}}}{tag}"  # noqa: E731
    root = ET.Element(q("gexf"), {"version": "1.2"})
    meta = ET.SubElement(root, q("meta"))
    ET.SubElement(meta, q("creator")).text = "gnnprefetch"
    g = ET.SubElement(root, q("graph"), {"mode": "static", "defaultedgetype": "directed"})
    attrs = ET.SubElement(g, q("attributes"), {"class": "node", "mode": "static"})
    names = ("kind",) + FEATURE_NAMES
    for i, name in enumerate(names):
        if name == "kind":
            typ = "string"
        elif name in _INT_FEATURES:
            typ = "integer"
        else:
            typ = "double"
        ET.SubElement(attrs, q("attribute"), {"id": str(i), "title": name, "type": typ})
    nodes_el = ET.SubElement(g, q("nodes"))
    for node in graph.nodes:
        el = ET.SubElement(nodes_el, q("node"), {"id": str(node.id), "label": node.path})
        av = ET.SubElement(el, q("attvalues"))
        values = [node.kind] + [getattr(node.features, name) for name in FEATURE_NAMES]
        for i, value in enumerate(values):
            ET.SubElement(av, q("attvalue"), {"for": str(i), "value": repr(value) if
                                             isinstance(value, float) else str(value)})
    edges_el = ET.SubElement(g, q("edges"))
    for i, (u, v) in enumerate(graph.edges):
        ET.SubElement(edges_el, q("edge"), {"id": str(i), "source": str(u), "target": str(v)})
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"
