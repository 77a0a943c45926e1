"""Graph builders and a tiny fixture HTTP server shared by the tests."""

from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from gnnprefetch.graph_constructor import DomainGraph, GraphNode, compute_features


def make_graph(n, edges, kinds=None, root=0, features=True):
    kinds = kinds or ["page"] * n
    nodes = [GraphNode(i, f"n{i}", kinds[i]) for i in range(n)]
    g = DomainGraph(nodes, [tuple(e) for e in edges], root)
    return compute_features(g) if features else g


def random_edges(rng, n, p=0.3, self_loops=False):
    return [(u, v) for u in range(n) for v in range(n)
            if (u != v or self_loops) and rng.random() < p]


def random_graph(rng, n, p=0.3, features=True):
    return make_graph(n, random_edges(rng, n, p), features=features)


def random_site(rng, n_pages=50, extra_links=3):
    """Fixture site ``{path: html}`` plus its ground-truth internal link table.

    Every page is reachable from ``/`` via a chain; pages also carry
    fragment, mailto and off-domain anchors that a crawler must ignore.
    """
    paths = ["/"] + [f"/p{i}" for i in range(1, n_pages)]
    table = {}
    for i, path in enumerate(paths):
        links = []
        if i + 1 < n_pages:
            links.append(paths[i + 1])
        for j in rng.choice(n_pages, size=extra_links, replace=False):
            if paths[j] != path and paths[j] not in links:
                links.append(paths[j])
        table[path] = links
    site = {}
    for path, links in table.items():
        anchors = "".join(f'<a href="{l}">x</a>' for l in links)
        noise = ('<a href="#top">top</a><a href="mailto:x@y.z">mail</a>'
                 '<a href="https://elsewhere.org/q">ext</a><a>empty</a>')
        site[path] = f"<html><body><p>page {path}</p>{noise}{anchors}</body></html>"
    return site, table


class SiteServer:
    """Serve a dict of ``path -> html`` (or ``("redirect", target)``) on localhost."""

    def __init__(self, pages):
        self.pages = pages
        self.hits = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                outer.hits.append(self.path)
                body = outer.pages.get(self.path)
                if body is None:
                    self.send_response(404)
                    self.end_headers()
                    return
                if isinstance(body, tuple):
                    self.send_response(302)
                    self.send_header("Location", body[1])
                    self.end_headers()
                    return
                data = body.encode()
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base(self):
        return f"http://127.0.0.1:{self.httpd.server_address[1]}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def dict_fetcher(site, base="https://site.test"):
    """In-process fetcher over a ``{path: html}`` site; counts every call."""
    from urllib.parse import urlsplit
    from gnnprefetch.route_mapper import FetchError

    calls = []

    def fetch(url):
        calls.append(url)
        path = urlsplit(url).path or "/"
        if path not in site:
            raise FetchError(f"{url}: HTTP 404")
        return site[path]

    fetch.calls = calls
    return fetch


def dense_rng(seed):
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# GEXF static-graph schema subset


GEXF_NS = "{http://gexf.net/1.2}"
_GEXF_TYPES = {"integer": int, "long": int, "double": float, "float": float,
               "boolean": lambda s: {"true": True, "false": False}[s], "string": str}


def validate_gexf(text):
    """Raise AssertionError unless ``text`` is a static GEXF 1.2 graph document.

    Checks the element structure, attribute declarations and typed values,
    id uniqueness, edge endpoints, and the absence of dynamic/viz features.
    """
    import xml.etree.ElementTree as ET

    root = ET.fromstring(text)
    assert root.tag == GEXF_NS + "gexf", root.tag
    assert root.get("version") == "1.2"
    for el in root.iter():
        assert el.tag.startswith(GEXF_NS), f"foreign element {el.tag}"
        assert "start" not in el.attrib and "end" not in el.attrib, "dynamic attribute"
    graphs = root.findall(GEXF_NS + "graph")
    assert len(graphs) == 1
    g = graphs[0]
    assert g.get("mode", "static") == "static"
    assert g.get("defaultedgetype", "undirected") in ("directed", "undirected", "mutual")
    declared = {}
    for attrs in g.findall(GEXF_NS + "attributes"):
        assert attrs.get("class") in ("node", "edge")
        assert attrs.get("mode", "static") == "static"
        for a in attrs.findall(GEXF_NS + "attribute"):
            assert a.get("id") not in declared, "duplicate attribute id"
            assert a.get("type") in _GEXF_TYPES, a.get("type")
            assert a.get("title")
            declared[a.get("id")] = a.get("type")
    nodes_el = g.findall(GEXF_NS + "nodes")
    edges_el = g.findall(GEXF_NS + "edges")
    assert len(nodes_el) == 1 and len(edges_el) <= 1
    node_ids = set()
    for node in nodes_el[0].findall(GEXF_NS + "node"):
        nid = node.get("id")
        assert nid is not None and nid not in node_ids
        node_ids.add(nid)
        for av in node.iter(GEXF_NS + "attvalue"):
            key = av.get("for")
            assert key in declared, f"attvalue for undeclared attribute {key}"
            _GEXF_TYPES[declared[key]](av.get("value"))
    edge_ids = set()
    edges = edges_el[0].findall(GEXF_NS + "edge") if edges_el else []
    for e in edges:
        assert e.get("source") in node_ids and e.get("target") in node_ids
        eid = e.get("id")
        assert eid is not None and eid not in edge_ids
        edge_ids.add(eid)
    return len(node_ids), len(edges)


# --------------------------------------------------------------------------
# independent oracles for graph metrics


def dense_pagerank_oracle(n, edges, damping=0.85, multiplications=10_000):
    """Explicit Google matrix, applied ``multiplications`` times to the uniform vector."""
    M = np.zeros((n, n))
    outdeg = [0] * n
    for u, _ in edges:
        outdeg[u] += 1
    for u, v in edges:
        M[v, u] = 1.0 / outdeg[u]
    for u in range(n):
        if outdeg[u] == 0:
            M[:, u] = 1.0 / n
    G = damping * M + (1.0 - damping) / n * np.ones((n, n))
    x = np.full(n, 1.0 / n)
    for _ in range(multiplications):
        x = G @ x
    return x


def triangle_clustering_oracle(n, edges):
    """Exact local clustering (as Fractions) by enumerating every node triple."""
    from fractions import Fraction
    from itertools import combinations

    A = [[False] * n for _ in range(n)]
    for u, v in edges:
        if u != v:
            A[u][v] = A[v][u] = True
    out = []
    for v in range(n):
        k = sum(A[v])
        if k < 2:
            out.append(Fraction(0))
            continue
        tri = sum(1 for a, b in combinations(range(n), 2)
                  if a != v and b != v and A[v][a] and A[v][b] and A[a][b])
        out.append(Fraction(tri, k * (k - 1) // 2))
    return out


def all_paths_depth_oracle(n, edges, root):
    """Minimum hop count over every simple path from ``root``; ``n`` if unreachable."""
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
    best = [n] * n

    def explore(node, length, on_path):
        best[node] = min(best[node], length)
        for nxt in adj[node]:
            if nxt not in on_path:
                explore(nxt, length + 1, on_path | {nxt})

    explore(root, 0, {root})
    return best


# --------------------------------------------------------------------------
# finite-difference gradient oracle


EXTENDED = np.longdouble
# Round-off in a central difference is about eps * loss / h: ~1e-14 with
# 80-bit extended floats, ~1e-10 with float64. Entries smaller than the
# floor are compared against the floor, i.e. absolutely at 1e-5 * floor.
FD_FLOOR = 1e-7 if np.finfo(EXTENDED).eps < 1e-18 else 1e-5


def extended_loss(Z, batch, temperature):
    """Mean next-node cross-entropy, evaluated in extended precision."""
    U = np.array([b[0] for b in batch])
    V = np.array([b[1] for b in batch])
    S = Z[U] @ Z.T / EXTENDED(temperature)
    top = S.max(axis=1)
    lse = top + np.log(np.exp(S - top[:, None]).sum(axis=1))
    return (lse - S[np.arange(len(U)), V]).mean()


def finite_difference_grads(params, features, graph, batch, temperature=0.1, h=1e-5):
    """Central differences of the loss for every parameter entry, keyed like ``named()``."""
    from gnnprefetch.gnn.model import ModelParams, forward

    ext = ModelParams(params.layer, params.dims,
                      [{k: v.astype(EXTENDED) for k, v in b.items()} for b in params.weights])
    X = features.astype(EXTENDED)
    step = EXTENDED(h)
    out = {}
    for name, W in ext.named():
        G = np.zeros(W.shape)
        for idx in np.ndindex(W.shape):
            old = W[idx]
            W[idx] = old + step
            up = extended_loss(forward(ext, X, graph), batch, temperature)
            W[idx] = old - step
            down = extended_loss(forward(ext, X, graph), batch, temperature)
            W[idx] = old
            G[idx] = float((up - down) / (2 * step))
        out[name] = G
    return out


def max_relative_error(analytic, numeric, floor=FD_FLOOR):
    """max |a - n| / max(|a|, |n|, floor) over every entry of every block."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def relu_margin(params, features, graph):
    """Smallest |pre-activation| over ReLU layers; tiny values mean a kink is in reach."""
    from gnnprefetch.gnn.model import forward

    cache = []
    forward(params, features, graph, cache)
    hidden = cache[:len(params.weights) - 1]
    return min((float(np.abs(pre).min()) for _, _, pre in hidden), default=np.inf)


# --------------------------------------------------------------------------
# dense oracles for the GNN engine


def dense_norm_adjacency(n, edges):
    """D^-1/2 (A + I) D^-1/2 with explicit matrices over the undirected projection."""
    A = np.eye(n)
    for u, v in edges:
        if u != v:
            A[u, v] = A[v, u] = 1.0
    d = A.sum(axis=1)
    D = np.diag(1.0 / np.sqrt(d))
    return D @ A @ D


def loop_gcn(H, N, W, activation):
    n, d_in = H.shape
    d_out = W.shape[1]
    out = np.zeros((n, d_out))
    for i in range(n):
        for j in range(d_out):
            total = 0.0
            for k in range(n):
                for l in range(d_in):
                    total += N[i][k] * H[k][l] * W[l][j]
            out[i][j] = max(total, 0.0) if activation == "relu" else total
    return out


def loop_sage(H, n, edges, W_self, W_neigh, bias, activation):
    hoods = [{v} for v in range(n)]
    for u, v in edges:
        hoods[u].add(v)
        hoods[v].add(u)
    d_in, d_out = W_self.shape
    out = np.zeros((n, d_out))
    for v in range(n):
        mean = [sum(H[u][l] for u in hoods[v]) / len(hoods[v]) for l in range(d_in)]
        for j in range(d_out):
            total = bias[j]
            for l in range(d_in):
                total += H[v][l] * W_self[l][j] + mean[l] * W_neigh[l][j]
            out[v][j] = max(total, 0.0) if activation == "relu" else total
    return out


def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` sorted by descending value; vectors are columns.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.sqrt((A * A).sum())
    for _ in range(max_sweeps):
        off = np.sqrt(((A - np.diag(np.diag(A))) ** 2).sum())
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta**2 would overflow; t ~ 1/(2 theta)
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * colp - s * colq, s * colp + c * colq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rowp - s * rowq, s * rowp + c * rowq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], V[:, order]


# --------------------------------------------------------------------------
# acceptance reporting

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(label, ok, detail=""):
    """Log one acceptance line for the terminal summary, then assert it."""
    ACCEPTANCE.append((label, bool(ok), detail))
    assert ok, f"{label}: {detail}"
