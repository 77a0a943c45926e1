"""Command-line driver: every subcommand reads files and writes files.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import graph_constructor as gc
from . import walk_session as ws
from .config import SOURCES, ConfigError, ensure_dir, load_config, stage_seed
from .gnn import GraphOperators, TrainConfig, evaluate_topk, forward, pca_2d, train
from .gnn.model import embeddings_csv, read_embeddings_csv, save_checkpoint
from .gnn.pca import pca_csv
from .prefetch_sim import simulate
from .route_mapper import CrawlConfig, CrawlError, ManifestError, crawl, load_manifest, scan_filesystem
from .synth import SyntheticTreeSpec, make_snapshot

log = logging.getLogger("gnnprefetch")


class StageError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# stages


def stage_crawl(base_url, out, max_pages=1000, max_depth=10, delay_ms=200.0):
    cfg = CrawlConfig(base_url, out, max_pages=max_pages, max_depth=max_depth,
                      request_delay=delay_ms)
    snap = crawl(cfg)
    links = sum(len(p.outlinks) for p in snap.pages)
    print(f"crawled {len(snap.pages)} pages, {links} links, {snap.dropped_links} dropped")
    return snap


def stage_scan(root, out):
    snap = scan_filesystem(root)
    snap.write_manifest(out)
    links = sum(len(p.outlinks) for p in snap.pages)
    print(f"scanned {len(snap.pages)} entries, {links} links, {snap.skipped} skipped")
    return snap


def stage_synth(out, branching=4, depth=4, files_per_dir=2, cross_links=5, seed=0):
    spec = SyntheticTreeSpec(branching, depth, files_per_dir, cross_links,
                             stage_seed(seed, "synth"))
    snap = make_snapshot(spec, out)
    links = sum(len(p.outlinks) for p in snap.pages)
    print(f"synthetic tree: {len(snap.pages)} nodes, {links} edges")
    return snap


def stage_graph(snapshot, out):
    manifest = Path(snapshot)
    snap = load_manifest(manifest)
    manifest_dir = manifest if manifest.is_dir() else manifest.parent
    graph = gc.build_graph(snap, manifest_dir)
    out = ensure_dir(out)
    (out / "graph.json").write_text(gc.to_json(graph), encoding="utf-8")
    (out / "graph.gexf").write_text(gc.to_gexf(graph), encoding="utf-8")
    (out / "degree_histogram.csv").write_text(gc.degree_histogram_csv(graph), encoding="utf-8")
    print(f"graph: {graph.n} nodes, {len(graph.edges)} edges, {graph.dropped_links} dropped links")
    return graph


def stage_walks(graph_path, out, walkers=1000, length=20, p=1.0, q=0.5, window=1,
                start_policy="uniform", heldout_walkers=150, seed=0):
    graph = gc.load_graph(graph_path)
    cfg = ws.WalkConfig(walkers, length, p, q, stage_seed(seed, "walks"), start_policy)
    traces = ws.generate_sessions(graph, cfg)
    pairs = [pair for t in traces for pair in ws.sliding_windows(t, window)]
    if not pairs:
        raise StageError("walks produced no (context, target) pairs")
    dataset = ws.split_dataset(pairs, seed=stage_seed(seed, "split"))
    held_cfg = ws.WalkConfig(heldout_walkers, length, p, q, stage_seed(seed, "heldout"),
                             start_policy)
    heldout = ws.generate_sessions(graph, held_cfg)
    out = ensure_dir(out)
    ws.write_traces(traces, out / "traces.jsonl")
    ws.write_traces(heldout, out / "heldout_traces.jsonl")
    ws.write_dataset(dataset, out / "dataset.jsonl")
    print("walks: %d traces, %d pairs (train/val/test %d/%d/%d), %d held-out traces"
          % ((len(traces), len(pairs)) + dataset.sizes() + (len(heldout),)))
    return traces, dataset, heldout


def stage_train(graph_path, dataset_path, out, layer="sage", epochs=100, lr=0.005,
                weight_decay=1e-4, temperature=0.1, hidden=128, embed_dim=64,
                batch_size=1024, topk=5, seed=0):
    graph = gc.load_graph(graph_path)
    dataset = ws.read_dataset(dataset_path)
    for split in ws.SPLITS:
        for ctx, target in dataset.split(split):
            if not all(0 <= x < graph.n for x in (*ctx, target)):
                raise StageError(f"{dataset_path}: node id out of range for {graph_path}")
    cfg = TrainConfig(epochs=epochs, learning_rate=lr, weight_decay=weight_decay, topk=topk,
                      seed=stage_seed(seed, "train"), temperature=temperature, layer=layer,
                      hidden_dim=hidden, embed_dim=embed_dim,
                      batch_size=batch_size if batch_size and batch_size > 0 else None)
    X = graph.feature_matrix()
    ops = GraphOperators(graph)
    params, history = train(ops, X, dataset, cfg)
    Z = forward(params, X, ops)
    metrics = {"val_top%d" % topk: history.val_topk[-1],
               "test_top%d" % topk: evaluate_topk(Z, dataset.test, topk) if dataset.test else None,
               "final_train_loss": history.train_loss[-1]}
    out = ensure_dir(out)
    save_checkpoint(params, out / "model.json", {"temperature": temperature})
    (out / "history.csv").write_text(history.to_csv(topk), encoding="utf-8")
    (out / "embeddings.csv").write_text(embeddings_csv(Z), encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")
    print(f"train: {layer} {cfg.dims(X.shape[1])}, final loss {history.train_loss[-1]:.4f}, "
          f"val top{topk} {history.val_topk[-1]:.4f}")
    return params, history, metrics


def stage_simulate(embeddings, traces, out, train_traces=None, top_k=5,
                   cache_policy="unbounded", capacity=0, baseline="all", extra=None):
    Z = read_embeddings_csv(embeddings)
    replay = ws.read_traces(traces)
    for t in replay:
        if any(not 0 <= x < Z.shape[0] for x in t):
            raise StageError(f"{traces}: node id out of range for {embeddings}")
    baselines = {"all": ("no_prefetch", "markov"), "none": (),
                 "markov": ("markov",), "no_prefetch": ("no_prefetch",)}[baseline]
    train_replay = ws.read_traces(train_traces) if train_traces else None
    if "markov" in baselines and not train_replay:
        raise StageError("the markov baseline needs --train-traces")
    report = simulate(Z, replay, top_k, cache_policy, capacity or None, train_replay, baselines)
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    out = Path(out)
    ensure_dir(out.parent)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    base = ", ".join(f"{k} {v['hit_rate']:.4f}" for k, v in report.baselines.items())
    print(f"simulate: hit rate {report.hit_rate:.4f}" + (f" (baselines: {base})" if base else ""))
    return report


def stage_export(out, graph=None, embeddings=None, history=None, report=None, pca=True):
    out = ensure_dir(out)
    written = []
    g = None
    if graph:
        g = gc.load_graph(graph)
        (out / "graph.json").write_text(gc.to_json(g), encoding="utf-8")
        (out / "graph.gexf").write_text(gc.to_gexf(g), encoding="utf-8")
        (out / "degree_histogram.csv").write_text(gc.degree_histogram_csv(g), encoding="utf-8")
        written += ["graph.json", "graph.gexf", "degree_histogram.csv"]
    if embeddings:
        Z = read_embeddings_csv(embeddings)
        (out / "embeddings.csv").write_text(embeddings_csv(Z), encoding="utf-8")
        written.append("embeddings.csv")
        if pca:
            if Z.shape[0] < 2:
                raise StageError(f"{embeddings}: PCA needs at least 2 nodes, found {Z.shape[0]}")
            coords, var, _ = pca_2d(Z)
            kinds = [node.kind for node in g.nodes] if g is not None and g.n == Z.shape[0] else None
            (out / "pca.csv").write_text(pca_csv(coords, kinds), encoding="utf-8")
            written.append("pca.csv")
    for src, name in ((history, "history.csv"), (report, "report.json")):
        if src:
            if Path(src).resolve() != (out / name).resolve():
                shutil.copyfile(src, out / name)
            written.append(name)
    print("export: " + ", ".join(written))
    return written


def run_all(cfg: dict) -> dict:
    """Acquire, build, walk, train, simulate and export, in that order."""
    G = cfg["global"]
    seed = int(G["seed"])
    out = ensure_dir(G["out"])
    source = G["source"]
    snap_dir = out / "snapshot"
    if source == "synth":
        stage_synth(snap_dir, seed=seed, **cfg["synth"])
        manifest = snap_dir
    elif source == "scan":
        if not cfg["scan"]["root"]:
            raise ConfigError("[scan] root is required for source = scan")
        stage_scan(cfg["scan"]["root"], snap_dir)
        manifest = snap_dir
    else:
        c = cfg["crawl"]
        if not c["base_url"]:
            raise ConfigError("[crawl] base_url is required for source = crawl")
        stage_crawl(c["base_url"], snap_dir, c["max_pages"], c["max_depth"], c["delay_ms"])
        manifest = next(snap_dir.glob("*/manifest.json"))
    stage_graph(manifest, out / "graph")
    stage_walks(out / "graph" / "graph.json", out / "walks", seed=seed, **cfg["walks"])
    _, _, metrics = stage_train(out / "graph" / "graph.json", out / "walks" / "dataset.jsonl",
                                out / "model", seed=seed, **cfg["train"])
    stage_simulate(out / "model" / "embeddings.csv", out / "walks" / "heldout_traces.jsonl",
                   out / "report.json", train_traces=out / "walks" / "traces.jsonl",
                   extra={"model": metrics}, **cfg["simulate"])
    stage_export(out / "export", graph=out / "graph" / "graph.json",
                 embeddings=out / "model" / "embeddings.csv",
                 history=out / "model" / "history.csv", report=out / "report.json")
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# argument parsing


def _layered(args, cfg, section, mapping):
    """Pick each value from the flag if given, else from the config section."""
    return {key: (getattr(args, attr) if getattr(args, attr) is not None else cfg[section][key])
            for key, attr in mapping.items()}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gnnprefetch", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="INI file; flags override its values")
        return p

    p = add("crawl", "mirror a website into a snapshot")
    p.add_argument("--base-url")
    p.add_argument("--max-pages", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--delay-ms", type=float)
    p.add_argument("--out", required=True)

    p = add("scan", "snapshot a local directory tree")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)

    p = add("synth", "generate a synthetic directory tree snapshot")
    p.add_argument("--branching", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--files-per-dir", type=int)
    p.add_argument("--cross-links", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("graph", "build the feature graph from a snapshot manifest")
    p.add_argument("--snapshot", required=True, help="manifest.json or its directory")
    p.add_argument("--out", required=True)

    p = add("walks", "simulate navigation sessions and build the dataset")
    p.add_argument("--graph", required=True)
    p.add_argument("--walkers", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--start-policy", choices=ws.START_POLICIES)
    p.add_argument("--heldout-walkers", type=int)
    p.add_argument("--out", required=True)

    p = add("train", "train the GNN next-node predictor")
    p.add_argument("--graph", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--layer", choices=("sage", "gcn"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--batch-size", type=int, help="0 = full batch")
    p.add_argument("--topk", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("simulate", "replay traces through the prefetching cache")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--train-traces", help="traces the markov baseline learns from")
    p.add_argument("--top-k", type=int)
    p.add_argument("--cache-policy", choices=("unbounded", "lru"))
    p.add_argument("--capacity", type=int)
    p.add_argument("--baseline", choices=("all", "none", "markov", "no_prefetch"))
    p.add_argument("--out", required=True, help="report JSON path")

    p = add("export", "write GEXF/JSON/CSV artifacts for plotting")
    p.add_argument("--graph")
    p.add_argument("--embeddings")
    p.add_argument("--history")
    p.add_argument("--report")
    p.add_argument("--pca", action="store_true", help="also write the PCA projection")
    p.add_argument("--out", required=True)

    p = add("run-all", "run every stage end to end")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--source", choices=SOURCES)
    return ap


def dispatch(args) -> None:
    cfg = load_config(args.config)
    seed = args.seed if getattr(args, "seed", None) is not None else cfg["global"]["seed"]
    cmd = args.command
    if cmd == "crawl":
        c = _layered(args, cfg, "crawl", {"base_url": "base_url", "max_pages": "max_pages",
                                          "max_depth": "max_depth", "delay_ms": "delay_ms"})
        if not c["base_url"]:
            raise ConfigError("--base-url is required")
        stage_crawl(out=args.out, **c)
    elif cmd == "scan":
        stage_scan(args.root, args.out)
    elif cmd == "synth":
        c = _layered(args, cfg, "synth", {"branching": "branching", "depth": "depth",
                                          "files_per_dir": "files_per_dir",
                                          "cross_links": "cross_links"})
        stage_synth(args.out, seed=seed, **c)
    elif cmd == "graph":
        stage_graph(args.snapshot, args.out)
    elif cmd == "walks":
        c = _layered(args, cfg, "walks", {k: k for k in cfg["walks"]})
        stage_walks(args.graph, args.out, seed=seed, **c)
    elif cmd == "train":
        c = _layered(args, cfg, "train", {k: k for k in cfg["train"]})
        stage_train(args.graph, args.dataset, args.out, seed=seed, **c)
    elif cmd == "simulate":
        c = _layered(args, cfg, "simulate", {k: k for k in cfg["simulate"]})
        stage_simulate(args.embeddings, args.traces, args.out, args.train_traces, **c)
    elif cmd == "export":
        stage_export(args.out, args.graph, args.embeddings, args.history, args.report,
                     pca=args.pca)
    elif cmd == "run-all":
        cfg["global"]["seed"] = seed
        if args.out is not None:
            cfg["global"]["out"] = args.out
        if args.source is not None:
            cfg["global"]["source"] = args.source
        run_all(cfg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        dispatch(args)
    except ConfigError as exc:
        parser.error(str(exc))  # exits 2
    except (OSError, ValueError, RuntimeError, CrawlError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
