"""Acquire a domain's navigational topology.

Two sources are supported: a depth-first web crawl that mirrors pages to
disk, and a scan of a local directory tree. Both produce a
:class:`MirrorSnapshot` plus a ``manifest.json`` so later stages never
have to re-parse HTML or touch the network.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import quote, unquote, urldefrag, urljoin, urlsplit, urlunsplit

import requests

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
USER_AGENT = "gnnprefetch-route-mapper/0.1"
MAX_REDIRECTS = 3

PAGE_KINDS = ("page", "directory", "file")
SNAPSHOT_KINDS = ("web", "filesystem")


class FetchError(Exception):
    """A single page could not be retrieved; the crawl skips it."""


class CrawlError(Exception):
    """The crawl cannot proceed at all (e.g. the base URL is unreachable)."""


class ManifestError(ValueError):
    """A manifest file does not match the expected schema."""


@dataclass
class CrawlConfig:
    base_url: str
    output_root: str | os.PathLike = "output"
    max_pages: int = 1000
    max_depth: int = 10
    request_delay: float = 200.0  # milliseconds
    timeout: float = 10.0

    def __post_init__(self):
        parts = urlsplit(self.base_url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"base_url must be an absolute http(s) URL: {self.base_url!r}")
        if self.max_pages < 1:
            raise ValueError("max_pages must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.request_delay < 0:
            raise ValueError("request_delay must be >= 0")

    @property
    def main_domain(self) -> str:
        return urlsplit(self.base_url).netloc.lower()


@dataclass
class PageRecord:
    path: str
    kind: str
    outlinks: list[str] = field(default_factory=list)
    raw_size: int = 0

    def to_dict(self) -> dict:
        return {"path": self.path, "kind": self.kind,
                "outlinks": list(self.outlinks), "raw_size": self.raw_size}


@dataclass
class MirrorSnapshot:
    root: str
    pages: list[PageRecord]
    kind: str
    dropped_links: int = 0
    skipped: int = 0

    def page_paths(self) -> list[str]:
        return [p.path for p in self.pages]

    def to_manifest(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "kind": self.kind,
            "root": self.root,
            "dropped_links": self.dropped_links,
            "pages": [p.to_dict() for p in self.pages],
        }

    def write_manifest(self, directory: str | os.PathLike) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / MANIFEST_NAME
        path.write_text(json.dumps(self.to_manifest(), indent=2) + "\n", encoding="utf-8")
        return path

    def content_path(self, manifest_dir: str | os.PathLike, page: PageRecord) -> Path:
        """Location on disk of a page's content, given where the manifest lives."""
        base = Path(self.root)
        if not base.is_absolute():
            base = Path(manifest_dir) / base
        return base / page.path if page.path != "." else base


def load_manifest(path: str | os.PathLike) -> MirrorSnapshot:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: top level must be an object")
    if data.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported manifest version {data.get('version')!r}")
    if data.get("kind") not in SNAPSHOT_KINDS:
        raise ManifestError(f"{path}: bad snapshot kind {data.get('kind')!r}")
    pages = []
    for i, rec in enumerate(data.get("pages", [])):
        try:
            page = PageRecord(str(rec["path"]), rec["kind"], [str(o) for o in rec["outlinks"]],
                              int(rec["raw_size"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: pages[{i}] malformed: {exc!r}") from exc
        if page.kind not in PAGE_KINDS:
            raise ManifestError(f"{path}: pages[{i}] has bad kind {page.kind!r}")
        pages.append(page)
    if not pages:
        raise ManifestError(f"{path}: snapshot has no pages")
    return MirrorSnapshot(str(data.get("root", ".")), pages, data["kind"],
                          int(data.get("dropped_links", 0)))


# --------------------------------------------------------------------------
# link extraction


class _AnchorParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.hrefs: list[str | None] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            self.hrefs.append(dict(attrs).get("href"))

    handle_startendtag = handle_starttag


def _same_domain(netloc: str, main_domain: str) -> bool:
    netloc = netloc.lower()
    main_domain = main_domain.lower()
    if ":" in main_domain:
        return netloc == main_domain
    return netloc.split(":", 1)[0] == main_domain


def normalize_url(url: str) -> str:
    """Drop the fragment and an empty query; an empty path becomes ``/``."""
    url, _ = urldefrag(url)
    parts = urlsplit(url)
    return urlunsplit((parts.scheme.lower(), parts.netloc.lower(), parts.path or "/", parts.query, ""))


def extract_links(html: str, page_url: str, main_domain: str) -> list[str]:
    """Internal navigational links of a page, resolved and deduplicated.

    Skips missing/empty hrefs, fragment-only anchors, ``mailto:`` and other
    non-http schemes, and anything whose host is not ``main_domain``.
    Order is that of first appearance in the document.
    """
    parser = _AnchorParser()
    try:
        parser.feed(html)
        parser.close()
    except Exception:  # html.parser is lenient, but never let markup kill a crawl
        log.debug("parser gave up on %s; using anchors seen so far", page_url)

    out: list[str] = []
    seen = set()
    for href in parser.hrefs:
        if href is None:
            continue
        href = href.strip()
        if not href or href.startswith("#"):
            continue
        if href.lower().startswith("mailto:"):
            continue
        try:
            absolute = urljoin(page_url, href)
            parts = urlsplit(absolute)
        except ValueError:
            continue
        if parts.scheme not in ("http", "https"):
            continue
        if not _same_domain(parts.netloc, main_domain):
            continue
        url = normalize_url(absolute)
        if url not in seen:
            seen.add(url)
            out.append(url)
    return out


# --------------------------------------------------------------------------
# URL -> mirror path

_SAFE = "-.~"


def _encode_segment(segment: str) -> str:
    # "_" is reserved as the query separator, so literal underscores are escaped
    enc = quote(unquote(segment), safe=_SAFE).replace("_", "%5F")
    if enc in (".", ".."):
        enc = enc.replace(".", "%2E")
    return enc


def site_dirname(netloc: str) -> str:
    """Directory name for a host: ``domain.com`` -> ``domain``.

    IP addresses and single-label hosts are kept whole; a port is appended
    as ``_<port>``.
    """
    host, _, port = netloc.lower().partition(":")
    labels = host.split(".")
    is_ip = all(label.isdigit() for label in labels)
    name = ".".join(labels[:-1]) if len(labels) > 1 and not is_ip else host
    return f"{name}_{port}" if port else name


def url_to_path(url: str) -> str:
    """Map an internal URL to a mirror path such as ``domain/products/item1.html``.

    The mapping is injective: literal underscores are percent-escaped, so
    ``_`` unambiguously separates a folded-in query string, and a literal
    last segment named ``index`` is written as ``index_.html`` to stay
    distinct from the directory index.
    """
    parts = urlsplit(normalize_url(url))
    segments = parts.path.split("/")[1:]  # path always starts with "/"
    *dirs, last = segments
    dirs = [_encode_segment(s) if s else "_" for s in dirs]
    if last == "":
        name = "index"
    else:
        name = _encode_segment(last)
        if name == "index":
            name = "index_"
    if parts.query:
        name += "_" + quote(unquote(parts.query), safe=_SAFE + "=&").replace("_", "%5F")
    return "/".join([site_dirname(parts.netloc), *dirs, name + ".html"])


# --------------------------------------------------------------------------
# fetching and crawling


class PageFetcher:
    """HTTP GET with a politeness delay between consecutive request starts."""

    def __init__(self, cfg: CrawlConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()
        self.session.headers["User-Agent"] = USER_AGENT
        self._last_start: float | None = None
        self.fetch_count = 0

    def _wait(self):
        if self._last_start is not None:
            remaining = self.cfg.request_delay / 1000.0 - (time.monotonic() - self._last_start)
            if remaining > 0:
                time.sleep(remaining)
        self._last_start = time.monotonic()

    def __call__(self, url: str) -> str:
        self._wait()
        self.fetch_count += 1
        current = url
        for _ in range(MAX_REDIRECTS + 1):
            try:
                resp = self.session.get(current, timeout=self.cfg.timeout, allow_redirects=False)
            except requests.RequestException as exc:
                raise FetchError(f"{url}: {exc}") from exc
            if resp.is_redirect:
                target = urljoin(current, resp.headers.get("Location", ""))
                if not _same_domain(urlsplit(target).netloc, self.cfg.main_domain):
                    raise FetchError(f"{url}: redirect leaves the domain ({target})")
                current = target
                continue
            if not 200 <= resp.status_code < 300:
                raise FetchError(f"{url}: HTTP {resp.status_code}")
            return resp.text
        raise FetchError(f"{url}: more than {MAX_REDIRECTS} redirects")


def fetch_page(url: str, cfg: CrawlConfig, fetcher: PageFetcher | None = None) -> str:
    if not _same_domain(urlsplit(url).netloc, cfg.main_domain):
        raise FetchError(f"{url} is outside {cfg.main_domain}")
    return (fetcher or PageFetcher(cfg))(url)


def crawl(cfg: CrawlConfig, fetcher=None) -> MirrorSnapshot:
    """Depth-first crawl from ``cfg.base_url`` into a mirrored snapshot.

    ``fetcher`` is any callable ``url -> html`` raising :class:`FetchError`;
    it defaults to a :class:`PageFetcher`. Outlinks to pages that were never
    stored (fetch errors, limits) are dropped and counted.
    """
    fetch = fetcher or PageFetcher(cfg)
    base = normalize_url(cfg.base_url)
    site_dir = Path(cfg.output_root) / site_dirname(urlsplit(base).netloc)

    visited: set[str] = set()
    order: list[str] = []
    links: dict[str, list[str]] = {}
    sizes: dict[str, int] = {}
    bodies: dict[str, str] = {}

    def visit(url: str) -> list[str] | None:
        visited.add(url)
        try:
            html = fetch(url)
        except FetchError as exc:
            log.warning("skipping %s", exc)
            return None
        order.append(url)
        bodies[url] = html
        sizes[url] = len(html.encode("utf-8"))
        found = [u for u in extract_links(html, url, cfg.main_domain) if u != url]
        links[url] = found
        return found

    root_links = visit(base)
    if root_links is None:
        raise CrawlError(f"base URL unreachable: {cfg.base_url}")

    # explicit stack of link iterators == recursive DFS in document order
    stack = [(iter(root_links), 0)]
    while stack and len(order) < cfg.max_pages:
        it, depth = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            continue
        if nxt in visited or depth + 1 > cfg.max_depth:
            continue
        found = visit(nxt)
        if found is not None:
            stack.append((iter(found), depth + 1))

    # manifest paths are relative to the site directory
    paths = {u: url_to_path(u).split("/", 1)[1] for u in order}
    pages = []
    dropped = 0
    for u in order:
        kept = [paths[t] for t in links[u] if t in paths]
        dropped += len(links[u]) - len(kept)
        pages.append(PageRecord(paths[u], "page", kept, sizes[u]))
        target = site_dir / paths[u]
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(bodies[u], encoding="utf-8")

    snap = MirrorSnapshot(".", pages, "web", dropped)
    snap.write_manifest(site_dir)
    log.info("crawled %d pages from %s (%d links dropped)", len(pages), base, dropped)
    return snap


# --------------------------------------------------------------------------
# filesystem


def scan_filesystem(root: str | os.PathLike) -> MirrorSnapshot:
    """One record per directory and file under ``root``, in sorted pre-order.

    A directory's outlinks are its immediate children. A file links back to
    the directory containing it, modelling "go back up" navigation, so file
    nodes are not dead ends for walks.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(str(root))
    pages: list[PageRecord] = []
    skipped = 0

    def rel(p: Path) -> str:
        r = p.relative_to(root).as_posix()
        return r if r else "."

    stack = [root]
    while stack:
        d = stack.pop()
        rec = PageRecord(rel(d), "directory")
        pages.append(rec)
        try:
            entries = sorted(os.scandir(d), key=lambda e: e.name)
        except OSError as exc:
            log.warning("cannot list %s: %s", d, exc)
            skipped += 1
            continue
        subdirs = []
        files = []
        for e in entries:
            try:
                if e.is_dir(follow_symlinks=False):
                    subdirs.append(Path(e.path))
                elif e.is_file(follow_symlinks=False):
                    files.append((Path(e.path), e.stat().st_size))
            except OSError as exc:
                log.warning("skipping %s: %s", e.path, exc)
                skipped += 1
        rec.outlinks = [rel(p) for p, _ in files] + [rel(p) for p in subdirs]
        for p, size in files:
            pages.append(PageRecord(rel(p), "file", [rec.path], size))
        stack.extend(reversed(subdirs))

    if skipped:
        log.warning("%d entries skipped while scanning %s", skipped, root)
    return MirrorSnapshot(str(root.resolve()), pages, "filesystem", skipped=skipped)
