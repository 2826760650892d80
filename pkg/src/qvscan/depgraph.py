"""Phase 1: file-level dependency discovery and crypto-library location.

Builds a directed graph whose nodes are canonical file paths and whose
edges mean "directly depends on" (a DT_NEEDED entry that resolved to that
file). Crypto libraries are located by descriptor match on exported
symbols, everything without a path to one is pruned, and the surviving
executables yield file-path evidence chains.
"""

from __future__ import annotations

import os
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import networkx as nx

from qvscan.descriptors import CryptoLibDescriptor, matches
from qvscan.elf import BinaryFile, ElfParseError, ResolutionConfig, parse_elf, resolve_dependency


@dataclass(frozen=True)
class Ev1Entry:
    """File-level evidence: a dependency chain from an executable to a crypto library."""

    path: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.path) < 2:
            raise ValueError("evidence path needs at least an executable and a library")

    @property
    def executable(self) -> str:
        return self.path[0]

    @property
    def crypto_lib(self) -> str:
        return self.path[-1]


@dataclass(frozen=True)
class PathPolicy:
    """How many dependency paths to report per (executable, crypto-lib) pair.

    The default keeps one shortest path; ``all_simple`` enumerates every
    simple path but never more than ``cutoff`` per pair, because simple
    paths can explode combinatorially.
    """

    all_simple: bool = False
    cutoff: int = 100


class ParseCache:
    """Thread-safe parse-once cache keyed by canonical path."""

    def __init__(self, *, strip_symbol_versions: bool = True):
        self._strip = strip_symbol_versions
        self._lock = threading.Lock()
        self._entries: dict[str, BinaryFile | ElfParseError] = {}

    def parse(self, path: str | os.PathLike[str]) -> BinaryFile:
        key = os.path.realpath(os.fspath(path))
        with self._lock:
            cached = self._entries.get(key)
        if cached is None:
            try:
                cached = parse_elf(key, strip_symbol_versions=self._strip)
            except ElfParseError as exc:
                cached = exc
            with self._lock:
                cached = self._entries.setdefault(key, cached)
        if isinstance(cached, ElfParseError):
            raise cached
        return cached


class FileDepGraph:
    """Directed file-dependency graph with per-node analysis annotations.

    Node identity is the canonical absolute path for resolved files; an
    unresolved soname appears under its bare name as a leaf so the gap is
    visible rather than silently dropped. Treat instances as immutable
    once returned from :func:`phase1`.
    """

    def __init__(self) -> None:
        self._g = nx.DiGraph()
        # Pruning drops unresolved/broken leaves from the graph itself, but
        # their record must survive into the report; see scan_gaps().
        self._carried_unresolved: dict[str, tuple[str, ...]] | None = None
        self._carried_failures: dict[str, str] | None = None

    # construction ---------------------------------------------------------

    def add_file(self, binary: BinaryFile) -> None:
        self._g.add_node(
            binary.path,
            binary=binary,
            unresolved=False,
            error=None,
            is_crypto_lib=False,
            desc_apis={},
        )

    def add_unresolved(self, soname: str) -> None:
        if soname not in self._g:
            self._g.add_node(
                soname,
                binary=None,
                unresolved=True,
                error=None,
                is_crypto_lib=False,
                desc_apis={},
            )

    def add_parse_failure(self, path: str, error: str) -> None:
        if path not in self._g or self._g.nodes[path].get("binary") is None:
            self._g.add_node(
                path,
                binary=None,
                unresolved=False,
                error=error,
                is_crypto_lib=False,
                desc_apis={},
            )

    def add_edge(self, src: str, dst: str) -> None:
        self._g.add_edge(src, dst)

    def mark_crypto(self, node: str, matched: Iterable[CryptoLibDescriptor]) -> None:
        attrs = self._g.nodes[node]
        attrs["is_crypto_lib"] = True
        attrs["desc_apis"] = {d.name: d.qv_apis for d in matched}

    # queries ---------------------------------------------------------------

    def __contains__(self, node: str) -> bool:
        return node in self._g

    def __len__(self) -> int:
        return self._g.number_of_nodes()

    @property
    def nx_graph(self) -> nx.DiGraph:
        return self._g

    def nodes(self) -> list[str]:
        return sorted(self._g.nodes)

    def edges(self) -> list[tuple[str, str]]:
        return sorted(self._g.edges())

    def successors(self, node: str) -> list[str]:
        return sorted(self._g.successors(node))

    def predecessors(self, node: str) -> list[str]:
        return sorted(self._g.predecessors(node))

    def binary(self, node: str) -> BinaryFile | None:
        return self._g.nodes[node]["binary"]

    def is_crypto_lib(self, node: str) -> bool:
        return self._g.nodes[node]["is_crypto_lib"]

    def matched_descriptors(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(self._g.nodes[node]["desc_apis"]))

    def matched_descriptor_apis(self, node: str) -> dict[str, frozenset[str]]:
        """Matched descriptor name -> that descriptor's QV API set."""
        return dict(self._g.nodes[node]["desc_apis"])

    def qv_api_surface(self, node: str) -> frozenset[str]:
        """Union of qv_apis over every descriptor matched on this node."""
        apis = self._g.nodes[node]["desc_apis"].values()
        return frozenset().union(*apis) if apis else frozenset()

    def crypto_libs(self) -> list[str]:
        return sorted(n for n, d in self._g.nodes(data=True) if d["is_crypto_lib"])

    def unresolved(self) -> dict[str, tuple[str, ...]]:
        """Unresolved soname -> sorted tuple of files that needed it."""
        out = {}
        for node, attrs in self._g.nodes(data=True):
            if attrs["unresolved"]:
                out[node] = tuple(sorted(self._g.predecessors(node)))
        return out

    def parse_failures(self) -> dict[str, str]:
        return {
            node: attrs["error"]
            for node, attrs in self._g.nodes(data=True)
            if attrs["error"] is not None
        }

    def copy_metadata_from(self, other: "FileDepGraph") -> None:
        self._carried_unresolved = other.unresolved()
        self._carried_failures = other.parse_failures()

    def scan_gaps(self) -> tuple[dict[str, tuple[str, ...]], dict[str, str]]:
        """(unresolved sonames, parse failures) including pruned-away ones."""
        unresolved = self._carried_unresolved
        failures = self._carried_failures
        if unresolved is None:
            unresolved = self.unresolved()
        if failures is None:
            failures = self.parse_failures()
        return unresolved, failures


def gen_sw_dep_graph(
    execs: Iterable[str | os.PathLike[str]],
    cfg: ResolutionConfig,
    *,
    cache: ParseCache | None = None,
) -> FileDepGraph:
    """Depth-first discovery of every transitive dependency of ``execs``.

    Revisiting an already-known file adds nothing, which also terminates
    dependency cycles between shared objects. Unresolvable sonames and
    dependencies that fail to parse become annotated leaf nodes.
    """
    cache = cache or ParseCache(strip_symbol_versions=cfg.strip_symbol_versions)
    graph = FileDepGraph()
    for exec_path in execs:
        _discover(graph, cache.parse(exec_path), cfg, cache)
    return graph


def _discover(graph: FileDepGraph, binary: BinaryFile, cfg: ResolutionConfig, cache: ParseCache) -> None:
    if binary.path in graph:
        return
    graph.add_file(binary)
    for soname in binary.needed:
        resolved = resolve_dependency(soname, cfg, origin=binary)
        if resolved is None:
            graph.add_unresolved(soname)
            graph.add_edge(binary.path, soname)
            continue
        try:
            dep = cache.parse(resolved)
        except ElfParseError as exc:
            graph.add_parse_failure(resolved, str(exc))
            graph.add_edge(binary.path, resolved)
            continue
        _discover(graph, dep, cfg, cache)
        graph.add_edge(binary.path, dep.path)


def find_crypto_libs(graph: FileDepGraph, descriptors: list[CryptoLibDescriptor]) -> list[str]:
    """Flag every node whose exports satisfy at least one descriptor.

    All matching descriptor names are recorded on the node; two installed
    versions of the same library are simply both flagged.
    """
    flagged = []
    for node in graph.nodes():
        binary = graph.binary(node)
        if binary is None:
            continue
        matched = [d for d in descriptors if matches(d, binary.exported_syms)]
        if matched:
            graph.mark_crypto(node, matched)
            flagged.append(node)
    return flagged


def prune_to_crypto_reachable(graph: FileDepGraph, crypto_libs: list[str]) -> FileDepGraph:
    """New graph keeping only nodes with a path to some crypto library."""
    keep: set[str] = set(crypto_libs)
    for lib in crypto_libs:
        keep |= nx.ancestors(graph.nx_graph, lib)
    pruned = FileDepGraph()
    pruned._g = graph.nx_graph.subgraph(keep).copy()  # noqa: SLF001 - same-class constructor shortcut
    pruned.copy_metadata_from(graph)
    return pruned


def shortest_path(graph: FileDepGraph, src: str, dst: str) -> tuple[str, ...] | None:
    """Deterministic BFS shortest path; ties break on sorted successor order."""
    if src not in graph or dst not in graph:
        return None
    if src == dst:
        return (src,)
    parent: dict[str, str | None] = {src: None}
    queue: deque[str] = deque([src])
    while queue:
        node = queue.popleft()
        for succ in graph.successors(node):
            if succ in parent:
                continue
            parent[succ] = node
            if succ == dst:
                chain = [dst]
                while parent[chain[-1]] is not None:
                    chain.append(parent[chain[-1]])
                return tuple(reversed(chain))
            queue.append(succ)
    return None


def simple_paths(graph: FileDepGraph, src: str, dst: str, limit: int) -> list[tuple[str, ...]]:
    """Up to ``limit`` simple paths in depth-first sorted-successor order."""
    if src not in graph or dst not in graph or src == dst:
        return []
    out: list[tuple[str, ...]] = []
    trail: list[str] = [src]
    on_trail = {src}

    def walk(node: str) -> bool:
        if node == dst:
            out.append(tuple(trail))
            return len(out) >= limit
        for succ in graph.successors(node):
            if succ in on_trail:
                continue
            trail.append(succ)
            on_trail.add(succ)
            done = walk(succ)
            on_trail.discard(succ)
            trail.pop()
            if done:
                return True
        return False

    walk(src)
    return out


def evidence_paths(
    graph: FileDepGraph,
    executable: str,
    crypto_libs: Iterable[str],
    policy: PathPolicy,
) -> Iterator[tuple[str, ...]]:
    """Dependency paths from one executable to each reachable crypto library."""
    for lib in sorted(crypto_libs):
        if lib == executable:
            continue
        if policy.all_simple:
            yield from simple_paths(graph, executable, lib, policy.cutoff)
        else:
            found = shortest_path(graph, executable, lib)
            if found is not None:
                yield found


@dataclass(frozen=True)
class Phase1Result:
    graph: FileDepGraph
    ev1: tuple[Ev1Entry, ...]
    crypto_libs: tuple[str, ...]
    executables: tuple[str, ...] = field(default=())


def phase1(
    execs: Iterable[str | os.PathLike[str]],
    descriptors: list[CryptoLibDescriptor],
    cfg: ResolutionConfig,
    *,
    policy: PathPolicy = PathPolicy(),
    cache: ParseCache | None = None,
) -> Phase1Result:
    """Full file-level tier: discover, locate crypto libs, prune, report.

    The returned graph holds only nodes that can reach a crypto library;
    executables without any crypto dependency simply produce no evidence.
    """
    cache = cache or ParseCache(strip_symbol_versions=cfg.strip_symbol_versions)
    canonical = [os.path.realpath(os.fspath(p)) for p in execs]
    graph = gen_sw_dep_graph(canonical, cfg, cache=cache)
    crypto_libs = find_crypto_libs(graph, descriptors)
    pruned = prune_to_crypto_reachable(graph, crypto_libs)
    entries = []
    for exec_path in sorted(set(canonical)):
        if exec_path not in pruned:
            continue
        for chain in evidence_paths(pruned, exec_path, crypto_libs, policy):
            entries.append(Ev1Entry(chain))
    entries.sort(key=lambda e: e.path)
    return Phase1Result(
        graph=pruned,
        ev1=tuple(entries),
        crypto_libs=tuple(sorted(set(crypto_libs) & set(pruned.nodes()))),
        executables=tuple(sorted(set(canonical))),
    )
