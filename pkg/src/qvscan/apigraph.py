"""Phase 2: refine the file-level graph to API-level dependencies.

Edges into a crypto library are dropped when the depending file imports
none of that library's QV APIs; nodes left without a route to any crypto
library go with them. Every surviving edge is then annotated with the
exact symbol set linking the two files, and evidence chains gain the QV
API names the chain's last hop actually imports.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

import networkx as nx

from qvscan.depgraph import FileDepGraph, PathPolicy, evidence_paths
from qvscan.elf import BinaryFile


@dataclass(frozen=True)
class Ev2Entry:
    """API-level evidence: a file chain plus the QV APIs its last hop imports.

    ``per_descriptor`` attributes the union in ``qv_apis`` back to each
    matched descriptor of the crypto library.
    """

    path: tuple[str, ...]
    qv_apis: tuple[str, ...]
    per_descriptor: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self) -> None:
        if len(self.path) < 2:
            raise ValueError("evidence path needs at least an executable and a library")
        if not self.qv_apis:
            raise ValueError("API-level evidence must carry at least one QV API")

    @property
    def executable(self) -> str:
        return self.path[0]

    @property
    def crypto_lib(self) -> str:
        return self.path[-1]


class ApiDepGraph(FileDepGraph):
    """File-dependency graph whose edges carry their linking symbol sets."""

    @classmethod
    def from_file_graph(cls, graph: FileDepGraph) -> "ApiDepGraph":
        out = cls()
        out._g = graph.nx_graph.copy()
        return out

    def remove_edge(self, src: str, dst: str) -> None:
        self._g.remove_edge(src, dst)

    def set_edge_apis(self, src: str, dst: str, apis: frozenset[str]) -> None:
        self._g.edges[src, dst]["apis"] = apis

    def edge_api_set(self, src: str, dst: str) -> frozenset[str]:
        return self._g.edges[src, dst].get("apis", frozenset())


def edge_apis(src: BinaryFile, dst: BinaryFile) -> frozenset[str]:
    """Symbols ``src`` imports that ``dst`` exports (names already version-stripped)."""
    return src.imported_syms & dst.exported_syms


@dataclass(frozen=True)
class Phase2Result:
    graph: ApiDepGraph
    ev2: tuple[Ev2Entry, ...]


def phase2(
    g1: FileDepGraph,
    execs: Iterable[str | os.PathLike[str]],
    crypto_libs: Iterable[str],
    *,
    policy: PathPolicy = PathPolicy(),
) -> Phase2Result:
    """API-level tier over a pruned file-level graph.

    Steps, in order: drop crypto edges whose source imports no QV API of
    that library, re-prune unreachable nodes, annotate all surviving edges
    with their symbol intersections, then extract evidence chains.
    """
    g2 = ApiDepGraph.from_file_graph(g1)
    libs = sorted(crypto_libs)

    for lib in libs:
        surface = g2.qv_api_surface(lib)
        for pred in g2.predecessors(lib):
            binary = g2.binary(pred)
            imports = binary.imported_syms if binary is not None else frozenset()
            if not (imports & surface):
                g2.remove_edge(pred, lib)

    keep: set[str] = set(libs)
    for lib in libs:
        keep |= nx.ancestors(g2.nx_graph, lib)
    for node in [n for n in g2.nodes() if n not in keep]:
        g2.nx_graph.remove_node(node)

    for src, dst in g2.edges():
        src_binary, dst_binary = g2.binary(src), g2.binary(dst)
        if src_binary is not None and dst_binary is not None:
            g2.set_edge_apis(src, dst, edge_apis(src_binary, dst_binary))

    entries = []
    wanted = sorted({os.path.realpath(os.fspath(p)) for p in execs})
    for exec_path in wanted:
        if exec_path not in g2:
            continue
        for chain in evidence_paths(g2, exec_path, libs, policy):
            entries.append(_annotate(g2, chain))
    entries.sort(key=lambda e: e.path)
    return Phase2Result(graph=g2, ev2=tuple(entries))


def _annotate(g2: ApiDepGraph, chain: tuple[str, ...]) -> Ev2Entry:
    predecessor, lib = chain[-2], chain[-1]
    imports = g2.binary(predecessor).imported_syms
    per_descriptor = tuple(
        (name, tuple(sorted(imports & apis)))
        for name, apis in sorted(g2.matched_descriptor_apis(lib).items())
        if imports & apis
    )
    return Ev2Entry(
        path=chain,
        qv_apis=tuple(sorted(imports & g2.qv_api_surface(lib))),
        per_descriptor=per_descriptor,
    )
