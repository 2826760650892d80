"""Per-binary static callgraphs from direct transfers, plus reachability.

Function boundaries are seeded from symbol tables, PLT stubs, the entry
point, the recovered main address, and every direct call target; a linear
sweep then turns decoded calls (and tail jumps landing on a function
start) into invocation edges. Calls through PLT stubs appear under the
imported symbol's name, so cross-library reachability lines up with the
dynamic symbol surface. Indirect calls contribute no edges: a function
reached only through pointers is invisible here, which is the documented
false-negative class of direct-call analysis.
"""

from __future__ import annotations

import threading
from bisect import bisect_right
from collections import deque
from typing import Iterable, Protocol

from qvscan import x86
from qvscan.elf import EM_X86_64, BinaryFile


class CallgraphUnsupported(Exception):
    """The file cannot get a callgraph (wrong machine type, no code)."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class TransferDecoder(Protocol):
    """Pluggable instruction-scanning backend."""

    machines: frozenset[int]

    def scan(self, code: bytes, base: int) -> list[x86.Transfer]:
        ...


class X86DirectTransferDecoder:
    """Default backend: the bundled x86-64 linear-sweep decoder."""

    machines = frozenset({EM_X86_64})

    def scan(self, code: bytes, base: int) -> list[x86.Transfer]:
        return x86.scan_transfers(code, base)


DEFAULT_DECODER = X86DirectTransferDecoder()


class Callgraph:
    """Immutable directed graph of function ids for one binary."""

    def __init__(
        self,
        path: str,
        nodes: Iterable[str],
        edges: Iterable[tuple[str, str]],
        main_id: str | None,
        main_degraded: bool = False,
    ):
        self.path = path
        self.nodes = frozenset(nodes)
        self.edges = frozenset(edges)
        self.main_id = main_id
        self.main_degraded = main_degraded
        succ: dict[str, list[str]] = {}
        for src, dst in self.edges:
            succ.setdefault(src, []).append(dst)
        self._succ = {src: tuple(sorted(dsts)) for src, dsts in succ.items()}

    def __contains__(self, node: str) -> bool:
        return node in self.nodes

    def successors(self, node: str) -> tuple[str, ...]:
        return self._succ.get(node, ())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Callgraph):
            return NotImplemented
        return (self.path, self.nodes, self.edges, self.main_id) == (
            other.path, other.nodes, other.edges, other.main_id)

    def __repr__(self) -> str:
        return f"Callgraph({self.path!r}, {len(self.nodes)} nodes, {len(self.edges)} edges)"


def synthesized_name(addr: int) -> str:
    return f"sub_{addr:x}"


def _in_code(binary: BinaryFile, addr: int) -> bool:
    return any(s.addr <= addr < s.addr + len(s.data) for s in binary.code_sections)


def find_main_address(binary: BinaryFile) -> tuple[int, bool]:
    """main's virtual address plus a degraded flag for the entry fallback.

    Order of preference: a symbol literally named main; the address the
    entry stub loads into %rdi right before its first call (the argument
    register handing main to the C runtime's startup routine); finally the
    raw entry point, flagged as degraded.
    """
    for sym in binary.func_syms:
        if sym.name == "main":
            return sym.addr, False
    recovered = _main_from_entry_pattern(binary)
    if recovered is not None:
        return recovered, False
    return binary.entry_point, True


def _main_from_entry_pattern(binary: BinaryFile) -> int | None:
    code = binary.code_at(binary.entry_point, 96)
    candidate: int | None = None
    offset = 0
    for _ in range(24):
        if offset >= len(code):
            return None
        insn = x86.decode(code, offset, binary.entry_point)
        if insn is None:
            return None
        if insn.rdi_load is not None:
            candidate = insn.rdi_load
        elif insn.kind == "call":
            if candidate is not None and _in_code(binary, candidate):
                return candidate
            return None
        elif insn.kind in ("jump", "ret", "halt"):
            return None
        offset += insn.length
    return None


def get_main_address(binary: BinaryFile) -> str:
    """Function id of the program entry function.

    Raises:
        ValueError: for shared objects; only executables have a main.
    """
    if binary.kind != "executable":
        raise ValueError(f"{binary.path}: shared objects have no main function")
    addr, _degraded = find_main_address(binary)
    for sym in binary.func_syms:
        if sym.addr == addr:
            return sym.name
    return synthesized_name(addr)


class _FunctionTable:
    """Function starts with names, plus address-to-function attribution."""

    def __init__(self, binary: BinaryFile, call_targets: set[int], main_addr: int | None):
        self.names: dict[int, str] = {}
        used: set[str] = set()
        for sym in binary.func_syms:  # sorted by address
            name = sym.name
            if name in used:
                name = f"{name}.{sym.addr:x}"  # duplicate local statics stay distinct
            used.add(name)
            self.names[sym.addr] = name
        for addr, name in binary.plt_map.items():
            self.names.setdefault(addr, name)

        # Named extents (symbol sizes) decide whether a call target starts a
        # new function or lands inside an existing one.
        self._named_spans = sorted(
            (sym.addr, sym.addr + sym.size) for sym in binary.func_syms if sym.size > 0
        )
        seeds = set(call_targets)
        seeds.add(binary.entry_point)
        if main_addr is not None:
            seeds.add(main_addr)
        for target in sorted(seeds):
            if target in self.names or not _in_code(binary, target):
                continue
            if self.containing_named_start(target) is None:
                self.names[target] = synthesized_name(target)

        self._sections = sorted((s.addr, s.addr + len(s.data)) for s in binary.code_sections)
        self._starts = sorted(self.names)
        self._extents: dict[int, int] = {}
        sizes = {sym.addr: sym.size for sym in binary.func_syms}
        for i, start in enumerate(self._starts):
            section_end = self._section_end(start)
            end = section_end if section_end is not None else start
            if i + 1 < len(self._starts) and self._starts[i + 1] < end:
                end = self._starts[i + 1]
            size = sizes.get(start, 0)
            if size > 0:
                end = min(end, start + size)
            self._extents[start] = end

    def _section_end(self, addr: int) -> int | None:
        for lo, hi in self._sections:
            if lo <= addr < hi:
                return hi
        return None

    def containing_named_start(self, addr: int) -> int | None:
        """Start of the sized named function strictly containing ``addr``."""
        index = bisect_right(self._named_spans, (addr, float("inf"))) - 1
        if index >= 0:
            lo, hi = self._named_spans[index]
            if lo < addr < hi:
                return lo
        return None

    def function_at(self, addr: int) -> int | None:
        """Start address of the function whose extent covers ``addr``."""
        index = bisect_right(self._starts, addr) - 1
        if index < 0:
            return None
        start = self._starts[index]
        return start if addr < self._extents[start] else None

    def start_name(self, addr: int) -> str | None:
        return self.names.get(addr)


def gen_callgraph(binary: BinaryFile, decoder: TransferDecoder = DEFAULT_DECODER) -> Callgraph:
    """Build the direct-invocation callgraph of one binary.

    Raises:
        CallgraphUnsupported: unsupported machine type or no code sections;
            decode failures inside individual byte ranges are skipped, never
            fatal.
    """
    if binary.machine not in decoder.machines:
        raise CallgraphUnsupported(
            binary.path, f"machine type {binary.machine} not supported by the decoder")
    if not binary.code_sections:
        raise CallgraphUnsupported(binary.path, "no executable sections")

    transfers: list[x86.Transfer] = []
    for section in binary.code_sections:
        transfers.extend(decoder.scan(section.data, section.addr))

    main_addr: int | None = None
    main_degraded = False
    if binary.kind == "executable":
        main_addr, main_degraded = find_main_address(binary)

    call_targets = {t.target for t in transfers if t.kind == "call"}
    table = _FunctionTable(binary, call_targets, main_addr)
    plt_starts = set(binary.plt_map)

    edges: set[tuple[str, str]] = set()
    for transfer in transfers:
        caller_start = table.function_at(transfer.addr)
        if caller_start is None or caller_start in plt_starts:
            continue
        caller = table.names[caller_start]
        callee = table.start_name(transfer.target)
        if transfer.kind == "call":
            if callee is None:
                inside = table.containing_named_start(transfer.target)
                callee = table.names.get(inside) if inside is not None else None
            if callee is not None:
                edges.add((caller, callee))
        else:  # tail jump: only a transfer to another function's start
            if callee is not None and transfer.target != caller_start:
                edges.add((caller, callee))

    main_id = None
    if main_addr is not None:
        main_id = table.start_name(main_addr) or synthesized_name(main_addr)

    return Callgraph(
        path=binary.path,
        nodes=table.names.values(),
        edges=edges,
        main_id=main_id,
        main_degraded=main_degraded,
    )


def reachable_path(cg: Callgraph, src: str, dst: str) -> list[str] | None:
    """Shortest directed path src -> dst, or None; lexicographic tie-break.

    ``dst`` absent from the graph is an ordinary miss, not an error.
    """
    if src not in cg.nodes:
        raise KeyError(f"{src!r} is not a node of {cg.path}")
    if dst not in cg.nodes:
        return None
    if src == dst:
        return [src]
    parent: dict[str, str | None] = {src: None}
    queue: deque[str] = deque([src])
    while queue:
        node = queue.popleft()
        for succ in cg.successors(node):
            if succ in parent:
                continue
            parent[succ] = node
            if succ == dst:
                chain = [dst]
                while parent[chain[-1]] is not None:
                    chain.append(parent[chain[-1]])
                chain.reverse()
                return chain
            queue.append(succ)
    return None


def to_dot(cg: Callgraph) -> str:
    """DOT rendering for debugging, stable across runs."""
    lines = [f'digraph "{cg.path}" {{']
    for node in sorted(cg.nodes):
        shape = ' [shape=box]' if node == cg.main_id else ""
        lines.append(f'    "{node}"{shape};')
    for src, dst in sorted(cg.edges):
        lines.append(f'    "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


class CallgraphCache:
    """Build-once callgraph memo, safe to share across worker threads.

    Construction failures (unsupported machine) are cached as results so a
    file is never analyzed twice either way; ``build_count`` exposes the
    per-file construction tally for the memoization guarantee.
    """

    def __init__(self, decoder: TransferDecoder = DEFAULT_DECODER):
        self._decoder = decoder
        self._lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}
        self._entries: dict[str, Callgraph | CallgraphUnsupported] = {}
        self._builds: dict[str, int] = {}

    def get(self, binary: BinaryFile) -> Callgraph:
        key = binary.path
        with self._lock:
            entry_lock = self._locks.setdefault(key, threading.Lock())
        with entry_lock:
            cached = self._entries.get(key)
            if cached is None:
                try:
                    cached = gen_callgraph(binary, self._decoder)
                except CallgraphUnsupported as exc:
                    cached = exc
                self._entries[key] = cached
                self._builds[key] = self._builds.get(key, 0) + 1
        if isinstance(cached, CallgraphUnsupported):
            raise cached
        return cached

    def build_count(self, path: str) -> int:
        with self._lock:
            return self._builds.get(path, 0)

    def build_counts(self) -> dict[str, int]:
        with self._lock:
            return dict(self._builds)

    def known_graphs(self) -> list[Callgraph]:
        with self._lock:
            return sorted(
                (g for g in self._entries.values() if isinstance(g, Callgraph)),
                key=lambda g: g.path,
            )

    def unsupported(self) -> dict[str, str]:
        """Files whose callgraph construction failed, with the reason."""
        with self._lock:
            return {
                path: entry.reason
                for path, entry in sorted(self._entries.items())
                if isinstance(entry, CallgraphUnsupported)
            }
