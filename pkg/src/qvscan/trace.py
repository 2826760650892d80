"""Phase 3: stitch per-file reachability into cross-file static traces.

For each API-level evidence chain, walk file by file: inside the current
file, find a call path from the entry function to one of the symbols the
next file provides (candidates tried in sorted order); recurse into the
next file from that symbol. The walk terminates at the crypto library's
export, which must be one of its matched QV APIs; the boundary function
therefore appears twice, once per file, in the finished trace.

Normal mode clears executables without a trace; conservative mode keeps
them as needs-review with their API-level evidence attached, trading
analyst workload for zero false negatives.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from qvscan.apigraph import ApiDepGraph, Ev2Entry
from qvscan.callgraph import CallgraphCache, CallgraphUnsupported, get_main_address, reachable_path

QV_PROVEN = "qv-proven"
NON_QV = "non-qv"
NEEDS_REVIEW = "needs-review"


@dataclass(frozen=True)
class StaticTrace:
    """Ordered (file, function) steps from an executable's main to a QV API."""

    steps: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if len(self.steps) < 2:
            raise ValueError("a static trace spans at least the executable and the library")

    @property
    def executable(self) -> str:
        return self.steps[0][0]

    @property
    def qv_api(self) -> str:
        return self.steps[-1][1]


@dataclass(frozen=True)
class Phase3Verdict:
    """Final classification of one executable after trace analysis."""

    executable: str
    status: str
    evidence: StaticTrace | Ev2Entry | None

    def __post_init__(self) -> None:
        by_status = {
            QV_PROVEN: StaticTrace,
            NEEDS_REVIEW: Ev2Entry,
            NON_QV: type(None),
        }
        if self.status not in by_status:
            raise ValueError(f"unknown verdict status {self.status!r}")
        if not isinstance(self.evidence, by_status[self.status]):
            raise ValueError(f"{self.status} verdict carries the wrong evidence kind")


def get_static_trace(
    g2: ApiDepGraph,
    path: tuple[str, ...],
    i: int,
    from_func: str,
    *,
    cache: CallgraphCache,
) -> StaticTrace | None:
    """Depth-first trace search along one file chain, starting inside path[i].

    At the final file the search stops at the API's export: the function
    must belong to the matched descriptors' QV surface, and the library
    itself is never analyzed. Candidate APIs on each hop are tried in
    sorted order so evidence is reproducible run to run.
    """
    steps = _search(g2, path, i, from_func, cache)
    return None if steps is None else StaticTrace(steps)


def _search(
    g2: ApiDepGraph,
    path: tuple[str, ...],
    i: int,
    from_func: str,
    cache: CallgraphCache,
) -> tuple[tuple[str, str], ...] | None:
    node = path[i]
    if i == len(path) - 1:
        if from_func in g2.qv_api_surface(node):
            return ((node, from_func),)
        return None

    binary = g2.binary(node)
    if binary is None:
        return None
    callgraph = cache.get(binary)
    if from_func not in callgraph.nodes:
        return None
    for to_func in sorted(g2.edge_api_set(node, path[i + 1])):
        within = reachable_path(callgraph, from_func, to_func)
        if within is None:
            continue
        rest = _search(g2, path, i + 1, to_func, cache)
        if rest is not None:
            return tuple((node, fn) for fn in within) + rest
    return None


def _verdict_for(
    g2: ApiDepGraph,
    executable: str,
    entries: list[Ev2Entry],
    conservative: bool,
    cache: CallgraphCache,
) -> Phase3Verdict:
    for entry in entries:
        binary = g2.binary(entry.path[0])
        if binary is None:
            continue
        try:
            main_id = get_main_address(binary)
            trace = get_static_trace(g2, entry.path, 0, main_id, cache=cache)
        except CallgraphUnsupported:
            trace = None  # conservative mode keeps this path for review
        if trace is not None:
            return Phase3Verdict(executable, QV_PROVEN, trace)
    if conservative:
        return Phase3Verdict(executable, NEEDS_REVIEW, entries[0])
    return Phase3Verdict(executable, NON_QV, None)


def phase3(
    g2: ApiDepGraph,
    ev2: tuple[Ev2Entry, ...] | list[Ev2Entry],
    conservative: bool,
    *,
    cache: CallgraphCache | None = None,
    jobs: int = 1,
) -> list[Phase3Verdict]:
    """Trace tier over the API-level evidence, one verdict per executable.

    Callgraphs are memoized in ``cache`` so each file is analyzed at most
    once across all executables and paths; per-executable analyses may run
    on ``jobs`` worker threads without changing the (sorted) output.
    """
    cache = cache or CallgraphCache()
    grouped: dict[str, list[Ev2Entry]] = {}
    for entry in sorted(ev2, key=lambda e: e.path):
        grouped.setdefault(entry.executable, []).append(entry)

    executables = sorted(grouped)
    if jobs > 1 and len(executables) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(
                pool.map(
                    lambda e: _verdict_for(g2, e, grouped[e], conservative, cache),
                    executables,
                )
            )
    else:
        verdicts = [
            _verdict_for(g2, e, grouped[e], conservative, cache) for e in executables
        ]
    return sorted(verdicts, key=lambda v: v.executable)
