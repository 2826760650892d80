"""Command-line scanner: enumerate executables, run the tiers, write evidence.

Exit codes follow the scanner convention:
  0 — scan completed, nothing flagged
  1 — at least one executable is QV-proven / QV-suspected / needs-review
  2 — configuration error (bad flags, unreadable descriptor file, ...)
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from qvscan import __version__
from qvscan.apigraph import phase2
from qvscan.callgraph import CallgraphCache, to_dot
from qvscan.depgraph import ParseCache, PathPolicy, phase1
from qvscan.descriptors import DescriptorError, load_descriptors
from qvscan.elf import ElfParseError, ResolutionConfig, is_elf
from qvscan.report import ScanReport, render_json, render_text
from qvscan.trace import phase3


class ConfigError(Exception):
    """Unusable invocation; maps to exit code 2."""


@dataclass
class CliConfig:
    input_paths: tuple[str, ...]
    desc_path: str
    max_phase: int = 3
    conservative: bool = False
    search_paths: tuple[str, ...] = ()
    all_paths: bool = False
    all_paths_cutoff: int = 100
    output: str | None = None
    format: str = "json"
    jobs: int = 1
    dump_callgraph: str | None = None
    follow_runpath: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        if self.max_phase not in (1, 2, 3):
            raise ConfigError("--phase must be 1, 2 or 3")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if self.format not in ("json", "text"):
            raise ConfigError("--format must be json or text")
        if not self.input_paths:
            raise ConfigError("at least one --input is required")
        if self.all_paths_cutoff < 1:
            raise ConfigError("--all-paths cutoff must be at least 1")


def _walk_inputs(roots: tuple[str, ...]) -> list[str]:
    """Candidate files under the inputs: recursive, symlinked files followed,
    symlinked directories skipped to stay cycle-free."""
    candidates: list[str] = []
    for root in roots:
        if os.path.isfile(root):
            candidates.append(root)
            continue
        for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
            dirnames.sort()
            for name in sorted(filenames):
                full = os.path.join(dirpath, name)
                if os.path.isfile(full):  # includes symlinks to regular files
                    candidates.append(full)
    return candidates


def discover_executables(
    cfg: CliConfig, cache: ParseCache
) -> tuple[list[str], list[str]]:
    """ELF executables among the inputs, plus skip warnings."""
    warnings: list[str] = []
    executables: set[str] = set()
    candidates = _walk_inputs(cfg.input_paths)

    elf_files = []
    for path in candidates:
        if is_elf(path):
            elf_files.append(path)
        else:
            warnings.append(f"skipped non-ELF file: {path}")

    def try_parse(path: str):
        try:
            return cache.parse(path)
        except ElfParseError as exc:
            return exc

    if cfg.jobs > 1 and len(elf_files) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            parsed = list(pool.map(try_parse, elf_files))
    else:
        parsed = [try_parse(p) for p in elf_files]

    for path, result in zip(elf_files, parsed):
        if isinstance(result, ElfParseError):
            warnings.append(f"failed to parse {path}: {result}")
        elif result.kind == "executable":
            executables.add(result.path)
    return sorted(executables), warnings


def run_pipeline(cfg: CliConfig) -> tuple[ScanReport, CallgraphCache | None]:
    for root in cfg.input_paths:
        if not os.path.exists(root):
            raise ConfigError(f"input path does not exist: {root}")
    try:
        descriptors = load_descriptors(cfg.desc_path)
    except DescriptorError as exc:
        raise ConfigError(str(exc)) from exc

    parse_cache = ParseCache()
    executables, warnings = discover_executables(cfg, parse_cache)

    search_paths = cfg.search_paths
    if not search_paths:
        # Default: the directories the scanned files live in, so sibling
        # libraries resolve out of the box.
        search_paths = tuple(sorted({os.path.dirname(p) for p in executables}))
    if not search_paths:
        search_paths = (os.getcwd(),)
    resolution = ResolutionConfig(search_paths=search_paths, follow_runpath=cfg.follow_runpath)

    policy = PathPolicy(all_simple=cfg.all_paths, cutoff=cfg.all_paths_cutoff)
    p1 = phase1(executables, descriptors, resolution, policy=policy, cache=parse_cache)
    unresolved, failures = p1.graph.scan_gaps()
    for soname, dependents in sorted(unresolved.items()):
        warnings.append(
            f"unresolved dependency: {soname} (needed by {', '.join(dependents)})"
        )
    for path, error in sorted(failures.items()):
        warnings.append(f"failed to parse dependency {path}: {error}")

    ev2 = ()
    ev3 = ()
    callgraphs: CallgraphCache | None = None
    if cfg.max_phase >= 2:
        p2 = phase2(p1.graph, p1.executables, p1.crypto_libs, policy=policy)
        ev2 = p2.ev2
    if cfg.max_phase >= 3:
        callgraphs = CallgraphCache()
        ev3 = tuple(
            phase3(p2.graph, p2.ev2, cfg.conservative, cache=callgraphs, jobs=cfg.jobs)
        )
        for path, reason in callgraphs.unsupported().items():
            warnings.append(f"callgraph unsupported for {path}: {reason}")

    report = ScanReport(
        tool_version=__version__,
        roots=tuple(cfg.input_paths),
        descriptor_file=cfg.desc_path,
        search_paths=search_paths,
        executables=tuple(executables),
        phase_completed=cfg.max_phase,
        conservative=cfg.conservative if cfg.max_phase == 3 else False,
        warnings=tuple(sorted(warnings)),
        ev1=p1.ev1,
        ev2=ev2,
        ev3=ev3,
        all_paths_mode=cfg.all_paths,
    )
    return report, callgraphs


def run_scan(cfg: CliConfig) -> int:
    """Run the pipeline, write the report, return the exit code."""
    report, callgraphs = run_pipeline(cfg)

    if cfg.dump_callgraph is not None:
        graphs = callgraphs.known_graphs() if callgraphs is not None else []
        with open(cfg.dump_callgraph, "w", encoding="utf-8") as fh:
            for graph in graphs:
                fh.write(to_dot(graph))

    payload = render_json(report) if cfg.format == "json" else render_text(report)
    if cfg.output is None or cfg.output == "-":
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()
    else:
        with open(cfg.output, "wb") as fh:
            fh.write(payload)
    return 1 if report.flagged() else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qvscan",
        description="Scan ELF executables for reachable quantum-vulnerable crypto APIs.",
    )
    parser.add_argument(
        "--input", "-i", action="append", default=[], metavar="PATH",
        help="executable file or directory to scan (repeatable)")
    parser.add_argument(
        "--descs", required=True, metavar="FILE",
        help="crypto-library descriptor JSON file")
    parser.add_argument(
        "--phase", type=int, default=3, choices=(1, 2, 3),
        help="deepest analysis tier to run (default: 3)")
    parser.add_argument(
        "--conservative", action="store_true",
        help="report trace-less candidates as needs-review instead of clearing them")
    parser.add_argument(
        "--search-path", action="append", default=[], metavar="DIR",
        help="library search directory (repeatable; default: input directories)")
    parser.add_argument(
        "--all-paths", nargs="?", const=100, default=None, type=int, metavar="CUTOFF",
        help="report all simple dependency paths, up to CUTOFF per pair (default cutoff: 100)")
    parser.add_argument(
        "--output", "-o", default=None, metavar="FILE",
        help="write the report here instead of stdout")
    parser.add_argument(
        "--format", default="json", choices=("json", "text"),
        help="report format (default: json)")
    parser.add_argument(
        "--jobs", type=int, default=1, metavar="N",
        help="worker threads for parsing and trace analysis (default: 1)")
    parser.add_argument(
        "--dump-callgraph", default=None, metavar="FILE",
        help="also write every constructed callgraph as DOT text to FILE")
    return parser


def config_from_args(args: argparse.Namespace) -> CliConfig:
    return CliConfig(
        input_paths=tuple(args.input),
        desc_path=args.descs,
        max_phase=args.phase,
        conservative=args.conservative,
        search_paths=tuple(args.search_path),
        all_paths=args.all_paths is not None,
        all_paths_cutoff=args.all_paths if args.all_paths is not None else 100,
        output=args.output,
        format=args.format,
        jobs=args.jobs,
        dump_callgraph=args.dump_callgraph,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run_scan(config_from_args(args))
    except ConfigError as exc:
        print(f"qvscan: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
