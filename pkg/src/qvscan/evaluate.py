"""Score scan reports against a ground-truth manifest.

Positives at each tier are the executables still carrying evidence there
(for a conservative trace tier: proven plus needs-review). The harness
computes the confusion matrix, true positive/negative rates, and the
manual-workload-reduction fraction 1 - flagged/total, i.e. the share of
scanned executables an analyst never has to open by hand.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from qvscan.report import ScanReport, parse_report
from qvscan.trace import NEEDS_REVIEW, QV_PROVEN


class EvaluationError(Exception):
    """Report and manifest cannot be compared (gaps, phase mismatch)."""


@dataclass(frozen=True)
class GroundTruthEntry:
    qv: bool
    dependency_kind: str  # "direct" | "indirect" | "none"
    notes: str = ""


@dataclass(frozen=True)
class GroundTruthManifest:
    """Executable path -> ground truth, paths canonicalized."""

    entries: dict[str, GroundTruthEntry]

    def __post_init__(self) -> None:
        for path, entry in self.entries.items():
            if entry.dependency_kind not in ("direct", "indirect", "none"):
                raise EvaluationError(
                    f"{path}: dependency_kind must be direct/indirect/none")

    def __contains__(self, path: str) -> bool:
        return path in self.entries

    def qv_paths(self) -> frozenset[str]:
        return frozenset(p for p, e in self.entries.items() if e.qv)


def load_manifest(path: str | os.PathLike[str]) -> GroundTruthManifest:
    """Load ground truth from JSON.

    Accepts either a plain ``{path: {qv, dependency_kind, notes}}`` map or
    a corpus manifest with a ``fixtures`` section (executables only);
    relative paths resolve against the manifest file's directory.
    """
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    raw = payload.get("fixtures", payload) if isinstance(payload, dict) else None
    if not isinstance(raw, dict):
        raise EvaluationError(f"{path}: manifest must be a JSON object")
    entries = {}
    for key, value in raw.items():
        if not isinstance(value, dict):
            raise EvaluationError(f"{path}: entry {key!r} must be an object")
        if value.get("kind", "executable") != "executable":
            continue
        resolved = os.path.realpath(os.path.join(base, key))
        entries[resolved] = GroundTruthEntry(
            qv=bool(value["qv"]),
            dependency_kind=value.get("dependency_kind") or "none",
            notes=str(value.get("notes", "")),
        )
    return GroundTruthManifest(entries)


@dataclass(frozen=True)
class Metrics:
    """Confusion counts plus the analyst-facing aggregates."""

    tp: int
    fp: int
    tn: int
    fn: int
    tpr: float
    tnr: float
    flagged: int
    total: int
    workload_reduction: float

    @classmethod
    def from_positives(
        cls, positives: frozenset[str], qv: frozenset[str], universe: frozenset[str]
    ) -> "Metrics":
        non_qv = universe - qv
        tp = len(positives & qv)
        fp = len(positives & non_qv)
        fn = len(qv - positives)
        tn = len(non_qv - positives)
        tpr = tp / (tp + fn) if tp + fn else 1.0
        tnr = tn / (tn + fp) if tn + fp else 1.0
        flagged = len(positives)
        total = len(universe)
        reduction = 1.0 - flagged / total if total else 1.0
        return cls(tp, fp, tn, fn, tpr, tnr, flagged, total, reduction)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "tpr": self.tpr, "tnr": self.tnr,
            "flagged": self.flagged, "total": self.total,
            "workload_reduction": self.workload_reduction,
        }


def positives_at(report: ScanReport, phase: int, conservative: bool = False) -> frozenset[str]:
    """Executables the scan still considers positive after ``phase``."""
    if phase == 1:
        return frozenset(e.executable for e in report.ev1)
    if phase == 2:
        return frozenset(e.executable for e in report.ev2)
    wanted = {QV_PROVEN, NEEDS_REVIEW} if conservative else {QV_PROVEN}
    return frozenset(v.executable for v in report.ev3 if v.status in wanted)


def evaluate(
    report: ScanReport,
    manifest: GroundTruthManifest,
    phase: int,
    conservative: bool = False,
) -> Metrics:
    """Metrics for one tier of one report.

    Raises:
        EvaluationError: the report did not run ``phase``, a scanned
            executable is missing from the manifest, or a conservative
            evaluation is requested for a non-conservative trace run.
    """
    if phase not in (1, 2, 3):
        raise EvaluationError("phase must be 1, 2 or 3")
    if report.phase_completed < phase:
        raise EvaluationError(
            f"report completed phase {report.phase_completed}, cannot evaluate phase {phase}")
    if phase == 3 and conservative and not report.conservative:
        raise EvaluationError("conservative evaluation needs a conservative-mode report")
    missing = sorted(set(report.executables) - set(manifest.entries))
    if missing:
        raise EvaluationError(
            "scanned executables missing from the manifest: " + ", ".join(missing))
    universe = frozenset(report.executables)
    qv = manifest.qv_paths() & universe
    positives = positives_at(report, phase, conservative) & universe
    return Metrics.from_positives(positives, qv, universe)


def render_table(rows: list[tuple[str, Metrics]]) -> str:
    """Aligned text table, one row per evaluated tier."""
    headers = ("tier", "TP", "FP", "TN", "FN", "TPR", "TNR", "flagged", "reduction")
    body = [
        (
            label, str(m.tp), str(m.fp), str(m.tn), str(m.fn),
            f"{m.tpr:.2%}", f"{m.tnr:.2%}", f"{m.flagged}/{m.total}",
            f"{m.workload_reduction:.2%}",
        )
        for label, m in rows
    ]
    widths = [max(len(row[i]) for row in [headers, *body]) for i in range(len(headers))]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
        for row in [headers, *body]
    ]
    return "\n".join(lines) + "\n"


def _tiers(report: ScanReport, phase: int | None, conservative: bool) -> list[tuple[str, int, bool]]:
    if phase is not None:
        label = f"P1..P{phase}" if phase > 1 else "P1"
        return [(label + (" (conservative)" if conservative and phase == 3 else ""), phase, conservative)]
    out: list[tuple[str, int, bool]] = [("P1", 1, False)]
    if report.phase_completed >= 2:
        out.append(("P1+P2", 2, False))
    if report.phase_completed >= 3:
        out.append(("P1+P2+P3", 3, False))
        if report.conservative:
            out.append(("P1+P2+P3 (conservative)", 3, True))
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qvscan-eval",
        description="Score a qvscan JSON report against a ground-truth manifest.",
    )
    parser.add_argument("report", help="scan report JSON ('-' for stdin)")
    parser.add_argument("manifest", help="ground-truth manifest JSON")
    parser.add_argument("--phase", type=int, choices=(1, 2, 3), default=None,
                        help="evaluate one tier only (default: every completed tier)")
    parser.add_argument("--conservative", action="store_true",
                        help="count needs-review as positive at the trace tier")
    parser.add_argument("--format", choices=("json", "table"), default="table")
    args = parser.parse_args(argv)

    try:
        if args.report == "-":
            report = parse_report(sys.stdin.buffer.read())
        else:
            with open(args.report, "rb") as fh:
                report = parse_report(fh.read())
        manifest = load_manifest(args.manifest)
        rows = [
            (label, evaluate(report, manifest, tier_phase, tier_conservative))
            for label, tier_phase, tier_conservative in _tiers(report, args.phase, args.conservative)
        ]
    except (EvaluationError, OSError, json.JSONDecodeError) as exc:
        print(f"qvscan-eval: error: {exc}", file=sys.stderr)
        return 2

    if args.format == "json":
        payload = {label: metrics.as_dict() for label, metrics in rows}
        print(json.dumps(payload, indent=2))
    else:
        sys.stdout.write(render_table(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
