"""Evidence serialization: deterministic JSON and a text summary.

The JSON layout keeps the three evidence tiers under "EV_1", "EV_2" and
"EV_3". File-level entries are {"path": [...]}; API-level entries add
"QV_apis" (plus per-descriptor attribution); trace entries are
{"static-trace": [[file, function], ...]}, and a conservative fallback
appears in EV_3 in the API-level shape. Rendering is byte-stable: keys
have a fixed order, lists are sorted upstream, and no timestamps or
environment data leak in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from qvscan.apigraph import Ev2Entry
from qvscan.depgraph import Ev1Entry
from qvscan.trace import NEEDS_REVIEW, NON_QV, QV_PROVEN, Phase3Verdict, StaticTrace

SCHEMA_VERSION = "1"

# Final classification labels, phase-stamped in the summary.
QV_PROVEN_LABEL = "QV-proven"
QV_SUSPECTED_LABEL = "QV-suspected"
NEEDS_REVIEW_LABEL = "needs-review"
NOT_QV_LABEL = "not-QV"


@dataclass(frozen=True)
class ScanReport:
    """Everything one scan produced, ready for rendering."""

    tool_version: str
    roots: tuple[str, ...]
    descriptor_file: str
    search_paths: tuple[str, ...]
    executables: tuple[str, ...]
    phase_completed: int
    conservative: bool
    warnings: tuple[str, ...]
    ev1: tuple[Ev1Entry, ...]
    ev2: tuple[Ev2Entry, ...] = ()
    ev3: tuple[Phase3Verdict, ...] = ()
    all_paths_mode: bool = False

    def __post_init__(self) -> None:
        if self.phase_completed not in (1, 2, 3):
            raise ValueError("phase_completed must be 1, 2 or 3")
        if self.phase_completed < 2 and self.ev2:
            raise ValueError("API-level evidence requires phase 2")
        if self.phase_completed < 3 and self.ev3:
            raise ValueError("trace evidence requires phase 3")

    # -- derived views ------------------------------------------------------

    def classifications(self) -> dict[str, tuple[str, int]]:
        """Executable -> (label, phase that decided it)."""
        ev1_execs = {e.executable for e in self.ev1}
        ev2_execs = {e.executable for e in self.ev2}
        verdicts = {v.executable: v for v in self.ev3}
        out: dict[str, tuple[str, int]] = {}
        for path in self.executables:
            if self.phase_completed == 1:
                out[path] = (QV_SUSPECTED_LABEL, 1) if path in ev1_execs else (NOT_QV_LABEL, 1)
                continue
            if path not in ev1_execs:
                out[path] = (NOT_QV_LABEL, 1)
                continue
            if self.phase_completed == 2:
                out[path] = (QV_SUSPECTED_LABEL, 2) if path in ev2_execs else (NOT_QV_LABEL, 2)
                continue
            if path not in ev2_execs:
                out[path] = (NOT_QV_LABEL, 2)
                continue
            verdict = verdicts[path]
            if verdict.status == QV_PROVEN:
                out[path] = (QV_PROVEN_LABEL, 3)
            elif verdict.status == NEEDS_REVIEW:
                out[path] = (NEEDS_REVIEW_LABEL, 3)
            else:
                out[path] = (NOT_QV_LABEL, 3)
        return out

    def flagged(self) -> tuple[str, ...]:
        """Executables still positive at the completed phase."""
        positive = {QV_PROVEN_LABEL, QV_SUSPECTED_LABEL, NEEDS_REVIEW_LABEL}
        return tuple(
            path for path, (label, _) in sorted(self.classifications().items())
            if label in positive
        )


def _ev2_json(entry: Ev2Entry) -> dict:
    payload = {"path": list(entry.path), "QV_apis": list(entry.qv_apis)}
    if entry.per_descriptor:
        payload["descriptors"] = {name: list(apis) for name, apis in entry.per_descriptor}
    return payload


def _ev3_json(verdict: Phase3Verdict) -> dict:
    if verdict.status == QV_PROVEN:
        return {"static-trace": [[file, func] for file, func in verdict.evidence.steps]}
    return _ev2_json(verdict.evidence)


def _evidence_pointer(report: ScanReport, path: str) -> str | None:
    label, phase = report.classifications()[path]
    if label == NOT_QV_LABEL:
        return None
    if phase == 1 or (phase == 2 and label == QV_SUSPECTED_LABEL):
        tier, entries = ("EV_2", report.ev2) if phase == 2 else ("EV_1", report.ev1)
        for index, entry in enumerate(entries):
            if entry.executable == path:
                return f"{tier}[{index}]"
        return None
    rendered = [v for v in report.ev3 if v.status != NON_QV]
    for index, verdict in enumerate(rendered):
        if verdict.executable == path:
            return f"EV_3[{index}]"
    return None


def to_json_object(report: ScanReport) -> dict:
    """The exact object rendered by :func:`render_json`, key order fixed."""
    classifications = report.classifications()
    counts: dict[str, int] = {
        "executables": len(report.executables),
        "ev1_entries": len(report.ev1),
    }
    if report.phase_completed >= 2:
        counts["ev2_entries"] = len(report.ev2)
    if report.phase_completed >= 3:
        counts["ev3_entries"] = sum(1 for v in report.ev3 if v.status != NON_QV)
    for label, key in (
        (QV_PROVEN_LABEL, "qv_proven"),
        (QV_SUSPECTED_LABEL, "qv_suspected"),
        (NEEDS_REVIEW_LABEL, "needs_review"),
        (NOT_QV_LABEL, "not_qv"),
    ):
        counts[key] = sum(1 for lab, _ in classifications.values() if lab == label)

    payload: dict = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "qvscan", "version": report.tool_version},
        "inputs": {
            "roots": list(report.roots),
            "descriptor_file": report.descriptor_file,
            "search_paths": list(report.search_paths),
            "executables": list(report.executables),
        },
        "phase_completed": report.phase_completed,
        "conservative": report.conservative,
        "all_paths": report.all_paths_mode,
        "warnings": list(report.warnings),
        "EV_1": [{"path": list(e.path)} for e in report.ev1],
    }
    if report.phase_completed >= 2:
        payload["EV_2"] = [_ev2_json(e) for e in report.ev2]
    if report.phase_completed >= 3:
        payload["EV_3"] = [_ev3_json(v) for v in report.ev3 if v.status != NON_QV]
    payload["summary"] = {
        "classifications": {
            path: {
                "classification": label,
                "decided_at_phase": phase,
                "evidence": _evidence_pointer(report, path),
            }
            for path, (label, phase) in sorted(classifications.items())
        },
        "counts": counts,
    }
    return payload


def render_json(report: ScanReport) -> bytes:
    """Stable two-space-indented JSON; identical reports render identically."""
    text = json.dumps(to_json_object(report), indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def render_text(report: ScanReport) -> bytes:
    """One line per executable, then warnings, then a metrics footer."""
    classifications = report.classifications()
    lines = [
        f"qvscan report (schema {SCHEMA_VERSION}, tool {report.tool_version})",
        f"descriptors: {report.descriptor_file}",
        "mode: phase {}{}".format(
            report.phase_completed, " conservative" if report.conservative else ""
        ),
        "",
        "executables:",
    ]
    width = max((len(p) for p in report.executables), default=0)
    verdicts = {v.executable: v for v in report.ev3}
    for path in report.executables:
        label, phase = classifications[path]
        detail = ""
        if label == QV_PROVEN_LABEL:
            detail = f"  trace length {len(verdicts[path].evidence.steps)}"
        elif label == NOT_QV_LABEL:
            label = f"{label} (phase {phase})"
        pointer = _evidence_pointer(report, path)
        if pointer:
            detail += f"  -> {pointer}"
        lines.append(f"  {path.ljust(width)}  {label}{detail}")
    lines.append("")
    if report.warnings:
        lines.append("warnings:")
        lines.extend(f"  {w}" for w in report.warnings)
    else:
        lines.append("warnings: (none)")
    lines.append("")
    counts = to_json_object(report)["summary"]["counts"]
    lines.append("metrics:")
    width = max(len(k) for k in counts)
    lines.extend(f"  {key.ljust(width)} : {value}" for key, value in counts.items())
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_report(data: bytes) -> ScanReport:
    """Rebuild a report from its JSON rendering (evidence lists exactly)."""
    payload = json.loads(data.decode("utf-8"))
    ev1 = tuple(Ev1Entry(tuple(e["path"])) for e in payload.get("EV_1", ()))
    ev2 = tuple(_ev2_from_json(e) for e in payload.get("EV_2", ()))
    verdicts: list[Phase3Verdict] = []
    for entry in payload.get("EV_3", ()):
        if "static-trace" in entry:
            trace = StaticTrace(tuple((f, fn) for f, fn in entry["static-trace"]))
            verdicts.append(Phase3Verdict(trace.executable, QV_PROVEN, trace))
        else:
            fallback = _ev2_from_json(entry)
            verdicts.append(Phase3Verdict(fallback.executable, NEEDS_REVIEW, fallback))
    for path, row in payload.get("summary", {}).get("classifications", {}).items():
        if row["classification"] == NOT_QV_LABEL and row["decided_at_phase"] == 3:
            verdicts.append(Phase3Verdict(path, NON_QV, None))
    verdicts.sort(key=lambda v: v.executable)
    return ScanReport(
        tool_version=payload["tool"]["version"],
        roots=tuple(payload["inputs"]["roots"]),
        descriptor_file=payload["inputs"]["descriptor_file"],
        search_paths=tuple(payload["inputs"]["search_paths"]),
        executables=tuple(payload["inputs"]["executables"]),
        phase_completed=payload["phase_completed"],
        conservative=payload["conservative"],
        warnings=tuple(payload["warnings"]),
        ev1=ev1,
        ev2=ev2,
        ev3=tuple(verdicts),
        all_paths_mode=payload.get("all_paths", False),
    )


def _ev2_from_json(entry: dict) -> Ev2Entry:
    per_descriptor = tuple(
        (name, tuple(apis)) for name, apis in entry.get("descriptors", {}).items()
    )
    return Ev2Entry(tuple(entry["path"]), tuple(entry["QV_apis"]), per_descriptor)
