from __future__ import annotations

import json
import math

import pytest

from qvscan.apigraph import Ev2Entry
from qvscan.depgraph import Ev1Entry
from qvscan.evaluate import (
    EvaluationError,
    GroundTruthEntry,
    GroundTruthManifest,
    Metrics,
    evaluate,
    load_manifest,
    positives_at,
    render_table,
)
from qvscan.report import ScanReport
from qvscan.trace import NEEDS_REVIEW, NON_QV, QV_PROVEN, Phase3Verdict, StaticTrace


def synthetic_report(n_qv: int, n_safe: int, *, tnr2: float, conservative: bool = False) -> tuple[ScanReport, GroundTruthManifest]:
    """A hand-built report: phase 1 flags everything, phase 2 clears the
    ``tnr2`` fraction of the safe executables, phase 3 proves exactly the
    QV ones."""
    qv = [f"/bin/qv{i}" for i in range(n_qv)]
    safe = [f"/bin/safe{i}" for i in range(n_safe)]
    lib = "/lib/libcrypto.so"
    cleared_at_2 = safe[: int(round(tnr2 * n_safe))]
    kept_at_2 = [p for p in safe if p not in cleared_at_2]

    ev1 = tuple(Ev1Entry((p, lib)) for p in sorted(qv + safe))
    ev2 = tuple(Ev2Entry((p, lib), ("RSA_sign",)) for p in sorted(qv + kept_at_2))
    ev3 = []
    for p in sorted(qv):
        trace = StaticTrace(((p, "main"), (lib, "RSA_sign")))
        ev3.append(Phase3Verdict(p, QV_PROVEN, trace))
    for p in sorted(kept_at_2):
        if conservative:
            ev3.append(Phase3Verdict(p, NEEDS_REVIEW, Ev2Entry((p, lib), ("RSA_sign",))))
        else:
            ev3.append(Phase3Verdict(p, NON_QV, None))
    report = ScanReport(
        tool_version="0.1.0",
        roots=("/bin",),
        descriptor_file="d.json",
        search_paths=("/lib",),
        executables=tuple(sorted(qv + safe)),
        phase_completed=3,
        conservative=conservative,
        warnings=(),
        ev1=ev1,
        ev2=ev2,
        ev3=tuple(sorted(ev3, key=lambda v: v.executable)),
    )
    manifest = GroundTruthManifest(
        {p: GroundTruthEntry(qv=True, dependency_kind="direct") for p in qv}
        | {p: GroundTruthEntry(qv=False, dependency_kind="direct") for p in safe}
    )
    return report, manifest


def test_synthetic_scale_phase1_all_positive():
    # 24 QV / 16 non-QV: the file tier flags everything, so TPR is
    # perfect and TNR zero.
    report, manifest = synthetic_report(24, 16, tnr2=0.5)
    metrics = evaluate(report, manifest, phase=1)
    assert (metrics.tp, metrics.fn) == (24, 0)
    assert (metrics.tn, metrics.fp) == (0, 16)
    assert metrics.tpr == 1.0
    assert metrics.tnr == 0.0


def test_synthetic_scale_phase2_half_tnr():
    report, manifest = synthetic_report(24, 16, tnr2=0.5)
    metrics = evaluate(report, manifest, phase=2)
    assert metrics.tpr == 1.0
    assert metrics.tnr == 0.5
    assert (metrics.tn, metrics.fp) == (8, 8)


def test_synthetic_scale_phase3_perfect():
    report, manifest = synthetic_report(24, 16, tnr2=0.5)
    metrics = evaluate(report, manifest, phase=3)
    assert metrics.tpr == 1.0 and metrics.tnr == 1.0
    assert (metrics.tp, metrics.fp, metrics.tn, metrics.fn) == (24, 0, 16, 0)


def test_empty_report_vacuous_rates():
    report = ScanReport(
        tool_version="0.1.0", roots=("/bin",), descriptor_file="d.json",
        search_paths=("/lib",), executables=(), phase_completed=1,
        conservative=False, warnings=(), ev1=(),
    )
    metrics = evaluate(report, GroundTruthManifest({}), phase=1)
    assert (metrics.tp, metrics.fp, metrics.tn, metrics.fn) == (0, 0, 0, 0)
    assert metrics.tpr == 1.0 and metrics.tnr == 1.0
    assert metrics.workload_reduction == 1.0


def test_workload_reduction_formula_spot_checks():
    # 1 - flagged/total: 95 of 226 flagged leaves a 57.96% reduction,
    # 20 of 226 a 91.15% reduction.
    m95 = Metrics.from_positives(
        frozenset(f"p{i}" for i in range(95)),
        frozenset(f"p{i}" for i in range(95)),
        frozenset(f"p{i}" for i in range(226)),
    )
    assert math.isclose(m95.workload_reduction, 1 - 95 / 226)
    assert round(m95.workload_reduction * 100, 2) == 57.96
    m20 = Metrics.from_positives(
        frozenset(f"p{i}" for i in range(20)),
        frozenset(f"p{i}" for i in range(20)),
        frozenset(f"p{i}" for i in range(226)),
    )
    assert round(m20.workload_reduction * 100, 2) == 91.15


def test_conservative_counts_needs_review_as_positive_and_flagged():
    report, manifest = synthetic_report(4, 4, tnr2=0.0, conservative=True)
    normal = evaluate(report, manifest, phase=3, conservative=False)
    conservative = evaluate(report, manifest, phase=3, conservative=True)
    assert normal.flagged == 4
    assert conservative.flagged == 8
    assert conservative.tpr == 1.0
    assert conservative.workload_reduction < normal.workload_reduction


def test_monotone_positives_across_tiers():
    report, _ = synthetic_report(6, 4, tnr2=0.5, conservative=True)
    p3 = positives_at(report, 3, conservative=False)
    p3c = positives_at(report, 3, conservative=True)
    p2 = positives_at(report, 2)
    p1 = positives_at(report, 1)
    assert p3 <= p3c <= p2 <= p1


def test_missing_executable_is_structured_error():
    report, manifest = synthetic_report(2, 1, tnr2=0.0)
    incomplete = GroundTruthManifest(
        {p: e for p, e in manifest.entries.items() if p != "/bin/qv0"}
    )
    with pytest.raises(EvaluationError) as excinfo:
        evaluate(report, incomplete, phase=1)
    assert "/bin/qv0" in str(excinfo.value)


def test_phase_beyond_report_rejected():
    report, manifest = synthetic_report(1, 1, tnr2=0.0)
    object.__setattr__(report, "phase_completed", 2)
    object.__setattr__(report, "ev3", ())
    with pytest.raises(EvaluationError):
        evaluate(report, manifest, phase=3)


def test_conservative_eval_requires_conservative_report():
    report, manifest = synthetic_report(1, 1, tnr2=0.0, conservative=False)
    with pytest.raises(EvaluationError):
        evaluate(report, manifest, phase=3, conservative=True)


def test_load_manifest_corpus_shape(corpus_dir, fixtures):
    manifest = load_manifest(corpus_dir / "manifest.json")
    executables = {p for p, e in fixtures.items() if e["kind"] == "executable"}
    assert set(manifest.entries) == executables
    for path, entry in fixtures.items():
        if entry["kind"] == "executable":
            assert manifest.entries[path].qv == entry["qv"]


def test_load_manifest_plain_map(tmp_path):
    payload = {
        "bin/tool": {"qv": True, "dependency_kind": "direct", "notes": "x"},
    }
    path = tmp_path / "truth.json"
    path.write_text(json.dumps(payload))
    manifest = load_manifest(path)
    entry = manifest.entries[str(tmp_path / "bin" / "tool")]
    assert entry.qv is True
    assert entry.dependency_kind == "direct"


def test_bad_dependency_kind_rejected():
    with pytest.raises(EvaluationError):
        GroundTruthManifest({"/x": GroundTruthEntry(qv=True, dependency_kind="sideways")})


def test_render_table_is_aligned():
    report, manifest = synthetic_report(3, 2, tnr2=0.5)
    rows = [(f"P{k}", evaluate(report, manifest, phase=k)) for k in (1, 2, 3)]
    table = render_table(rows)
    lines = table.strip().splitlines()
    assert len(lines) == 4
    assert len({len(line) for line in lines}) <= 2  # header may differ by padding only


def test_eval_cli_end_to_end(bin_dir, lib_dir, descriptor_file, corpus_dir, tmp_path, capsys):
    from qvscan.cli import main as scan_main
    from qvscan.evaluate import main as eval_main

    out = tmp_path / "report.json"
    scan_main([
        "--input", str(bin_dir), "--descs", str(descriptor_file),
        "--search-path", str(lib_dir), "--conservative", "--output", str(out),
    ])
    code = eval_main([str(out), str(corpus_dir / "manifest.json"), "--format", "json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["P1"]["tpr"] == 1.0
    assert payload["P1+P2+P3"]["tpr"] < 1.0  # the function-pointer false negative
    assert payload["P1+P2+P3 (conservative)"]["tpr"] == 1.0
