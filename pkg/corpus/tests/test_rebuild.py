"""Corpus rebuild checks: a fresh build must match the committed manifest.

Binary bytes may differ across toolchains; what must hold is the symbol
surface (exports/imports), the link structure (needed entries), and that
the scanner's full acceptance suite passes identically against the
rebuilt binaries. Requires a C toolchain; skipped without one.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

CORPUS = Path(__file__).resolve().parent.parent
REPO = CORPUS.parent

pytestmark = pytest.mark.skipif(
    shutil.which("cc") is None or shutil.which("objcopy") is None,
    reason="corpus rebuild needs a C toolchain",
)


@pytest.fixture(scope="module")
def rebuilt(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("corpus-rebuild")
    subprocess.run(
        [sys.executable, str(CORPUS / "build.py"), "--out", str(out)],
        check=True, capture_output=True,
    )
    # Descriptor file location is part of the corpus layout.
    shutil.copytree(CORPUS / "descriptors", out / "descriptors")
    return out


def load_manifest(root: Path) -> dict:
    with open(root / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def test_manifest_regenerates_identically(rebuilt):
    assert load_manifest(rebuilt) == load_manifest(CORPUS)


def test_rebuilt_symbol_surfaces_match_manifest(rebuilt):
    from qvscan.elf import parse_elf

    manifest = load_manifest(rebuilt)
    for relpath, entry in manifest["fixtures"].items():
        binary = parse_elf(rebuilt / relpath)
        assert binary.kind == entry["kind"], relpath
        assert list(binary.needed) == entry["links"], relpath
        assert binary.exported_syms == set(entry["exports"]), relpath
        assert binary.imported_syms == set(entry["imports"]), relpath


def test_rebuilt_call_linkage_matches_manifest(rebuilt):
    from qvscan.elf import parse_elf

    manifest = load_manifest(rebuilt)
    by_name = {
        entry["name"]: rebuilt / relpath
        for relpath, entry in manifest["fixtures"].items()
    }
    for relpath, entry in manifest["fixtures"].items():
        caller = parse_elf(rebuilt / relpath)
        wanted: dict[str, set[str]] = {}
        for target, symbol in entry["calls"]:
            wanted.setdefault(target, set()).add(symbol)
        for target, symbols in wanted.items():
            callee = parse_elf(by_name[target])
            assert caller.imported_syms & callee.exported_syms == symbols, (relpath, target)


def test_acceptance_suite_passes_against_rebuilt_corpus(rebuilt):
    result = subprocess.run(
        [sys.executable, "-m", "pytest", str(REPO / "tests" / "test_acceptance.py"), "-q"],
        env={"QVSCAN_CORPUS_DIR": str(rebuilt), "PATH": "/usr/bin:/bin", "HOME": "/tmp"},
        cwd=REPO, capture_output=True, text=True,
    )
    assert result.returncode == 0, result.stdout + result.stderr
    assert " passed" in result.stdout
