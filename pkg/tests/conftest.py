from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from qvscan.elf import BinaryFile, ResolutionConfig, parse_elf

# The committed corpus is the default; QVSCAN_CORPUS_DIR lets the corpus
# rebuild check point this same suite at freshly built binaries.
_DEFAULT_CORPUS = Path(__file__).resolve().parent.parent / "corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    root = Path(os.environ.get("QVSCAN_CORPUS_DIR", _DEFAULT_CORPUS)).resolve()
    if not (root / "manifest.json").is_file():
        pytest.fail(f"corpus manifest not found under {root}")
    return root


@pytest.fixture(scope="session")
def manifest(corpus_dir: Path) -> dict:
    with open(corpus_dir / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def fixtures(manifest: dict, corpus_dir: Path) -> dict[str, dict]:
    """Manifest entries keyed by canonical absolute fixture path."""
    out = {}
    for relpath, entry in manifest["fixtures"].items():
        out[str((corpus_dir / relpath).resolve())] = entry
    return out


@pytest.fixture(scope="session")
def lib_dir(corpus_dir: Path, manifest: dict) -> Path:
    return corpus_dir / manifest["lib_dir"]


@pytest.fixture(scope="session")
def bin_dir(corpus_dir: Path, manifest: dict) -> Path:
    return corpus_dir / manifest["bin_dir"]


@pytest.fixture(scope="session")
def descriptor_file(corpus_dir: Path, manifest: dict) -> Path:
    return corpus_dir / manifest["descriptor_file"]


@pytest.fixture(scope="session")
def parsed(fixtures: dict[str, dict]) -> dict[str, BinaryFile]:
    """Every corpus fixture parsed once, keyed like ``fixtures``."""
    return {path: parse_elf(path) for path in fixtures}


@pytest.fixture(scope="session")
def resolution(lib_dir: Path) -> ResolutionConfig:
    return ResolutionConfig(search_paths=(str(lib_dir),))


def fixture_path(corpus_dir: Path, manifest: dict, name: str) -> str:
    """Canonical path of a fixture by bare name."""
    for relpath, entry in manifest["fixtures"].items():
        if entry["name"] == name:
            return str((corpus_dir / relpath).resolve())
    raise KeyError(name)


@pytest.fixture(scope="session")
def by_name(corpus_dir: Path, manifest: dict):
    def lookup(name: str) -> str:
        return fixture_path(corpus_dir, manifest, name)

    return lookup
