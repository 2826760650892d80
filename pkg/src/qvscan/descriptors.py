"""Crypto-library descriptors: named sets of quantum-vulnerable API symbols.

A descriptor identifies one crypto library purely by the QV functions it
exports (e.g. RSA/EC signing, DH derivation entry points). An analyst
writes these as JSON; matching a library file is a set test against its
exported dynamic symbols.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass


class DescriptorError(Exception):
    """Invalid descriptor file content."""


@dataclass(frozen=True)
class CryptoLibDescriptor:
    """One crypto library's identity: its quantum-vulnerable API surface.

    ``min_match_ratio`` stays at 1.0 for the exact subset rule; lowering it
    tolerates builds that drop some of the listed APIs.
    """

    name: str
    qv_apis: frozenset[str]
    min_match_ratio: float = 1.0

    def __post_init__(self) -> None:
        if not self.name:
            raise DescriptorError("descriptor name must be non-empty")
        if not self.qv_apis:
            raise DescriptorError(f"descriptor {self.name!r}: qv_apis must be non-empty")
        if not 0.0 < self.min_match_ratio <= 1.0:
            raise DescriptorError(
                f"descriptor {self.name!r}: min_match_ratio must be in (0, 1]"
            )


def matches(descriptor: CryptoLibDescriptor, exported: frozenset[str] | set[str]) -> bool:
    """True when enough of the descriptor's QV APIs appear in ``exported``.

    At the default ratio of 1.0 this is exactly ``qv_apis ⊆ exported``.
    Monotone in ``exported``: growing the export set never turns a match
    into a miss.
    """
    needed = len(descriptor.qv_apis) * descriptor.min_match_ratio
    return len(descriptor.qv_apis & exported) >= needed


def _load_one(raw: object, index: int) -> CryptoLibDescriptor:
    if not isinstance(raw, dict):
        raise DescriptorError(f"descriptor #{index}: expected an object, got {type(raw).__name__}")
    unknown = set(raw) - {"name", "qv_apis", "min_match_ratio"}
    if unknown:
        raise DescriptorError(f"descriptor #{index}: unknown keys {sorted(unknown)}")
    name = raw.get("name")
    apis = raw.get("qv_apis")
    if not isinstance(name, str):
        raise DescriptorError(f"descriptor #{index}: name must be a string")
    if not isinstance(apis, list) or not all(isinstance(a, str) for a in apis):
        raise DescriptorError(f"descriptor {name!r}: qv_apis must be a list of strings")
    ratio = raw.get("min_match_ratio", 1.0)
    if not isinstance(ratio, (int, float)) or isinstance(ratio, bool):
        raise DescriptorError(f"descriptor {name!r}: min_match_ratio must be a number")
    return CryptoLibDescriptor(name=name, qv_apis=frozenset(apis), min_match_ratio=float(ratio))


def load_descriptors(path: str | os.PathLike[str]) -> list[CryptoLibDescriptor]:
    """Load descriptors from a JSON file (top-level array; a single object is
    accepted and treated as a one-element array).

    Raises:
        DescriptorError: malformed JSON, empty qv_apis, bad ratio, or
            duplicate descriptor names within the file.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DescriptorError(f"cannot read descriptor file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DescriptorError(f"malformed JSON in {path}: {exc}") from exc

    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        raise DescriptorError(f"{path}: top level must be an array of descriptors")

    descriptors = [_load_one(raw, i) for i, raw in enumerate(payload)]
    seen: set[str] = set()
    for descriptor in descriptors:
        if descriptor.name in seen:
            raise DescriptorError(f"{path}: duplicate descriptor name {descriptor.name!r}")
        seen.add(descriptor.name)
    return descriptors
