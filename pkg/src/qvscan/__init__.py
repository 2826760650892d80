"""qvscan: locate executables that can reach quantum-vulnerable crypto APIs.

The scanner works purely on static ELF features, in three tiers of
increasing precision:

1. file-level dependency paths from executables to crypto libraries,
2. API-level dependency paths carrying the imported QV symbol names,
3. static call traces from an executable's main down to a QV API call.

Each tier emits machine-readable evidence; later tiers only ever shrink
the candidate set.
"""

from qvscan.elf import BinaryFile, ResolutionConfig, is_elf, parse_elf, resolve_dependency
from qvscan.descriptors import CryptoLibDescriptor, load_descriptors, matches

__version__ = "0.1.0"

__all__ = [
    "BinaryFile",
    "CryptoLibDescriptor",
    "ResolutionConfig",
    "__version__",
    "is_elf",
    "load_descriptors",
    "matches",
    "parse_elf",
    "resolve_dependency",
]
