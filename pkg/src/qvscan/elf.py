"""Minimal ELF64 reader exposing the static facts the scan pipeline needs.

Parses little-endian 64-bit ELF files with :mod:`struct` only: direct
dependencies (DT_NEEDED), dynamic import/export surfaces, function symbols,
executable section bytes, and the PLT-stub-to-import mapping used to name
cross-library calls. Nothing is executed and no loader state is consulted;
parsing the same bytes always yields the same :class:`BinaryFile`.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

ELF_MAGIC = b"\x7fELF"

ELFCLASS64 = 2
ELFDATA2LSB = 1

ET_EXEC = 2
ET_DYN = 3

EM_X86_64 = 62

SHT_PROGBITS = 1
SHT_SYMTAB = 2
SHT_RELA = 4
SHT_DYNAMIC = 6
SHT_DYNSYM = 11

SHF_EXECINSTR = 0x4

PT_INTERP = 3

STT_FUNC = 2
STT_GNU_IFUNC = 10

STB_LOCAL = 0
STB_GLOBAL = 1
STB_WEAK = 2

SHN_UNDEF = 0

DT_NEEDED = 1
DT_SONAME = 14
DT_RPATH = 15
DT_RUNPATH = 29
DT_FLAGS_1 = 0x6FFFFFFB
DF_1_PIE = 0x08000000

R_X86_64_GLOB_DAT = 6
R_X86_64_JUMP_SLOT = 7

# Stub-bearing sections; each entry is a short trampoline jumping through a
# GOT slot that a JUMP_SLOT/GLOB_DAT relocation ties to an imported symbol.
_PLT_SECTION_NAMES = (".plt", ".plt.sec", ".plt.got", ".plt.bnd")

_ENDBR64 = b"\xf3\x0f\x1e\xfa"


class ElfParseError(Exception):
    """Malformed or unsupported ELF structure, naming the offending part."""

    def __init__(self, path: str, structure: str, detail: str = ""):
        self.path = path
        self.structure = structure
        message = f"{path}: bad {structure}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class FuncSym(NamedTuple):
    name: str
    addr: int
    size: int


class CodeSection(NamedTuple):
    name: str
    addr: int
    data: bytes


@dataclass(frozen=True)
class ResolutionConfig:
    """How sonames are turned into concrete files.

    Lookup order is the depending file's rpath then runpath entries (when
    ``follow_runpath`` is set, with ``$ORIGIN`` expanded), then
    ``search_paths`` in the given order. No loader cache is consulted.
    """

    search_paths: tuple[str, ...]
    follow_runpath: bool = True
    strip_symbol_versions: bool = True

    def __post_init__(self) -> None:
        if not self.search_paths:
            raise ValueError("search_paths must not be empty")


@dataclass(frozen=True)
class BinaryFile:
    """Immutable static facts extracted from one ELF file."""

    path: str
    kind: str  # "executable" | "shared-object"
    machine: int
    entry_point: int
    needed: tuple[str, ...]
    soname: str | None
    rpath: tuple[str, ...]
    runpath: tuple[str, ...]
    exported_syms: frozenset[str]
    imported_syms: frozenset[str]
    func_syms: tuple[FuncSym, ...]
    code_sections: tuple[CodeSection, ...]
    plt_map: dict[int, str] = field(repr=False)

    def code_at(self, addr: int, length: int) -> bytes:
        """Bytes at a virtual address, clipped to the containing code section."""
        for section in self.code_sections:
            if section.addr <= addr < section.addr + len(section.data):
                start = addr - section.addr
                return section.data[start:start + length]
        return b""


def is_elf(path: str | os.PathLike[str]) -> bool:
    """True iff the file starts with the ELF magic and is 64-bit little-endian.

    I/O errors are treated as "not an ELF" so that directory scans never
    abort on an unreadable entry; callers surface the skip as a warning.
    """
    try:
        with open(path, "rb") as fh:
            ident = fh.read(6)
    except OSError:
        return False
    return (
        len(ident) == 6
        and ident[:4] == ELF_MAGIC
        and ident[4] == ELFCLASS64
        and ident[5] == ELFDATA2LSB
    )


def strip_version(name: str) -> str:
    """Drop an ``@``-version suffix, so ``RSA_sign@OPENSSL_1_1`` matches descriptors."""
    at = name.find("@")
    return name if at < 0 else name[:at]


class _Section(NamedTuple):
    name: str
    sh_type: int
    flags: int
    addr: int
    offset: int
    size: int
    link: int
    entsize: int


class _Symbol(NamedTuple):
    name: str
    value: int
    size: int
    info: int
    shndx: int

    @property
    def sym_type(self) -> int:
        return self.info & 0xF

    @property
    def bind(self) -> int:
        return self.info >> 4


def _read_cstr(data: bytes, offset: int) -> str:
    if offset < 0 or offset >= len(data):
        return ""
    end = data.find(b"\x00", offset)
    if end < 0:
        end = len(data)
    return data[offset:end].decode("utf-8", errors="replace")


class _Reader:
    """One-shot parser over a fully loaded ELF image."""

    def __init__(self, path: str, data: bytes):
        self.path = path
        self.data = data

    def fail(self, structure: str, detail: str = "") -> ElfParseError:
        return ElfParseError(self.path, structure, detail)

    def parse(self, strip_versions: bool) -> BinaryFile:
        data = self.data
        if len(data) < 64 or data[:4] != ELF_MAGIC:
            raise self.fail("header", "missing ELF magic")
        if data[4] != ELFCLASS64 or data[5] != ELFDATA2LSB:
            raise self.fail("header", "only 64-bit little-endian ELF is supported")

        (e_type, e_machine, _ver, e_entry, e_phoff, e_shoff, _flags, _ehsize,
         e_phentsize, e_phnum, e_shentsize, e_shnum, e_shstrndx) = struct.unpack_from(
            "<HHIQQQIHHHHHH", data, 16)

        if e_shoff == 0 or e_shnum == 0:
            raise self.fail("section table", "absent")

        sections = self._sections(e_shoff, e_shentsize, e_shnum, e_shstrndx)
        has_interp = self._has_interp(e_phoff, e_phentsize, e_phnum)

        dynamic = self._dynamic_entries(sections)
        dynstr = self._linked_strtab(sections, SHT_DYNAMIC)
        needed = tuple(_read_cstr(dynstr, v) for t, v in dynamic if t == DT_NEEDED)
        soname = next((_read_cstr(dynstr, v) for t, v in dynamic if t == DT_SONAME), None)
        rpath = self._path_list(dynstr, dynamic, DT_RPATH)
        runpath = self._path_list(dynstr, dynamic, DT_RUNPATH)
        flags_1 = next((v for t, v in dynamic if t == DT_FLAGS_1), 0)

        if e_type == ET_EXEC or (e_type == ET_DYN and (has_interp or flags_1 & DF_1_PIE)):
            kind = "executable"
        else:
            kind = "shared-object"

        dyn_syms = self._symbols(sections, SHT_DYNSYM)
        static_syms = self._symbols(sections, SHT_SYMTAB)

        def canon(name: str) -> str:
            return strip_version(name) if strip_versions else name

        exported = set()
        imported = set()
        for sym in dyn_syms:
            if not sym.name:
                continue
            if sym.shndx == SHN_UNDEF:
                imported.add(canon(sym.name))
            elif sym.sym_type in (STT_FUNC, STT_GNU_IFUNC) and sym.bind != STB_LOCAL:
                exported.add(canon(sym.name))
        imported -= exported  # a name defined here is never an import

        code_sections = tuple(
            CodeSection(s.name, s.addr, bytes(data[s.offset:s.offset + s.size]))
            for s in sections
            if s.flags & SHF_EXECINSTR and s.sh_type == SHT_PROGBITS
            and s.offset + s.size <= len(data)
        )

        func_syms = self._function_symbols(dyn_syms, static_syms, code_sections, canon)
        got_relocs = self._got_relocations(sections, dyn_syms, canon)
        plt_map = self._plt_map(code_sections, got_relocs, imported)

        return BinaryFile(
            path=self.path,
            kind=kind,
            machine=e_machine,
            entry_point=e_entry,
            needed=needed,
            soname=soname,
            rpath=rpath,
            runpath=runpath,
            exported_syms=frozenset(exported),
            imported_syms=frozenset(imported),
            func_syms=func_syms,
            code_sections=code_sections,
            plt_map=plt_map,
        )

    # -- raw table parsing ------------------------------------------------

    def _sections(self, shoff: int, entsize: int, num: int, strndx: int) -> list[_Section]:
        data = self.data
        raw = []
        for i in range(num):
            off = shoff + i * entsize
            if off + 64 > len(data):
                raise self.fail("section table", f"entry {i} out of bounds")
            (sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size,
             sh_link, _info, _align, sh_entsize) = struct.unpack_from("<IIQQQQIIQQ", data, off)
            raw.append((sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size,
                        sh_link, sh_entsize))
        if strndx >= len(raw):
            raise self.fail("section table", "bad string table index")
        str_off, str_size = raw[strndx][4], raw[strndx][5]
        if str_off + str_size > len(data):
            raise self.fail("section name table", "out of bounds")
        shstr = data[str_off:str_off + str_size]
        return [
            _Section(_read_cstr(shstr, n), t, f, a, o, s, l, e)
            for (n, t, f, a, o, s, l, e) in raw
        ]

    def _has_interp(self, phoff: int, entsize: int, num: int) -> bool:
        data = self.data
        for i in range(num):
            off = phoff + i * entsize
            if off + 56 > len(data):
                raise self.fail("program table", f"entry {i} out of bounds")
            p_type = struct.unpack_from("<I", data, off)[0]
            if p_type == PT_INTERP:
                return True
        return False

    def _section_bytes(self, section: _Section) -> bytes:
        end = section.offset + section.size
        if end > len(self.data):
            raise self.fail(f"section {section.name}", "data out of bounds")
        return self.data[section.offset:end]

    def _linked_strtab(self, sections: list[_Section], owner_type: int) -> bytes:
        for section in sections:
            if section.sh_type == owner_type and section.link < len(sections):
                return self._section_bytes(sections[section.link])
        return b""

    def _dynamic_entries(self, sections: list[_Section]) -> list[tuple[int, int]]:
        for section in sections:
            if section.sh_type != SHT_DYNAMIC:
                continue
            blob = self._section_bytes(section)
            entries = []
            for off in range(0, len(blob) - 15, 16):
                tag, value = struct.unpack_from("<qQ", blob, off)
                if tag == 0:  # DT_NULL
                    break
                entries.append((tag, value))
            return entries
        return []

    def _path_list(self, dynstr: bytes, dynamic: list[tuple[int, int]], tag: int) -> tuple[str, ...]:
        for t, v in dynamic:
            if t == tag:
                return tuple(p for p in _read_cstr(dynstr, v).split(":") if p)
        return ()

    def _symbols(self, sections: list[_Section], table_type: int) -> list[_Symbol]:
        out: list[_Symbol] = []
        for section in sections:
            if section.sh_type != table_type or section.entsize == 0:
                continue
            strtab = b""
            if section.link < len(sections):
                strtab = self._section_bytes(sections[section.link])
            blob = self._section_bytes(section)
            for off in range(0, len(blob) - 23, int(section.entsize)):
                st_name, st_info, _other, st_shndx, st_value, st_size = struct.unpack_from(
                    "<IBBHQQ", blob, off)
                out.append(_Symbol(_read_cstr(strtab, st_name), st_value, st_size,
                                   st_info, st_shndx))
        return out

    # -- derived views -----------------------------------------------------

    def _function_symbols(self, dyn_syms, static_syms, code_sections, canon) -> tuple[FuncSym, ...]:
        """Defined function symbols from both tables, deduplicated by address."""
        ranges = [(s.addr, s.addr + len(s.data)) for s in code_sections]

        def in_code(addr: int) -> bool:
            return any(lo <= addr < hi for lo, hi in ranges)

        best: dict[int, tuple[int, str, int]] = {}
        for sym in list(dyn_syms) + list(static_syms):
            if sym.sym_type not in (STT_FUNC, STT_GNU_IFUNC):
                continue
            if sym.shndx == SHN_UNDEF or not sym.name or not in_code(sym.value):
                continue
            # Prefer global over weak over local names; ties break on the
            # lexicographically smaller name for determinism.
            rank = {STB_GLOBAL: 0, STB_WEAK: 1}.get(sym.bind, 2)
            candidate = (rank, canon(sym.name), sym.size)
            current = best.get(sym.value)
            if current is None or candidate[:2] < current[:2]:
                best[sym.value] = candidate
        return tuple(
            FuncSym(name, addr, size)
            for addr, (_rank, name, size) in sorted(best.items())
        )

    def _got_relocations(self, sections, dyn_syms, canon) -> dict[int, str]:
        """GOT slot address -> imported symbol name, from RELA tables."""
        out: dict[int, str] = {}
        for section in sections:
            if section.sh_type != SHT_RELA or section.entsize == 0:
                continue
            blob = self._section_bytes(section)
            for off in range(0, len(blob) - 23, int(section.entsize)):
                r_offset, r_info = struct.unpack_from("<QQ", blob, off)
                r_type = r_info & 0xFFFFFFFF
                sym_index = r_info >> 32
                if r_type not in (R_X86_64_JUMP_SLOT, R_X86_64_GLOB_DAT):
                    continue
                if 0 < sym_index < len(dyn_syms):
                    sym = dyn_syms[sym_index]
                    if sym.name and sym.shndx == SHN_UNDEF:
                        out[r_offset] = canon(sym.name)
        return out

    def _plt_map(self, code_sections, got_relocs, imported) -> dict[int, str]:
        """Map PLT stub addresses to the imported symbols they trampoline to.

        A stub is recognized as an indirect ``jmp *disp32(%rip)`` (ff 25),
        optionally preceded by endbr64 and/or a bnd prefix, whose GOT target
        carries a JUMP_SLOT or GLOB_DAT relocation. A false byte match cannot
        slip through: its computed GOT slot would carry no relocation.
        """
        out: dict[int, str] = {}
        for section in code_sections:
            if section.name not in _PLT_SECTION_NAMES:
                continue
            data = section.data
            pos = 0
            while pos + 6 <= len(data):
                stub_start = pos
                cursor = pos
                if data[cursor:cursor + 4] == _ENDBR64:
                    cursor += 4
                if cursor < len(data) and data[cursor] == 0xF2:  # bnd
                    cursor += 1
                if data[cursor:cursor + 2] == b"\xff\x25" and cursor + 6 <= len(data):
                    disp = struct.unpack_from("<i", data, cursor + 2)[0]
                    got = section.addr + cursor + 6 + disp
                    name = got_relocs.get(got)
                    if name is not None and name in imported:
                        out[section.addr + stub_start] = name
                        pos = cursor + 6
                        continue
                pos += 1
        return dict(sorted(out.items()))


def parse_elf(path: str | os.PathLike[str], *, strip_symbol_versions: bool = True) -> BinaryFile:
    """Parse one ELF file into an immutable :class:`BinaryFile`.

    Raises:
        ElfParseError: when the file is not a supported ELF or a section,
            program, symbol, or relocation table is malformed.
    """
    real = os.path.realpath(os.fspath(path))
    try:
        with open(real, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ElfParseError(real, "file", str(exc)) from exc
    return _Reader(real, data).parse(strip_symbol_versions)


def _expand_origin(entry: str, origin_dir: str) -> str:
    return entry.replace("${ORIGIN}", origin_dir).replace("$ORIGIN", origin_dir)


def resolve_dependency(
    soname: str,
    cfg: ResolutionConfig,
    origin: BinaryFile | None = None,
) -> str | None:
    """Locate the file a soname refers to, or None when nowhere to be found.

    Scans, in order: the depending file's DT_RPATH and DT_RUNPATH entries
    (only when ``cfg.follow_runpath`` and an origin is given), then
    ``cfg.search_paths``. The first existing regular file wins; the result
    is canonicalized so aliased installs map to a single graph node.
    """
    if not soname:
        raise ValueError("soname must be non-empty")
    directories: list[str] = []
    if cfg.follow_runpath and origin is not None:
        origin_dir = os.path.dirname(origin.path)
        for entry in list(origin.rpath) + list(origin.runpath):
            directories.append(_expand_origin(entry, origin_dir))
    directories.extend(cfg.search_paths)
    for directory in directories:
        candidate = os.path.join(directory, soname)
        if os.path.isfile(candidate):
            return os.path.realpath(candidate)
    return None
