from __future__ import annotations

import shutil

import pytest

from qvscan.elf import (
    ElfParseError,
    ResolutionConfig,
    is_elf,
    parse_elf,
    resolve_dependency,
    strip_version,
)


def test_is_elf_accepts_fixture_executable(by_name):
    path = by_name("app_direct_rsa")
    # Independent oracle: inspect the leading magic bytes directly.
    with open(path, "rb") as fh:
        assert fh.read(4) == b"\x7fELF"
    assert is_elf(path)


def test_is_elf_rejects_empty_file(tmp_path):
    empty = tmp_path / "empty"
    empty.touch()
    assert not is_elf(empty)


def test_is_elf_rejects_text_file(corpus_dir):
    source = corpus_dir / "src" / "app_direct_rsa.c"
    with open(source, "rb") as fh:
        assert fh.read(4) != b"\x7fELF"
    assert not is_elf(source)


def test_is_elf_unreadable_path_is_false(tmp_path):
    assert not is_elf(tmp_path / "does-not-exist")


def test_needed_matches_manifest_link_lines(parsed, fixtures):
    for path, binary in parsed.items():
        assert list(binary.needed) == fixtures[path]["links"], path


def test_exported_symbols_match_manifest(parsed, fixtures):
    for path, binary in parsed.items():
        assert binary.exported_syms == set(fixtures[path]["exports"]), path


def test_imported_symbols_match_manifest(parsed, fixtures):
    for path, binary in parsed.items():
        assert binary.imported_syms == set(fixtures[path]["imports"]), path


def test_round_trip_linkage(parsed, fixtures, by_name):
    """caller.imported ∩ callee.exported equals the manifest's call set."""
    for path, entry in fixtures.items():
        caller = parsed[path]
        by_target: dict[str, set[str]] = {}
        for target, symbol in entry["calls"]:
            by_target.setdefault(target, set()).add(symbol)
        for target, symbols in by_target.items():
            callee = parsed[by_name(target)]
            assert caller.imported_syms & callee.exported_syms == symbols, (path, target)


def test_static_fixture_has_no_dynamic_surface(parsed, by_name):
    binary = parsed[by_name("app_static")]
    assert binary.needed == ()
    assert binary.imported_syms == frozenset()
    assert binary.kind == "executable"


def test_kind_classification(parsed, fixtures):
    for path, binary in parsed.items():
        assert binary.kind == fixtures[path]["kind"], path


def test_parsing_is_pure(by_name):
    path = by_name("libmid.so")
    assert parse_elf(path) == parse_elf(path)


def test_exports_and_imports_disjoint(parsed):
    for path, binary in parsed.items():
        assert not (binary.exported_syms & binary.imported_syms), path


def test_plt_map_values_are_imports(parsed):
    for path, binary in parsed.items():
        for name in binary.plt_map.values():
            assert name in binary.imported_syms, path


def test_plt_map_covers_called_imports(parsed, by_name):
    # Every symbol libmid calls goes through a stub that must resolve by name.
    libmid = parsed[by_name("libmid.so")]
    assert set(libmid.plt_map.values()) == set(libmid.imported_syms)


def test_func_syms_lie_in_code_sections(parsed):
    for path, binary in parsed.items():
        ranges = [(s.addr, s.addr + len(s.data)) for s in binary.code_sections]
        for sym in binary.func_syms:
            assert any(lo <= sym.addr < hi for lo, hi in ranges), (path, sym)


def test_func_syms_unique_and_sorted_by_address(parsed):
    for binary in parsed.values():
        addrs = [sym.addr for sym in binary.func_syms]
        assert addrs == sorted(addrs)
        assert len(addrs) == len(set(addrs))


def test_stripped_twin_keeps_dynamic_symbols_only(parsed, by_name):
    plain = parsed[by_name("app_direct_rsa")]
    stripped = parsed[by_name("app_direct_rsa_stripped")]
    assert stripped.imported_syms == plain.imported_syms
    assert any(sym.name == "main" for sym in plain.func_syms)
    assert all(sym.name != "main" for sym in stripped.func_syms)


def test_runpath_recorded(parsed, by_name):
    binary = parsed[by_name("app_runpath_rsa")]
    assert binary.runpath == ("$ORIGIN/../lib",)


def test_parse_error_names_offending_structure(tmp_path):
    bogus = tmp_path / "bogus"
    bogus.write_bytes(b"\x7fELF" + bytes(80))
    with pytest.raises(ElfParseError) as excinfo:
        parse_elf(bogus)
    assert excinfo.value.structure


def test_parse_rejects_wrong_class(tmp_path):
    bogus = tmp_path / "elf32"
    bogus.write_bytes(b"\x7fELF\x01\x01" + bytes(100))
    assert not is_elf(bogus)
    with pytest.raises(ElfParseError):
        parse_elf(bogus)


def test_strip_version_suffix():
    assert strip_version("RSA_sign@OPENSSL_1_1_0") == "RSA_sign"
    assert strip_version("plain_name") == "plain_name"


def test_resolve_dependency_in_search_path(resolution, lib_dir):
    found = resolve_dependency("libtoycrypto.so", resolution)
    assert found == str((lib_dir / "libtoycrypto.so").resolve())


def test_resolve_dependency_not_found(resolution):
    assert resolve_dependency("libnonexistent.so", resolution) is None


def test_resolve_dependency_rejects_empty_soname(resolution):
    with pytest.raises(ValueError):
        resolve_dependency("", resolution)


def test_resolve_dependency_earlier_directory_wins(tmp_path, lib_dir):
    first = tmp_path / "first"
    second = tmp_path / "second"
    first.mkdir()
    second.mkdir()
    for directory in (first, second):
        shutil.copy(lib_dir / "libtoycrypto.so", directory / "libtoycrypto.so")
    cfg = ResolutionConfig(search_paths=(str(first), str(second)))
    assert resolve_dependency("libtoycrypto.so", cfg) == str(first / "libtoycrypto.so")
    cfg = ResolutionConfig(search_paths=(str(second), str(first)))
    assert resolve_dependency("libtoycrypto.so", cfg) == str(second / "libtoycrypto.so")


def test_resolve_dependency_follows_runpath(parsed, by_name, tmp_path):
    origin = parsed[by_name("app_runpath_rsa")]
    decoy = tmp_path / "decoy"
    decoy.mkdir()
    cfg = ResolutionConfig(search_paths=(str(decoy),), follow_runpath=True)
    found = resolve_dependency("libtoycrypto.so", cfg, origin=origin)
    assert found is not None and found.endswith("lib/libtoycrypto.so")
    cfg = ResolutionConfig(search_paths=(str(decoy),), follow_runpath=False)
    assert resolve_dependency("libtoycrypto.so", cfg, origin=origin) is None


def test_resolution_config_requires_search_paths():
    with pytest.raises(ValueError):
        ResolutionConfig(search_paths=())


def test_symlinked_library_canonicalizes(tmp_path, lib_dir):
    alias_dir = tmp_path / "aliases"
    alias_dir.mkdir()
    target = (lib_dir / "libtoycrypto.so").resolve()
    (alias_dir / "libtoycrypto.so").symlink_to(target)
    cfg = ResolutionConfig(search_paths=(str(alias_dir),))
    assert resolve_dependency("libtoycrypto.so", cfg) == str(target)
