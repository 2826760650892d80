#!/usr/bin/env python3
"""Build the synthetic ELF fixture corpus and regenerate its manifest.

Every fixture is described in specs.json; this script compiles them and
writes manifest.json derived purely from those specs, so the manifest is
byte-identical across rebuilds even when the binaries are not.

Compilation flags (kept hermetic and analysis-friendly):
  * -nostdlib with a local start.S so fixtures depend only on each other;
    the dependency graph in the manifest is then exact.
  * -fno-omit-frame-pointer to preserve frame pointers.
  * -fno-stack-protector so no stack-guard imports appear.
  * -Wl,--build-id=none for stabler bytes across identical toolchains.
  * No -pie/-no-pie is forced; the corpus is valid under either default.

Usage: python3 build.py [--out DIR] [--cc CC]
"""

import argparse
import json
import os
import shutil
import subprocess
import sys

HERE = os.path.abspath(os.path.dirname(__file__))
SRC = os.path.join(HERE, "src")

CFLAGS = ["-Wall", "-fno-stack-protector", "-fno-omit-frame-pointer"]
LDFLAGS = ["-nostdlib", "-Wl,--build-id=none"]


def run(cmd):
    print("  " + " ".join(cmd))
    subprocess.run(cmd, check=True)


def build_library(cc, spec, lib_dir, *, link_libs=None):
    """Compile one shared library; link_libs overrides spec['links']."""
    out = os.path.join(lib_dir, spec["name"])
    cmd = [cc, spec.get("opt", "-O1"), *CFLAGS, "-fPIC", "-shared",
           "-Wl,-soname," + spec["soname"],
           "-o", out, os.path.join(SRC, spec["source"]), *LDFLAGS,
           "-L" + lib_dir]
    for soname in (spec["links"] if link_libs is None else link_libs):
        cmd.append("-l:" + soname)
    run(cmd)
    return out


def build_executable(cc, spec, bin_dir, lib_dir):
    out = os.path.join(bin_dir, spec["name"])
    cmd = [cc, spec.get("opt", "-O1"), *CFLAGS, "-o", out,
           os.path.join(SRC, spec["source"])]
    if spec.get("static"):
        cmd += ["-static", *LDFLAGS]
    else:
        cmd += [os.path.join(SRC, "start.S"), *LDFLAGS, "-L" + lib_dir,
                "-Wl,-rpath-link," + lib_dir]
        for soname in spec["links"]:
            cmd.append("-l:" + soname)
    if spec.get("runpath"):
        cmd.append("-Wl,--enable-new-dtags,-rpath," + spec["runpath"])
    run(cmd)
    return out


def check_spec_consistency(specs):
    """Every declared call must name a symbol exported by a linked fixture."""
    exports = {lib["name"]: set(lib["exports"]) for lib in specs["libraries"]}
    problems = []
    for spec in specs["libraries"] + specs["executables"]:
        linked = set(spec["links"])
        for target, symbol in spec.get("calls", []):
            if target not in linked:
                problems.append(f"{spec['name']}: calls into unlinked {target}")
            elif symbol not in exports.get(target, set()):
                problems.append(f"{spec['name']}: {target} does not export {symbol}")
    if problems:
        raise SystemExit("spec inconsistency:\n  " + "\n  ".join(problems))


def manifest_entry(spec, kind):
    imports = sorted({symbol for _, symbol in spec.get("calls", [])})
    return {
        "name": spec["name"],
        "kind": kind,
        "qv": spec.get("qv"),
        "dependency_kind": spec.get("dependency_kind"),
        "behavior_class": spec.get("behavior_class"),
        "grid": spec.get("grid", False),
        "links": spec["links"],
        "calls": [list(pair) for pair in spec.get("calls", [])],
        "imports": imports,
        "exports": sorted(spec.get("exports", [])),
        "expected_edges": [list(pair) for pair in spec.get("expected_edges", [])],
        "forbidden_paths": [list(pair) for pair in spec.get("forbidden_paths", [])],
        "qv_path": spec.get("qv_path"),
        "stripped": spec.get("stripped", False),
        "twin_of": spec.get("twin_of"),
        "notes": spec.get("notes", ""),
    }


def write_manifest(specs, out_dir):
    fixtures = {}
    for lib in specs["libraries"]:
        fixtures["lib/" + lib["name"]] = manifest_entry(lib, "shared-object")
    for app in specs["executables"]:
        fixtures["bin/" + app["name"]] = manifest_entry(app, "executable")
    manifest = {
        "schema": "corpus-manifest/1",
        "lib_dir": "lib",
        "bin_dir": "bin",
        "descriptor_file": "descriptors/toycrypto.json",
        "fixtures": fixtures,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=HERE, help="output directory (default: corpus root)")
    parser.add_argument("--cc", default=os.environ.get("CC", "cc"), help="C compiler")
    args = parser.parse_args(argv)

    if shutil.which(args.cc) is None:
        raise SystemExit(f"C compiler '{args.cc}' not found; corpus rebuild skipped")

    with open(os.path.join(HERE, "specs.json"), encoding="utf-8") as fh:
        specs = json.load(fh)
    check_spec_consistency(specs)

    out_dir = os.path.abspath(args.out)
    lib_dir = os.path.join(out_dir, "lib")
    bin_dir = os.path.join(out_dir, "bin")
    os.makedirs(lib_dir, exist_ok=True)
    os.makedirs(bin_dir, exist_ok=True)

    by_name = {lib["name"]: lib for lib in specs["libraries"]}
    print("libraries:")
    build_library(args.cc, by_name["libtoycrypto.so"], lib_dir)
    build_library(args.cc, by_name["libtoycrypto_v2.so"], lib_dir)
    # Mutually dependent pair: stage libcycle_b without its back-edge first,
    # then link libcycle_a against it and relink libcycle_b for real.
    build_library(args.cc, by_name["libcycle_b.so"], lib_dir, link_libs=[])
    build_library(args.cc, by_name["libcycle_a.so"], lib_dir)
    build_library(args.cc, by_name["libcycle_b.so"], lib_dir)
    build_library(args.cc, by_name["libmid.so"], lib_dir)

    print("executables:")
    twins = []
    for spec in specs["executables"]:
        if spec.get("twin_of"):
            twins.append(spec)
            continue
        build_executable(args.cc, spec, bin_dir, lib_dir)
    for spec in twins:
        source = os.path.join(bin_dir, spec["twin_of"])
        target = os.path.join(bin_dir, spec["name"])
        run(["objcopy", "--strip-all", source, target])

    path = write_manifest(specs, out_dir)
    print(f"manifest: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
