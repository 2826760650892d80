from __future__ import annotations

import pytest

from qvscan.depgraph import (
    Ev1Entry,
    FileDepGraph,
    ParseCache,
    PathPolicy,
    evidence_paths,
    find_crypto_libs,
    gen_sw_dep_graph,
    phase1,
    prune_to_crypto_reachable,
    shortest_path,
    simple_paths,
)
from qvscan.descriptors import load_descriptors


@pytest.fixture(scope="module")
def descriptors(descriptor_file):
    return load_descriptors(descriptor_file)


def test_direct_app_graph_shape(by_name, resolution):
    graph = gen_sw_dep_graph([by_name("app_direct_rsa")], resolution)
    assert len(graph) == 2
    assert graph.edges() == [(by_name("app_direct_rsa"), by_name("libtoycrypto.so"))]


def test_indirect_app_graph_shape(by_name, resolution):
    graph = gen_sw_dep_graph([by_name("app_indirect_rsa")], resolution)
    assert graph.nodes() == sorted(
        [by_name("app_indirect_rsa"), by_name("libmid.so"), by_name("libtoycrypto.so")]
    )
    assert len(graph.edges()) == 2


def test_shared_dependency_is_one_node(by_name, resolution):
    graph = gen_sw_dep_graph(
        [by_name("app_direct_rsa"), by_name("app_direct_ecdsa")], resolution
    )
    toy = by_name("libtoycrypto.so")
    assert len(graph) == 3
    assert graph.predecessors(toy) == sorted(
        [by_name("app_direct_rsa"), by_name("app_direct_ecdsa")]
    )


def test_revisiting_known_node_adds_nothing(by_name, resolution):
    once = gen_sw_dep_graph([by_name("app_direct_rsa")], resolution)
    twice = gen_sw_dep_graph(
        [by_name("app_direct_rsa"), by_name("app_direct_rsa")], resolution
    )
    assert once.nodes() == twice.nodes()
    assert once.edges() == twice.edges()


def test_dependency_cycle_terminates(by_name, resolution):
    graph = gen_sw_dep_graph([by_name("app_cycle")], resolution)
    a, b = by_name("libcycle_a.so"), by_name("libcycle_b.so")
    assert (a, b) in graph.edges()
    assert (b, a) in graph.edges()


def test_unresolved_soname_is_warned_leaf(by_name, tmp_path):
    from qvscan.elf import ResolutionConfig

    empty = tmp_path / "empty"
    empty.mkdir()
    cfg = ResolutionConfig(search_paths=(str(empty),))
    graph = gen_sw_dep_graph([by_name("app_direct_rsa")], cfg)
    assert graph.unresolved() == {"libtoycrypto.so": (by_name("app_direct_rsa"),)}
    assert graph.successors(by_name("app_direct_rsa")) == ["libtoycrypto.so"]


def test_find_crypto_libs_flags_exactly_toy_library(by_name, resolution, descriptors):
    graph = gen_sw_dep_graph(
        [by_name("app_direct_rsa"), by_name("app_indirect_rsa")], resolution
    )
    assert find_crypto_libs(graph, descriptors) == [by_name("libtoycrypto.so")]
    assert graph.matched_descriptors(by_name("libtoycrypto.so")) == ("toycrypto",)


def test_find_crypto_libs_empty_descriptors(by_name, resolution):
    graph = gen_sw_dep_graph([by_name("app_direct_rsa")], resolution)
    assert find_crypto_libs(graph, []) == []


def test_descriptor_matches_both_installed_versions(by_name, resolution, descriptors):
    # Two installed versions of the library in one graph: both flagged.
    from qvscan.elf import parse_elf

    graph = gen_sw_dep_graph([by_name("app_direct_rsa")], resolution)
    graph.add_file(parse_elf(by_name("libtoycrypto_v2.so")))
    flagged = find_crypto_libs(graph, descriptors)
    assert flagged == sorted([by_name("libtoycrypto.so"), by_name("libtoycrypto_v2.so")])


def test_prune_keeps_only_crypto_reachable(by_name, resolution, descriptors):
    graph = gen_sw_dep_graph(
        [by_name("app_direct_rsa"), by_name("app_nocrypto"), by_name("app_cycle")],
        resolution,
    )
    crypto = find_crypto_libs(graph, descriptors)
    pruned = prune_to_crypto_reachable(graph, crypto)
    assert by_name("app_direct_rsa") in pruned
    assert by_name("app_nocrypto") not in pruned
    assert by_name("app_cycle") not in pruned
    assert by_name("libcycle_a.so") not in pruned


def test_phase1_direct_evidence(by_name, resolution, descriptors):
    result = phase1([by_name("app_direct_rsa")], descriptors, resolution)
    assert [e.path for e in result.ev1] == [
        (by_name("app_direct_rsa"), by_name("libtoycrypto.so"))
    ]
    assert result.crypto_libs == (by_name("libtoycrypto.so"),)


def test_phase1_indirect_evidence_chain(by_name, resolution, descriptors):
    result = phase1([by_name("app_indirect_rsa")], descriptors, resolution)
    assert [e.path for e in result.ev1] == [
        (by_name("app_indirect_rsa"), by_name("libmid.so"), by_name("libtoycrypto.so"))
    ]


def test_phase1_noncrypto_absent(by_name, resolution, descriptors):
    result = phase1(
        [by_name("app_nocrypto"), by_name("app_direct_rsa")], descriptors, resolution
    )
    assert all(e.executable != by_name("app_nocrypto") for e in result.ev1)
    assert by_name("app_nocrypto") not in result.graph


def test_phase1_no_file_level_false_negatives(bin_dir, fixtures, resolution, descriptors):
    execs = sorted(str(p) for p in bin_dir.iterdir())
    result = phase1(execs, descriptors, resolution)
    reported = {e.executable for e in result.ev1}
    for path, entry in fixtures.items():
        if entry["kind"] == "executable" and entry["qv"]:
            assert path in reported, path


def test_phase1_idempotent_on_survivors(bin_dir, resolution, descriptors):
    execs = sorted(str(p) for p in bin_dir.iterdir())
    first = phase1(execs, descriptors, resolution)
    survivors = sorted({e.executable for e in first.ev1})
    second = phase1(survivors, descriptors, resolution)
    assert [e.path for e in first.ev1] == [e.path for e in second.ev1]


def test_phase1_evidence_structure(bin_dir, resolution, descriptors):
    execs = sorted(str(p) for p in bin_dir.iterdir())
    result = phase1(execs, descriptors, resolution)
    edges = set(result.graph.edges())
    for entry in result.ev1:
        assert result.graph.is_crypto_lib(entry.crypto_lib)
        assert len(entry.path) >= 2
        for src, dst in zip(entry.path, entry.path[1:]):
            assert (src, dst) in edges


def test_ev1_entry_rejects_short_path():
    with pytest.raises(ValueError):
        Ev1Entry(("only-one",))


def build_diamond() -> FileDepGraph:
    graph = FileDepGraph()
    for node in "abcd":
        graph.add_unresolved(node)
    for src, dst in [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]:
        graph.add_edge(src, dst)
    return graph


def test_shortest_path_tie_breaks_lexicographically():
    graph = build_diamond()
    assert shortest_path(graph, "a", "d") == ("a", "b", "d")
    assert shortest_path(graph, "a", "a") == ("a",)
    assert shortest_path(graph, "d", "a") is None


def test_simple_paths_enumeration_and_cutoff():
    graph = build_diamond()
    assert simple_paths(graph, "a", "d", limit=10) == [("a", "b", "d"), ("a", "c", "d")]
    assert simple_paths(graph, "a", "d", limit=1) == [("a", "b", "d")]


def test_evidence_paths_all_simple_mode():
    graph = build_diamond()
    chains = list(evidence_paths(graph, "a", ["d"], PathPolicy(all_simple=True, cutoff=5)))
    assert chains == [("a", "b", "d"), ("a", "c", "d")]


def test_parse_cache_returns_same_object(by_name):
    cache = ParseCache()
    first = cache.parse(by_name("libmid.so"))
    assert cache.parse(by_name("libmid.so")) is first
