import random

import networkx as nx
import pytest

from bench_harness import brute_force_matching_size, random_bipartite
from debug_config import (BipartiteConnectivity, DebugConfig, HopcroftKarp, Selection, check_config,
                          emit_mux_config, fold_to_bipartite, has_augmenting_path, observability_profile,
                          select_signals, simulate_propagation)
from errors import ForestCorruptionError, UnknownSignalError
from fabric_model import NodeKind, build_rrg
from trace_overlay import OverlayForest, OverlayTree

from conftest import CORRIDOR_ARCH


def test_hopcroft_karp_small_cases():
    assert HopcroftKarp({'a': [1, 2], 'b': [1], 'c': [2]}).run() in ({'b': 1, 'c': 2}, {'a': 1, 'c': 2},
                                                                     {'a': 2, 'b': 1})
    assert len(HopcroftKarp({'a': [1], 'b': [1], 'c': [1]}).run()) == 1
    assert HopcroftKarp({'a': [], 'b': []}).run() == {}
    # Needs an augmenting path of length three
    assert len(HopcroftKarp({'a': [1, 2], 'b': [1]}).run()) == 2


def test_hopcroft_karp_matches_brute_force():
    rng = random.Random(11)
    for _ in range(150):
        adjacency = random_bipartite(rng, max_side=9)
        matching = HopcroftKarp(adjacency).run()
        assert len(matching) == brute_force_matching_size(adjacency)
        assert len(set(matching.values())) == len(matching)
        assert all(right in adjacency[left] for left, right in matching.items())


def test_select_signals_reports_surplus_requests():
    bip = BipartiteConnectivity({'a': [10], 'b': [10], 'c': [11]}, ['a', 'b', 'c', 'd'])
    selection = select_signals(bip, ['a', 'b', 'c', 'd'])

    assert len(selection.matching) == 2
    assert selection.matching['c'] == 11
    assert 'd' in selection.unmatched
    assert len(selection.unmatched) == 2
    assert not has_augmenting_path(bip, ['a', 'b', 'c', 'd'], selection.matching)


def test_select_signals_ignores_duplicates_and_keeps_request_order():
    bip = BipartiteConnectivity({'a': [1], 'b': [2]}, ['a', 'b'])
    selection = select_signals(bip, ['b', 'a', 'b'])
    assert list(selection.matching) == ['b', 'a']
    assert selection.unmatched == []


def test_unknown_signals_are_all_named():
    bip = BipartiteConnectivity({'a': [1]}, ['a'])
    with pytest.raises(UnknownSignalError) as excinfo:
        select_signals(bip, ['zeta', 'a', 'alpha'])
    assert excinfo.value.signals == ['alpha', 'zeta']


def test_augmenting_path_detected_for_a_non_maximum_matching():
    bip = BipartiteConnectivity({'a': [1, 2], 'b': [1]}, ['a', 'b'])
    assert has_augmenting_path(bip, ['a', 'b'], {'a': 1})
    assert not has_augmenting_path(bip, ['a', 'b'], {'a': 2, 'b': 1})


def test_fold_keeps_isolated_signals(forest):
    bip = fold_to_bipartite(forest)
    assert bip.signals == list(forest.opins)
    for signal, roots in bip.adjacency.items():
        assert all(signal in forest.trees[root].leaves for root in roots)
    assert set(bip.trace_inputs) == set(forest.trees)


def test_emitted_config_propagates_every_matched_signal(compiled, forest):
    bip = fold_to_bipartite(forest)
    requested = [s for s in bip.signals if bip.adjacency.get(s)]
    selection = select_signals(bip, requested)
    config = emit_mux_config(forest, selection)

    assert check_config(compiled.rrg, config, compiled.opins) == []
    arrivals = simulate_propagation(compiled.rrg, config, compiled.opins).arrivals
    assert {root: signal for signal, root in config.matching.items()} == arrivals
    assert not has_augmenting_path(bip, requested, config.matching)


def test_config_is_deterministic(forest):
    bip = fold_to_bipartite(forest)
    requested = bip.signals[::2]
    first = emit_mux_config(forest, select_signals(bip, requested)).to_dict()
    second = emit_mux_config(forest, select_signals(bip, requested)).to_dict()
    assert first == second
    assert DebugConfig.from_dict(first).to_dict() == first


def test_check_config_catches_swapped_trace_inputs(compiled, forest):
    bip = fold_to_bipartite(forest)
    requested = [s for s in bip.signals if bip.adjacency.get(s)]
    config = emit_mux_config(forest, select_signals(bip, requested))
    assert len(config.matching) >= 2
    a, b = sorted(config.matching)[:2]
    config.matching[a], config.matching[b] = config.matching[b], config.matching[a]
    assert check_config(compiled.rrg, config, compiled.opins)


def test_emit_rejects_a_signal_outside_its_tree(forest):
    root = sorted(forest.trees)[0]
    outsider = next(s for s in forest.opins if s not in forest.trees[root].leaves)
    with pytest.raises(ForestCorruptionError):
        emit_mux_config(forest, Selection({outsider: root}, []))


def test_observability_profile_bounds(forest):
    bip = fold_to_bipartite(forest)
    profile = observability_profile(bip, [1, 2, 4, len(bip.signals) + 1], 20, 3)

    assert len(bip.signals) + 1 not in profile
    assert all(0.0 <= value <= 1.0 for value in profile.values())
    assert profile == observability_profile(bip, [1, 2, 4, len(bip.signals) + 1], 20, 3)


def test_observability_of_a_private_forest_is_full():
    bip = BipartiteConnectivity({f"s{i}": [i] for i in range(6)}, [f"s{i}" for i in range(6)])
    assert observability_profile(bip, [1, 3, 6], 10, 1) == {1: 1.0, 3: 1.0, 6: 1.0}


def test_requesting_more_signals_never_shrinks_the_matching(forest):
    bip = fold_to_bipartite(forest)
    rng = random.Random(5)
    for _ in range(50):
        requested = rng.sample(bip.signals, rng.randint(1, len(bip.signals) - 1))
        extra = rng.choice([s for s in bip.signals if s not in requested])
        before = select_signals(bip, requested).matching
        after = select_signals(bip, requested + [extra]).matching
        assert len(after) >= len(before)


def test_empty_selection_sets_no_selects(forest):
    config = emit_mux_config(forest, Selection({}, []))
    assert config.mux_selects == {}
    assert config.matching == {}


def test_three_node_path_takes_three_selects():
    rrg = build_rrg(CORRIDOR_ARCH)
    opin = rrg.node(NodeKind.OPIN, 1, 1, 0)
    graph = rrg.to_networkx()
    root = min(rrg.trace_inputs(), key=lambda t: (nx.shortest_path_length(graph, opin, t), t))
    path = nx.shortest_path(graph, opin, root)[1:]
    parent = dict(zip(path, path[1:]))
    parent[root] = -1
    forest = OverlayForest({root: OverlayTree(root, parent, {'a': path[0]})}, {'a': opin})

    config = emit_mux_config(forest, Selection({'a': root}, []))

    assert len(path) == 3
    assert config.mux_selects == {path[0]: opin, path[1]: path[0], root: path[1]}
    assert simulate_propagation(rrg, config, {'a': opin}).arrivals == {root: 'a'}
    assert check_config(rrg, config, {'a': opin}) == []
