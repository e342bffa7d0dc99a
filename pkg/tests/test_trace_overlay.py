import copy

import networkx as nx
import pytest

from baseline_pnr import route, signal_opins
from errors import ValidationError
from fabric_model import NodeKind, Occupancy, ResourceMask, build_rrg, spare_mask
from trace_overlay import (ConnectivityReport, OverlayForest, OverlayParams, _evict_conflicts, _Negotiator,
                           apply_to_mask, build_trace_overlay, report_for, verify_forest)

from conftest import CORRIDOR_ARCH


def _spare_graph(rrg, opin):
    """Switches from opin over routing tracks into trace-buffer pins."""
    channels = (NodeKind.CHANX, NodeKind.CHANY)
    graph = nx.DiGraph()
    for node in range(rrg.node_count):
        if node != opin and rrg.kinds[node] not in channels:
            continue
        for nxt in rrg.out_edges[node]:
            if rrg.kinds[nxt] in channels or rrg.kinds[nxt] == NodeKind.TB_IPIN:
                graph.add_edge(node, nxt)
    return graph


def _nearest_trace_input(rrg, graph, opin):
    lengths = nx.single_source_shortest_path_length(graph, opin)
    return min((lengths[t], t) for t in rrg.trace_inputs() if t in lengths)


def test_forest_passes_the_checker(compiled, forest):
    assert verify_forest(compiled.rrg, compiled.mask, forest) == []


def test_trees_root_at_trace_inputs_and_use_spare_nodes(compiled, forest):
    trace_inputs = set(compiled.rrg.trace_inputs())
    assert forest.trees
    for root, tree in forest.trees.items():
        assert root in trace_inputs
        assert tree.parent[root] == -1
    assert all(compiled.mask.is_free(n) for n in forest.nodes())


def test_report_matches_the_forest(compiled, overlay):
    forest, report = overlay
    recount = report_for(forest)
    assert report.fraction_connected == pytest.approx(recount.fraction_connected)
    assert report.reach == recount.reach
    assert 0.0 < report.fraction_connected <= 1.0
    assert set(report.reach) == set(compiled.opins)
    assert all(0 <= reach <= 2 for reach in report.reach.values())


def test_signals_reach_distinct_trees(forest):
    for signal, roots in forest.signal_trees().items():
        assert len(roots) == len(set(roots))


def test_overlay_is_deterministic(compiled, forest):
    again, _ = build_trace_overlay(compiled.rrg, compiled.mask, compiled.opins,
                                   compiled.rrg.trace_inputs(), OverlayParams(fanout_target=2), 1)
    assert again.to_dict() == forest.to_dict()
    assert OverlayForest.from_dict(forest.to_dict()) == forest


def test_no_trace_inputs_leaves_every_signal_unreachable(compiled):
    forest, report = build_trace_overlay(compiled.rrg, compiled.mask, compiled.opins, [])
    assert not forest.trees
    assert report.fraction_connected == 0.0
    assert sorted(report.unreachable) == sorted(compiled.opins)


def test_fully_claimed_fabric_connects_nothing(compiled):
    mask = compiled.mask.copy()
    mask.mark(range(len(mask)), Occupancy.USER)
    forest, report = build_trace_overlay(compiled.rrg, mask, compiled.opins, compiled.rrg.trace_inputs())
    assert report.fraction_connected == 0.0
    assert report.unconnected == list(compiled.opins)


def test_apply_to_mask_claims_forest_nodes(compiled, forest):
    marked = apply_to_mask(compiled.mask, forest)
    assert marked.count(Occupancy.OVERLAY_TRACE) == len(forest.nodes())
    assert compiled.mask.count(Occupancy.OVERLAY_TRACE) == 0


def test_checker_flags_user_nodes(compiled, forest):
    broken = copy.deepcopy(forest)
    root = sorted(broken.trees)[0]
    user_node = next(n for n in compiled.mask.nodes_with(Occupancy.USER)
                     if compiled.rrg.kinds[n] == NodeKind.CHANX)
    broken.trees[root].parent[user_node] = root
    problems = verify_forest(compiled.rrg, compiled.mask, broken)
    assert any(f"node {user_node} is USER" in p for p in problems)


def test_checker_flags_trees_that_share_nodes(compiled, forest):
    broken = copy.deepcopy(forest)
    assert len(broken.trees) >= 2
    first, second = sorted(broken.trees)[:2]
    shared = next(n for n in broken.trees[first].parent if n != first)
    broken.trees[second].parent[shared] = second
    problems = verify_forest(compiled.rrg, compiled.mask, broken)
    assert any(f"node {shared} is in trees {first} and {second}" in p for p in problems)


def test_checker_flags_leaves_outside_the_tree(compiled, forest):
    broken = copy.deepcopy(forest)
    root = sorted(broken.trees)[0]
    signal = next(iter(broken.trees[root].leaves))
    broken.trees[root].leaves[signal] = -5
    problems = verify_forest(compiled.rrg, compiled.mask, broken)
    assert any(f"leaf {signal} enters at -5 outside the tree" in p for p in problems)


def test_report_dict_leaves_out_timing_by_default():
    report = ConnectivityReport(0.5, {'a': 1, 'b': 0}, ['b'], build_time=1.25)
    assert 'build_time' not in report.to_dict()
    assert report.to_dict(include_timing=True)['build_time'] == 1.25
    assert ConnectivityReport.from_dict(report.to_dict()).reach == {'a': 1, 'b': 0}


@pytest.mark.parametrize("params", [
    OverlayParams(fanout_target=0),
    OverlayParams(width_margin=-0.1),
    OverlayParams(share_cost=1.0),
])
def test_invalid_overlay_params(compiled, params):
    with pytest.raises(ValidationError):
        build_trace_overlay(compiled.rrg, compiled.mask, compiled.opins, compiled.rrg.trace_inputs(), params)


def test_single_signal_takes_a_shortest_path():
    rrg = build_rrg(CORRIDOR_ARCH)
    opin = rrg.node(NodeKind.OPIN, 1, 1, 0)
    hops, trace_input = _nearest_trace_input(rrg, _spare_graph(rrg, opin), opin)

    forest, report = build_trace_overlay(rrg, ResourceMask(rrg.node_count), {'a': opin}, [trace_input],
                                         OverlayParams(fanout_target=1))

    assert report.fraction_connected == 1.0
    tree = forest.trees[trace_input]
    path = tree.path_to_root(tree.leaves['a'])
    assert path[-1] == trace_input
    assert len(path) == hops
    assert set(tree.parent) == set(path)


def test_signals_sharing_one_corridor_join_one_tree():
    rrg = build_rrg(CORRIDOR_ARCH)
    first, second = rrg.node(NodeKind.OPIN, 1, 1, 0), rrg.node(NodeKind.OPIN, 1, 1, 1)
    graph = _spare_graph(rrg, first)
    _, trace_input = _nearest_trace_input(rrg, graph, first)
    corridor = nx.shortest_path(graph, first, trace_input)[1:]
    mask = ResourceMask(rrg.node_count)
    mask.mark((n for n in range(rrg.node_count) if n not in corridor), Occupancy.USER)

    forest, report = build_trace_overlay(rrg, mask, {'a': first, 'b': second}, rrg.trace_inputs(),
                                         OverlayParams(fanout_target=1))

    assert list(forest.trees) == [trace_input]
    assert sorted(forest.trees[trace_input].leaves) == ['a', 'b']
    assert forest.signal_trees() == {'a': [trace_input], 'b': [trace_input]}
    assert report.fraction_connected == 1.0
    assert verify_forest(rrg, mask, forest) == []


def test_more_tracks_never_lower_connectivity(compiled):
    fractions = []
    for width in range(compiled.w_min, compiled.w_min + 10, 2):
        rrg = build_rrg(compiled.arch.with_width(width))
        result = route(compiled.netlist, compiled.placement, rrg, 1)
        assert result.success
        _, report = build_trace_overlay(rrg, spare_mask(rrg, result.routing),
                                        signal_opins(compiled.netlist, compiled.placement, rrg),
                                        rrg.trace_inputs(), OverlayParams(fanout_target=2), 1)
        fractions.append(report.fraction_connected)
    assert fractions == sorted(fractions)


def test_unresolved_conflicts_go_to_the_lowest_signal_id():
    neg = _Negotiator(None, None, [], OverlayParams())
    neg.claim((1, 0), [10, 11, 12, 100])
    neg.claim((0, 0), [20, 12, 200])
    neg.claim((2, 0), [30, 100])

    assert _evict_conflicts(neg) == 1
    assert sorted(neg.paths) == [(0, 0), (2, 0)]
    assert neg.conflicted_nodes() == []
