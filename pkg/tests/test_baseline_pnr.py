import networkx as nx
import numpy as np
import pytest

from baseline_pnr import (PathFinderParams, PathFinderRouter, Placement, Routing, MinWidthResult, RouteNet,
                          check_placement, find_min_channel_width, linear_min_channel_width, place,
                          placement_cost, random_placement, route, route_nets, verify_routing)
from circuits import gen_synthetic, parse_netlist
from errors import CapacityError, ConfigurationError, ValidationError
from fabric_model import CHANNEL_KINDS, ArchSpec, NodeKind, arch_for_netlist, build_rrg

from conftest import SMALL_TEMPLATE

BUFFER_BLIF = """\
.model buffer
.inputs a
.outputs y
.names a y
1 1
.end
"""

GRID_2X2 = ArchSpec(grid_width=2, grid_height=2, channel_width_w=2, tb_column_period=0)


def _clb_net(rrg, signal, source, target):
    """Route problem from a BLE output of one CLB to any input of another."""
    tx, ty = target
    sinks = tuple(rrg.node(NodeKind.SINK, tx, ty, i) for i in range(rrg.arch.clb_inputs))
    return RouteNet(signal, rrg.node(NodeKind.SOURCE, *source), [(target, sinks)])


def _channel_paths(rrg, graph, net, cutoff):
    """Every simple track path a net can take, at most cutoff + 1 tracks long."""
    opin = rrg.out_edges[net.source][0]
    starts = [n for n in rrg.out_edges[opin] if n in graph]
    (tx, ty), _ = net.targets[0]
    ends = {n for n in graph if any(rrg.kinds[p] == NodeKind.IPIN and (rrg.xs[p], rrg.ys[p]) == (tx, ty)
                                    for p in rrg.out_edges[n])}
    paths = [[s] for s in starts if s in ends]
    for s in starts:
        for e in ends:
            if s != e:
                paths.extend(nx.all_simple_paths(graph, s, e, cutoff=cutoff))
    return sorted(paths, key=len)


def _min_disjoint_wirelength(choices):
    """Smallest total track count over one path per net with no shared track."""
    best = [float('inf')]

    def pick(i, used, total):
        if total >= best[0]:
            return
        if i == len(choices):
            best[0] = total
            return
        for path in choices[i]:
            if used.isdisjoint(path):
                pick(i + 1, used | set(path), total + len(path))

    pick(0, frozenset(), 0)
    return best[0]


def _track_graph(rrg):
    graph = nx.DiGraph()
    for node in range(rrg.node_count):
        if rrg.kinds[node] in CHANNEL_KINDS:
            graph.add_node(node)
            graph.add_edges_from((node, n) for n in rrg.out_edges[node] if rrg.kinds[n] in CHANNEL_KINDS)
    return graph


@pytest.fixture
def contested():
    """Two nets out of one CLB into another over exactly two disjoint track paths."""
    rrg = build_rrg(GRID_2X2)
    nets = [_clb_net(rrg, 'a', (1, 1, 0), (2, 2)), _clb_net(rrg, 'b', (1, 1, 1), (2, 2))]
    graph = _track_graph(rrg)
    short = _channel_paths(rrg, graph, nets[0], 3)[0]
    detour = _channel_paths(rrg, graph.subgraph(set(graph) - set(short)).copy(), nets[0], 5)[0]
    open_tracks = set(short) | set(detour)
    return rrg, nets, short, detour, [n for n in graph if n not in open_tracks]


def _router(rrg, params, closed):
    router = PathFinderRouter(rrg, params)
    router.blocked[closed] = True
    return router


def test_placement_is_legal_and_beats_random(compiled):
    netlist, arch = compiled.netlist, compiled.arch
    assert check_placement(netlist, arch, compiled.placement) == []
    start = random_placement(netlist, arch, 1)
    assert check_placement(netlist, arch, start) == []
    assert placement_cost(netlist, compiled.placement) <= placement_cost(netlist, start)


def test_placement_is_deterministic():
    netlist = gen_synthetic(5, 16, 0.65)
    arch = arch_for_netlist(netlist, SMALL_TEMPLATE)
    assert place(netlist, arch, 3) == place(netlist, arch, 3)


def test_placement_rejects_a_grid_that_is_too_small():
    netlist = gen_synthetic(5, 16, 0.65)
    with pytest.raises(CapacityError):
        place(netlist, ArchSpec(grid_width=1, grid_height=1, tb_column_period=0), 1)


def test_check_placement_reports_shared_slots(tiny_netlist):
    arch = ArchSpec(grid_width=1, grid_height=1, tb_column_period=0)
    placement = Placement({'a': (0, 1, 0), 'b': (0, 1, 0), 'y': (1, 1, 0), 'out:y': (2, 1, 0)})
    problems = check_placement(tiny_netlist, arch, placement)
    assert any("share slot" in p for p in problems)

    misplaced = Placement({'a': (0, 1, 0), 'b': (0, 1, 1), 'y': (0, 2, 0), 'out:y': (2, 1, 0)})
    assert any("non-BLE slot" in p for p in check_placement(tiny_netlist, arch, misplaced))


def test_routing_is_legal(compiled):
    assert verify_routing(compiled.rrg, compiled.netlist, compiled.placement, compiled.routing) == []
    expected = {p.signal for p in route_nets(compiled.netlist, compiled.placement, compiled.rrg)}
    assert set(compiled.routing.trees) == expected


def test_routing_is_deterministic(compiled):
    again = route(compiled.netlist, compiled.placement, compiled.rrg, 1)
    assert again.routing == compiled.routing


def test_verify_routing_detects_shared_nodes(compiled):
    trees = {signal: dict(tree) for signal, tree in compiled.routing.trees.items()}
    first, second = sorted(trees)[:2]
    stolen = next(n for n in trees[first] if compiled.rrg.kinds[n] in (NodeKind.CHANX, NodeKind.CHANY))
    trees[second][stolen] = trees[first][stolen]
    problems = verify_routing(compiled.rrg, compiled.netlist, compiled.placement,
                              Routing(trees, compiled.routing.channel_width))
    assert any(f"node {stolen} used by nets" in p for p in problems)


def test_routing_never_uses_trace_buffer_pins(compiled):
    used = compiled.routing.used_nodes()
    assert not any(compiled.rrg.kinds[n] == NodeKind.TB_IPIN for n in used)


def test_min_channel_width_is_tight(compiled):
    assert compiled.w_min % 2 == 0
    if compiled.w_min > 2:
        narrow = build_rrg(compiled.arch.with_width(compiled.w_min - 2))
        assert not route(compiled.netlist, compiled.placement, narrow, 1).success


def test_binary_and_linear_width_search_agree(compiled):
    arch = compiled.arch
    binary = find_min_channel_width(compiled.netlist, compiled.placement, arch, 1, w_hi=32)
    assert binary.w_min == compiled.w_min
    assert binary.trials[binary.w_min] is True
    assert linear_min_channel_width(compiled.netlist, compiled.placement, arch, 1, w_hi=32) == binary.w_min


def test_width_search_gives_up_at_w_hi(compiled):
    if compiled.w_min <= 2:
        pytest.skip("circuit routes at the narrowest width")
    with pytest.raises(ConfigurationError):
        find_min_channel_width(compiled.netlist, compiled.placement, compiled.arch, 1,
                               PathFinderParams(max_iters=5), w_hi=2)


def test_artifact_forms_reject_garbage(compiled):
    assert Placement.from_dict(compiled.placement.to_dict()) == compiled.placement
    assert Routing.from_dict(compiled.routing.to_dict()) == compiled.routing
    with pytest.raises(ValidationError):
        Placement.from_dict({'blocks': {'a': ['x', 1, 0]}})
    with pytest.raises(ValidationError):
        Routing.from_dict({'nets': {'a': [[1]]}})
    with pytest.raises(ValidationError):
        MinWidthResult.from_dict({'trials': {}})


def test_router_matches_the_exhaustive_wirelength_minimum():
    rrg = build_rrg(GRID_2X2)
    nets = [_clb_net(rrg, 'a', (1, 1, 0), (2, 2)),
            _clb_net(rrg, 'b', (2, 1, 0), (1, 2)),
            _clb_net(rrg, 'c', (1, 2, 0), (2, 1))]
    graph = _track_graph(rrg)
    optimum = _min_disjoint_wirelength([_channel_paths(rrg, graph, net, 3) for net in nets])

    success, trees, overused, _ = PathFinderRouter(rrg, PathFinderParams()).route_all(nets)

    assert success and overused == []
    assert Routing(trees).wirelength(rrg) == optimum


def test_negotiation_clears_a_contested_track(contested):
    rrg, nets, short, detour, closed = contested

    # Without present-congestion pricing both nets pile onto the same tracks
    greedy = _router(rrg, PathFinderParams(max_iters=1, pres_fac_init=0.0), closed)
    success, _, overused, _ = greedy.route_all(nets)
    assert not success
    assert set(overused) & (set(short) | set(detour))

    router = _router(rrg, PathFinderParams(), closed)
    success, trees, overused, _ = router.route_all(nets)
    assert success and overused == []
    assert int(router.occ.max()) == 1
    assert not set(trees['a']) & set(trees['b'])


def test_history_cost_never_decreases(contested):
    rrg, nets, _, _, closed = contested
    snapshots = []

    class RecordingRouter(PathFinderRouter):
        def route_one(self, problem):
            snapshots.append(self.hist.copy())
            return super().route_one(problem)

    router = RecordingRouter(rrg, PathFinderParams(max_iters=8, pres_fac_init=0.0, stall_limit=0))
    router.blocked[closed] = True
    router.route_all(nets)
    snapshots.append(router.hist.copy())

    assert len(snapshots) > len(nets)
    assert snapshots[-1].max() > 0.0
    assert all(np.all(later >= earlier) for earlier, later in zip(snapshots, snapshots[1:]))


def test_single_net_routes_at_the_narrowest_width():
    netlist = parse_netlist(BUFFER_BLIF)
    arch = arch_for_netlist(netlist, SMALL_TEMPLATE)
    placement = place(netlist, arch, 1)
    assert find_min_channel_width(netlist, placement, arch, 1, w_hi=8).w_min == 2


def test_odd_w_hi_only_tries_even_widths(compiled):
    result = find_min_channel_width(compiled.netlist, compiled.placement, compiled.arch, 1,
                                    w_hi=compiled.w_min + 1)
    assert result.w_min == compiled.w_min
    assert all(width % 2 == 0 for width in result.trials)
    with pytest.raises(ConfigurationError):
        find_min_channel_width(compiled.netlist, compiled.placement, compiled.arch, 1, w_hi=1)
