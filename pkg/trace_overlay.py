"""
Trace overlay construction for the FPGA Debug Overlay Toolkit.

Builds a forest of routing-multiplexer trees from the routing nodes the user
circuit left FREE. Every tree is rooted at a trace-buffer input and its leaves
are user signal OPINs, so any signal of a tree can later be forwarded to that
trace input by setting the tree's multiplexer selects.

Construction is a negotiated-congestion search. A connection runs from a
signal's OPIN to a trace input the signal does not reach yet. Nodes already
claimed by exactly one tree are cheap to join (multiplexer overuse, resolved
at debug time), while nodes claimed by different trees are in conflict and
priced by present and history congestion until the conflicts disappear.
"""

import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Set, Any

import networkx as nx

from common_utils import Stopwatch
from errors import ValidationError
from fabric_model import NodeKind, Occupancy, ResourceMask, RoutingResourceGraph

logger = logging.getLogger(__name__)

ConnKey = Tuple[int, int]


@dataclass(frozen=True)
class OverlayParams:
    """
    Trace overlay settings.

    Attributes:
        fanout_target: Distinct trace inputs each signal should reach
        width_margin: Fraction of extra tracks over w_min the overlay is built at
        max_iters: Negotiation iteration cap
        share_cost: Per-node cost of joining a tree the signal extends toward
        prune_patience: Drop a signal still in conflict after this many
            consecutive iterations (0 keeps every signal to the end)
        salvage: Retry under-served signals over leftover nodes after eviction
        pres_fac_init: Present-congestion factor of the first iteration
        pres_fac_mult: Growth of the present-congestion factor
        hist_fac: History increment per unit of conflict
    """
    fanout_target: int = 2
    width_margin: float = 0.3
    max_iters: int = 30
    share_cost: float = 0.05
    prune_patience: int = 0
    salvage: bool = True
    pres_fac_init: float = 0.5
    pres_fac_mult: float = 1.3
    hist_fac: float = 1.0

    def validate(self) -> 'OverlayParams':
        if self.fanout_target < 1:
            raise ValidationError("must be >= 1", 'fanout_target')
        if self.width_margin < 0:
            raise ValidationError("must be >= 0", 'width_margin')
        if self.max_iters < 1:
            raise ValidationError("must be >= 1", 'max_iters')
        if not 0 <= self.share_cost < 1:
            raise ValidationError("must satisfy 0 <= share_cost < 1", 'share_cost')
        return self


@dataclass
class OverlayTree:
    """One tree: node -> parent toward the root (root maps to -1), leaf entries."""
    root: int
    parent: Dict[int, int] = field(default_factory=dict)
    leaves: Dict[str, int] = field(default_factory=dict)

    def path_to_root(self, node: int) -> List[int]:
        path = [node]
        while self.parent.get(path[-1], -1) != -1:
            path.append(self.parent[path[-1]])
            if len(path) > len(self.parent) + 1:
                break
        return path


class OverlayForest:
    """
    Node-disjoint overlay trees keyed by root trace input.

    Attributes:
        trees: root TB_IPIN -> OverlayTree
        opins: every candidate user signal -> its OPIN node
    """

    def __init__(self, trees: Optional[Dict[int, OverlayTree]] = None,
                 opins: Optional[Dict[str, int]] = None):
        self.trees: Dict[int, OverlayTree] = trees or {}
        self.opins: Dict[str, int] = opins or {}

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, OverlayForest) and self.trees == other.trees
                and self.opins == other.opins)

    @property
    def signals(self) -> List[str]:
        return list(self.opins)

    def signal_trees(self) -> Dict[str, List[int]]:
        """Signal -> sorted roots of the trees it is a leaf of."""
        mapping: Dict[str, List[int]] = {}
        for root in sorted(self.trees):
            for signal in self.trees[root].leaves:
                mapping.setdefault(signal, []).append(root)
        return mapping

    def nodes(self) -> Set[int]:
        result: Set[int] = set()
        for tree in self.trees.values():
            result.update(tree.parent)
        return result

    def to_dict(self) -> Dict[str, Any]:
        return {
            'signals': {signal: node for signal, node in self.opins.items()},
            'signal_order': list(self.opins),
            'trees': [{'root': root,
                       'parent': [[n, p] for n, p in sorted(tree.parent.items())],
                       'leaves': dict(sorted(tree.leaves.items()))}
                      for root, tree in sorted(self.trees.items())],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OverlayForest':
        try:
            order = data.get('signal_order', sorted(data['signals']))
            opins = {signal: int(data['signals'][signal]) for signal in order}
            trees = {}
            for entry in data['trees']:
                root = int(entry['root'])
                trees[root] = OverlayTree(root, {int(n): int(p) for n, p in entry['parent']},
                                          {s: int(n) for s, n in entry['leaves'].items()})
            return cls(trees, opins)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed overlay: {e}") from e


@dataclass
class ConnectivityReport:
    fraction_connected: float
    reach: Dict[str, int]
    unconnected: List[str]
    unreachable: List[str] = field(default_factory=list)
    evicted: int = 0
    iterations: int = 0
    build_time: float = 0.0

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = {
            'fraction_connected': self.fraction_connected,
            'reach': dict(sorted(self.reach.items())),
            'unconnected': list(self.unconnected),
            'unreachable': list(self.unreachable),
            'evicted': self.evicted,
            'iterations': self.iterations,
        }
        if include_timing:
            data['build_time'] = self.build_time
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ConnectivityReport':
        return cls(float(data['fraction_connected']), dict(data['reach']),
                   list(data['unconnected']), list(data.get('unreachable', [])),
                   int(data.get('evicted', 0)), int(data.get('iterations', 0)),
                   float(data.get('build_time', 0.0)))


def report_for(forest: OverlayForest) -> ConnectivityReport:
    """Recount reach and fraction_connected from a forest."""
    reach = {signal: 0 for signal in forest.opins}
    for tree in forest.trees.values():
        for signal in tree.leaves:
            reach[signal] = reach.get(signal, 0) + 1
    unconnected = [s for s in forest.opins if reach[s] == 0]
    total = len(forest.opins)
    fraction = (total - len(unconnected)) / total if total else 0.0
    return ConnectivityReport(fraction, reach, unconnected)


def _distance_to_trace_inputs(rrg: RoutingResourceGraph, mask: ResourceMask,
                              trace_inputs: List[int]) -> Dict[int, int]:
    """Hop count from every FREE routing node to the nearest FREE trace input."""
    dist = {t: 0 for t in trace_inputs if mask.is_free(t)}
    queue = deque(sorted(dist))
    while queue:
        node = queue.popleft()
        for prev in rrg.in_edges[node]:
            if prev in dist or not mask.is_free(prev):
                continue
            if rrg.kinds[prev] not in (NodeKind.CHANX, NodeKind.CHANY):
                continue
            dist[prev] = dist[node] + 1
            queue.append(prev)
    return dist


class _Negotiator:
    """Claim bookkeeping and the connection search of the overlay builder."""

    def __init__(self, rrg: RoutingResourceGraph, mask: ResourceMask, trace_inputs: List[int],
                 params: OverlayParams):
        self.rrg = rrg
        self.mask = mask
        self.params = params
        self.trace_inputs = set(trace_inputs)
        self.hist: Dict[int, float] = {}
        self.pres_fac = params.pres_fac_init
        self.paths: Dict[ConnKey, List[int]] = {}
        self.claims: Dict[int, Dict[int, int]] = {}
        self.root_conns: Dict[int, Set[ConnKey]] = {}
        self._next: Dict[int, Dict[int, Tuple[int, int]]] = {}
        # Canonical forest view used by strict searches
        self.depth: Dict[int, int] = {}
        self.forest_parent: Dict[int, int] = {}

    # ----- claims -----

    def claim(self, key: ConnKey, path: List[int]) -> None:
        root = path[-1]
        self.paths[key] = path
        self.root_conns.setdefault(root, set()).add(key)
        for node in path:
            roots = self.claims.setdefault(node, {})
            roots[root] = roots.get(root, 0) + 1
        self._next.pop(root, None)

    def release(self, key: ConnKey) -> None:
        path = self.paths.pop(key, None)
        if path is None:
            return
        root = path[-1]
        self.root_conns[root].discard(key)
        for node in path:
            roots = self.claims[node]
            roots[root] -= 1
            if not roots[root]:
                del roots[root]
            if not roots:
                del self.claims[node]
        self._next.pop(root, None)

    def next_table(self, root: int) -> Dict[int, Tuple[int, int]]:
        """node -> (hops to root, next hop) over the root's live connections."""
        table = self._next.get(root)
        if table is None:
            table = {}
            for key in sorted(self.root_conns.get(root, ())):
                path = self.paths[key]
                for i, node in enumerate(path):
                    entry = (len(path) - 1 - i, path[i + 1] if i + 1 < len(path) else -1)
                    if node not in table or entry < table[node]:
                        table[node] = entry
            self._next[root] = table
        return table

    def conflicted_nodes(self) -> List[int]:
        return sorted(n for n, roots in self.claims.items() if len(roots) > 1)

    # ----- search -----

    def usable(self, node: int) -> bool:
        kind = self.rrg.kinds[node]
        if kind == NodeKind.TB_IPIN:
            return node in self.trace_inputs and self.mask.is_free(node)
        return kind in (NodeKind.CHANX, NodeKind.CHANY) and self.mask.is_free(node)

    def search(self, opin: int, reached: Set[int], owner: Dict[int, Dict[int, int]],
               strict: bool) -> Optional[List[int]]:
        """
        Cheapest path from opin to a trace input whose root is not in reached.

        Reaching a node owned by exactly one unreached tree may end the search
        by joining that tree. In strict mode only unowned nodes can be passed
        through; otherwise owned nodes cost present and history congestion.

        Returns:
            Node list from the entry node to the root, or None
        """
        rrg = self.rrg
        share = self.params.share_cost
        best: Dict[int, float] = {}
        parent: Dict[int, int] = {}
        goals: Dict[int, Tuple[float, int, int]] = {}
        heap: List[Tuple[float, int, int, float]] = []

        def relax(node: int, g: float, prev: int) -> None:
            if not self.usable(node):
                return
            roots = owner.get(node)
            if self.rrg.kinds[node] == NodeKind.TB_IPIN:
                if node in reached:
                    return
                cost = g + (share if roots else 1.0 + self.hist.get(node, 0.0))
                self._goal(goals, heap, node, cost, prev, node if roots else -1)
                return
            if roots and len(roots) == 1:
                root = next(iter(roots))
                if root not in reached:
                    hops = self.hops(root, node, strict)
                    self._goal(goals, heap, node, g + share * (1 + hops), prev, root)
            if roots and strict:
                return
            step = 1.0 + self.hist.get(node, 0.0)
            if roots:
                step *= 1.0 + self.pres_fac * len(roots)
            cost = g + step
            if cost < best.get(node, math.inf):
                best[node] = cost
                parent[node] = prev
                heapq.heappush(heap, (cost, node, 0, cost))

        for node in rrg.out_edges[opin]:
            relax(node, 0.0, opin)
        while heap:
            _, node, is_goal, g = heapq.heappop(heap)
            if is_goal:
                if goals.get(node, (math.inf,))[0] < g:
                    continue
                _, prev, root = goals[node]
                return self._assemble(opin, parent, prev, node, root, strict)
            if g > best.get(node, math.inf):
                continue
            for nxt in rrg.out_edges[node]:
                relax(nxt, g, node)
        return None

    @staticmethod
    def _goal(goals: Dict[int, Tuple[float, int, int]], heap: list, node: int, cost: float,
              prev: int, root: int) -> None:
        if cost < goals.get(node, (math.inf,))[0]:
            goals[node] = (cost, prev, root)
            heapq.heappush(heap, (cost, node, 1, cost))

    def hops(self, root: int, node: int, strict: bool) -> int:
        if strict:
            return self.depth[node]
        return self.next_table(root)[node][0]

    def _assemble(self, opin: int, parent: Dict[int, int], prev: int, node: int, root: int,
                  strict: bool) -> List[int]:
        prefix = []
        while prev != opin:
            prefix.append(prev)
            prev = parent[prev]
        path = list(reversed(prefix)) + [node]
        if root >= 0:
            cursor = node
            while cursor != root:
                cursor = self.forest_parent[cursor] if strict else self.next_table(root)[cursor][1]
                path.append(cursor)
        return _drop_loops(path)


def _drop_loops(path: List[int]) -> List[int]:
    """Remove cycles from a node sequence, keeping the first visit."""
    result: List[int] = []
    position: Dict[int, int] = {}
    for node in path:
        if node in position:
            cut = position[node]
            for dropped in result[cut + 1:]:
                position.pop(dropped, None)
            del result[cut + 1:]
            continue
        position[node] = len(result)
        result.append(node)
    return result


def _canonical_tree(root: int, paths: List[List[int]]) -> Dict[int, int]:
    """Shortest-path-to-root arborescence over the union of connection paths."""
    preds: Dict[int, Set[int]] = {}
    for path in paths:
        for a, b in zip(path, path[1:]):
            preds.setdefault(b, set()).add(a)
    parent = {root: -1}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for pred in sorted(preds.get(node, ())):
            if pred not in parent:
                parent[pred] = node
                queue.append(pred)
    return parent


def build_trace_overlay(rrg: RoutingResourceGraph, mask: ResourceMask, signals: Dict[str, int],
                        trace_inputs: List[int], params: OverlayParams = OverlayParams(),
                        seed: int = 1) -> Tuple[OverlayForest, ConnectivityReport]:
    """
    Build the trace overlay forest over FREE routing nodes.

    Args:
        rrg: Routing resource graph the user circuit is routed on
        mask: Occupancy; only FREE nodes may join the overlay
        signals: User signal -> OPIN node, in signal id order
        trace_inputs: Trace-buffer input nodes that may root trees
        params: Overlay settings
        seed: Orders signals that are equally far from a trace input

    Returns:
        (forest, report). Signals that cannot be connected are reported,
        never raised.
    """
    params.validate()
    with Stopwatch() as watch:
        forest, report = _build(rrg, mask, signals, trace_inputs, params, seed)
    report.build_time = watch.seconds
    logger.info("Trace overlay: %d trees, %.4f of %d signals connected (%.2fs)",
                len(forest.trees), report.fraction_connected, len(signals), watch.seconds)
    return forest, report


def _build(rrg: RoutingResourceGraph, mask: ResourceMask, signals: Dict[str, int],
           trace_inputs: List[int], params: OverlayParams,
           seed: int) -> Tuple[OverlayForest, ConnectivityReport]:
    names = list(signals)
    opins = [signals[s] for s in names]
    forest = OverlayForest({}, dict(signals))
    if not names or not trace_inputs:
        report = report_for(forest)
        report.unreachable = list(names)
        return forest, report

    dist = _distance_to_trace_inputs(rrg, mask, trace_inputs)
    reach_dist = []
    for i, opin in enumerate(opins):
        hops = [dist[n] for n in rrg.out_edges[opin] if n in dist]
        reach_dist.append(min(hops) + 1 if hops else None)
    unreachable = [names[i] for i, d in enumerate(reach_dist) if d is None]
    tiebreak = list(range(len(names)))
    random.Random(seed).shuffle(tiebreak)
    order = sorted((i for i, d in enumerate(reach_dist) if d is not None),
                   key=lambda i: (-reach_dist[i], tiebreak[i], i))
    target = params.fanout_target
    keys = [(i, j) for i in order for j in range(target)]

    neg = _Negotiator(rrg, mask, trace_inputs, params)
    failed: Set[ConnKey] = set()
    pruned: Set[int] = set()
    streak = {i: 0 for i in order}
    iterations = 0
    conflicts: List[int] = []

    def reached_by(i: int, skip: int) -> Set[int]:
        return {neg.paths[(i, j)][-1] for j in range(target) if j != skip and (i, j) in neg.paths}

    for iterations in range(1, params.max_iters + 1):
        if iterations == 1:
            todo = keys
        else:
            hot = set(conflicts)
            todo = [k for k in keys if k in neg.paths and hot.intersection(neg.paths[k])]
        for key in todo:
            i, j = key
            if i in pruned or key in failed:
                continue
            neg.release(key)
            path = neg.search(opins[i], reached_by(i, j), neg.claims, strict=False)
            if path is None:
                failed.add(key)
                continue
            neg.claim(key, path)
        conflicts = neg.conflicted_nodes()
        logger.debug("overlay iter %d: %d connections, %d conflicted nodes",
                     iterations, len(neg.paths), len(conflicts))
        if not conflicts:
            break
        for node in conflicts:
            neg.hist[node] = neg.hist.get(node, 0.0) + params.hist_fac * (len(neg.claims[node]) - 1)
        neg.pres_fac *= params.pres_fac_mult
        if params.prune_patience:
            hot = set(conflicts)
            for i in order:
                if i in pruned:
                    continue
                in_conflict = any(hot.intersection(neg.paths[(i, j)])
                                  for j in range(target) if (i, j) in neg.paths)
                streak[i] = streak[i] + 1 if in_conflict else 0
                if streak[i] >= params.prune_patience:
                    pruned.add(i)
                    for j in range(target):
                        neg.release((i, j))
            conflicts = neg.conflicted_nodes()

    evicted = _evict_conflicts(neg)

    # Canonical arborescences
    for root in sorted(neg.root_conns):
        conn_keys = sorted(neg.root_conns[root])
        if not conn_keys:
            continue
        parent = _canonical_tree(root, [neg.paths[k] for k in conn_keys])
        leaves = {names[i]: neg.paths[(i, j)][0] for (i, j) in conn_keys}
        forest.trees[root] = OverlayTree(root, parent, dict(sorted(leaves.items())))

    if params.salvage:
        _salvage(neg, forest, names, opins, order, target)

    report = report_for(forest)
    report.unreachable = sorted(unreachable)
    report.evicted = evicted
    report.iterations = iterations
    return forest, report


def _evict_conflicts(neg: _Negotiator) -> int:
    """Settle nodes still claimed by several trees; the lowest signal id keeps its tree there."""
    evicted = 0
    for node in neg.conflicted_nodes():
        roots = neg.claims.get(node)
        if not roots or len(roots) < 2:
            continue
        winner = min((key, path[-1]) for key, path in neg.paths.items() if node in path)[1]
        for key in sorted(k for k, p in neg.paths.items() if node in p and p[-1] != winner):
            neg.release(key)
            evicted += 1
    return evicted


def _salvage(neg: _Negotiator, forest: OverlayForest, names: List[str], opins: List[int],
             order: List[int], target: int) -> None:
    """Strict retry for signals below their fanout target."""
    owner: Dict[int, Dict[int, int]] = {}
    depth: Dict[int, int] = {}
    forest_parent: Dict[int, int] = {}
    for root, tree in forest.trees.items():
        for node, parent in tree.parent.items():
            owner[node] = {root: 1}
            forest_parent[node] = parent
            depth[node] = len(tree.path_to_root(node)) - 1
    neg.depth = depth
    neg.forest_parent = forest_parent
    added = 0
    for i in order:
        signal = names[i]
        reached = {root for root, tree in forest.trees.items() if signal in tree.leaves}
        while len(reached) < target:
            path = neg.search(opins[i], reached, owner, strict=True)
            if path is None:
                break
            root = path[-1]
            tree = forest.trees.setdefault(root, OverlayTree(root, {root: -1}, {}))
            for node, nxt in zip(path, path[1:] + [-1]):
                if node not in tree.parent:
                    tree.parent[node] = nxt
                    owner[node] = {root: 1}
                    forest_parent[node] = nxt
            for node in reversed(path):
                depth[node] = len(tree.path_to_root(node)) - 1
            tree.leaves[signal] = path[0]
            tree.leaves = dict(sorted(tree.leaves.items()))
            reached.add(root)
            added += 1
    if added:
        logger.debug("salvage pass added %d connections", added)


def verify_forest(rrg: RoutingResourceGraph, mask: ResourceMask, forest: OverlayForest) -> List[str]:
    """
    Re-derive every forest invariant from scratch.

    Checks that each tree is an arborescence of RRG edges rooted at a trace
    input, that trees are node-disjoint, that no tree node is owned by the
    user circuit or the trigger overlay and that every leaf reaches its root.

    Returns:
        Violation messages naming the offending node ids
    """
    problems: List[str] = []
    owner: Dict[int, int] = {}
    for root, tree in sorted(forest.trees.items()):
        if rrg.kinds[root] != NodeKind.TB_IPIN:
            problems.append(f"tree {root}: root is {rrg.kinds[root].name}, not TB_IPIN")
        if tree.parent.get(root) != -1:
            problems.append(f"tree {root}: root has a parent")
        graph = nx.DiGraph()
        graph.add_nodes_from(tree.parent)
        for node, parent in sorted(tree.parent.items()):
            if not 0 <= node < rrg.node_count:
                problems.append(f"tree {root}: node {node} outside the graph")
                continue
            flag = mask.flag(node)
            if flag in (Occupancy.USER, Occupancy.OVERLAY_TRIGGER):
                problems.append(f"tree {root}: node {node} is {flag.name}")
            if node in owner:
                problems.append(f"node {node} is in trees {owner[node]} and {root}")
            owner[node] = root
            if parent == -1:
                continue
            if parent not in tree.parent:
                problems.append(f"tree {root}: parent {parent} of node {node} not in tree")
            elif parent not in rrg.out_edges[node]:
                problems.append(f"tree {root}: {node}->{parent} is not a switch")
            graph.add_edge(parent, node)
        if tree.parent and not nx.is_arborescence(graph):
            problems.append(f"tree {root}: not an arborescence rooted at {root}")
        for signal, entry in sorted(tree.leaves.items()):
            opin = forest.opins.get(signal)
            if opin is None:
                problems.append(f"tree {root}: unknown leaf signal {signal}")
                continue
            if entry not in tree.parent:
                problems.append(f"tree {root}: leaf {signal} enters at {entry} outside the tree")
                continue
            if entry not in rrg.out_edges[opin]:
                problems.append(f"tree {root}: OPIN {opin} of {signal} does not drive {entry}")
            if root in graph and not nx.has_path(graph, root, entry):
                problems.append(f"tree {root}: leaf {signal} does not reach the root")
    return problems


def apply_to_mask(mask: ResourceMask, forest: OverlayForest) -> ResourceMask:
    """Copy of mask with every forest node marked OVERLAY_TRACE."""
    result = mask.copy()
    result.mark(forest.nodes(), Occupancy.OVERLAY_TRACE)
    return result
