"""
Debug-time configuration for the FPGA Debug Overlay Toolkit.

Folds the trace overlay forest into a bipartite signal/trace-input graph,
picks which requested signals get observed through a maximum matching and
emits the multiplexer selects that forward each matched signal to its trace
input. Nothing here touches the user circuit's placement or routing.
"""

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Any

from errors import ForestCorruptionError, UnknownSignalError, ValidationError
from fabric_model import NodeKind, RoutingResourceGraph
from trace_overlay import OverlayForest

logger = logging.getLogger(__name__)

UNREACHED = -1


@dataclass
class BipartiteConnectivity:
    """
    Signals on the left, trace inputs on the right.

    Attributes:
        adjacency: signal -> sorted trace inputs whose tree has it as a leaf
        signals: every user signal in signal id order (isolated ones included)
    """
    adjacency: Dict[str, List[int]]
    signals: List[str] = field(default_factory=list)

    def edges(self) -> List[tuple]:
        return [(s, t) for s in self.signals for t in self.adjacency.get(s, [])]

    @property
    def trace_inputs(self) -> List[int]:
        return sorted({t for roots in self.adjacency.values() for t in roots})


@dataclass
class Selection:
    matching: Dict[str, int]
    unmatched: List[str]


@dataclass
class DebugConfig:
    """
    Attributes:
        matching: requested signal -> trace input
        mux_selects: node -> the fan-in node it forwards
        unmatched: requested signals left unobserved
    """
    matching: Dict[str, int]
    mux_selects: Dict[int, int]
    unmatched: List[str]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'matching': dict(sorted(self.matching.items())),
            'mux_selects': [[node, source] for node, source in sorted(self.mux_selects.items())],
            'unmatched': list(self.unmatched),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DebugConfig':
        try:
            return cls({s: int(t) for s, t in data['matching'].items()},
                       {int(n): int(src) for n, src in data['mux_selects']},
                       list(data['unmatched']))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed debug config: {e}") from e


def fold_to_bipartite(forest: OverlayForest) -> BipartiteConnectivity:
    """Collapse each tree onto its root: edge (s, t) iff s is a leaf of tree t."""
    adjacency = {signal: roots for signal, roots in forest.signal_trees().items()}
    return BipartiteConnectivity(adjacency, list(forest.opins))


class HopcroftKarp:
    """
    Hopcroft-Karp maximum matching over a left -> right adjacency.

    Left vertices are tried in the given order and their neighbours in list
    order, so equal inputs always give the same matching. No sets are
    iterated.
    """

    def __init__(self, graph_left: Dict[str, List[int]]):
        self._graph = graph_left
        self._left = list(graph_left)
        self._pair_left: Dict[str, int] = {}
        self._pair_right: Dict[int, str] = {}
        self._dist: Dict[str, int] = {}
        self._limit = UNREACHED

    def run(self) -> Dict[str, int]:
        self._pair_left.clear()
        self._pair_right.clear()
        while self._layer():
            for left in self._left:
                if left not in self._pair_left:
                    self._augment(left)
        return dict(self._pair_left)

    def _layer(self) -> bool:
        """BFS layering from the free left vertices; True if a free right is reachable."""
        queue: Deque[str] = deque()
        for left in self._left:
            if left in self._pair_left:
                self._dist[left] = UNREACHED
            else:
                self._dist[left] = 0
                queue.append(left)
        self._limit = UNREACHED
        while queue:
            left = queue.popleft()
            if self._limit != UNREACHED and self._dist[left] >= self._limit:
                continue
            for right in self._graph[left]:
                mate = self._pair_right.get(right)
                if mate is None:
                    if self._limit == UNREACHED:
                        self._limit = self._dist[left] + 1
                elif self._dist[mate] == UNREACHED:
                    self._dist[mate] = self._dist[left] + 1
                    queue.append(mate)
        return self._limit != UNREACHED

    def _augment(self, left: str) -> bool:
        for right in self._graph[left]:
            mate = self._pair_right.get(right)
            if mate is None:
                if self._limit == self._dist[left] + 1:
                    self._pair(left, right)
                    return True
            elif self._dist[mate] == self._dist[left] + 1 and self._augment(mate):
                self._pair(left, right)
                return True
        self._dist[left] = UNREACHED
        return False

    def _pair(self, left: str, right: int) -> None:
        self._pair_left[left] = right
        self._pair_right[right] = left


def _requested_order(bip: BipartiteConnectivity, requested: Iterable[str]) -> List[str]:
    order = list(dict.fromkeys(requested))
    known = set(bip.signals) | set(bip.adjacency)
    unknown = [s for s in order if s not in known]
    if unknown:
        raise UnknownSignalError(unknown)
    return order


def select_signals(bip: BipartiteConnectivity, requested: Iterable[str]) -> Selection:
    """
    Maximum matching of the requested signals onto trace inputs.

    Requests beyond the number of trace inputs are accepted; the surplus is
    reported unmatched.

    Raises:
        UnknownSignalError: naming every requested signal the circuit lacks
    """
    order = _requested_order(bip, requested)
    graph = {signal: list(bip.adjacency.get(signal, [])) for signal in order}
    pairs = HopcroftKarp(graph).run()
    matching = {signal: pairs[signal] for signal in order if signal in pairs}
    unmatched = [signal for signal in order if signal not in pairs]
    logger.info("Matched %d of %d requested signals", len(matching), len(order))
    return Selection(matching, unmatched)


def has_augmenting_path(bip: BipartiteConnectivity, requested: Iterable[str],
                        matching: Dict[str, int]) -> bool:
    """True if some unmatched requested signal has an augmenting path (matching not maximum)."""
    order = _requested_order(bip, requested)
    mate = {t: s for s, t in matching.items()}
    seen_left = set()
    seen_right = set()
    queue = deque(s for s in order if s not in matching)
    seen_left.update(queue)
    while queue:
        signal = queue.popleft()
        for root in bip.adjacency.get(signal, []):
            if root in seen_right or matching.get(signal) == root:
                continue
            seen_right.add(root)
            other = mate.get(root)
            if other is None:
                return True
            if other not in seen_left:
                seen_left.add(other)
                queue.append(other)
    return False


def emit_mux_config(forest: OverlayForest, selection: Selection) -> DebugConfig:
    """
    Set the selects that forward each matched signal to its trace input.

    Every node on the leaf-to-root path selects the previous node, starting
    with the entry node selecting the signal's OPIN.

    Raises:
        ForestCorruptionError: if a path walk fails or two paths disagree
    """
    selects: Dict[int, int] = {}
    for signal, root in sorted(selection.matching.items()):
        tree = forest.trees.get(root)
        if tree is None or signal not in tree.leaves:
            raise ForestCorruptionError(f"signal {signal} is not a leaf of tree {root}")
        opin = forest.opins.get(signal)
        if opin is None:
            raise ForestCorruptionError(f"signal {signal} has no OPIN in the overlay")
        previous, node = opin, tree.leaves[signal]
        steps = 0
        while True:
            if node not in tree.parent:
                raise ForestCorruptionError(f"tree {root}: walk from {signal} left the tree at {node}")
            if selects.get(node, previous) != previous:
                raise ForestCorruptionError(
                    f"node {node} selected by both {selects[node]} and {previous}")
            selects[node] = previous
            if node == root:
                break
            previous, node = node, tree.parent[node]
            steps += 1
            if steps > len(tree.parent):
                raise ForestCorruptionError(f"tree {root}: cycle on the walk from {signal}")
    return DebugConfig(dict(selection.matching), selects, list(selection.unmatched))


@dataclass
class PropagationResult:
    arrivals: Dict[int, Optional[str]]
    problems: List[str]


def simulate_propagation(rrg: RoutingResourceGraph, config: DebugConfig,
                         opins: Dict[str, int]) -> PropagationResult:
    """
    Follow configured selects backwards from every driven trace input.

    Returns:
        Which signal arrives at each trace input that has a select, plus
        problems such as selects that are not RRG switches or walks that end
        without reaching an OPIN
    """
    signal_at = {node: signal for signal, node in opins.items()}
    problems: List[str] = []
    for node, source in sorted(config.mux_selects.items()):
        if node not in rrg.out_edges[source]:
            problems.append(f"select {source}->{node} is not a switch")
    arrivals: Dict[int, Optional[str]] = {}
    for node in sorted(config.mux_selects):
        if rrg.kinds[node] != NodeKind.TB_IPIN:
            continue
        cursor, hops = node, 0
        while cursor in config.mux_selects and hops <= len(config.mux_selects):
            cursor = config.mux_selects[cursor]
            hops += 1
        arrivals[node] = signal_at.get(cursor) if rrg.kinds[cursor] == NodeKind.OPIN else None
        if arrivals[node] is None:
            problems.append(f"trace input {node} is driven by no signal")
    return PropagationResult(arrivals, problems)


def check_config(rrg: RoutingResourceGraph, config: DebugConfig, opins: Dict[str, int]) -> List[str]:
    """Propagation check: exactly the matched signals arrive, each at its trace input."""
    result = simulate_propagation(rrg, config, opins)
    problems = list(result.problems)
    expected = {root: signal for signal, root in config.matching.items()}
    for root, signal in sorted(expected.items()):
        if result.arrivals.get(root) != signal:
            problems.append(f"trace input {root} receives {result.arrivals.get(root)}, "
                            f"expected {signal}")
    for root, signal in sorted(result.arrivals.items()):
        if root not in expected:
            problems.append(f"unexpected signal {signal} at trace input {root}")
    return problems


def observability_profile(bip: BipartiteConnectivity, sizes: Iterable[int], samples: int,
                          seed: int) -> Dict[int, float]:
    """
    Fraction of random k-signal requests that can be observed in full.

    Args:
        bip: Folded forest
        sizes: Request sizes k to evaluate
        samples: Random requests per size
        seed: Random seed

    Returns:
        k -> fraction of fully matched requests
    """
    rng = random.Random(seed)
    profile: Dict[int, float] = {}
    for k in sizes:
        if k < 1 or k > len(bip.signals):
            continue
        full = 0
        for _ in range(samples):
            requested = rng.sample(bip.signals, k)
            if not select_signals(bip, requested).unmatched:
                full += 1
        profile[k] = full / samples if samples else 0.0
    return profile
