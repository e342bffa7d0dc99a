"""
Baseline place and route for the FPGA Debug Overlay Toolkit.

Compiles the user circuit once: annealing placement with a bounding-box cost,
PathFinder negotiated-congestion routing over the RRG and a minimum channel
width search. The resulting placement and routing are locked; every overlay is
built from what they leave unused.
"""

import heapq
import logging
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Set, Any, Iterable

import networkx as nx
import numpy as np

from circuits import Netlist, BlockKind, BLE_KINDS
from errors import CapacityError, ConfigurationError, ValidationError
from fabric_model import (ArchSpec, BlockType, GridLayout, NodeKind, RoutingResourceGraph,
                          CHANNEL_KINDS, build_rrg)

logger = logging.getLogger(__name__)

Slot = Tuple[int, int, int]


@dataclass(frozen=True)
class PlacerParams:
    inner_num: float = 1.0
    init_temp_factor: float = 20.0
    target_acceptance: float = 0.44
    exit_factor: float = 0.005
    max_temperatures: int = 400


@dataclass(frozen=True)
class PathFinderParams:
    """
    Negotiated-congestion router settings.

    Attributes:
        max_iters: Routing iteration cap
        pres_fac_init: Present-congestion factor of the first iteration
        pres_fac_mult: Growth of the present-congestion factor per iteration
        hist_fac: History cost added per unit of overuse per iteration
        astar_fac: Weight of the distance-to-target lower bound
        stall_limit: Give up after this many iterations without fewer
            overused nodes (0 disables)
    """
    max_iters: int = 50
    pres_fac_init: float = 0.5
    pres_fac_mult: float = 1.3
    hist_fac: float = 1.0
    astar_fac: float = 1.0
    stall_limit: int = 10


# ----- placement --------------------------------------------------------------

class Placement:
    """Injective map from block id to slot (x, y, BLE or pad index)."""

    def __init__(self, locations: Optional[Dict[str, Slot]] = None):
        self.locations: Dict[str, Slot] = dict(locations or {})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Placement) and self.locations == other.locations

    def __getitem__(self, block_id: str) -> Slot:
        return self.locations[block_id]

    def occupancy(self) -> Dict[Slot, str]:
        return {slot: block for block, slot in self.locations.items()}

    def used_slots(self, x: int, y: int) -> Set[int]:
        return {s for (bx, by, s) in self.locations.values() if (bx, by) == (x, y)}

    def to_dict(self) -> Dict[str, Any]:
        return {'blocks': {block: list(slot) for block, slot in sorted(self.locations.items())}}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Placement':
        try:
            return cls({block: tuple(int(v) for v in slot)
                        for block, slot in data['blocks'].items()})
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed placement: {e}") from e


def _driver_of(netlist: Netlist) -> Dict[str, str]:
    return {net.signal: net.driver for net in netlist.nets}


def clb_input_count(netlist: Netlist, members: Iterable[str],
                    driver: Optional[Dict[str, str]] = None) -> int:
    """Distinct nets entering a CLB from outside it."""
    driver = driver or _driver_of(netlist)
    inside = set(members)
    external = set()
    for block_id in inside:
        for signal in netlist.block(block_id).inputs:
            if driver[signal] not in inside:
                external.add(signal)
    return len(external)


def check_placement(netlist: Netlist, arch: ArchSpec, placement: Placement) -> List[str]:
    """Re-derive placement legality; returns violation messages."""
    grid = GridLayout(arch)
    problems = []
    seen: Dict[Slot, str] = {}
    members: Dict[Tuple[int, int], List[str]] = {}
    for block in netlist.blocks:
        if block.id not in placement.locations:
            problems.append(f"block {block.id} is not placed")
            continue
        slot = placement[block.id]
        if slot in seen:
            problems.append(f"blocks {seen[slot]} and {block.id} share slot {slot}")
        seen[slot] = block.id
        x, y, s = slot
        tile = grid.block_type(x, y)
        if block.kind in BLE_KINDS:
            if tile != BlockType.CLB or not 0 <= s < arch.bles_per_clb:
                problems.append(f"{block.kind.value} block {block.id} on non-BLE slot {slot}")
            members.setdefault((x, y), []).append(block.id)
            if block.kind == BlockKind.LUT and len(block.inputs) > arch.lut_size_k:
                problems.append(f"LUT {block.id} has {len(block.inputs)} inputs > K")
        elif tile != BlockType.IO or not 0 <= s < arch.io_capacity:
            problems.append(f"{block.kind.value} block {block.id} on non-pad slot {slot}")
    extra = sorted(set(placement.locations) - {b.id for b in netlist.blocks})
    problems.extend(f"placement names unknown block {b}" for b in extra)
    driver = _driver_of(netlist)
    for loc, blocks in sorted(members.items()):
        count = clb_input_count(netlist, blocks, driver)
        if count > arch.clb_inputs:
            problems.append(f"CLB {loc} needs {count} input pins > {arch.clb_inputs}")
    return problems


class _Annealer:
    """Mutable placement state with incremental bounding-box cost."""

    def __init__(self, netlist: Netlist, arch: ArchSpec, rng: random.Random):
        self.netlist = netlist
        self.arch = arch
        self.rng = rng
        self.grid = GridLayout(arch)
        self.driver = _driver_of(netlist)
        self.clb_sites = self.grid.clb_locations()
        self.io_sites = self.grid.io_locations()
        self.clb_set = set(self.clb_sites)
        self.io_set = set(self.io_sites)
        self.blocks = [b.id for b in netlist.blocks]
        self.is_ble = {b.id: b.kind in BLE_KINDS for b in netlist.blocks}
        self.nets = [[net.driver] + sorted({blk for blk, _ in net.sinks})
                     for net in netlist.routed_nets()]
        self.block_nets: Dict[str, List[int]] = {b: [] for b in self.blocks}
        for i, terminals in enumerate(self.nets):
            for block_id in set(terminals):
                self.block_nets[block_id].append(i)
        self.loc: Dict[str, Slot] = {}
        self.occupant: Dict[Slot, str] = {}
        self.members: Dict[Tuple[int, int], Set[str]] = {loc: set() for loc in self.clb_sites}
        self.net_cost: List[float] = []

    def check_capacity(self) -> None:
        ble_blocks = [b for b in self.blocks if self.is_ble[b]]
        io_blocks = [b for b in self.blocks if not self.is_ble[b]]
        ble_slots = len(self.clb_sites) * self.arch.bles_per_clb
        pad_slots = len(self.io_sites) * self.arch.io_capacity
        if len(ble_blocks) > ble_slots:
            raise CapacityError(f"{len(ble_blocks)} LUT/FF blocks exceed {ble_slots} BLE slots")
        if len(io_blocks) > pad_slots:
            raise CapacityError(f"{len(io_blocks)} I/O blocks exceed {pad_slots} pads")
        k = self.netlist.max_lut_inputs()
        if k > self.arch.lut_size_k:
            raise CapacityError(f"LUT with {k} inputs exceeds lut_size_k={self.arch.lut_size_k}")

    def _put(self, block_id: str, slot: Slot) -> None:
        self.loc[block_id] = slot
        self.occupant[slot] = block_id
        if self.is_ble[block_id]:
            self.members[(slot[0], slot[1])].add(block_id)

    def _take(self, block_id: str) -> Slot:
        slot = self.loc.pop(block_id)
        del self.occupant[slot]
        if self.is_ble[block_id]:
            self.members[(slot[0], slot[1])].discard(block_id)
        return slot

    def pins_ok(self, site: Tuple[int, int]) -> bool:
        members = self.members[site]
        return clb_input_count(self.netlist, members, self.driver) <= self.arch.clb_inputs

    def random_fill(self) -> None:
        """Random legal initial placement."""
        order = list(self.blocks)
        self.rng.shuffle(order)
        ble_slots = [(x, y, s) for (x, y) in self.clb_sites for s in range(self.arch.bles_per_clb)]
        pad_slots = [(x, y, p) for (x, y) in self.io_sites for p in range(self.arch.io_capacity)]
        self.rng.shuffle(ble_slots)
        self.rng.shuffle(pad_slots)
        for block_id in order:
            if not self.is_ble[block_id]:
                self._put(block_id, pad_slots.pop())
                continue
            for i in range(len(ble_slots) - 1, -1, -1):
                slot = ble_slots[i]
                self._put(block_id, slot)
                if self.pins_ok((slot[0], slot[1])):
                    ble_slots.pop(i)
                    break
                self._take(block_id)
            else:
                raise CapacityError(f"no CLB has enough input pins left for block {block_id}")
        self.net_cost = [self._bbox(i) for i in range(len(self.nets))]

    def _bbox(self, net_index: int) -> float:
        xs = [self.loc[b][0] for b in self.nets[net_index]]
        ys = [self.loc[b][1] for b in self.nets[net_index]]
        return float(max(xs) - min(xs) + max(ys) - min(ys))

    def cost(self) -> float:
        return float(sum(self.net_cost))

    def propose(self, rlim: float) -> Optional[Tuple[str, Slot]]:
        """Random block and a target slot of the same class within rlim."""
        block_id = self.blocks[self.rng.randrange(len(self.blocks))]
        x, y, _ = self.loc[block_id]
        span = max(1, int(rlim))
        sites = self.clb_set if self.is_ble[block_id] else self.io_set
        capacity = self.arch.bles_per_clb if self.is_ble[block_id] else self.arch.io_capacity
        for _ in range(10):
            tx = x + self.rng.randint(-span, span)
            ty = y + self.rng.randint(-span, span)
            if (tx, ty) in sites:
                target = (tx, ty, self.rng.randrange(capacity))
                if target != self.loc[block_id]:
                    return block_id, target
        return None

    def apply(self, block_id: str, target: Slot) -> Tuple[Optional[str], Slot]:
        other = self.occupant.get(target)
        origin = self._take(block_id)
        if other is not None:
            self._take(other)
            self._put(other, origin)
        self._put(block_id, target)
        return other, origin

    def undo(self, block_id: str, other: Optional[str], origin: Slot) -> None:
        target = self._take(block_id)
        if other is not None:
            self._take(other)
            self._put(other, target)
        self._put(block_id, origin)

    def try_move(self, block_id: str, target: Slot) -> Optional[Tuple[float, Any]]:
        """Apply a move; returns (delta, undo record) or None if illegal."""
        other, origin = self.apply(block_id, target)
        if self.is_ble[block_id]:
            sites = {(origin[0], origin[1]), (target[0], target[1])}
            if not all(self.pins_ok(site) for site in sites):
                self.undo(block_id, other, origin)
                return None
        affected = set(self.block_nets[block_id])
        if other is not None:
            affected.update(self.block_nets[other])
        delta = 0.0
        changes = []
        for i in sorted(affected):
            new = self._bbox(i)
            delta += new - self.net_cost[i]
            changes.append((i, self.net_cost[i]))
            self.net_cost[i] = new
        return delta, (block_id, other, origin, changes)

    def revert(self, record: Any) -> None:
        block_id, other, origin, changes = record
        self.undo(block_id, other, origin)
        for i, old in changes:
            self.net_cost[i] = old

    def snapshot(self) -> Placement:
        return Placement(self.loc)


def random_placement(netlist: Netlist, arch: ArchSpec, seed: int) -> Placement:
    """A random legal placement, also the annealer's starting point."""
    state = _Annealer(netlist, arch, random.Random(seed))
    state.check_capacity()
    state.random_fill()
    return state.snapshot()


def placement_cost(netlist: Netlist, placement: Placement) -> float:
    """Total half-perimeter bounding-box wirelength."""
    total = 0.0
    for net in netlist.routed_nets():
        terminals = [net.driver] + [blk for blk, _ in net.sinks]
        xs = [placement[b][0] for b in terminals]
        ys = [placement[b][1] for b in terminals]
        total += max(xs) - min(xs) + max(ys) - min(ys)
    return total


def place(netlist: Netlist, arch: ArchSpec, seed: int,
          params: PlacerParams = PlacerParams()) -> Placement:
    """
    Anneal a placement that minimizes total bounding-box wirelength.

    Moves are range-limited swaps between slots of the same class; moves that
    overflow a CLB's input pins are rejected. The schedule adapts the cooling
    rate and the range limit to the acceptance rate. The best placement seen
    at a temperature boundary is returned, so the result never costs more
    than the random starting placement.

    Args:
        netlist: User circuit
        arch: Target architecture (channel width irrelevant)
        seed: Random seed
        params: Annealing schedule

    Returns:
        Legal Placement

    Raises:
        CapacityError: if the circuit cannot fit
    """
    rng = random.Random(seed)
    state = _Annealer(netlist, arch, rng)
    state.check_capacity()
    state.random_fill()
    cost = state.cost()
    best, best_cost = state.snapshot(), cost
    n_blocks = len(state.blocks)
    if n_blocks < 2 or not state.nets:
        return best

    samples = []
    for _ in range(n_blocks):
        proposal = state.propose(rlim=max(state.grid.nx, state.grid.ny) + 1)
        if proposal is None:
            continue
        result = state.try_move(*proposal)
        if result is not None:
            cost += result[0]
            samples.append(cost)
    cost = state.cost()
    if cost < best_cost:
        best, best_cost = state.snapshot(), cost
    temperature = params.init_temp_factor * float(np.std(samples)) if samples else 0.0
    moves_per_temp = max(1, int(params.inner_num * n_blocks ** (4.0 / 3.0)))
    rlim_max = float(max(state.grid.nx, state.grid.ny) + 1)
    rlim = rlim_max
    n_nets = len(state.nets)

    for round_number in range(params.max_temperatures):
        accepted = 0
        for _ in range(moves_per_temp):
            proposal = state.propose(rlim)
            if proposal is None:
                continue
            result = state.try_move(*proposal)
            if result is None:
                continue
            delta, record = result
            if delta <= 0 or (temperature > 0 and rng.random() < math.exp(-delta / temperature)):
                cost += delta
                accepted += 1
            else:
                state.revert(record)
        cost = state.cost()
        if cost < best_cost:
            best, best_cost = state.snapshot(), cost
        rate = accepted / moves_per_temp
        if cost == 0 or temperature <= 0 or temperature < params.exit_factor * cost / n_nets:
            break
        if rate > 0.96:
            temperature *= 0.5
        elif rate > 0.8:
            temperature *= 0.9
        elif rate > 0.15:
            temperature *= 0.95
        else:
            temperature *= 0.8
        rlim = min(rlim_max, max(1.0, rlim * (1.0 - params.target_acceptance + rate)))
        if round_number % 10 == 0:
            logger.debug("place T=%.4f cost=%.1f accept=%.2f rlim=%.1f",
                         temperature, cost, rate, rlim)

    logger.info("Placed %s: bounding-box cost %.1f (seed %d)", netlist.name, best_cost, seed)
    return best


# ----- routing ----------------------------------------------------------------

@dataclass
class RouteNet:
    """Routing problem of one net: its SOURCE and groups of acceptable SINKs."""
    signal: str
    source: int
    targets: List[Tuple[Tuple[int, int], Tuple[int, ...]]]


class Routing:
    """Route trees per net: node -> parent (-1 for the SOURCE root)."""

    def __init__(self, trees: Optional[Dict[str, Dict[int, int]]] = None, channel_width: int = 0):
        self.trees: Dict[str, Dict[int, int]] = trees or {}
        self.channel_width = channel_width

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Routing) and self.trees == other.trees
                and self.channel_width == other.channel_width)

    def used_nodes(self) -> Set[int]:
        nodes: Set[int] = set()
        for tree in self.trees.values():
            nodes.update(tree)
        return nodes

    def wirelength(self, rrg: RoutingResourceGraph) -> int:
        return sum(1 for tree in self.trees.values() for n in tree
                   if rrg.kinds[n] in CHANNEL_KINDS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'channel_width': self.channel_width,
            'nets': {signal: [[node, parent] for node, parent in tree.items()]
                     for signal, tree in sorted(self.trees.items())},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Routing':
        try:
            trees = {signal: {int(n): int(p) for n, p in pairs}
                     for signal, pairs in data['nets'].items()}
            return cls(trees, int(data.get('channel_width', 0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed routing: {e}") from e


@dataclass
class RouteResult:
    success: bool
    routing: Routing
    congested_nodes: List[int] = field(default_factory=list)
    iterations: int = 0
    wirelength: int = 0


def block_pin_nodes(rrg: RoutingResourceGraph, placement: Placement, netlist: Netlist,
                    block_id: str) -> Tuple[int, int]:
    """(SOURCE, OPIN) of the block driving a signal."""
    x, y, s = placement[block_id]
    return rrg.node(NodeKind.SOURCE, x, y, s), rrg.node(NodeKind.OPIN, x, y, s)


def signal_opins(netlist: Netlist, placement: Placement, rrg: RoutingResourceGraph) -> Dict[str, int]:
    """OPIN node of every observable user signal."""
    opins = {}
    for block in netlist.blocks:
        if block.output is not None:
            opins[block.output] = block_pin_nodes(rrg, placement, netlist, block.id)[1]
    return opins


def route_nets(netlist: Netlist, placement: Placement,
               rrg: RoutingResourceGraph) -> List[RouteNet]:
    """
    Build the routing problems of all nets.

    Sinks in the driver's own CLB are absorbed by the local crossbar; sinks
    sharing another CLB need one connection to any of its SINKs.
    """
    problems = []
    arch = rrg.arch
    for net in netlist.routed_nets():
        driver_loc = placement[net.driver]
        driver_is_ble = netlist.block(net.driver).kind in BLE_KINDS
        targets: Dict[Tuple[int, int], Tuple[int, ...]] = {}
        for block_id, _ in net.sinks:
            x, y, s = placement[block_id]
            if netlist.block(block_id).kind in BLE_KINDS:
                if driver_is_ble and (x, y) == driver_loc[:2]:
                    continue
                targets[(x, y)] = tuple(rrg.node(NodeKind.SINK, x, y, i)
                                        for i in range(arch.clb_inputs))
            else:
                targets[(x, y, s)] = (rrg.node(NodeKind.SINK, x, y, s),)
        if not targets:
            continue
        source = block_pin_nodes(rrg, placement, netlist, net.driver)[0]
        problems.append(RouteNet(net.signal, source,
                                 [((key[0], key[1]), sinks) for key, sinks in targets.items()]))
    return problems


class PathFinderRouter:
    """
    Negotiated-congestion router.

    Node cost for a net is (base + history) * (1 + pres_fac * overuse-if-taken);
    maze expansion is A* with a Manhattan lower bound and ties broken by
    (cost, node index).
    """

    def __init__(self, rrg: RoutingResourceGraph, params: PathFinderParams):
        self.rrg = rrg
        self.params = params
        n = rrg.node_count
        self.occ = np.zeros(n, dtype=np.int32)
        self.hist = np.zeros(n, dtype=np.float64)
        self.base = np.ones(n, dtype=np.float64)
        kinds = np.array([int(k) for k in rrg.kinds], dtype=np.int8)
        self.base[kinds == int(NodeKind.SINK)] = 0.0
        self.base[kinds == int(NodeKind.SOURCE)] = 0.0
        self.blocked = kinds == int(NodeKind.TB_IPIN)
        self.pres_fac = params.pres_fac_init

    def node_cost(self, node: int) -> float:
        # Capacity is 1, so taking the node overuses it by its current occupancy
        return (self.base[node] + self.hist[node]) * (1.0 + self.pres_fac * self.occ[node])

    def route_one(self, problem: RouteNet) -> Dict[int, int]:
        rrg = self.rrg
        astar = self.params.astar_fac
        tree: Dict[int, int] = {problem.source: -1}
        sx, sy = rrg.cx[problem.source], rrg.cy[problem.source]
        remaining = sorted(problem.targets,
                           key=lambda t: (abs(t[0][0] - sx) + abs(t[0][1] - sy), t[1][0]))
        for (tx, ty), sinks in remaining:
            wanted = set(sinks)
            if wanted & tree.keys():
                continue
            best: Dict[int, float] = {}
            parent: Dict[int, int] = {}
            heap: List[Tuple[float, int, float]] = []
            for node in sorted(tree):
                best[node] = 0.0
                h = astar * max(0.0, abs(rrg.cx[node] - tx) + abs(rrg.cy[node] - ty) - 1.0)
                heapq.heappush(heap, (h, node, 0.0))
            reached = -1
            while heap:
                _, node, g = heapq.heappop(heap)
                if g > best.get(node, math.inf):
                    continue
                if node in wanted:
                    reached = node
                    break
                for nxt in rrg.out_edges[node]:
                    kind = rrg.kinds[nxt]
                    if self.blocked[nxt]:
                        continue
                    if kind == NodeKind.IPIN and (rrg.xs[nxt], rrg.ys[nxt]) != (tx, ty):
                        continue
                    if kind == NodeKind.SINK and nxt not in wanted:
                        continue
                    ng = g + self.node_cost(nxt)
                    if ng < best.get(nxt, math.inf):
                        best[nxt] = ng
                        parent[nxt] = node
                        h = astar * max(0.0, abs(rrg.cx[nxt] - tx) + abs(rrg.cy[nxt] - ty) - 1.0)
                        heapq.heappush(heap, (ng + h, nxt, ng))
            if reached < 0:
                # Graph disconnection; the caller sees the missing target as a failure
                logger.warning("net %s: no path to block at (%d, %d)", problem.signal, tx, ty)
                continue
            path = []
            node = reached
            while node not in tree:
                path.append(node)
                node = parent[node]
            for child in reversed(path):
                tree[child] = node
                node = child
        return tree

    def _occupy(self, tree: Dict[int, int], amount: int) -> None:
        for node in tree:
            self.occ[node] += amount

    def route_all(self, problems: List[RouteNet]) -> Tuple[bool, Dict[str, Dict[int, int]], List[int], int]:
        params = self.params
        trees: Dict[str, Dict[int, int]] = {}
        best_overuse = math.inf
        stalled = 0
        overused: List[int] = []
        iteration = 0
        for iteration in range(1, params.max_iters + 1):
            if iteration == 1:
                todo = problems
            else:
                hot = set(overused)
                todo = [p for p in problems if hot.intersection(trees[p.signal])]
            for problem in todo:
                if problem.signal in trees:
                    self._occupy(trees[problem.signal], -1)
                trees[problem.signal] = self.route_one(problem)
                self._occupy(trees[problem.signal], 1)
            over_mask = self.occ > 1
            overused = [int(n) for n in np.nonzero(over_mask)[0]]
            missing = [p.signal for p in problems if not self._complete(p, trees[p.signal])]
            logger.debug("route iter %d: %d nets rerouted, %d overused nodes, pres_fac %.3f",
                         iteration, len(todo), len(overused), self.pres_fac)
            if not overused and not missing:
                return True, trees, [], iteration
            if missing and not overused:
                return False, trees, [], iteration
            self.hist[over_mask] += params.hist_fac * (self.occ[over_mask] - 1)
            self.pres_fac *= params.pres_fac_mult
            if len(overused) < best_overuse:
                best_overuse = len(overused)
                stalled = 0
            else:
                stalled += 1
                if params.stall_limit and stalled >= params.stall_limit:
                    logger.info("router stalled at %d overused nodes after %d iterations",
                                len(overused), iteration)
                    break
        return False, trees, overused, iteration

    @staticmethod
    def _complete(problem: RouteNet, tree: Dict[int, int]) -> bool:
        return all(set(sinks) & tree.keys() for _, sinks in problem.targets)


def route(netlist: Netlist, placement: Placement, rrg: RoutingResourceGraph, seed: int = 1,
          max_iters: Optional[int] = None,
          params: PathFinderParams = PathFinderParams()) -> RouteResult:
    """
    Route every net with PathFinder.

    Args:
        netlist: User circuit
        placement: Legal placement on rrg's architecture
        rrg: Routing resource graph
        seed: Orders the nets of the first iteration
        max_iters: Overrides params.max_iters when given
        params: Router settings

    Returns:
        RouteResult; on failure success is False and congested_nodes lists
        the nodes still overused
    """
    if max_iters is not None:
        params = replace(params, max_iters=int(max_iters))
    problems = route_nets(netlist, placement, rrg)
    random.Random(seed).shuffle(problems)
    router = PathFinderRouter(rrg, params)
    success, trees, congested, iterations = router.route_all(problems)
    routing = Routing({signal: trees[signal] for signal in sorted(trees)}, rrg.arch.channel_width_w)
    result = RouteResult(success, routing, sorted(congested), iterations, routing.wirelength(rrg))
    logger.info("Routed %s at W=%d: %s after %d iterations, wirelength %d",
                netlist.name, rrg.arch.channel_width_w,
                "success" if success else f"failure ({len(congested)} congested nodes)",
                iterations, result.wirelength)
    return result


def verify_routing(rrg: RoutingResourceGraph, netlist: Netlist, placement: Placement,
                   routing: Routing) -> List[str]:
    """
    Independent legality check of a routing.

    Every tree must be an arborescence of RRG edges rooted at its driver's
    SOURCE reaching every required CLB or pad; no node may serve two nets.
    """
    problems: List[str] = []
    usage: Dict[int, str] = {}
    expected = {p.signal: p for p in route_nets(netlist, placement, rrg)}
    for signal in sorted(set(expected) - set(routing.trees)):
        problems.append(f"net {signal} is not routed")
    for signal, tree in sorted(routing.trees.items()):
        graph = nx.DiGraph()
        graph.add_nodes_from(tree)
        for node, parent in tree.items():
            if node < 0 or node >= rrg.node_count:
                problems.append(f"net {signal}: node {node} outside the graph")
                continue
            if parent >= 0:
                if node not in rrg.out_edges[parent]:
                    problems.append(f"net {signal}: {parent}->{node} is not a switch")
                graph.add_edge(parent, node)
            if rrg.kinds[node] == NodeKind.TB_IPIN:
                problems.append(f"net {signal}: uses trace-buffer pin {node}")
            if node in usage:
                problems.append(f"node {node} used by nets {usage[node]} and {signal}")
            usage[node] = signal
        if tree and not nx.is_arborescence(graph):
            problems.append(f"net {signal}: route tree is not an arborescence")
        problem = expected.get(signal)
        if problem is None:
            continue
        if tree.get(problem.source) != -1:
            problems.append(f"net {signal}: not rooted at its SOURCE {problem.source}")
        for (tx, ty), sinks in problem.targets:
            if not set(sinks) & tree.keys():
                problems.append(f"net {signal}: block at ({tx}, {ty}) not reached")
    return problems


# ----- channel width search ---------------------------------------------------

@dataclass
class MinWidthResult:
    w_min: int
    trials: Dict[int, bool]

    def to_dict(self) -> Dict[str, Any]:
        return {'w_min': self.w_min,
                'trials': {str(w): ok for w, ok in sorted(self.trials.items())}}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MinWidthResult':
        try:
            return cls(int(data['w_min']), {int(w): bool(ok) for w, ok in data['trials'].items()})
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed minw result: {e}") from e


def _try_width(args: Tuple[Netlist, Placement, ArchSpec, int, int, PathFinderParams]) -> Tuple[int, bool]:
    netlist, placement, arch, width, seed, params = args
    rrg = build_rrg(arch.with_width(width))
    return width, route(netlist, placement, rrg, seed, params=params).success


def _try_widths(netlist: Netlist, placement: Placement, arch: ArchSpec, widths: List[int],
                seed: int, params: PathFinderParams, jobs: int) -> Dict[int, bool]:
    tasks = [(netlist, placement, arch, w, seed, params) for w in widths]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_try_width, tasks))
    else:
        results = [_try_width(task) for task in tasks]
    return dict(sorted(results))


def find_min_channel_width(netlist: Netlist, placement: Placement, arch: ArchSpec, seed: int = 1,
                           params: PathFinderParams = PathFinderParams(), w_hi: int = 64,
                           jobs: int = 1) -> MinWidthResult:
    """
    Find the smallest even channel width at which the placed circuit routes.

    Widths double from 2 until one routes, then the bracket is narrowed over
    even widths. With jobs > 1 each narrowing round tries up to jobs widths
    in parallel processes; results merge by width so the answer does not
    depend on jobs. An odd w_hi is lowered to the even width below it.

    Raises:
        ConfigurationError: if the circuit does not route even at w_hi
    """
    if w_hi < 2:
        raise ConfigurationError(f"W_hi={w_hi} is below the narrowest width 2")
    trials: Dict[int, bool] = {}
    top = w_hi - w_hi % 2
    lo, hi = 0, None
    width = 2
    while hi is None:
        width = min(width, top)
        trials.update(_try_widths(netlist, placement, arch, [width], seed, params, 1))
        if trials[width]:
            hi = width
        else:
            lo = width
            if width >= top:
                raise ConfigurationError(f"{netlist.name} does not route at W_hi={w_hi}")
            width *= 2
    while hi - lo > 2:
        candidates = list(range(lo + 2, hi, 2))
        count = max(1, min(jobs, len(candidates)))
        step = len(candidates) / (count + 1)
        picks = sorted({candidates[min(len(candidates) - 1, int(step * (i + 1)))]
                        for i in range(count)})
        results = _try_widths(netlist, placement, arch, picks, seed, params, jobs)
        trials.update(results)
        passing = [w for w, ok in results.items() if ok]
        if passing:
            hi = min(passing)
        failing = [w for w, ok in results.items() if not ok and w < hi]
        if failing:
            lo = max(failing)
        logger.info("width search %s: bracket (%d, %d]", netlist.name, lo, hi)
    return MinWidthResult(hi, trials)


def linear_min_channel_width(netlist: Netlist, placement: Placement, arch: ArchSpec, seed: int = 1,
                             params: PathFinderParams = PathFinderParams(), w_hi: int = 64) -> int:
    """Sweep even widths upward from 2; the first routable width."""
    for width in range(2, w_hi + 1, 2):
        if _try_width((netlist, placement, arch, width, seed, params))[1]:
            return width
    raise ConfigurationError(f"{netlist.name} does not route at W_hi={w_hi}")
