"""
Trigger overlay for the FPGA Debug Overlay Toolkit.

At compile time the spare logic elements of every CLB become an overlay cell
and short point-to-point links are pre-routed between nearby cells over FREE
routing. At debug time a trigger netlist is annealed onto the cells: trigger
connections inside a cell ride the CLB crossbar, connections between cells use
a link or a chain of links through route-through LEs, and anything else is an
immediate routing failure. Trigger inputs and the fire output are then routed
over whatever routing is still FREE.
"""

import bisect
import heapq
import itertools
import logging
import math
import random
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Set, Any, Iterable

import numpy as np

from baseline_pnr import (PathFinderParams, PathFinderRouter, PlacerParams, Placement, RouteNet,
                          Routing, place, route)
from circuits import BlockKind, Netlist, TriggerNetlist, merge_trigger
from common_utils import Stopwatch
from errors import CapacityError, ValidationError
from fabric_model import (ArchSpec, BlockType, NodeKind, Occupancy, ResourceMask, RoutingResourceGraph,
                          CHANNEL_KINDS, build_rrg)

logger = logging.getLogger(__name__)

SlotKey = Tuple[int, int]

INTRA = "INTRA"
LINK = "LINK"
INDIRECT = "INDIRECT"
REALIZATION_KINDS = [INTRA, LINK, INDIRECT]
BLOCKED = "BLOCKED"

# Cells keep this many input pins out of link reservation for trigger inputs
MIN_FEED_PINS = 1


@dataclass(frozen=True)
class SAParams:
    """
    Trigger mapping annealer settings.

    Attributes:
        seed: Seed of the first annealing run
        init_temp_factor: Initial temperature as a multiple of the standard
            deviation of costs seen over a random walk
        cooling_rate: Geometric cooling factor
        moves_per_le: Moves per temperature per trigger LE
        gamma_indirect: Cost of a connection through route-through LEs
        gamma_blocked: Cost of a connection that cannot be routed at all
        max_route_through: Intermediate LEs allowed on one connection
        stall_temperatures: Stop after this many cold temperatures without
            a better mapping
        restarts: Independent runs with derived seeds, best cost wins
        max_temperatures: Hard cap on temperatures per run
        exit_temperature: Stop once the temperature drops below this
        target_acceptance: Acceptance rate the move range adapts toward
    """
    seed: int = 1
    init_temp_factor: float = 20.0
    cooling_rate: float = 0.95
    moves_per_le: int = 100
    gamma_indirect: float = 5.0
    gamma_blocked: float = 10000.0
    max_route_through: int = 2
    stall_temperatures: int = 10
    restarts: int = 1
    max_temperatures: int = 500
    exit_temperature: float = 0.01
    target_acceptance: float = 0.44

    def validate(self) -> 'SAParams':
        if not 0 < self.cooling_rate < 1:
            raise ValidationError("must satisfy 0 < cooling_rate < 1", 'cooling_rate')
        if self.moves_per_le < 1:
            raise ValidationError("must be >= 1", 'moves_per_le')
        if not self.gamma_indirect > 1.0:
            raise ValidationError("must exceed the direct link cost of 1", 'gamma_indirect')
        if not self.gamma_blocked > self.gamma_indirect:
            raise ValidationError("must exceed gamma_indirect", 'gamma_blocked')
        if self.max_route_through < 0:
            raise ValidationError("must be >= 0", 'max_route_through')
        if self.restarts < 1:
            raise ValidationError("must be >= 1", 'restarts')
        return self

    def run_seeds(self) -> List[int]:
        return [self.seed + 7919 * r for r in range(self.restarts)]


# ----- fabric -----------------------------------------------------------------

@dataclass
class OverlayCell:
    """
    Spare BLEs of one CLB.

    Attributes:
        x, y: CLB location
        slots: Spare BLE indices
        out_pins: Spare BLEs whose OPIN still drives a FREE track
        in_pins: FREE input pins (IPIN nodes) with a FREE SINK and driver
        feed_pins: in_pins not reserved as link ends
    """
    x: int
    y: int
    slots: List[int]
    out_pins: List[int]
    in_pins: List[int]
    feed_pins: List[int]

    @property
    def location(self) -> Tuple[int, int]:
        return self.x, self.y

    def to_dict(self) -> Dict[str, Any]:
        return {'x': self.x, 'y': self.y, 'slots': list(self.slots),
                'out_pins': list(self.out_pins), 'in_pins': list(self.in_pins),
                'feed_pins': list(self.feed_pins)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OverlayCell':
        return cls(int(data['x']), int(data['y']), [int(s) for s in data['slots']],
                   [int(s) for s in data['out_pins']], [int(p) for p in data['in_pins']],
                   [int(p) for p in data['feed_pins']])


@dataclass
class OverlayLink:
    """Pre-routed connection from a spare BLE's OPIN to an input pin of another cell."""
    src_cell: int
    src_slot: int
    dst_cell: int
    dst_pin: int
    path: List[int]

    def to_dict(self) -> Dict[str, Any]:
        return {'src_cell': self.src_cell, 'src_slot': self.src_slot,
                'dst_cell': self.dst_cell, 'dst_pin': self.dst_pin, 'path': list(self.path)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OverlayLink':
        return cls(int(data['src_cell']), int(data['src_slot']), int(data['dst_cell']),
                   int(data['dst_pin']), [int(n) for n in data['path']])


@dataclass
class OverlayFabric:
    cells: List[OverlayCell] = field(default_factory=list)
    links: List[OverlayLink] = field(default_factory=list)
    lut_size: int = 4

    def slot_keys(self) -> List[SlotKey]:
        return [(c, s) for c, cell in enumerate(self.cells) for s in cell.slots]

    @property
    def total_slots(self) -> int:
        return sum(len(cell.slots) for cell in self.cells)

    def nodes(self) -> Set[int]:
        """Every routing node on a link path."""
        return {node for link in self.links for node in link.path}

    def links_from(self) -> Dict[SlotKey, List[int]]:
        table: Dict[SlotKey, List[int]] = {}
        for i, link in enumerate(self.links):
            table.setdefault((link.src_cell, link.src_slot), []).append(i)
        return table

    def to_dict(self) -> Dict[str, Any]:
        return {'lut_size': self.lut_size,
                'cells': [cell.to_dict() for cell in self.cells],
                'links': [link.to_dict() for link in self.links]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OverlayFabric':
        try:
            return cls([OverlayCell.from_dict(c) for c in data['cells']],
                       [OverlayLink.from_dict(k) for k in data['links']],
                       int(data.get('lut_size', 4)))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed trigger fabric: {e}") from e


def _input_available(rrg: RoutingResourceGraph, mask: ResourceMask, ipin: int) -> bool:
    if not mask.is_free(ipin):
        return False
    if not all(mask.is_free(n) for n in rrg.out_edges[ipin]):
        return False
    return any(mask.is_free(n) for n in rrg.in_edges[ipin])


def _route_link(rrg: RoutingResourceGraph, work: ResourceMask, opin: int,
                targets: Set[int], goal: Tuple[float, float]) -> Optional[List[int]]:
    """Shortest FREE channel path from opin to one of the target IPINs (A*)."""
    gx, gy = goal

    def bound(node: int) -> float:
        return max(0.0, abs(rrg.cx[node] - gx) + abs(rrg.cy[node] - gy) - 1.0)

    best: Dict[int, float] = {}
    parent: Dict[int, int] = {}
    heap: List[Tuple[float, int, float]] = []
    for node in rrg.out_edges[opin]:
        if rrg.kinds[node] in CHANNEL_KINDS and work.is_free(node):
            best[node] = 1.0
            parent[node] = opin
            heapq.heappush(heap, (1.0 + bound(node), node, 1.0))
    while heap:
        _, node, g = heapq.heappop(heap)
        if g > best.get(node, math.inf):
            continue
        if node in targets:
            path = [node]
            while path[-1] != opin:
                path.append(parent[path[-1]])
            return list(reversed(path))
        if rrg.kinds[node] not in CHANNEL_KINDS:
            continue
        for nxt in rrg.out_edges[node]:
            kind = rrg.kinds[nxt]
            if not work.is_free(nxt):
                continue
            if kind not in CHANNEL_KINDS and nxt not in targets:
                continue
            ng = g + 1.0
            if ng < best.get(nxt, math.inf):
                best[nxt] = ng
                parent[nxt] = node
                heapq.heappush(heap, (ng + bound(nxt), nxt, ng))
    return None


def build_trigger_fabric(rrg: RoutingResourceGraph, mask: ResourceMask, placement: Placement,
                         arch: Optional[ArchSpec] = None, link_budget: int = 4,
                         seed: int = 1) -> OverlayFabric:
    """
    Collect spare BLEs into overlay cells and pre-route links between them.

    Links are added round-robin: each round every cell routes at most one
    new link to its nearest partner it has no link to yet, until a cell has
    link_budget outgoing links or nothing more routes.

    Args:
        rrg: Routing resource graph of the routed user circuit
        mask: Occupancy (user routing, and the trace overlay if built first)
        placement: User placement; occupied BLE slots are never spare
        arch: Architecture (defaults to the graph's)
        link_budget: Outgoing links per cell
        seed: Orders partners that are equally far away

    Returns:
        OverlayFabric, possibly with no cells
    """
    arch = arch or rrg.arch
    if link_budget < 0:
        raise ValidationError("must be >= 0", 'link_budget')
    occupied = placement.occupancy()
    cells: List[OverlayCell] = []
    for x, y in rrg.clb_locations():
        slots = [b for b in range(arch.bles_per_clb)
                 if (x, y, b) not in occupied
                 and mask.is_free(rrg.node(NodeKind.SOURCE, x, y, b))
                 and mask.is_free(rrg.node(NodeKind.OPIN, x, y, b))]
        if not slots:
            continue
        out_pins = [b for b in slots
                    if any(mask.is_free(n) for n in rrg.out_edges[rrg.node(NodeKind.OPIN, x, y, b)])]
        in_pins = [rrg.node(NodeKind.IPIN, x, y, i) for i in range(arch.clb_inputs)
                   if _input_available(rrg, mask, rrg.node(NodeKind.IPIN, x, y, i))]
        cells.append(OverlayCell(x, y, slots, out_pins, in_pins, list(in_pins)))

    fabric = OverlayFabric(cells, [], arch.lut_size_k)
    if len(cells) < 2 or link_budget == 0:
        logger.info("Trigger fabric: %d cells, %d spare BLEs, no links", len(cells), fabric.total_slots)
        return fabric

    rng = random.Random(seed)
    tiebreak = list(range(len(cells)))
    rng.shuffle(tiebreak)
    partners = []
    for i, cell in enumerate(cells):
        others = [j for j in range(len(cells)) if j != i]
        others.sort(key=lambda j: (abs(cells[j].x - cell.x) + abs(cells[j].y - cell.y), tiebreak[j], j))
        partners.append(others)
    next_partner = [0] * len(cells)
    outgoing = [0] * len(cells)
    links_per_slot: Counter = Counter()
    spare_inputs = {j: list(cell.in_pins) for j, cell in enumerate(cells)}
    work = mask.copy()

    for _ in range(link_budget):
        progress = False
        for i, cell in enumerate(cells):
            if not cell.out_pins or outgoing[i] >= link_budget:
                continue
            while next_partner[i] < len(partners[i]):
                j = partners[i][next_partner[i]]
                next_partner[i] += 1
                if len(spare_inputs[j]) <= MIN_FEED_PINS:
                    continue
                link = _link_between(rrg, work, cells, i, j, spare_inputs[j], links_per_slot)
                if link is None:
                    continue
                fabric.links.append(link)
                work.mark(link.path[1:], Occupancy.OVERLAY_TRIGGER)
                spare_inputs[j].remove(link.dst_pin)
                links_per_slot[(i, link.src_slot)] += 1
                outgoing[i] += 1
                progress = True
                break
        if not progress:
            break

    reserved = {link.dst_pin for link in fabric.links}
    for cell in cells:
        cell.feed_pins = [p for p in cell.in_pins if p not in reserved]
    logger.info("Trigger fabric: %d cells, %d spare BLEs, %d links",
                len(cells), fabric.total_slots, len(fabric.links))
    return fabric


def _link_between(rrg: RoutingResourceGraph, work: ResourceMask, cells: List[OverlayCell],
                  i: int, j: int, pins: List[int], links_per_slot: Counter) -> Optional[OverlayLink]:
    src, dst = cells[i], cells[j]
    targets = {p for p in pins if work.is_free(p)}
    if not targets:
        return None
    goal = (float(dst.x), float(dst.y))
    for slot in sorted(src.out_pins, key=lambda s: (links_per_slot[(i, s)], s)):
        opin = rrg.node(NodeKind.OPIN, src.x, src.y, slot)
        path = _route_link(rrg, work, opin, targets, goal)
        if path is not None:
            return OverlayLink(i, slot, j, path[-1], path)
    return None


def apply_fabric_to_mask(mask: ResourceMask, fabric: OverlayFabric) -> ResourceMask:
    """Copy of mask with every link node marked OVERLAY_TRIGGER."""
    result = mask.copy()
    result.mark(fabric.nodes(), Occupancy.OVERLAY_TRIGGER)
    return result


def verify_fabric(rrg: RoutingResourceGraph, mask: ResourceMask, fabric: OverlayFabric,
                  forest_nodes: Optional[Iterable[int]] = None) -> List[str]:
    """
    Re-derive the fabric invariants against the mask it was built on.

    Returns:
        Violation messages
    """
    problems: List[str] = []
    arch = rrg.arch
    forest = set(forest_nodes or ())
    for c, cell in enumerate(fabric.cells):
        if rrg.block_type(cell.x, cell.y) != BlockType.CLB:
            problems.append(f"cell {c} at ({cell.x}, {cell.y}) is not a CLB")
            continue
        for slot in cell.slots:
            for kind in (NodeKind.SOURCE, NodeKind.OPIN):
                node = rrg.node(kind, cell.x, cell.y, slot)
                if not mask.is_free(node):
                    problems.append(f"cell {c}: slot {slot} {kind.name} is {mask.flag(node).name}")
        if not set(cell.out_pins) <= set(cell.slots):
            problems.append(f"cell {c}: output pins {cell.out_pins} not all spare")
        ipins = {rrg.node(NodeKind.IPIN, cell.x, cell.y, i) for i in range(arch.clb_inputs)}
        used = sum(1 for p in ipins if mask.flag(p) == Occupancy.USER)
        if len(cell.in_pins) > arch.clb_inputs - used:
            problems.append(f"cell {c}: {len(cell.in_pins)} input pins exceed "
                            f"{arch.clb_inputs} - {used} user pins")
        for pin in cell.in_pins:
            if pin not in ipins:
                problems.append(f"cell {c}: input pin {pin} belongs to another block")
            elif not mask.is_free(pin):
                problems.append(f"cell {c}: input pin {pin} is {mask.flag(pin).name}")
        if not set(cell.feed_pins) <= set(cell.in_pins):
            problems.append(f"cell {c}: feed pins not a subset of input pins")

    owner: Dict[int, int] = {}
    for i, link in enumerate(fabric.links):
        if not (0 <= link.src_cell < len(fabric.cells) and 0 <= link.dst_cell < len(fabric.cells)):
            problems.append(f"link {i}: unknown cell")
            continue
        src, dst = fabric.cells[link.src_cell], fabric.cells[link.dst_cell]
        if link.src_slot not in src.out_pins:
            problems.append(f"link {i}: source slot {link.src_slot} has no output pin")
        if not link.path or link.path[0] != rrg.node(NodeKind.OPIN, src.x, src.y, link.src_slot):
            problems.append(f"link {i}: path does not start at its source OPIN")
        if not link.path or link.path[-1] != link.dst_pin or link.dst_pin not in dst.in_pins:
            problems.append(f"link {i}: path does not end at an input pin of cell {link.dst_cell}")
        if link.dst_pin in dst.feed_pins:
            problems.append(f"link {i}: end pin {link.dst_pin} is also a feed pin")
        for a, b in zip(link.path, link.path[1:]):
            if b not in rrg.out_edges[a]:
                problems.append(f"link {i}: {a}->{b} is not a switch")
        for node in link.path[1:]:
            if not mask.is_free(node):
                problems.append(f"link {i}: node {node} is {mask.flag(node).name}")
            if node in forest:
                problems.append(f"link {i}: node {node} is in the trace overlay")
            if node in owner:
                problems.append(f"node {node} is on links {owner[node]} and {i}")
            owner[node] = i
    return problems


# ----- mapping cost -----------------------------------------------------------

def _chain_lengths(fabric: OverlayFabric, max_links: int) -> Dict[SlotKey, Dict[int, int]]:
    """Fewest links from each linked slot to every cell within max_links."""
    links_from = fabric.links_from()
    relay_slots: Dict[int, List[int]] = {}
    for c, s in sorted(links_from):
        relay_slots.setdefault(c, []).append(s)
    table: Dict[SlotKey, Dict[int, int]] = {}
    for start in sorted(links_from):
        reach: Dict[int, int] = {}
        frontier = [start]
        for hops in range(1, max_links + 1):
            found = []
            for key in frontier:
                for i in links_from.get(key, ()):
                    cell = fabric.links[i].dst_cell
                    if cell != start[0] and cell not in reach:
                        reach[cell] = hops
                        found.append(cell)
            frontier = [(c, s) for c in found for s in relay_slots.get(c, ())]
            if not frontier:
                break
        table[start] = reach
    return table


class _CostModel:
    """Trigger connectivity and the cost of placing it on a fabric."""

    def __init__(self, fabric: OverlayFabric, trig: TriggerNetlist, params: SAParams):
        self.fabric = fabric
        self.params = params
        self.les = [block.id for block in trig.les()]
        index = {le: i for i, le in enumerate(self.les)}
        pairs: Set[Tuple[int, int]] = set()
        self.inputs_of: List[Set[str]] = [set() for _ in self.les]
        for net in trig.nets:
            for block_id, _ in net.sinks:
                if block_id not in index:
                    continue
                if net.driver in index:
                    if net.driver != block_id:
                        pairs.add((index[net.driver], index[block_id]))
                elif trig.block(net.driver).kind == BlockKind.INPUT:
                    self.inputs_of[index[block_id]].add(net.signal)
        self.connections = sorted(pairs)
        self.conns_of: List[List[int]] = [[] for _ in self.les]
        for k, (d, s) in enumerate(self.connections):
            self.conns_of[d].append(k)
            self.conns_of[s].append(k)
        fire_driver = trig.net(trig.fire).driver
        self.fire = index.get(fire_driver)
        self.out_ok = [set(cell.out_pins) for cell in fabric.cells]
        self.feed_cap = [len(cell.feed_pins) for cell in fabric.cells]
        self.chain = _chain_lengths(fabric, params.max_route_through + 1)

    def pair_cost(self, drv: SlotKey, snk: SlotKey) -> float:
        if drv[0] == snk[0]:
            return 0.0
        if drv[1] not in self.out_ok[drv[0]]:
            return self.params.gamma_blocked
        hops = self.chain.get(drv, {}).get(snk[0])
        if hops is None:
            return self.params.gamma_blocked
        return 1.0 if hops == 1 else self.params.gamma_indirect

    def fire_cost(self, slot: SlotKey) -> float:
        return 0.0 if slot[1] in self.out_ok[slot[0]] else self.params.gamma_blocked

    def pressure(self, cell: int, inputs: Counter) -> float:
        return self.params.gamma_blocked * max(0, len(inputs) - self.feed_cap[cell])

    def cell_inputs(self, assign: List[SlotKey]) -> Dict[int, Counter]:
        table: Dict[int, Counter] = {}
        for i, slot in enumerate(assign):
            for signal in self.inputs_of[i]:
                table.setdefault(slot[0], Counter())[signal] += 1
        return table

    def total(self, assign: List[SlotKey]) -> float:
        cost = sum(self.pair_cost(assign[d], assign[s]) for d, s in self.connections)
        if self.fire is not None:
            cost += self.fire_cost(assign[self.fire])
        cost += sum(self.pressure(c, inputs) for c, inputs in self.cell_inputs(assign).items())
        return cost


def mapping_cost(fabric: OverlayFabric, trig: TriggerNetlist, placement: Dict[str, SlotKey],
                 params: SAParams = SAParams()) -> float:
    """Annealing cost of an explicit LE -> (cell, slot) placement."""
    model = _CostModel(fabric, trig, params)
    return model.total([tuple(placement[le]) for le in model.les])


def min_mapping_cost(fabric: OverlayFabric, trig: TriggerNetlist,
                     params: SAParams = SAParams()) -> float:
    """Exhaustive minimum cost over every injective placement; tiny fabrics only."""
    model = _CostModel(fabric, trig, params)
    slots = fabric.slot_keys()
    if len(model.les) > len(slots):
        raise CapacityError(f"trigger has {len(model.les)} LEs, fabric has {len(slots)} spare slots")
    return min(model.total(list(assign)) for assign in itertools.permutations(slots, len(model.les)))


class _TriggerAnnealer:
    """Mutable LE placement with incremental cost."""

    def __init__(self, model: _CostModel, rng: random.Random):
        self.model = model
        self.rng = rng
        self.slots = model.fabric.slot_keys()
        self.assign: List[SlotKey] = []
        self.occupant: Dict[SlotKey, int] = {}
        self.conn_cost: List[float] = []
        self.inputs: Dict[int, Counter] = {}
        self.press: Dict[int, float] = {}
        self.fire_cost = 0.0
        cells = model.fabric.cells
        self.near: List[List[SlotKey]] = []
        self.near_dist: List[List[int]] = []
        for cell in cells:
            ranked = sorted((abs(cells[c].x - cell.x) + abs(cells[c].y - cell.y), c, s)
                            for c, s in self.slots)
            self.near.append([(c, s) for _, c, s in ranked])
            self.near_dist.append([d for d, _, _ in ranked])
        self.rlim_max = float(max((d[-1] for d in self.near_dist if d), default=1) or 1)

    def random_fill(self) -> None:
        chosen = self.rng.sample(self.slots, len(self.model.les))
        self.assign = list(chosen)
        self.occupant = {slot: i for i, slot in enumerate(self.assign)}
        model = self.model
        self.conn_cost = [model.pair_cost(self.assign[d], self.assign[s]) for d, s in model.connections]
        self.inputs = model.cell_inputs(self.assign)
        self.press = {c: model.pressure(c, inputs) for c, inputs in self.inputs.items()}
        self.fire_cost = model.fire_cost(self.assign[model.fire]) if model.fire is not None else 0.0

    def cost(self) -> float:
        return float(sum(self.conn_cost) + self.fire_cost + sum(self.press.values()))

    def propose(self, rlim: float) -> Optional[Tuple[int, SlotKey]]:
        le = self.rng.randrange(len(self.assign))
        cell = self.assign[le][0]
        limit = bisect.bisect_right(self.near_dist[cell], rlim)
        target = self.near[cell][self.rng.randrange(max(1, limit))]
        if target == self.assign[le]:
            return None
        return le, target

    def _shift(self, le: int, old: int, new: int, touched: Dict[int, float]) -> None:
        signals = self.model.inputs_of[le]
        if not signals or old == new:
            return
        for cell in (old, new):
            if cell not in touched:
                touched[cell] = self.press.get(cell, 0.0)
        for signal in signals:
            counter = self.inputs[old]
            counter[signal] -= 1
            if not counter[signal]:
                del counter[signal]
            self.inputs.setdefault(new, Counter())[signal] += 1

    def _place(self, le: int, slot: SlotKey, touched: Dict[int, float]) -> None:
        old = self.assign[le]
        self._shift(le, old[0], slot[0], touched)
        self.assign[le] = slot
        self.occupant[slot] = le

    def try_move(self, le: int, target: SlotKey) -> Tuple[float, Any]:
        model = self.model
        origin = self.assign[le]
        other = self.occupant.get(target)
        touched: Dict[int, float] = {}
        del self.occupant[origin]
        if other is not None:
            self._place(other, origin, touched)
        self._place(le, target, touched)
        affected = set(model.conns_of[le])
        if other is not None:
            affected.update(model.conns_of[other])
        delta = 0.0
        changes = []
        for k in sorted(affected):
            d, s = model.connections[k]
            changes.append((k, self.conn_cost[k]))
            self.conn_cost[k] = model.pair_cost(self.assign[d], self.assign[s])
            delta += self.conn_cost[k] - changes[-1][1]
        for cell, old in touched.items():
            self.press[cell] = model.pressure(cell, self.inputs.get(cell, Counter()))
            delta += self.press[cell] - old
        old_fire = self.fire_cost
        if model.fire is not None and model.fire in (le, other):
            self.fire_cost = model.fire_cost(self.assign[model.fire])
            delta += self.fire_cost - old_fire
        return delta, (le, other, origin, target, changes, touched, old_fire)

    def revert(self, record: Any) -> None:
        le, other, origin, target, changes, touched, old_fire = record
        scratch: Dict[int, float] = {}
        del self.occupant[target]
        if other is not None:
            del self.occupant[origin]
            self._place(other, target, scratch)
        self._place(le, origin, scratch)
        for k, old in changes:
            self.conn_cost[k] = old
        for cell, old in touched.items():
            self.press[cell] = old
        self.fire_cost = old_fire


@dataclass
class _AnnealRun:
    seed: int
    assign: List[SlotKey]
    cost: float
    history: List[float]


def _anneal(model: _CostModel, seed: int) -> _AnnealRun:
    params = model.params
    rng = random.Random(seed)
    state = _TriggerAnnealer(model, rng)
    state.random_fill()
    cost = state.cost()
    best, best_cost = list(state.assign), cost
    history = [best_cost]
    n_les = len(model.les)
    if len(state.slots) < 2 or best_cost == 0:
        return _AnnealRun(seed, best, best_cost, history)

    samples = []
    for _ in range(max(n_les, 2)):
        proposal = state.propose(state.rlim_max)
        if proposal is None:
            continue
        delta, _ = state.try_move(*proposal)
        cost += delta
        samples.append(cost)
        if cost < best_cost:
            best, best_cost = list(state.assign), cost
    cost = state.cost()
    temperature = params.init_temp_factor * float(np.std(samples)) if samples else 0.0
    moves_per_temp = params.moves_per_le * n_les
    rlim = state.rlim_max
    stalled = 0

    for _ in range(params.max_temperatures):
        accepted = 0
        improved = False
        for _ in range(moves_per_temp):
            proposal = state.propose(rlim)
            if proposal is None:
                continue
            delta, record = state.try_move(*proposal)
            if delta <= 0 or (temperature > 0 and rng.random() < math.exp(-delta / temperature)):
                cost += delta
                accepted += 1
                if cost < best_cost:
                    best, best_cost = list(state.assign), cost
                    improved = True
                    if best_cost == 0:
                        break
            else:
                state.revert(record)
        cost = state.cost()
        history.append(best_cost)
        rate = accepted / moves_per_temp
        stalled = 0 if improved else stalled + 1
        if best_cost == 0 or temperature < params.exit_temperature:
            break
        if stalled >= params.stall_temperatures and rate < params.target_acceptance:
            break
        # Random-walk temperatures are skipped quickly
        temperature *= 0.5 if rate > 0.96 else params.cooling_rate
        rlim = min(state.rlim_max, max(1.0, rlim * (1.0 - params.target_acceptance + rate)))
    return _AnnealRun(seed, best, best_cost, history)


def _anneal_task(args: Tuple[OverlayFabric, TriggerNetlist, SAParams, int]) -> _AnnealRun:
    fabric, trig, params, seed = args
    return _anneal(_CostModel(fabric, trig, params), seed)


# ----- mapping ----------------------------------------------------------------

@dataclass
class Realization:
    """How one trigger connection (driver LE -> sink LE) is carried."""
    driver: str
    sink: str
    kind: str
    links: List[int] = field(default_factory=list)
    route_through: List[SlotKey] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'driver': self.driver, 'sink': self.sink, 'kind': self.kind,
                'links': list(self.links), 'route_through': [list(k) for k in self.route_through]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Realization':
        return cls(data['driver'], data['sink'], data['kind'], [int(i) for i in data['links']],
                   [(int(c), int(s)) for c, s in data['route_through']])


@dataclass
class TriggerMapping:
    """
    Trigger netlist realized on an overlay fabric.

    Attributes:
        placement: trigger LE -> (cell index, BLE slot)
        connections: realization of every LE-to-LE connection
        cost: cost of the realized mapping
        blocked: LEs behind a blocked term; empty iff the mapping is feasible
        input_feeds: trigger input -> route tree (node -> parent, OPIN root -1)
        output_feed: route tree from the fire LE to a trigger control pin
        feed_failures: feeds that could not be routed
        annealed_cost: best cost the annealer reached
        seed: seed of the winning annealing run
    """
    placement: Dict[str, SlotKey]
    connections: List[Realization]
    cost: float
    blocked: List[str]
    input_feeds: Dict[str, Dict[int, int]] = field(default_factory=dict)
    output_feed: Dict[int, int] = field(default_factory=dict)
    feed_failures: List[str] = field(default_factory=list)
    annealed_cost: float = 0.0
    seed: int = 1
    history: List[float] = field(default_factory=list, compare=False)
    seconds: float = field(default=0.0, compare=False)

    @property
    def feasible(self) -> bool:
        return not self.blocked

    def kind_counts(self) -> Dict[str, int]:
        counts = Counter(r.kind for r in self.connections)
        return {kind: counts.get(kind, 0) for kind in REALIZATION_KINDS + [BLOCKED]}

    def route_through_slots(self) -> List[SlotKey]:
        return sorted({key for r in self.connections for key in r.route_through})

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feasible': self.feasible,
            'cost': self.cost,
            'annealed_cost': self.annealed_cost,
            'seed': self.seed,
            'placement': {le: list(slot) for le, slot in sorted(self.placement.items())},
            'connections': [r.to_dict() for r in self.connections],
            'blocked': list(self.blocked),
            'input_feeds': {signal: [[n, p] for n, p in tree.items()]
                            for signal, tree in sorted(self.input_feeds.items())},
            'output_feed': [[n, p] for n, p in self.output_feed.items()],
            'feed_failures': list(self.feed_failures),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TriggerMapping':
        try:
            return cls(
                placement={le: (int(c), int(s)) for le, (c, s) in data['placement'].items()},
                connections=[Realization.from_dict(r) for r in data['connections']],
                cost=float(data['cost']),
                blocked=list(data['blocked']),
                input_feeds={signal: {int(n): int(p) for n, p in pairs}
                             for signal, pairs in data.get('input_feeds', {}).items()},
                output_feed={int(n): int(p) for n, p in data.get('output_feed', [])},
                feed_failures=list(data.get('feed_failures', [])),
                annealed_cost=float(data.get('annealed_cost', 0.0)),
                seed=int(data.get('seed', 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed trigger mapping: {e}") from e


def _find_chain(model: _CostModel, start: SlotKey, dst_cell: int, driver: int,
                le_slots: Set[SlotKey], relays: Dict[SlotKey, int],
                links_from: Dict[SlotKey, List[int]]) -> Optional[Tuple[List[int], List[SlotKey]]]:
    """Fewest-link chain from a slot to a cell over free or same-signal relays."""
    max_links = model.params.max_route_through + 1
    queue = deque([(start, [], [])])
    seen = {start}
    while queue:
        key, links, relays_used = queue.popleft()
        for i in links_from.get(key, ()):
            link = model.fabric.links[i]
            if link.dst_cell == dst_cell:
                return links + [i], relays_used
            if len(links) + 1 >= max_links:
                continue
            cell = model.fabric.cells[link.dst_cell]
            for slot in cell.slots:
                relay = (link.dst_cell, slot)
                if relay in seen or relay not in links_from or relay in le_slots:
                    continue
                if relays.get(relay, driver) != driver:
                    continue
                seen.add(relay)
                queue.append((relay, links + [i], relays_used + [relay]))
    return None


def _realize(model: _CostModel, run: _AnnealRun) -> TriggerMapping:
    params = model.params
    fabric = model.fabric
    assign = run.assign
    les = model.les
    le_slots = set(assign)
    links_from = fabric.links_from()
    relays: Dict[SlotKey, int] = {}
    realizations: List[Realization] = []
    blocked: Set[str] = set()
    cost = 0.0
    for d, s in model.connections:
        a, b = assign[d], assign[s]
        if a[0] == b[0]:
            realizations.append(Realization(les[d], les[s], INTRA))
            continue
        chain = None
        if a[1] in model.out_ok[a[0]]:
            chain = _find_chain(model, a, b[0], d, le_slots, relays, links_from)
        if chain is None:
            realizations.append(Realization(les[d], les[s], BLOCKED))
            blocked.update((les[d], les[s]))
            cost += params.gamma_blocked
            continue
        links, through = chain
        for relay in through:
            relays[relay] = d
        kind = LINK if len(links) == 1 else INDIRECT
        cost += 1.0 if kind == LINK else params.gamma_indirect
        realizations.append(Realization(les[d], les[s], kind, links, through))
    if model.fire is not None:
        fire_cost = model.fire_cost(assign[model.fire])
        if fire_cost:
            blocked.add(les[model.fire])
            cost += fire_cost
    for cell, inputs in sorted(model.cell_inputs(assign).items()):
        excess = model.pressure(cell, inputs)
        if excess:
            blocked.update(les[i] for i, slot in enumerate(assign)
                           if slot[0] == cell and model.inputs_of[i])
            cost += excess
    placement = {les[i]: assign[i] for i in range(len(les))}
    return TriggerMapping(placement, realizations, cost, sorted(blocked),
                          annealed_cost=run.cost, seed=run.seed, history=list(run.history))


def _route_feeds(mapping: TriggerMapping, model: _CostModel, rrg: RoutingResourceGraph,
                 mask: ResourceMask, opins: Dict[str, int]) -> None:
    """Route trigger inputs and the fire output over FREE routing, best effort."""
    fabric = model.fabric
    router = PathFinderRouter(rrg, PathFinderParams())
    free = np.array([mask.is_free(n) for n in range(rrg.node_count)], dtype=bool)
    router.blocked = router.blocked | ~free
    for node in fabric.nodes():
        router.blocked[node] = True
    pins_left = {c: list(cell.feed_pins) for c, cell in enumerate(fabric.cells)}
    sink_of = {pin: rrg.out_edges[pin][0] for cell in fabric.cells for pin in cell.feed_pins}

    consumers: Dict[str, Set[int]] = {}
    for i, le in enumerate(model.les):
        for signal in model.inputs_of[i]:
            consumers.setdefault(signal, set()).add(mapping.placement[le][0])
    for signal in sorted(consumers):
        opin = opins.get(signal)
        if opin is None:
            mapping.feed_failures.append(f"{signal}: signal has no OPIN")
            continue
        targets = []
        for c in sorted(consumers[signal]):
            sinks = tuple(sink_of[p] for p in pins_left[c])
            if not sinks:
                mapping.feed_failures.append(f"{signal}: cell {c} has no free feed pin")
                continue
            targets.append(((fabric.cells[c].x, fabric.cells[c].y), sinks))
        if not targets:
            continue
        tree = router.route_one(RouteNet(signal, opin, targets))
        for (loc, sinks) in targets:
            reached = [n for n in sinks if n in tree]
            if not reached:
                mapping.feed_failures.append(f"{signal}: no route to cell at {loc}")
                continue
            c = next(i for i, cell in enumerate(fabric.cells) if cell.location == loc)
            pins_left[c].remove(tree[reached[0]])
        for node in tree:
            router.blocked[node] = True
        mapping.input_feeds[signal] = dict(sorted(tree.items()))

    if model.fire is None:
        return
    c, slot = mapping.placement[model.les[model.fire]]
    cell = fabric.cells[c]
    opin = rrg.node(NodeKind.OPIN, cell.x, cell.y, slot)
    controls = sorted((abs(rrg.xs[p] - cell.x) + abs(rrg.ys[p] - cell.y), p)
                      for p in rrg.trigger_pins() if mask.is_free(p))
    for _, pin in controls[:4]:
        router.blocked[pin] = False
        tree = router.route_one(RouteNet("fire", opin, [((rrg.xs[pin], rrg.ys[pin]), (pin,))]))
        router.blocked[pin] = True
        if pin in tree:
            mapping.output_feed = dict(sorted(tree.items()))
            return
    mapping.feed_failures.append("fire: no route to a trigger control pin")


def map_trigger(fabric: OverlayFabric, trig: TriggerNetlist, params: SAParams = SAParams(),
                rrg: Optional[RoutingResourceGraph] = None, mask: Optional[ResourceMask] = None,
                opins: Optional[Dict[str, int]] = None, jobs: int = 1) -> TriggerMapping:
    """
    Anneal a trigger netlist onto the overlay fabric and realize it.

    Args:
        fabric: Trigger fabric
        trig: Trigger netlist
        params: Annealer settings
        rrg, mask, opins: When given, feasible mappings also get their
            input and output feeds routed over FREE nodes of mask
        jobs: Worker processes for the restarts

    Returns:
        Best mapping over all restarts; infeasible mappings list their
        blocked LEs

    Raises:
        CapacityError: if the trigger has more LEs than spare slots or a LUT
            wider than the fabric's LUTs
    """
    params.validate()
    n_les = len(trig.les())
    if n_les > fabric.total_slots:
        raise CapacityError(f"trigger has {n_les} LEs, fabric has {fabric.total_slots} spare slots")
    if trig.max_lut_inputs() > fabric.lut_size:
        raise CapacityError(f"trigger LUT with {trig.max_lut_inputs()} inputs exceeds K={fabric.lut_size}")
    with Stopwatch() as watch:
        tasks = [(fabric, trig, params, seed) for seed in params.run_seeds()]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
                runs = list(pool.map(_anneal_task, tasks))
        else:
            runs = [_anneal_task(task) for task in tasks]
        best = min(enumerate(runs), key=lambda item: (item[1].cost, item[0]))[1]
        model = _CostModel(fabric, trig, params)
        mapping = _realize(model, best)
        if mapping.feasible and rrg is not None and mask is not None:
            _route_feeds(mapping, model, rrg, mask, opins or {})
    mapping.seconds = watch.seconds
    logger.info("Mapped trigger %s: %d LEs, cost %.1f, %s (%.3fs)", trig.name, n_les, mapping.cost,
                "feasible" if mapping.feasible else f"INFEASIBLE ({', '.join(mapping.blocked)})",
                watch.seconds)
    return mapping


def verify_mapping(fabric: OverlayFabric, trig: TriggerNetlist, mapping: TriggerMapping,
                   rrg: Optional[RoutingResourceGraph] = None,
                   mask: Optional[ResourceMask] = None) -> List[str]:
    """
    Re-derive a mapping's legality.

    Checks slot injectivity, that every connection is traceable over links and
    route-through LEs, pin availability, LUT fan-in and, when rrg and mask
    are given, that feed routes are legal and use FREE nodes only.

    Returns:
        Violation messages
    """
    problems: List[str] = []
    les = [block.id for block in trig.les()]
    slots = set(fabric.slot_keys())
    holder: Dict[SlotKey, str] = {}
    for le in les:
        if le not in mapping.placement:
            problems.append(f"LE {le} is not placed")
    for le, slot in sorted(mapping.placement.items()):
        slot = tuple(slot)
        if slot not in slots:
            problems.append(f"LE {le} sits on {slot}, not a spare slot")
        if slot in holder:
            problems.append(f"slot {slot} holds both {holder[slot]} and {le}")
        holder[slot] = le
    for block in trig.les():
        if len(block.inputs) > fabric.lut_size:
            problems.append(f"LE {block.id} has {len(block.inputs)} inputs > K={fabric.lut_size}")
    relay_owner: Dict[SlotKey, str] = {}

    expected = set()
    index = set(les)
    for net in trig.nets:
        if net.driver not in index:
            continue
        for block_id, _ in net.sinks:
            if block_id in index and block_id != net.driver:
                expected.add((net.driver, block_id))
    seen = set()
    for r in mapping.connections:
        pair = (r.driver, r.sink)
        seen.add(pair)
        if pair not in expected:
            problems.append(f"connection {r.driver}->{r.sink} is not in the trigger")
            continue
        if r.driver not in mapping.placement or r.sink not in mapping.placement:
            continue
        a, b = tuple(mapping.placement[r.driver]), tuple(mapping.placement[r.sink])
        if r.kind == INTRA:
            if a[0] != b[0]:
                problems.append(f"{r.driver}->{r.sink} marked INTRA across cells {a[0]} and {b[0]}")
            continue
        if r.kind == BLOCKED:
            if mapping.feasible:
                problems.append(f"{r.driver}->{r.sink} is blocked in a feasible mapping")
            continue
        if a[1] not in fabric.cells[a[0]].out_pins:
            problems.append(f"{r.driver} drives {r.sink} from slot {a} without an output pin")
        problems.extend(_trace_chain(fabric, r, a, b, holder, relay_owner))
    for pair in sorted(expected - seen):
        problems.append(f"connection {pair[0]}->{pair[1]} is not realized")

    for slot, owner in relay_owner.items():
        if slot in holder:
            problems.append(f"route-through slot {slot} also holds LE {holder[slot]}")
    inputs_in: Dict[int, Set[str]] = {}
    primary = set(trig.inputs)
    for block in trig.les():
        if block.id not in mapping.placement:
            continue
        cell = mapping.placement[block.id][0]
        inputs_in.setdefault(cell, set()).update(s for s in block.inputs if s in primary)
    for cell, signals in sorted(inputs_in.items()):
        if len(signals) > len(fabric.cells[cell].feed_pins) and mapping.feasible:
            problems.append(f"cell {cell} needs {len(signals)} trigger inputs, "
                            f"has {len(fabric.cells[cell].feed_pins)} feed pins")
    if rrg is not None and mask is not None:
        problems.extend(_check_feeds(fabric, mapping, rrg, mask))
    return problems


def _trace_chain(fabric: OverlayFabric, r: Realization, a: SlotKey, b: SlotKey,
                 holder: Dict[SlotKey, str], relay_owner: Dict[SlotKey, str]) -> List[str]:
    problems = []
    name = f"{r.driver}->{r.sink}"
    if not r.links:
        return [f"{name}: {r.kind} realization has no links"]
    if any(not 0 <= i < len(fabric.links) for i in r.links):
        return [f"{name}: unknown link"]
    chain = [fabric.links[i] for i in r.links]
    expected_kind = LINK if len(chain) == 1 else INDIRECT
    if r.kind != expected_kind:
        problems.append(f"{name}: {len(chain)} links marked {r.kind}")
    if (chain[0].src_cell, chain[0].src_slot) != a:
        problems.append(f"{name}: first link does not leave the driver slot {a}")
    hops = [(link.src_cell, link.src_slot) for link in chain[1:]]
    if hops != [tuple(k) for k in r.route_through]:
        problems.append(f"{name}: route-through slots do not match the link chain")
    for prev, link in zip(chain, chain[1:]):
        if prev.dst_cell != link.src_cell:
            problems.append(f"{name}: link into cell {prev.dst_cell} continues from cell {link.src_cell}")
    if chain[-1].dst_cell != b[0]:
        problems.append(f"{name}: chain ends in cell {chain[-1].dst_cell}, sink is in cell {b[0]}")
    for relay in hops:
        owner = relay_owner.setdefault(relay, r.driver)
        if owner != r.driver:
            problems.append(f"route-through slot {relay} relays both {owner} and {r.driver}")
    return problems


def _check_feeds(fabric: OverlayFabric, mapping: TriggerMapping, rrg: RoutingResourceGraph,
                 mask: ResourceMask) -> List[str]:
    problems = []
    link_nodes = fabric.nodes()
    feed_pins = {p for cell in fabric.cells for p in cell.feed_pins}
    owner: Dict[int, str] = {}
    trees = dict(mapping.input_feeds)
    if mapping.output_feed:
        trees['<fire>'] = mapping.output_feed
    for name, tree in sorted(trees.items()):
        for node, parent in sorted(tree.items()):
            if parent == -1:
                continue
            if node not in rrg.out_edges[parent]:
                problems.append(f"feed {name}: {parent}->{node} is not a switch")
            if not mask.is_free(node):
                problems.append(f"feed {name}: node {node} is {mask.flag(node).name}")
            if node in link_nodes:
                problems.append(f"feed {name}: node {node} is on a link")
            if rrg.kinds[node] == NodeKind.IPIN and node not in feed_pins:
                problems.append(f"feed {name}: enters input pin {node} that is not a feed pin")
            if node in owner and owner[node] != name:
                problems.append(f"node {node} is on feeds {owner[node]} and {name}")
            owner[node] = name
    return problems


# ----- recompile baseline -----------------------------------------------------

@dataclass
class RecompileResult:
    success: bool
    seconds: float
    placement: Placement
    routing: Routing


def baseline_recompile_trigger(netlist: Netlist, trig: TriggerNetlist, arch: ArchSpec, seed: int = 1,
                               placer_params: PlacerParams = PlacerParams(),
                               router_params: PathFinderParams = PathFinderParams()) -> RecompileResult:
    """
    Insert a trigger the slow way: merge it and place and route from scratch.

    Raises:
        CapacityError: if the merged circuit does not fit arch
    """
    with Stopwatch() as watch:
        merged = merge_trigger(netlist, trig)
        placement = place(merged, arch, seed, placer_params)
        result = route(merged, placement, build_rrg(arch), seed, params=router_params)
    logger.info("Recompiled %s with trigger %s in %.2fs: %s", netlist.name, trig.name, watch.seconds,
                "routed" if result.success else "unroutable")
    return RecompileResult(result.success, watch.seconds, placement, result.routing)
