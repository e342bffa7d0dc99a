"""
Island-style FPGA fabric model for the FPGA Debug Overlay Toolkit.

This module defines the parameterized architecture (ArchSpec), builds its
routing resource graph (RRG) and tracks which routing nodes are already
claimed by the user circuit or by one of the debug overlays (ResourceMask).

Grid conventions follow the classic island-style model: perimeter I/O ring at
x = 0, x = NX + 1, y = 0 and y = NY + 1; CLB and trace-buffer columns in
between. CHANX(x, y) runs along column x between rows y and y + 1, CHANY(x, y)
runs along row y between columns x and x + 1. Wire segments have length one
and the switch blocks use the disjoint pattern.
"""

import logging
import math
from dataclasses import dataclass, asdict, fields, replace
from enum import IntEnum
from typing import Dict, List, Optional, Tuple, Iterable, Any

import networkx as nx

import common_utils
from errors import ValidationError

logger = logging.getLogger(__name__)


class NodeKind(IntEnum):
    """Kinds of routing resource graph nodes."""
    SOURCE = 0
    OPIN = 1
    CHANX = 2
    CHANY = 3
    IPIN = 4
    SINK = 5
    TB_IPIN = 6


class Occupancy(IntEnum):
    """Per-node ownership flags of a ResourceMask."""
    FREE = 0
    USER = 1
    OVERLAY_TRACE = 2
    OVERLAY_TRIGGER = 3


class BlockType(IntEnum):
    """Kinds of grid tiles."""
    EMPTY = 0
    CLB = 1
    IO = 2
    TB = 3


CHANNEL_KINDS = (NodeKind.CHANX, NodeKind.CHANY)


@dataclass(frozen=True)
class ArchSpec:
    """
    Parameterized island-style architecture.

    Attributes:
        grid_width: Number of CLB columns
        grid_height: Number of CLB rows
        lut_size_k: Inputs per LUT
        bles_per_clb: BLEs per CLB; each BLE holds one LUT or one FF
        clb_inputs: Logically equivalent input pins per CLB
        channel_width_w: Tracks per routing channel (even)
        fc_in: Fraction of adjacent tracks each input pin connects to
        fc_out: Fraction of adjacent tracks each output pin drives
        tb_column_period: Every Nth interior column is a trace-buffer column
            (0 disables trace buffers)
        tb_inputs_per_block: Trace inputs per trace-buffer block
        tb_fc: Fraction of adjacent tracks each trace input connects to
        io_capacity: Pads per perimeter I/O location
    """
    grid_width: int
    grid_height: int
    lut_size_k: int = 4
    bles_per_clb: int = 4
    clb_inputs: int = 10
    channel_width_w: int = 12
    fc_in: float = 0.5
    fc_out: float = 1.0
    tb_column_period: int = 4
    tb_inputs_per_block: int = 4
    tb_fc: float = 0.5
    io_capacity: int = 2

    def validate(self) -> 'ArchSpec':
        """
        Check every ArchSpec invariant.

        Returns:
            self, so calls can be chained

        Raises:
            ValidationError: naming the first offending field
        """
        for name in ('grid_width', 'grid_height', 'bles_per_clb', 'clb_inputs',
                     'io_capacity'):
            if int(getattr(self, name)) < 1:
                raise ValidationError("must be >= 1", name)
        if self.lut_size_k < 2:
            raise ValidationError("must be >= 2", 'lut_size_k')
        if self.channel_width_w < 2:
            raise ValidationError("must be >= 2", 'channel_width_w')
        if self.channel_width_w % 2:
            raise ValidationError("must be even (paired directionality)", 'channel_width_w')
        for name in ('fc_in', 'fc_out', 'tb_fc'):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValidationError(f"must satisfy 0 < value <= 1, got {value}", name)
        if self.tb_column_period < 0 or self.tb_column_period == 1:
            raise ValidationError("must be 0 or >= 2 (trace-buffer columns never adjacent)",
                                  'tb_column_period')
        if self.tb_inputs_per_block < 1:
            raise ValidationError("must be >= 1", 'tb_inputs_per_block')
        return self

    def with_width(self, channel_width: int) -> 'ArchSpec':
        """Return a copy with a different channel width."""
        return replace(self, channel_width_w=int(channel_width))

    def column_kinds(self) -> List[BlockType]:
        """
        Lay out the interior columns.

        Returns:
            Block type for every x from 0 to NX + 1 (I/O columns included)
        """
        columns = [BlockType.IO]
        clb_columns = 0
        c = 0
        while clb_columns < self.grid_width:
            c += 1
            if self.tb_column_period and c % self.tb_column_period == 0:
                columns.append(BlockType.TB)
            else:
                columns.append(BlockType.CLB)
                clb_columns += 1
        columns.append(BlockType.IO)
        return columns

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ArchSpec':
        """
        Build an ArchSpec from a JSON document with the ArchSpec field names.

        Raises:
            ValidationError: on unknown or missing fields or broken invariants
        """
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValidationError(f"unknown architecture field(s): {', '.join(unknown)}")
        missing = [name for name in ('grid_width', 'grid_height') if name not in data]
        if missing:
            raise ValidationError(f"missing architecture field(s): {', '.join(missing)}")
        values = {}
        for name, value in data.items():
            caster = float if known[name].type in (float, 'float') else int
            try:
                values[name] = caster(value)
            except (TypeError, ValueError) as e:
                raise ValidationError(f"not a number: {value!r}", name) from e
        return cls(**values).validate()


def load_arch(filename: str) -> ArchSpec:
    """Load and validate an architecture JSON file."""
    data = common_utils.load_json(filename)
    if not data:
        raise ValidationError(f"architecture file {filename} is missing or empty")
    return ArchSpec.from_dict(data)


def save_arch(arch: ArchSpec, filename: str) -> None:
    common_utils.save_json(arch.to_dict(), filename)


def size_arch(template: ArchSpec, ble_blocks: int, io_blocks: int,
              utilization: float = 0.8) -> ArchSpec:
    """
    Size a grid so that the logic utilization lands near the target.

    Args:
        template: Architecture supplying every parameter except the grid size
        ble_blocks: Number of LUT plus FF blocks to place
        io_blocks: Number of INPUT plus OUTPUT blocks to place
        utilization: Target fraction of occupied BLE slots

    Returns:
        Validated ArchSpec large enough for the circuit
    """
    if not 0.0 < utilization <= 1.0:
        raise ValidationError("must satisfy 0 < utilization <= 1", 'utilization')
    clbs_needed = max(1, math.ceil(ble_blocks / (template.bles_per_clb * utilization)))
    width = 1
    while width * width < clbs_needed:
        width += 1
    height = max(1, -(-clbs_needed // width))
    while width * height * template.bles_per_clb < ble_blocks:
        height += 1
    arch = replace(template, grid_width=width, grid_height=height)
    io_capacity = arch.io_capacity
    interior_columns = len(arch.column_kinds()) - 2
    while 2 * (interior_columns + height) * io_capacity < io_blocks:
        io_capacity += 1
    return replace(arch, io_capacity=io_capacity).validate()


def arch_for_netlist(netlist: Any, template: ArchSpec, utilization: float = 0.8) -> ArchSpec:
    """Size template's grid for a circuits.Netlist."""
    return size_arch(template, netlist.ble_block_count(), netlist.io_block_count(), utilization)


def _pin_tracks(fc: float, width: int, offset: int) -> List[int]:
    """Evenly spaced tracks a pin connects to, rotated by the pin offset."""
    count = max(1, min(width, int(fc * width + 0.5)))
    step = width / count
    return sorted({(offset + int(k * step)) % width for k in range(count)})


class GridLayout:
    """Tile types of an architecture, independent of the channel width."""

    def __init__(self, arch: ArchSpec):
        self.arch = arch
        self.columns: List[BlockType] = arch.column_kinds()
        self.nx = len(self.columns) - 2
        self.ny = arch.grid_height

    def block_type(self, x: int, y: int) -> BlockType:
        if x < 0 or x > self.nx + 1 or y < 0 or y > self.ny + 1:
            return BlockType.EMPTY
        on_x_edge = x in (0, self.nx + 1)
        on_y_edge = y in (0, self.ny + 1)
        if on_x_edge and on_y_edge:
            return BlockType.EMPTY
        if on_x_edge or on_y_edge:
            return BlockType.IO
        return self.columns[x]

    def clb_locations(self) -> List[Tuple[int, int]]:
        return [(x, y) for x in range(1, self.nx + 1) for y in range(1, self.ny + 1)
                if self.columns[x] == BlockType.CLB]

    def io_locations(self) -> List[Tuple[int, int]]:
        return [(x, y) for x in range(self.nx + 2) for y in range(self.ny + 2)
                if self.block_type(x, y) == BlockType.IO]

    def tb_locations(self) -> List[Tuple[int, int]]:
        return [(x, y) for x in range(1, self.nx + 1) for y in range(1, self.ny + 1)
                if self.columns[x] == BlockType.TB]


class RoutingResourceGraph:
    """
    Directed routing resource graph of one architecture instance.

    Nodes are stored in parallel lists indexed by node id; edges are kept as
    sorted adjacency lists in both directions. Every node has capacity one.
    The graph is immutable once build_rrg returns it.
    """

    def __init__(self, arch: ArchSpec):
        self.arch = arch
        self.grid = GridLayout(arch)
        self.nx = self.grid.nx
        self.ny = self.grid.ny
        self.kinds: List[NodeKind] = []
        self.xs: List[int] = []
        self.ys: List[int] = []
        self.indices: List[int] = []
        self.cx: List[float] = []
        self.cy: List[float] = []
        self.out_edges: List[List[int]] = []
        self.in_edges: List[List[int]] = []
        self._lookup: Dict[Tuple[int, int, int, int], int] = {}

    # ----- construction helpers -------------------------------------------------

    def _add_node(self, kind: NodeKind, x: int, y: int, index: int) -> int:
        node = len(self.kinds)
        self.kinds.append(kind)
        self.xs.append(x)
        self.ys.append(y)
        self.indices.append(index)
        if kind == NodeKind.CHANX:
            self.cx.append(float(x))
            self.cy.append(y + 0.5)
        elif kind == NodeKind.CHANY:
            self.cx.append(x + 0.5)
            self.cy.append(float(y))
        else:
            self.cx.append(float(x))
            self.cy.append(float(y))
        self.out_edges.append([])
        self._lookup[(int(kind), x, y, index)] = node
        return node

    def _add_edge(self, src: int, dst: int) -> None:
        self.out_edges[src].append(dst)

    # ----- queries --------------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.kinds)

    @property
    def edge_count(self) -> int:
        return sum(len(out) for out in self.out_edges)

    def edges(self) -> Iterable[Tuple[int, int]]:
        for src, outs in enumerate(self.out_edges):
            for dst in outs:
                yield src, dst

    def node(self, kind: NodeKind, x: int, y: int, index: int) -> int:
        """
        Look up a node id.

        Raises:
            KeyError: if the node does not exist
        """
        return self._lookup[(int(kind), x, y, index)]

    def find(self, kind: NodeKind, x: int, y: int, index: int) -> Optional[int]:
        return self._lookup.get((int(kind), x, y, index))

    def block_type(self, x: int, y: int) -> BlockType:
        return self.grid.block_type(x, y)

    def clb_locations(self) -> List[Tuple[int, int]]:
        return self.grid.clb_locations()

    def io_locations(self) -> List[Tuple[int, int]]:
        return self.grid.io_locations()

    def tb_locations(self) -> List[Tuple[int, int]]:
        return self.grid.tb_locations()

    def trace_inputs(self) -> List[int]:
        """All TB_IPIN nodes that feed trace memories (control pins excluded)."""
        limit = self.arch.tb_inputs_per_block
        return [n for n, kind in enumerate(self.kinds)
                if kind == NodeKind.TB_IPIN and self.indices[n] < limit]

    def trigger_pins(self) -> List[int]:
        """The per-block trigger-control TB_IPIN nodes."""
        limit = self.arch.tb_inputs_per_block
        return [n for n, kind in enumerate(self.kinds)
                if kind == NodeKind.TB_IPIN and self.indices[n] == limit]

    def fan_in(self, node: int) -> int:
        return len(self.in_edges[node])

    def is_mux(self, node: int) -> bool:
        """A routing multiplexer is any node with fan-in of two or more."""
        return len(self.in_edges[node]) >= 2

    def describe(self, node: int) -> str:
        return (f"{self.kinds[node].name}({self.xs[node]},{self.ys[node]})"
                f"#{self.indices[node]}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'arch': self.arch.to_dict(),
            'nodes': [[self.kinds[n].name, self.xs[n], self.ys[n], self.indices[n], 1]
                      for n in range(self.node_count)],
            'edges': [[src, dst] for src, dst in self.edges()],
        }

    def serialize(self) -> str:
        """Canonical JSON text of the graph (golden-file form)."""
        return common_utils.dump_json_text(self.to_dict())

    def kind_histogram(self) -> Dict[str, int]:
        histogram: Dict[str, int] = {}
        for kind in self.kinds:
            histogram[kind.name] = histogram.get(kind.name, 0) + 1
        return histogram

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(self.edges())
        return graph


def build_rrg(arch: ArchSpec) -> RoutingResourceGraph:
    """
    Build the routing resource graph of an architecture.

    Node ordering is a pure function of the architecture: block pins tile by
    tile (x major), then CHANX nodes row by row, then CHANY nodes column by
    column. Adjacency lists are sorted.

    Args:
        arch: Architecture to elaborate

    Returns:
        The immutable RoutingResourceGraph

    Raises:
        ValidationError: if the architecture breaks an ArchSpec invariant
    """
    arch.validate()
    rrg = RoutingResourceGraph(arch)
    width = arch.channel_width_w
    nxc, nyc = rrg.nx, rrg.ny

    # Block pins
    for x in range(nxc + 2):
        for y in range(nyc + 2):
            block = rrg.block_type(x, y)
            if block == BlockType.CLB:
                for b in range(arch.bles_per_clb):
                    source = rrg._add_node(NodeKind.SOURCE, x, y, b)
                    opin = rrg._add_node(NodeKind.OPIN, x, y, b)
                    rrg._add_edge(source, opin)
                for i in range(arch.clb_inputs):
                    ipin = rrg._add_node(NodeKind.IPIN, x, y, i)
                    sink = rrg._add_node(NodeKind.SINK, x, y, i)
                    rrg._add_edge(ipin, sink)
            elif block == BlockType.IO:
                for p in range(arch.io_capacity):
                    source = rrg._add_node(NodeKind.SOURCE, x, y, p)
                    opin = rrg._add_node(NodeKind.OPIN, x, y, p)
                    rrg._add_edge(source, opin)
                    ipin = rrg._add_node(NodeKind.IPIN, x, y, p)
                    sink = rrg._add_node(NodeKind.SINK, x, y, p)
                    rrg._add_edge(ipin, sink)
            elif block == BlockType.TB:
                for i in range(arch.tb_inputs_per_block + 1):
                    rrg._add_node(NodeKind.TB_IPIN, x, y, i)

    # Channel tracks
    for y in range(nyc + 1):
        for x in range(1, nxc + 1):
            for t in range(width):
                rrg._add_node(NodeKind.CHANX, x, y, t)
    for x in range(nxc + 1):
        for y in range(1, nyc + 1):
            for t in range(width):
                rrg._add_node(NodeKind.CHANY, x, y, t)

    def adjacent_channels(x: int, y: int, block: BlockType) -> List[Tuple[NodeKind, int, int]]:
        if block == BlockType.CLB:
            return [(NodeKind.CHANX, x, y), (NodeKind.CHANY, x, y),
                    (NodeKind.CHANX, x, y - 1), (NodeKind.CHANY, x - 1, y)]
        if block == BlockType.TB:
            return [(NodeKind.CHANX, x, y)]
        if x == 0:
            return [(NodeKind.CHANY, 0, y)]
        if x == nxc + 1:
            return [(NodeKind.CHANY, nxc, y)]
        if y == 0:
            return [(NodeKind.CHANX, x, 0)]
        return [(NodeKind.CHANX, x, nyc)]

    # Pin to track connections
    for x in range(nxc + 2):
        for y in range(nyc + 2):
            block = rrg.block_type(x, y)
            if block == BlockType.EMPTY:
                continue
            channels = adjacent_channels(x, y, block)
            if block == BlockType.TB:
                for i in range(arch.tb_inputs_per_block + 1):
                    pin = rrg.node(NodeKind.TB_IPIN, x, y, i)
                    for kind, chx, chy in channels:
                        for t in _pin_tracks(arch.tb_fc, width, i):
                            rrg._add_edge(rrg.node(kind, chx, chy, t), pin)
                continue
            outputs = arch.bles_per_clb if block == BlockType.CLB else arch.io_capacity
            inputs = arch.clb_inputs if block == BlockType.CLB else arch.io_capacity
            for o in range(outputs):
                opin = rrg.node(NodeKind.OPIN, x, y, o)
                for kind, chx, chy in channels:
                    for t in _pin_tracks(arch.fc_out, width, o):
                        rrg._add_edge(opin, rrg.node(kind, chx, chy, t))
            for i in range(inputs):
                ipin = rrg.node(NodeKind.IPIN, x, y, i)
                for kind, chx, chy in channels:
                    for t in _pin_tracks(arch.fc_in, width, i):
                        rrg._add_edge(rrg.node(kind, chx, chy, t), ipin)

    # Disjoint switch blocks at every channel corner
    for sx in range(nxc + 1):
        for sy in range(nyc + 1):
            segments = []
            if sx >= 1:
                segments.append((NodeKind.CHANX, sx, sy))
            if sx + 1 <= nxc:
                segments.append((NodeKind.CHANX, sx + 1, sy))
            if sy >= 1:
                segments.append((NodeKind.CHANY, sx, sy))
            if sy + 1 <= nyc:
                segments.append((NodeKind.CHANY, sx, sy + 1))
            for a in segments:
                for b in segments:
                    if a == b:
                        continue
                    for t in range(width):
                        rrg._add_edge(rrg.node(a[0], a[1], a[2], t), rrg.node(b[0], b[1], b[2], t))

    rrg.in_edges = [[] for _ in range(rrg.node_count)]
    for src in range(rrg.node_count):
        outs = sorted(set(rrg.out_edges[src]))
        rrg.out_edges[src] = outs
        for dst in outs:
            rrg.in_edges[dst].append(src)

    logger.debug("Built RRG: %d nodes, %d edges (W=%d, %dx%d interior)",
                 rrg.node_count, rrg.edge_count, width, nxc, nyc)
    return rrg


def check_rrg(rrg: RoutingResourceGraph) -> List[str]:
    """
    Re-derive the structural invariants of a routing resource graph.

    Returns:
        Human-readable violation messages; empty when the graph is sound
    """
    problems: List[str] = []
    kinds = rrg.kinds
    for node in range(rrg.node_count):
        kind = kinds[node]
        if node in rrg.out_edges[node]:
            problems.append(f"self-loop at {rrg.describe(node)}")
        if kind == NodeKind.OPIN:
            sources = [s for s in rrg.in_edges[node] if kinds[s] == NodeKind.SOURCE]
            if len(sources) != 1 or len(rrg.in_edges[node]) != 1:
                problems.append(f"{rrg.describe(node)} must be driven by exactly one SOURCE")
        elif kind == NodeKind.IPIN:
            sinks = [s for s in rrg.out_edges[node] if kinds[s] == NodeKind.SINK]
            if len(sinks) != 1:
                problems.append(f"{rrg.describe(node)} must feed exactly one SINK")
        elif kind == NodeKind.TB_IPIN:
            if not rrg.in_edges[node]:
                problems.append(f"{rrg.describe(node)} has no driving track")
        elif kind in CHANNEL_KINDS:
            for dst in rrg.out_edges[node]:
                if kinds[dst] in CHANNEL_KINDS and rrg.indices[dst] != rrg.indices[node]:
                    problems.append(f"switch {rrg.describe(node)} -> {rrg.describe(dst)} "
                                    "changes track")

    graph = rrg.to_networkx()
    sink_anchor = -1
    graph.add_edges_from((n, sink_anchor) for n in range(rrg.node_count)
                         if kinds[n] == NodeKind.SINK)
    reaching = nx.ancestors(graph, sink_anchor)
    for node in range(rrg.node_count):
        if kinds[node] == NodeKind.SOURCE and node not in reaching:
            problems.append(f"{rrg.describe(node)} reaches no SINK")
    return problems


class ResourceMask:
    """
    Per-node occupancy of a routing resource graph.

    A node is USER iff some user-circuit route uses it; overlay builders mark
    the nodes they claim with their own flag so later builders skip them.
    """

    def __init__(self, node_count: int, flags: Optional[List[int]] = None):
        if flags is not None and len(flags) != node_count:
            raise ValidationError(f"mask has {len(flags)} entries, graph has {node_count} nodes")
        self.flags: List[int] = list(flags) if flags is not None else [Occupancy.FREE] * node_count

    def __len__(self) -> int:
        return len(self.flags)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ResourceMask) and self.flags == other.flags

    def is_free(self, node: int) -> bool:
        return self.flags[node] == Occupancy.FREE

    def flag(self, node: int) -> Occupancy:
        return Occupancy(self.flags[node])

    def mark(self, nodes: Iterable[int], flag: Occupancy) -> None:
        for node in nodes:
            self.flags[node] = int(flag)

    def nodes_with(self, flag: Occupancy) -> List[int]:
        return [n for n, value in enumerate(self.flags) if value == flag]

    def count(self, flag: Occupancy) -> int:
        return sum(1 for value in self.flags if value == flag)

    def copy(self) -> 'ResourceMask':
        return ResourceMask(len(self.flags), self.flags)

    def to_dict(self) -> Dict[str, Any]:
        return {'flags': ''.join(str(int(value)) for value in self.flags)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ResourceMask':
        flags = [int(ch) for ch in data['flags']]
        return cls(len(flags), flags)


def spare_mask(rrg: RoutingResourceGraph, user_routing: Any) -> ResourceMask:
    """
    Mark every node used by the user routing as USER, all others FREE.

    Args:
        rrg: Routing resource graph the routing was produced on
        user_routing: Object exposing used_nodes() (a baseline_pnr.Routing)

    Returns:
        New ResourceMask
    """
    mask = ResourceMask(rrg.node_count)
    mask.mark(user_routing.used_nodes(), Occupancy.USER)
    return mask
