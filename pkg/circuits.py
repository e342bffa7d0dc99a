"""
Netlists for the FPGA Debug Overlay Toolkit.

Parses and emits the BLIF subset (.model, .inputs, .outputs, .names, .latch,
.end), validates netlist structure and generates synthetic user circuits and
trigger circuits. Every LUT, FF and primary input output is an observable
user signal.
"""

import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, Iterable

import networkx as nx

from errors import (ValidationError, NetlistSyntaxError, NetlistSemanticError,
                    UnknownSignalError)

logger = logging.getLogger(__name__)

# External pins of a generated circuit ~ RENT_PIN_CONSTANT * n_luts ** rent_p
RENT_PIN_CONSTANT = 1.0

FF_RATIO = 0.25
OUTPUT_PREFIX = "out:"
TRIGGER_PREFIX = "trig_"


class BlockKind(str, Enum):
    LUT = "LUT"
    FF = "FF"
    INPUT = "INPUT"
    OUTPUT = "OUTPUT"


BLE_KINDS = (BlockKind.LUT, BlockKind.FF)
IO_KINDS = (BlockKind.INPUT, BlockKind.OUTPUT)


@dataclass(frozen=True)
class Block:
    """
    One netlist block.

    Attributes:
        id: Block identifier (the driven signal, or "out:<signal>" for outputs)
        kind: Block kind
        inputs: Signals feeding the block's input pins, in pin order
        output: Signal the block drives (None for OUTPUT blocks)
        cover: LUT single-output cover rows such as "1-0 1"
        latch_args: Trailing .latch tokens (type, control, init) kept verbatim
    """
    id: str
    kind: BlockKind
    inputs: Tuple[str, ...] = ()
    output: Optional[str] = None
    cover: Tuple[str, ...] = ()
    latch_args: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Net:
    """A signal with its single driver block and its (block, pin) sinks."""
    signal: str
    driver: str
    sinks: Tuple[Tuple[str, int], ...]


@dataclass
class Netlist:
    """Technology-mapped circuit of K-LUTs, FFs and I/Os."""
    name: str
    blocks: List[Block]
    nets: List[Net]
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {block.id: block for block in self.blocks}
        self._by_signal = {net.signal: net for net in self.nets}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Netlist):
            return NotImplemented
        return (self.name, self.blocks, self.nets, self.inputs, self.outputs) == \
            (other.name, other.blocks, other.nets, other.inputs, other.outputs)

    def block(self, block_id: str) -> Block:
        return self._by_id[block_id]

    def has_block(self, block_id: str) -> bool:
        return block_id in self._by_id

    def net(self, signal: str) -> Net:
        return self._by_signal[signal]

    def blocks_of(self, *kinds: BlockKind) -> List[Block]:
        return [block for block in self.blocks if block.kind in kinds]

    def signals(self) -> List[str]:
        """Observable user signals: outputs of every LUT, FF and INPUT block."""
        return [block.output for block in self.blocks
                if block.kind in (BlockKind.INPUT, BlockKind.LUT, BlockKind.FF)]

    def ble_block_count(self) -> int:
        return len(self.blocks_of(*BLE_KINDS))

    def io_block_count(self) -> int:
        return len(self.blocks_of(*IO_KINDS))

    def max_lut_inputs(self) -> int:
        return max((len(b.inputs) for b in self.blocks_of(BlockKind.LUT)), default=0)

    def routed_nets(self) -> List[Net]:
        """Nets that have at least one sink."""
        return [net for net in self.nets if net.sinks]


@dataclass(eq=False)
class TriggerNetlist(Netlist):
    """
    Trigger or assertion circuit.

    Primary inputs carry the names of the user signals they tap; the single
    primary output is the fire signal.
    """

    @property
    def fire(self) -> str:
        return self.outputs[0]

    def les(self) -> List[Block]:
        """Trigger logic elements (one LUT or FF each)."""
        return self.blocks_of(*BLE_KINDS)


# ----- parsing ----------------------------------------------------------------

def _logical_lines(text: str) -> Iterable[Tuple[int, str]]:
    """Yield (line number, text) with comments removed and continuations joined."""
    pending = ""
    start = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].rstrip()
        if not pending:
            start = number
        if line.endswith('\\'):
            pending += line[:-1] + " "
            continue
        line = pending + line
        pending = ""
        if line.strip():
            yield start, line
    if pending.strip():
        yield start, pending


def _token_column(line: str, index: int) -> int:
    """1-based column of the index-th whitespace-separated token."""
    position = 0
    for i, token in enumerate(line.split()):
        position = line.index(token, position)
        if i == index:
            return position + 1
        position += len(token)
    return len(line) + 1


def parse_netlist(text: str, name_hint: str = "top") -> Netlist:
    """
    Parse BLIF-subset text into a validated Netlist.

    Args:
        text: BLIF source
        name_hint: Model name used when the text has no .model line

    Returns:
        Netlist whose block order is inputs, logic in file order, outputs

    Raises:
        NetlistSyntaxError: positioned at the offending token
        NetlistSemanticError: multiple drivers, undriven signals or a
            combinational loop, naming the net
    """
    model = None
    inputs: List[str] = []
    outputs: List[str] = []
    logic: List[Block] = []
    current: Optional[dict] = None
    ended = False

    def close_names():
        nonlocal current
        if current is not None:
            logic.append(Block(id=current['out'], kind=BlockKind.LUT,
                               inputs=tuple(current['ins']), output=current['out'],
                               cover=tuple(current['rows'])))
            current = None

    for number, line in _logical_lines(text):
        tokens = line.split()
        head = tokens[0]
        if ended:
            raise NetlistSyntaxError("content after .end", number, _token_column(line, 0))
        if not head.startswith('.'):
            if current is None:
                raise NetlistSyntaxError(f"cover row '{line.strip()}' outside .names",
                                         number, _token_column(line, 0))
            n_in = len(current['ins'])
            if n_in == 0:
                if len(tokens) != 1 or tokens[0] not in ('0', '1'):
                    raise NetlistSyntaxError("constant cover row must be 0 or 1", number,
                                             _token_column(line, 0))
                current['rows'].append(tokens[0])
                continue
            if len(tokens) != 2:
                raise NetlistSyntaxError("cover row needs an input plane and an output bit",
                                         number, _token_column(line, 0))
            plane, bit = tokens
            if len(plane) != n_in or any(ch not in '01-' for ch in plane):
                raise NetlistSyntaxError(f"input plane '{plane}' does not match {n_in} inputs",
                                         number, _token_column(line, 0))
            if bit not in ('0', '1'):
                raise NetlistSyntaxError(f"output bit must be 0 or 1, got '{bit}'", number,
                                         _token_column(line, 1))
            current['rows'].append(f"{plane} {bit}")
            continue

        close_names()
        if head == '.model':
            if model is not None:
                raise NetlistSyntaxError("only one .model is supported", number, 1)
            model = tokens[1] if len(tokens) > 1 else name_hint
        elif head == '.inputs':
            inputs.extend(tokens[1:])
        elif head == '.outputs':
            outputs.extend(tokens[1:])
        elif head == '.names':
            if len(tokens) < 2:
                raise NetlistSyntaxError(".names needs an output signal", number,
                                         _token_column(line, 0))
            current = {'ins': tokens[1:-1], 'out': tokens[-1], 'rows': []}
            if len(set(current['ins'])) != len(current['ins']):
                raise NetlistSyntaxError("repeated .names input", number, _token_column(line, 1))
        elif head == '.latch':
            if len(tokens) not in (3, 4, 5, 6):
                raise NetlistSyntaxError(".latch expects: d q [type control] [init]", number,
                                         _token_column(line, 0))
            logic.append(Block(id=tokens[2], kind=BlockKind.FF, inputs=(tokens[1],),
                               output=tokens[2], latch_args=tuple(tokens[3:])))
        elif head == '.end':
            ended = True
        else:
            raise NetlistSyntaxError(f"unsupported directive '{head}'", number, 1)
    close_names()

    return _assemble(model or name_hint, inputs, outputs, logic)


def _assemble(name: str, inputs: List[str], outputs: List[str], logic: List[Block],
              cls: type = Netlist) -> Netlist:
    """Build nets from blocks and run the semantic checks."""
    blocks = [Block(id=s, kind=BlockKind.INPUT, output=s) for s in inputs]
    blocks += logic
    blocks += [Block(id=OUTPUT_PREFIX + s, kind=BlockKind.OUTPUT, inputs=(s,)) for s in outputs]

    driver: Dict[str, str] = {}
    for block in blocks:
        if block.output is None:
            continue
        if block.output in driver:
            raise NetlistSemanticError("multiple drivers", block.output)
        driver[block.output] = block.id
    if len(set(outputs)) != len(outputs):
        duplicated = sorted({s for s in outputs if outputs.count(s) > 1})[0]
        raise NetlistSemanticError("signal listed twice in .outputs", duplicated)

    sinks: Dict[str, List[Tuple[str, int]]] = {signal: [] for signal in driver}
    for block in blocks:
        for pin, signal in enumerate(block.inputs):
            if signal not in driver:
                raise NetlistSemanticError("undriven signal", signal)
            sinks[signal].append((block.id, pin))

    kind_of = {block.id: block.kind for block in blocks}
    graph = nx.DiGraph()
    for block in blocks:
        if block.kind == BlockKind.LUT:
            graph.add_node(block.id)
            for signal in block.inputs:
                if kind_of[driver[signal]] == BlockKind.LUT:
                    graph.add_edge(driver[signal], block.id)
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle:
        raise NetlistSemanticError("combinational loop", min(edge[0] for edge in cycle))

    nets = [Net(signal=block.output, driver=block.id, sinks=tuple(sinks[block.output]))
            for block in blocks if block.output is not None]
    return cls(name=name, blocks=blocks, nets=nets, inputs=list(inputs), outputs=list(outputs))


def emit_blif(netlist: Netlist) -> str:
    """
    Write a Netlist back to BLIF-subset text.

    parse_netlist(emit_blif(n)) == n for every valid netlist.
    """
    lines = [f".model {netlist.name}"]
    if netlist.inputs:
        lines.append(".inputs " + " ".join(netlist.inputs))
    if netlist.outputs:
        lines.append(".outputs " + " ".join(netlist.outputs))
    for block in netlist.blocks:
        if block.kind == BlockKind.LUT:
            lines.append(".names " + " ".join(block.inputs + (block.output,)))
            lines.extend(block.cover)
        elif block.kind == BlockKind.FF:
            lines.append(".latch " + " ".join((block.inputs[0], block.output) + block.latch_args))
    lines.append(".end")
    return "\n".join(lines) + "\n"


def load_netlist(filename: str) -> Netlist:
    try:
        with open(filename, 'r') as f:
            text = f.read()
    except OSError as e:
        raise ValidationError(f"cannot read netlist {filename}: {e}") from e
    return parse_netlist(text)


def save_netlist(netlist: Netlist, filename: str) -> None:
    try:
        with open(filename, 'w', newline='\n') as f:
            f.write(emit_blif(netlist))
    except OSError as e:
        raise OSError(f"Failed to save netlist to {filename}: {str(e)}") from e


def parse_trigger(text: str, user_netlist: Netlist) -> TriggerNetlist:
    """
    Parse a trigger netlist and check it against the user circuit.

    Raises:
        ValidationError: if the trigger does not have exactly one output
        UnknownSignalError: if a trigger input names no user signal
    """
    plain = parse_netlist(text, name_hint="trigger")
    return _as_trigger(plain, user_netlist)


def _as_trigger(plain: Netlist, user_netlist: Netlist) -> TriggerNetlist:
    if len(plain.outputs) != 1:
        raise ValidationError(f"trigger must have exactly one output, has {len(plain.outputs)}")
    if not plain.blocks_of(*BLE_KINDS):
        raise ValidationError("trigger has no logic elements")
    known = set(user_netlist.signals())
    unknown = [s for s in plain.inputs if s not in known]
    if unknown:
        raise UnknownSignalError(unknown)
    return TriggerNetlist(name=plain.name, blocks=plain.blocks, nets=plain.nets,
                          inputs=plain.inputs, outputs=plain.outputs)


def load_trigger(filename: str, user_netlist: Netlist) -> TriggerNetlist:
    return _as_trigger(load_netlist(filename), user_netlist)


# ----- generation -------------------------------------------------------------

def _random_cover(rng: random.Random, k: int) -> Tuple[str, ...]:
    """ON-set cover rows of a random non-constant k-input function."""
    size = 1 << k
    while True:
        bits = [rng.randint(0, 1) for _ in range(size)]
        if 0 < sum(bits) < size:
            break
    return tuple(f"{m:0{k}b} 1" for m in range(size) if bits[m])


def gen_synthetic(seed: int, n_luts: int, rent_p: float, lut_size: int = 4,
                  name: Optional[str] = None) -> Netlist:
    """
    Generate a synthetic technology-mapped circuit.

    LUT i draws one input from the signals nobody has used yet and the rest
    from a locality window of recent LUTs, the primary inputs and the FF
    outputs, which keeps the external pin count near
    RENT_PIN_CONSTANT * n_luts ** rent_p. About FF_RATIO * n_luts FFs each
    register a distinct LUT.

    Args:
        seed: Random seed; equal seeds give identical circuits
        n_luts: Number of LUTs (>= 1)
        rent_p: Rent exponent, 0 < rent_p < 1
        lut_size: LUT input count K
        name: Model name (defaults to synth_<n>_<seed>)

    Returns:
        Validated Netlist
    """
    if n_luts < 1:
        raise ValidationError("must be >= 1", 'n_luts')
    if not 0.0 < rent_p < 1.0:
        raise ValidationError("must satisfy 0 < rent_p < 1", 'rent_p')
    if lut_size < 2:
        raise ValidationError("must be >= 2", 'lut_size')
    rng = random.Random(seed)
    pins = RENT_PIN_CONSTANT * n_luts ** rent_p
    n_in = max(1, int(round(pins / 2)))
    n_out = max(1, int(round(pins / 2)))
    n_ff = int(round(n_luts * FF_RATIO))

    inputs = [f"pi{i}" for i in range(n_in)]
    ff_drivers = sorted(rng.sample(range(n_luts), n_ff)) if n_ff else []
    ff_of = {lut: f"ff{j}" for j, lut in enumerate(ff_drivers)}
    ff_signals = [ff_of[lut] for lut in ff_drivers]
    window = max(4, int(round(n_luts ** rent_p)))

    pending = list(inputs) + list(ff_signals)
    rng.shuffle(pending)
    luts: List[Block] = []
    lut_signals: List[str] = []
    for i in range(n_luts):
        out = f"n{i}"
        candidates = lut_signals[-window:] + inputs + ff_signals
        k_max = min(lut_size, len(set(candidates)))
        k = rng.randint(max(1, k_max - 1), k_max)
        chosen: List[str] = []
        take = 2 if len(pending) > n_out else 1
        while pending and take and len(chosen) < k:
            signal = pending.pop(0)
            if signal not in chosen:
                chosen.append(signal)
                take -= 1
        if lut_signals and lut_signals[-1] not in chosen and len(chosen) < k and rng.random() < 0.5:
            chosen.append(lut_signals[-1])
        attempts = 0
        while len(chosen) < k and attempts < 8 * k:
            attempts += 1
            signal = rng.choice(candidates)
            if signal not in chosen:
                chosen.append(signal)
        for signal in chosen:
            if signal in pending:
                pending.remove(signal)
        luts.append(Block(id=out, kind=BlockKind.LUT, inputs=tuple(chosen), output=out,
                          cover=_random_cover(rng, len(chosen))))
        lut_signals.append(out)
        pending.append(out)

    ffs = [Block(id=ff_of[lut], kind=BlockKind.FF, inputs=(lut_signals[lut],),
                 output=ff_of[lut], latch_args=("re", "clk", "0")) for lut in ff_drivers]
    outputs = list(pending)
    spare = [s for s in lut_signals if s not in outputs]
    while len(outputs) < n_out and spare:
        outputs.append(spare.pop(rng.randrange(len(spare))))

    logic: List[Block] = []
    for i, lut in enumerate(luts):
        logic.append(lut)
        if i in ff_of:
            logic.append(next(ff for ff in ffs if ff.inputs[0] == lut.output))
    netlist = _assemble(name or f"synth_{n_luts}_{seed}", inputs, outputs, logic)
    logger.debug("Generated %s: %d LUTs, %d FFs, %d inputs, %d outputs",
                 netlist.name, n_luts, n_ff, len(inputs), len(outputs))
    return netlist


def external_pins(netlist: Netlist) -> int:
    return len(netlist.inputs) + len(netlist.outputs)


def calibrate_rent_constant(sizes: Iterable[int] = (50, 100, 200, 400),
                            rent_p: float = 0.7, seeds: Iterable[int] = (1, 2, 3)) -> float:
    """
    Measure the generator's pin constant: mean of pins / n ** rent_p.

    The result is what RENT_PIN_CONSTANT is frozen to.
    """
    ratios = []
    for n in sizes:
        for seed in seeds:
            netlist = gen_synthetic(seed, n, rent_p)
            ratios.append(external_pins(netlist) / n ** rent_p)
    value = sum(ratios) / len(ratios)
    logger.info("Calibrated pin constant %.4f over %d circuits", value, len(ratios))
    return value


def gen_trigger(seed: int, n_les: int, user_netlist: Netlist, lut_size: int = 4) -> TriggerNetlist:
    """
    Generate a comparator-and-reduce trigger over random user signals.

    Roughly half the LUTs compare taps, FFs register some comparator outputs
    and the remaining LUTs reduce everything to the single fire output.

    Args:
        seed: Random seed
        n_les: Number of trigger LEs (LUTs plus FFs, >= 1)
        user_netlist: Circuit whose signals the trigger taps
        lut_size: LUT input count K

    Returns:
        TriggerNetlist with n_les logic elements
    """
    if n_les < 1:
        raise ValidationError("must be >= 1", 'n_les')
    rng = random.Random(seed)
    user_signals = user_netlist.signals()
    n_ff = n_les // 4 if n_les >= 4 else 0
    n_lut = n_les - n_ff
    n_cmp = max(1, (n_lut + 1) // 2)
    n_taps = min(len(user_signals), max(2, n_cmp * 2))
    taps = sorted(rng.sample(user_signals, n_taps))

    logic: List[Block] = []
    pending: List[str] = []
    used_taps = set()
    for i in range(n_cmp):
        k = min(lut_size, len(taps))
        chosen = tuple(rng.sample(taps, k))
        used_taps.update(chosen)
        out = f"{TRIGGER_PREFIX}c{i}"
        logic.append(Block(id=out, kind=BlockKind.LUT, inputs=chosen, output=out,
                           cover=_random_cover(rng, k)))
        pending.append(out)
    for j in range(n_ff):
        d = pending[j % len(pending)]
        q = f"{TRIGGER_PREFIX}q{j}"
        logic.append(Block(id=q, kind=BlockKind.FF, inputs=(d,), output=q,
                           latch_args=("re", "clk", "0")))
        pending[j % len(pending)] = q
    for i in range(n_lut - n_cmp):
        chosen = pending[:lut_size]
        pending = pending[lut_size:]
        if len(chosen) < 2:
            chosen.append(rng.choice(sorted(used_taps)))
        out = f"{TRIGGER_PREFIX}r{i}"
        logic.append(Block(id=out, kind=BlockKind.LUT, inputs=tuple(chosen), output=out,
                           cover=_random_cover(rng, len(chosen))))
        pending.append(out)
    # Leftover signals join the last LUT so there is a single fire output
    fire_block = next(b for b in reversed(logic) if b.kind == BlockKind.LUT)
    extra = [s for s in pending if s != fire_block.output]
    if extra:
        room = lut_size - len(fire_block.inputs)
        if len(extra) > room:
            raise ValidationError(f"cannot reduce {len(extra)} trigger signals into one output")
        merged = fire_block.inputs + tuple(extra)
        logic[logic.index(fire_block)] = Block(
            id=fire_block.id, kind=BlockKind.LUT, inputs=merged, output=fire_block.output,
            cover=_random_cover(rng, len(merged)))
    inputs = sorted(used_taps)
    plain = _assemble(f"trigger_{n_les}_{seed}", inputs, [fire_block.output], logic)
    return _as_trigger(plain, user_netlist)


def merge_trigger(netlist: Netlist, trig: TriggerNetlist) -> Netlist:
    """
    Merge a trigger into the user circuit for recompile-from-scratch flows.

    Trigger inputs connect to the user signals they name; the fire signal
    becomes an extra primary output.

    Raises:
        ValidationError: if a trigger signal name collides with a user signal
    """
    user_signals = set(netlist.signals())
    logic = [b for b in netlist.blocks if b.kind in BLE_KINDS]
    added = trig.blocks_of(*BLE_KINDS)
    clashes = sorted(b.output for b in added if b.output in user_signals)
    if clashes:
        raise ValidationError(f"trigger signal(s) collide with user signals: {', '.join(clashes)}")
    return _assemble(f"{netlist.name}+{trig.name}", netlist.inputs,
                     netlist.outputs + [trig.fire], logic + added)
