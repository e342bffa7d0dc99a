from dataclasses import dataclass
from typing import Dict

import pytest

import common_utils
from baseline_pnr import Placement, Routing, find_min_channel_width, place, route, signal_opins
from circuits import Netlist, gen_synthetic, parse_netlist
from fabric_model import ArchSpec, ResourceMask, RoutingResourceGraph, arch_for_netlist, build_rrg, \
    spare_mask
from run_logger import RunLogger
from trace_overlay import OverlayForest, OverlayParams, build_trace_overlay

# Trace-buffer column every second interior column keeps small grids observable
SMALL_TEMPLATE = ArchSpec(grid_width=1, grid_height=1, tb_column_period=2)

# Two CLB columns around one trace-buffer column, two tracks per channel
CORRIDOR_ARCH = ArchSpec(grid_width=2, grid_height=1, channel_width_w=2, tb_column_period=2)

TINY_BLIF = """\
.model tiny
.inputs a b
.outputs y
.names a b y
11 1
.end
"""

USER_BLIF = """\
.model user
.inputs a b c d
.outputs y
.names a b n0
11 1
.names c d n1
1- 1
-1 1
.latch n0 q0 re clk 0
.names n0 n1 q0 y
111 1
.end
"""


@dataclass
class CompiledDesign:
    netlist: Netlist
    arch: ArchSpec
    placement: Placement
    routing: Routing
    rrg: RoutingResourceGraph
    mask: ResourceMask
    opins: Dict[str, int]
    w_min: int


@pytest.fixture
def tiny_netlist() -> Netlist:
    return parse_netlist(TINY_BLIF)


@pytest.fixture
def user_netlist() -> Netlist:
    return parse_netlist(USER_BLIF)


@pytest.fixture(scope="session")
def compiled() -> CompiledDesign:
    """A small synthetic circuit placed and routed with plenty of spare tracks."""
    netlist = gen_synthetic(3, 12, 0.65, name="small")
    arch = arch_for_netlist(netlist, SMALL_TEMPLATE)
    placement = place(netlist, arch, 1)
    minw = find_min_channel_width(netlist, placement, arch, 1, w_hi=32)
    arch = arch.with_width(common_utils.even_ceil(2 * minw.w_min))
    rrg = build_rrg(arch)
    result = route(netlist, placement, rrg, 1)
    assert result.success
    return CompiledDesign(netlist, arch, placement, result.routing, rrg,
                          spare_mask(rrg, result.routing), signal_opins(netlist, placement, rrg),
                          minw.w_min)


@pytest.fixture(scope="session")
def overlay(compiled):
    forest, report = build_trace_overlay(compiled.rrg, compiled.mask, compiled.opins,
                                         compiled.rrg.trace_inputs(), OverlayParams(fanout_target=2), 1)
    return forest, report


@pytest.fixture(scope="session")
def forest(overlay) -> OverlayForest:
    return overlay[0]


@pytest.fixture
def run_logger(tmp_path):
    yield RunLogger(str(tmp_path / "run_log.csv"))
    RunLogger._instance = None
