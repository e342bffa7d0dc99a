"""
FPGA Debug Overlay Toolkit - command-line entry point

Runs the compile-time stage (architecture, synthetic circuits, place and
route, overlay construction) and the debug-time stage (signal selection,
trigger mapping) of the overlay debug flow. Every step reads and writes
artifacts in a project directory and prints a JSON summary on stdout;
diagnostics go to stderr.
"""

# Standard library imports
import argparse
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Tuple

# Local application imports
import common_utils
from baseline_pnr import MinWidthResult, Placement, Routing, find_min_channel_width, place, route, \
    signal_opins, verify_routing
from bench_harness import run_bench
from circuits import Netlist, calibrate_rent_constant, emit_blif, gen_synthetic, gen_trigger, \
    load_netlist, load_trigger
from common_utils import Stopwatch
from debug_config import DebugConfig, check_config, emit_mux_config, fold_to_bipartite, \
    observability_profile, select_signals
from errors import OverlayToolError, UnroutableError, ValidationError
from fabric_model import ArchSpec, ResourceMask, RoutingResourceGraph, arch_for_netlist, build_rrg, \
    check_rrg, spare_mask
from flow_constants import (ARCH_FILE, DEBUG_CONFIG_FILE, EXIT_FAILURE, EXIT_PARTIAL, EXIT_SUCCESS,
                            EXIT_VALIDATION, LOCKED_ARTIFACTS, MINW_FILE, NETLIST_FILE,
                            ORDER_TRACE_FIRST, ORDER_TRIGGER_FIRST, OVERLAY_FILE, OVERLAY_ORDERS,
                            OVERLAY_REPORT_FILE, PLACEMENT_FILE, ROUTING_FILE, STATS_FILE,
                            TRIGGER_CONFIG_FILE, TRIGGER_FABRIC_FILE, TRIGGER_FILE)
from run_logger import RunLogger
from settings_manager import SettingsManager
from state_manager import ANY_ARTIFACT, ProjectState
from stats_report_generator import StatsReportGenerator, format_text_report, project_stats
from trace_overlay import OverlayForest, apply_to_mask, build_trace_overlay, verify_forest
from trigger_overlay import OverlayFabric, TriggerMapping, apply_fabric_to_mask, build_trigger_fabric, \
    map_trigger, verify_fabric, verify_mapping

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Commands that reconfigure overlays on a compiled design
DEBUG_COMMANDS = ('select-signals', 'map-trigger')


class Flow:
    """
    One command invocation: project artifacts, settings and seed.

    The load_* helpers read artifacts through ProjectState so every read is
    checked for freshness.
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.state = ProjectState(args.project)
        settings_file = args.settings or self.state.path(common_utils.DEFAULT_SETTINGS_FILE)
        self.settings = SettingsManager(settings_file)
        self.seed = args.seed
        if args.command in DEBUG_COMMANDS:
            self.state.locked.update(LOCKED_ARTIFACTS)
        self.written: List[str] = []
        self.state.register_observer(ANY_ARTIFACT, self._artifact_written)

    def _artifact_written(self, name: str, record: Dict[str, Any]) -> None:
        self.written.append(name)
        logger.debug("%s wrote %s from %s", self.args.command, name,
                     ", ".join(record['inputs']) or "nothing")

    # ----- loaders -----

    def arch(self) -> ArchSpec:
        return ArchSpec.from_dict(self.state.read_json(ARCH_FILE))

    def netlist(self) -> Netlist:
        self.state.require([NETLIST_FILE])
        self.state.check_fresh(NETLIST_FILE)
        return load_netlist(self.state.path(NETLIST_FILE))

    def placement(self) -> Placement:
        return Placement.from_dict(self.state.read_json(PLACEMENT_FILE))

    def routing(self) -> Routing:
        return Routing.from_dict(self.state.read_json(ROUTING_FILE))

    def minw(self) -> MinWidthResult:
        return MinWidthResult.from_dict(self.state.read_json(MINW_FILE))

    def forest(self) -> OverlayForest:
        return OverlayForest.from_dict(self.state.read_json(OVERLAY_FILE))

    def fabric(self) -> OverlayFabric:
        return OverlayFabric.from_dict(self.state.read_json(TRIGGER_FABRIC_FILE))

    def routed_rrg(self, arch: ArchSpec, routing: Routing) -> RoutingResourceGraph:
        return build_rrg(arch.with_width(routing.channel_width))

    def circuit_name(self) -> str:
        if not self.state.exists(NETLIST_FILE):
            return ''
        try:
            return load_netlist(self.state.path(NETLIST_FILE)).name
        except OverlayToolError:
            return ''

    def order(self) -> str:
        """Which overlay claimed spare resources first, from the flag, the manifest or settings."""
        if getattr(self.args, 'order', None):
            return self.args.order
        fabric_inputs = self.state.manifest.get(TRIGGER_FABRIC_FILE, {}).get('inputs', {})
        overlay_inputs = self.state.manifest.get(OVERLAY_FILE, {}).get('inputs', {})
        if OVERLAY_FILE in fabric_inputs:
            return ORDER_TRACE_FIRST
        if TRIGGER_FABRIC_FILE in overlay_inputs:
            return ORDER_TRIGGER_FIRST
        return self.settings.get('trigger_overlay', 'order')

    def trigger_path(self) -> str:
        name = getattr(self.args, 'trigger', None)
        if not name:
            record = self.state.manifest.get(TRIGGER_CONFIG_FILE, {})
            blifs = [i for i in record.get('inputs', {}) if i.endswith('.blif') and i != NETLIST_FILE]
            name = blifs[0] if blifs else TRIGGER_FILE
        return name


# ----- compile-time commands --------------------------------------------------

def cmd_gen_arch(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    template = flow.settings.arch_template()
    inputs: List[str] = []
    if flow.args.for_netlist:
        utilization = flow.args.utilization or flow.settings.get('suite', 'utilization')
        arch = arch_for_netlist(flow.netlist(), template, utilization)
        inputs.append(NETLIST_FILE)
    else:
        arch = template
    if flow.args.width:
        arch = arch.with_width(flow.args.width)
    flow.state.write_json(ARCH_FILE, arch.validate().to_dict(), 'gen-arch', inputs)
    return EXIT_SUCCESS, {'artifact': ARCH_FILE, 'grid': [arch.grid_width, arch.grid_height],
                          'channel_width': arch.channel_width_w}


def cmd_synth_random(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    rent_p = flow.args.rent_p or flow.settings.get('suite', 'rent_p')
    lut_size = flow.settings.get('arch', 'lut_size_k')
    netlist = gen_synthetic(flow.seed, flow.args.luts, rent_p, lut_size, name=flow.args.name)
    flow.state.write_text(NETLIST_FILE, emit_blif(netlist), 'synth-random')
    return EXIT_SUCCESS, {'artifact': NETLIST_FILE, 'circuit': netlist.name,
                          'blocks': len(netlist.blocks), 'nets': len(netlist.nets)}


def cmd_synth_trigger(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    netlist = flow.netlist()
    trig = gen_trigger(flow.seed, flow.args.les, netlist, flow.settings.get('arch', 'lut_size_k'))
    flow.state.write_text(TRIGGER_FILE, emit_blif(trig), 'synth-trigger', [NETLIST_FILE])
    return EXIT_SUCCESS, {'artifact': TRIGGER_FILE, 'trigger': trig.name, 'les': len(trig.les()),
                          'inputs': len(trig.inputs)}


def cmd_calibrate(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    rent_p = flow.args.rent_p or flow.settings.get('suite', 'rent_p')
    constant = calibrate_rent_constant(rent_p=rent_p)
    return EXIT_SUCCESS, {'rent_p': rent_p, 'rent_pin_constant': round(constant, 4)}


def cmd_pnr(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    arch, netlist = flow.arch(), flow.netlist()
    inputs = [ARCH_FILE, NETLIST_FILE]
    if flow.args.margin is not None:
        minw = flow.minw()
        arch = arch.with_width(common_utils.even_ceil((1.0 + flow.args.margin) * minw.w_min))
        inputs.append(MINW_FILE)
    elif flow.args.width:
        arch = arch.with_width(flow.args.width)
    placement = place(netlist, arch, flow.seed, flow.settings.placer_params())
    result = route(netlist, placement, build_rrg(arch), flow.seed, params=flow.settings.router_params())
    if not result.success:
        raise UnroutableError(f"{netlist.name} does not route at W={arch.channel_width_w}",
                              result.congested_nodes)
    flow.state.write_json(PLACEMENT_FILE, placement.to_dict(), 'pnr', inputs)
    flow.state.write_json(ROUTING_FILE, result.routing.to_dict(), 'pnr', inputs + [PLACEMENT_FILE])
    return EXIT_SUCCESS, {'artifacts': [PLACEMENT_FILE, ROUTING_FILE], 'channel_width': arch.channel_width_w,
                          'wirelength': result.wirelength, 'iterations': result.iterations}


def cmd_minw(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    arch, netlist, placement = flow.arch(), flow.netlist(), flow.placement()
    result = find_min_channel_width(netlist, placement, arch, flow.seed, flow.settings.router_params(),
                                    flow.settings.get('router', 'w_hi'), flow.args.jobs)
    flow.state.write_json(MINW_FILE, result.to_dict(), 'minw', [ARCH_FILE, NETLIST_FILE, PLACEMENT_FILE])
    return EXIT_SUCCESS, {'artifact': MINW_FILE, 'w_min': result.w_min}


def _user_context(flow: Flow) -> Tuple[ArchSpec, Netlist, Placement, Routing, RoutingResourceGraph,
                                       ResourceMask]:
    arch, netlist, placement, routing = flow.arch(), flow.netlist(), flow.placement(), flow.routing()
    rrg = flow.routed_rrg(arch, routing)
    return arch, netlist, placement, routing, rrg, spare_mask(rrg, routing)


def cmd_build_trace_overlay(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    arch, netlist, placement, routing, rrg, mask = _user_context(flow)
    inputs = [ARCH_FILE, NETLIST_FILE, PLACEMENT_FILE, ROUTING_FILE]
    if flow.args.margin is not None:
        expected = common_utils.even_ceil((1.0 + flow.args.margin) * flow.minw().w_min)
        if routing.channel_width != expected:
            raise ValidationError(f"routing is at W={routing.channel_width}, margin "
                                  f"{flow.args.margin} needs W={expected} (rerun pnr --margin)", 'margin')
        inputs.append(MINW_FILE)
    if flow.order() == ORDER_TRIGGER_FIRST:
        mask = apply_fabric_to_mask(mask, flow.fabric())
        inputs.append(TRIGGER_FABRIC_FILE)
    params = flow.settings.overlay_params(fanout_target=flow.args.fanout)
    forest, report = build_trace_overlay(rrg, mask, signal_opins(netlist, placement, rrg),
                                         rrg.trace_inputs(), params, flow.seed)
    include_timing = flow.settings.get('artifacts', 'include_timing')
    flow.state.write_json(OVERLAY_FILE, forest.to_dict(), 'build-trace-overlay', inputs)
    flow.state.write_json(OVERLAY_REPORT_FILE, report.to_dict(include_timing), 'build-trace-overlay',
                          inputs + [OVERLAY_FILE])
    return EXIT_SUCCESS, {'artifacts': [OVERLAY_FILE, OVERLAY_REPORT_FILE],
                          'fraction_connected': report.fraction_connected,
                          'unconnected': len(report.unconnected), 'trees': len(forest.trees),
                          'build_seconds': report.build_time}


def cmd_build_trigger_fabric(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    arch, netlist, placement, routing, rrg, mask = _user_context(flow)
    inputs = [ARCH_FILE, NETLIST_FILE, PLACEMENT_FILE, ROUTING_FILE]
    if flow.order() == ORDER_TRACE_FIRST:
        if flow.state.exists(OVERLAY_FILE):
            mask = apply_to_mask(mask, flow.forest())
            inputs.append(OVERLAY_FILE)
        else:
            logger.warning("No trace overlay yet; the trigger fabric claims spare routing first")
    budget = flow.args.link_budget or flow.settings.get('trigger_overlay', 'link_budget')
    fabric = build_trigger_fabric(rrg, mask, placement, arch.with_width(routing.channel_width),
                                  budget, flow.seed)
    flow.state.write_json(TRIGGER_FABRIC_FILE, fabric.to_dict(), 'build-trigger-fabric', inputs)
    return EXIT_SUCCESS, {'artifact': TRIGGER_FABRIC_FILE, 'cells': len(fabric.cells),
                          'spare_slots': fabric.total_slots, 'links': len(fabric.links)}


# ----- debug-time commands ----------------------------------------------------

def _requested(want: List[str]) -> List[str]:
    return [s for item in want for s in item.split(',') if s]


def cmd_select_signals(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    forest = flow.forest()
    selection = select_signals(fold_to_bipartite(forest), _requested(flow.args.want))
    config = emit_mux_config(forest, selection)
    flow.state.write_json(DEBUG_CONFIG_FILE, config.to_dict(), 'select-signals', [OVERLAY_FILE])
    status = EXIT_PARTIAL if config.unmatched else EXIT_SUCCESS
    return status, {'artifact': DEBUG_CONFIG_FILE, 'matched': len(config.matching),
                    'unmatched': config.unmatched, 'mux_selects': len(config.mux_selects)}


def cmd_map_trigger(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    arch, netlist, placement, routing, rrg, mask = _user_context(flow)
    fabric = flow.fabric()
    trigger_file = flow.trigger_path()
    flow.state.require([trigger_file])
    trig = load_trigger(flow.state.path(trigger_file), netlist)
    inputs = [NETLIST_FILE, ARCH_FILE, PLACEMENT_FILE, ROUTING_FILE, TRIGGER_FABRIC_FILE, trigger_file]
    if flow.state.exists(OVERLAY_FILE):
        mask = apply_to_mask(mask, flow.forest())
        inputs.append(OVERLAY_FILE)
    params = flow.settings.sa_params(flow.seed, flow.args.gamma_ind, flow.args.gamma_blk)
    mapping = map_trigger(fabric, trig, params, rrg, mask, signal_opins(netlist, placement, rrg),
                          flow.args.jobs)
    flow.state.write_json(TRIGGER_CONFIG_FILE, mapping.to_dict(), 'map-trigger', inputs)
    status = EXIT_SUCCESS if mapping.feasible else EXIT_PARTIAL
    return status, {'artifact': TRIGGER_CONFIG_FILE, 'feasible': mapping.feasible, 'cost': mapping.cost,
                    'blocked': mapping.blocked, 'connections': mapping.kind_counts(),
                    'feed_failures': len(mapping.feed_failures), 'map_seconds': mapping.seconds}


# ----- checks and reports -----------------------------------------------------

def cmd_verify(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    arch, netlist, placement, routing, rrg, mask = _user_context(flow)
    checks: Dict[str, List[str]] = {'rrg': check_rrg(rrg),
                                    'routing': verify_routing(rrg, netlist, placement, routing)}
    forest = flow.forest() if flow.state.exists(OVERLAY_FILE) else None
    fabric = flow.fabric() if flow.state.exists(TRIGGER_FABRIC_FILE) else None
    trace_first = flow.order() == ORDER_TRACE_FIRST
    if forest is not None:
        forest_mask = apply_fabric_to_mask(mask, fabric) if fabric is not None and not trace_first else mask
        checks['trace_overlay'] = verify_forest(rrg, forest_mask, forest)
    if fabric is not None:
        fabric_mask = apply_to_mask(mask, forest) if forest is not None and trace_first else mask
        checks['trigger_fabric'] = verify_fabric(rrg, fabric_mask, fabric,
                                                 forest.nodes() if forest is not None else None)
    opins = signal_opins(netlist, placement, rrg)
    if flow.state.exists(DEBUG_CONFIG_FILE):
        config = DebugConfig.from_dict(flow.state.read_json(DEBUG_CONFIG_FILE))
        checks['debug_config'] = check_config(rrg, config, opins)
    if fabric is not None and flow.state.exists(TRIGGER_CONFIG_FILE):
        mapping = TriggerMapping.from_dict(flow.state.read_json(TRIGGER_CONFIG_FILE))
        trig = load_trigger(flow.state.path(flow.trigger_path()), netlist)
        feed_mask = apply_to_mask(mask, forest) if forest is not None else mask
        checks['trigger_mapping'] = verify_mapping(fabric, trig, mapping, rrg, feed_mask)
    total = sum(len(p) for p in checks.values())
    for name, problems in checks.items():
        for problem in problems:
            logger.error("%s: %s", name, problem)
    return (EXIT_SUCCESS if total == 0 else EXIT_FAILURE), {
        'violations': total, 'checks': {name: len(p) for name, p in checks.items()}}


def cmd_stats(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    arch, netlist = flow.arch(), flow.netlist()
    kwargs: Dict[str, Any] = {}
    inputs = [ARCH_FILE, NETLIST_FILE]
    if flow.state.exists(ROUTING_FILE):
        kwargs['routing'] = flow.routing()
        kwargs['rrg'] = flow.routed_rrg(arch, kwargs['routing'])
        inputs.append(ROUTING_FILE)
    if flow.state.exists(MINW_FILE):
        kwargs['minw'] = flow.minw()
        inputs.append(MINW_FILE)
    if flow.state.exists(OVERLAY_FILE):
        kwargs['forest'] = flow.forest()
        suite = flow.settings.get('suite')
        kwargs['observability'] = observability_profile(
            fold_to_bipartite(kwargs['forest']), suite['observability_sizes'],
            suite['observability_samples'], flow.seed)
        inputs.append(OVERLAY_FILE)
    if flow.state.exists(DEBUG_CONFIG_FILE):
        kwargs['config'] = DebugConfig.from_dict(flow.state.read_json(DEBUG_CONFIG_FILE))
        inputs.append(DEBUG_CONFIG_FILE)
    if flow.state.exists(TRIGGER_FABRIC_FILE):
        kwargs['fabric'] = flow.fabric()
        inputs.append(TRIGGER_FABRIC_FILE)
    if flow.state.exists(TRIGGER_CONFIG_FILE):
        kwargs['mapping'] = TriggerMapping.from_dict(flow.state.read_json(TRIGGER_CONFIG_FILE))
        inputs.append(TRIGGER_CONFIG_FILE)
    stats = project_stats(netlist, arch, **kwargs)
    flow.state.write_json(STATS_FILE, stats, 'stats', inputs)
    sys.stderr.write(format_text_report(stats))
    if flow.args.pdf:
        StatsReportGenerator(stats).generate_report(flow.args.pdf)
    # Wall times stay out of stats.json
    runs = run_log(flow.state.directory)
    run_seconds = {command: round(runs.total_seconds(command), 4) for command in sorted(COMMANDS)
                   if runs.get_filtered_runs({'command': command})}
    return EXIT_SUCCESS, {'artifact': STATS_FILE, 'pdf': flow.args.pdf, 'run_seconds': run_seconds}


def cmd_bench(flow: Flow) -> Tuple[int, Dict[str, Any]]:
    stats = run_bench(flow.settings, flow.args.jobs)
    flow.state.write_json(STATS_FILE, stats, 'bench')
    sys.stderr.write(format_text_report(stats))
    if flow.args.pdf:
        StatsReportGenerator(stats).generate_report(flow.args.pdf)
    return (EXIT_SUCCESS if stats['passed'] else EXIT_PARTIAL), {
        'artifact': STATS_FILE, 'passed': stats['passed'],
        'failed': [name for name, v in stats['acceptance'].items() if not v['passed']]}


COMMANDS: Dict[str, Callable[[Flow], Tuple[int, Dict[str, Any]]]] = {
    'gen-arch': cmd_gen_arch,
    'synth-random': cmd_synth_random,
    'synth-trigger': cmd_synth_trigger,
    'calibrate-rent': cmd_calibrate,
    'pnr': cmd_pnr,
    'minw': cmd_minw,
    'build-trace-overlay': cmd_build_trace_overlay,
    'build-trigger-fabric': cmd_build_trigger_fabric,
    'select-signals': cmd_select_signals,
    'map-trigger': cmd_map_trigger,
    'verify': cmd_verify,
    'stats': cmd_stats,
    'bench': cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--project', default='.', help="Project directory holding the artifacts")
    common.add_argument('--settings', help="Settings file (default: overlay_debug_settings.json in the project)")
    common.add_argument('--seed', type=int, default=1, help="Seed of every stochastic step")
    common.add_argument('--verbose', action='store_true', help="Log at DEBUG level")

    parser = argparse.ArgumentParser(
        prog='overlay-debug',
        description="Overlay-based FPGA debug flow: compile once, then reconfigure trace and trigger "
                    "overlays without recompiling the user circuit.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Compile-time stage:
  gen-arch, synth-random, synth-trigger, pnr, minw, build-trace-overlay, build-trigger-fabric
Debug-time stage (never touches placement.json or routing.json):
  select-signals, map-trigger
Checks and reports:
  verify, stats, bench

Exit status: 0 success, 1 partial result, 2 invalid input, 3 algorithmic failure
""")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-arch', parents=[common], help="Write arch.json")
    p.add_argument('--for-netlist', action='store_true', help="Size the grid for netlist.blif")
    p.add_argument('--utilization', type=float, help="Target logic utilization for --for-netlist")
    p.add_argument('--width', type=int, help="Channel width W")

    p = sub.add_parser('synth-random', parents=[common], help="Generate a synthetic netlist.blif")
    p.add_argument('--luts', type=int, required=True, help="Number of LUTs")
    p.add_argument('--rent-p', type=float, help="Rent exponent")
    p.add_argument('--name', help="Circuit name")

    p = sub.add_parser('synth-trigger', parents=[common], help="Generate a trigger.blif over netlist.blif")
    p.add_argument('--les', type=int, required=True, help="Trigger logic elements")

    p = sub.add_parser('calibrate-rent', parents=[common], help="Measure the generator's Rent pin constant")
    p.add_argument('--rent-p', type=float, help="Rent exponent")

    p = sub.add_parser('pnr', parents=[common], help="Place and route the user circuit")
    p.add_argument('--margin', type=float, help="Route at the nearest even W >= (1+margin)*w_min")
    p.add_argument('--width', type=int, help="Route at this W instead of the arch width")

    p = sub.add_parser('minw', parents=[common], help="Find the minimum routable channel width")
    p.add_argument('--jobs', type=int, default=1, help="Parallel width trials")

    p = sub.add_parser('build-trace-overlay', parents=[common], help="Build the trace overlay forest")
    p.add_argument('--fanout', type=int, help="Trace inputs each signal should reach")
    p.add_argument('--margin', type=float, help="Require routing at the nearest even W >= (1+margin)*w_min")
    p.add_argument('--order', choices=OVERLAY_ORDERS, help="Which overlay claims spare resources first")

    p = sub.add_parser('build-trigger-fabric', parents=[common], help="Build the trigger overlay fabric")
    p.add_argument('--link-budget', type=int, help="Outgoing links per overlay cell")
    p.add_argument('--order', choices=OVERLAY_ORDERS, help="Which overlay claims spare resources first")

    p = sub.add_parser('select-signals', parents=[common], help="Configure the trace overlay")
    p.add_argument('--want', nargs='+', required=True, help="Signals to observe (space or comma separated)")

    p = sub.add_parser('map-trigger', parents=[common], help="Map a trigger onto the trigger overlay")
    p.add_argument('--trigger', help="Trigger BLIF (default: trigger.blif)")
    p.add_argument('--gamma-ind', type=float, help="Cost of an indirect connection")
    p.add_argument('--gamma-blk', type=float, help="Cost of a blocked connection")
    p.add_argument('--jobs', type=int, default=1, help="Parallel annealing restarts")

    sub.add_parser('verify', parents=[common], help="Run every independent checker")

    p = sub.add_parser('stats', parents=[common], help="Write stats.json and print a table")
    p.add_argument('--pdf', help="Also render the report as a PDF")

    p = sub.add_parser('bench', parents=[common], help="Run the benchmark suite and acceptance checks")
    p.add_argument('--jobs', type=int, default=1, help="Suite circuits run in parallel")
    p.add_argument('--pdf', help="Also render the report as a PDF")
    return parser


def run_log(project: str) -> RunLogger:
    return RunLogger(os.path.join(project, common_utils.DEFAULT_RUN_LOG_FILE))


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT,
                        stream=sys.stderr)


def run(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the exit status."""
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    status, summary, flow = EXIT_FAILURE, {}, None
    with Stopwatch() as watch:
        try:
            flow = Flow(args)
            if not args.verbose:
                logging.getLogger().setLevel(flow.settings.get('log_level'))
            status, summary = COMMANDS[args.command](flow)
        except ValidationError as e:
            logger.error("%s", str(e))
            status, summary = EXIT_VALIDATION, {'error': str(e)}
        except OverlayToolError as e:
            logger.error("%s", str(e))
            status, summary = EXIT_FAILURE, {'error': str(e)}
        except OSError as e:
            logger.error("I/O error: %s", str(e))
            status, summary = EXIT_FAILURE, {'error': str(e)}

    summary = {'command': args.command, 'status': status, **summary,
               'written': list(flow.written) if flow is not None else []}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    if flow is not None:
        run_log(args.project).log_run(
            args.command, flow.circuit_name(), watch.seconds, str(status), args.seed,
            summary.get('error', ''))
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
