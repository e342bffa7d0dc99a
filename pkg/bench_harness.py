"""
Benchmark harness for the FPGA Debug Overlay Toolkit.

Generates the synthetic suite, runs the compile-time and debug-time stages
on every circuit, cross-checks them against independent oracles and turns
the measurements into acceptance verdicts. Circuits are independent and can
run in parallel worker processes; the stages of one circuit are sequential.
"""

import functools
import logging
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple, Any

import numpy as np
import psutil

import common_utils
from baseline_pnr import (PathFinderParams, PlacerParams, find_min_channel_width, place, route,
                          signal_opins, verify_routing)
from circuits import Netlist, gen_synthetic, gen_trigger, merge_trigger
from common_utils import Stopwatch
from debug_config import (BipartiteConnectivity, HopcroftKarp, check_config, emit_mux_config,
                          fold_to_bipartite, has_augmenting_path, observability_profile,
                          select_signals)
from errors import CapacityError, OverlayToolError
from fabric_model import ArchSpec, arch_for_netlist, build_rrg, spare_mask
from settings_manager import SettingsManager
from trace_overlay import OverlayParams, apply_to_mask, build_trace_overlay, verify_forest
from trigger_overlay import (OverlayCell, OverlayFabric, OverlayLink, SAParams,
                             baseline_recompile_trigger, build_trigger_fabric, map_trigger,
                             min_mapping_cost, verify_mapping)

logger = logging.getLogger(__name__)

# Largest instance the brute-force matching oracle is asked to solve
ORACLE_MAX_SIDE = 12
SA_FIXTURE_MAX_SLOTS = 8
SA_FIXTURE_MAX_LES = 4


@dataclass(frozen=True)
class SuiteConfig:
    """Everything one circuit task needs, picklable for worker processes."""
    template: ArchSpec
    placer: PlacerParams
    router: PathFinderParams
    overlay: OverlayParams
    sa: SAParams
    rent_p: float
    utilization: float
    w_hi: int
    link_budget: int
    requested_sets: int
    observability_sizes: Tuple[int, ...]
    observability_samples: int

    @classmethod
    def from_settings(cls, settings: SettingsManager) -> 'SuiteConfig':
        suite = settings.get('suite')
        return cls(template=settings.arch_template(),
                   placer=settings.placer_params(),
                   router=settings.router_params(),
                   overlay=settings.overlay_params(fanout_target=suite['fanout_target']),
                   sa=settings.sa_params(),
                   rent_p=float(suite['rent_p']),
                   utilization=float(suite['utilization']),
                   w_hi=int(settings.get('router', 'w_hi')),
                   link_budget=int(settings.get('trigger_overlay', 'link_budget')),
                   requested_sets=int(suite['requested_sets']),
                   observability_sizes=tuple(suite['observability_sizes']),
                   observability_samples=int(suite['observability_samples']))


def suite_circuits(settings: SettingsManager) -> List[Tuple[int, int, Optional[int]]]:
    """(seed, LUT count, trigger LE count or None) per suite circuit."""
    suite = settings.get('suite')
    trigger_les = list(suite['trigger_les'])
    plan = []
    for i, n_luts in enumerate(suite['lut_counts']):
        les = trigger_les[i] if i < len(trigger_les) else None
        plan.append((suite['first_seed'] + i, int(n_luts), les))
    return plan


def _rss_mb() -> float:
    """Resident memory of this process and its workers."""
    total = 0
    try:
        proc = psutil.Process(os.getpid())
        total = proc.memory_info().rss
        for child in proc.children(recursive=True):
            try:
                total += child.memory_info().rss
            except (psutil.NoSuchProcess, psutil.AccessDenied, psutil.ZombieProcess):
                continue
    except (psutil.NoSuchProcess, psutil.AccessDenied) as e:
        logger.warning("Could not read memory usage: %s", str(e))
    return total / (1024 * 1024)


def _routing_digest(routing: Any) -> str:
    return common_utils.text_sha256(common_utils.dump_json_text(routing.to_dict()))


def config_soundness(rrg: Any, forest: Any, bip: BipartiteConnectivity, opins: Dict[str, int],
                     routing: Any, sets: int, seed: int) -> Dict[str, int]:
    """
    Emit configurations for random requests and simulate them.

    A check fails when the propagation simulator disagrees with the matching,
    the matching is not maximum, or the user routing changed.
    """
    rng = random.Random(seed)
    before = _routing_digest(routing)
    upper = max(1, min(len(bip.signals), 2 * max(1, len(bip.trace_inputs))))
    failures = 0
    for _ in range(sets):
        if not bip.signals:
            break
        requested = rng.sample(bip.signals, rng.randint(1, upper))
        selection = select_signals(bip, requested)
        config = emit_mux_config(forest, selection)
        problems = check_config(rrg, config, opins)
        if has_augmenting_path(bip, requested, selection.matching):
            problems.append("matching is not maximum")
        if problems:
            failures += 1
            logger.warning("Configuration check failed: %s", "; ".join(problems[:3]))
    if _routing_digest(routing) != before:
        failures += 1
        logger.warning("User routing changed during debug configuration")
    return {'checks': sets, 'failures': failures}


def run_circuit(config: SuiteConfig, seed: int, n_luts: int,
                trigger_les: Optional[int] = None) -> Dict[str, Any]:
    """Compile one suite circuit, build its overlays and measure everything."""
    netlist = gen_synthetic(seed, n_luts, config.rent_p, config.template.lut_size_k, name=f"syn{n_luts}")
    arch = arch_for_netlist(netlist, config.template, config.utilization)
    row: Dict[str, Any] = {'name': netlist.name, 'seed': seed, 'luts': n_luts,
                           'grid': f"{arch.grid_width}x{arch.grid_height}"}

    with Stopwatch() as place_watch:
        placement = place(netlist, arch, seed, config.placer)
    minw = find_min_channel_width(netlist, placement, arch, seed, config.router, config.w_hi)
    width = common_utils.even_ceil((1.0 + config.overlay.width_margin) * minw.w_min)
    arch = arch.with_width(width)
    rrg = build_rrg(arch)
    with Stopwatch() as route_watch:
        result = route(netlist, placement, rrg, seed, params=config.router)
    row.update(w_min=minw.w_min, channel_width=width, routed=result.success,
               wirelength=result.wirelength)
    if not result.success:
        logger.warning("%s did not route at W=%d", netlist.name, width)
        row.update(fraction_connected=0.0, legality_problems=1)
        return row
    pnr_seconds = place_watch.seconds + route_watch.seconds

    mask = spare_mask(rrg, result.routing)
    opins = signal_opins(netlist, placement, rrg)
    forest, report = build_trace_overlay(rrg, mask, opins, rrg.trace_inputs(), config.overlay, seed)
    problems = verify_routing(rrg, netlist, placement, result.routing) + verify_forest(rrg, mask, forest)
    row.update(fraction_connected=report.fraction_connected,
               unconnected=len(report.unconnected),
               pnr_seconds=pnr_seconds,
               overlay_seconds=report.build_time,
               overlay_ratio=report.build_time / pnr_seconds if pnr_seconds else None,
               legality_problems=len(problems))
    for problem in problems[:5]:
        logger.warning("%s: %s", netlist.name, problem)

    bip = fold_to_bipartite(forest)
    soundness = config_soundness(rrg, forest, bip, opins, result.routing, config.requested_sets, seed)
    row['config_checks'] = soundness['checks']
    row['config_failures'] = soundness['failures']
    row['observability'] = {str(k): v for k, v in observability_profile(
        bip, config.observability_sizes, config.observability_samples, seed).items()}

    if trigger_les:
        row['trigger'] = run_trigger(config, netlist, arch, rrg, apply_to_mask(mask, forest),
                                     placement, opins, forest.nodes(), seed, trigger_les)
    return row


def run_trigger(config: SuiteConfig, netlist: Netlist, arch: ArchSpec, rrg: Any, mask: Any,
                placement: Any, opins: Dict[str, int], forest_nodes: Any, seed: int,
                n_les: int) -> Dict[str, Any]:
    """Map one generated trigger and recompile the same trigger from scratch."""
    trig = gen_trigger(seed, n_les, netlist, arch.lut_size_k)
    fabric = build_trigger_fabric(rrg, mask, placement, arch, config.link_budget, seed)
    row: Dict[str, Any] = {'circuit': netlist.name, 'les': n_les, 'cells': len(fabric.cells),
                           'links': len(fabric.links)}
    try:
        mapping = map_trigger(fabric, trig, replace(config.sa, seed=seed),
                              rrg, mask, opins)
    except CapacityError as e:
        logger.warning("%s: trigger does not fit the overlay: %s", netlist.name, str(e))
        row.update(feasible=False, verify_problems=0)
        return row
    problems = verify_mapping(fabric, trig, mapping, rrg, mask)
    row.update(feasible=mapping.feasible, cost=mapping.cost, map_seconds=mapping.seconds,
               verify_problems=len(problems) if mapping.feasible else 0)
    try:
        recompile = baseline_recompile_trigger(netlist, trig, arch, seed, config.placer, config.router)
    except CapacityError:
        bigger = arch_for_netlist_with_trigger(netlist, trig, config, arch.channel_width_w)
        recompile = baseline_recompile_trigger(netlist, trig, bigger, seed, config.placer, config.router)
    row['recompile_seconds'] = recompile.seconds
    row['recompile_routed'] = recompile.success
    row['speedup'] = recompile.seconds / mapping.seconds if mapping.seconds > 0 else None
    return row


def arch_for_netlist_with_trigger(netlist: Netlist, trig: Any, config: SuiteConfig,
                                  width: int) -> ArchSpec:
    return arch_for_netlist(merge_trigger(netlist, trig), config.template,
                            config.utilization).with_width(width)


def _circuit_task(args: Tuple[SuiteConfig, int, int, Optional[int]]) -> Dict[str, Any]:
    config, seed, n_luts, les = args
    try:
        return run_circuit(config, seed, n_luts, les)
    except OverlayToolError as e:
        logger.error("Circuit syn%d failed: %s", n_luts, str(e))
        return {'name': f"syn{n_luts}", 'seed': seed, 'luts': n_luts, 'error': str(e),
                'fraction_connected': 0.0, 'legality_problems': 1}


# ----- oracles ----------------------------------------------------------------

def brute_force_matching_size(adjacency: Dict[str, List[int]]) -> int:
    """Maximum matching by exhaustive search over left vertices."""
    lefts = sorted(adjacency)
    rights = sorted({r for roots in adjacency.values() for r in roots})
    bit = {r: 1 << i for i, r in enumerate(rights)}

    @functools.lru_cache(maxsize=None)
    def best(i: int, used: int) -> int:
        if i == len(lefts):
            return 0
        result = best(i + 1, used)
        for r in adjacency[lefts[i]]:
            if not used & bit[r]:
                result = max(result, 1 + best(i + 1, used | bit[r]))
        return result

    return best(0, 0)


def random_bipartite(rng: random.Random, max_side: int = ORACLE_MAX_SIDE) -> Dict[str, List[int]]:
    n_left = rng.randint(1, max_side)
    n_right = rng.randint(1, max_side)
    density = rng.uniform(0.05, 0.6)
    return {f"s{i}": sorted(r for r in range(n_right) if rng.random() < density) for i in range(n_left)}


def matching_oracle(instances: int, seed: int) -> Dict[str, Any]:
    """Compare Hopcroft-Karp against brute force on random small instances."""
    rng = random.Random(seed)
    mismatches = 0
    with Stopwatch() as watch:
        for _ in range(instances):
            adjacency = random_bipartite(rng)
            size = len(HopcroftKarp(adjacency).run())
            if size != brute_force_matching_size(adjacency):
                mismatches += 1
    return {'instances': instances, 'mismatches': mismatches, 'seconds': watch.seconds}


def sa_fixture(seed: int) -> Tuple[OverlayFabric, Any]:
    """A tiny random fabric and trigger small enough to enumerate."""
    rng = random.Random(seed)
    n_cells = rng.randint(2, 4)
    sizes = [1] * n_cells
    for _ in range(rng.randint(n_cells, SA_FIXTURE_MAX_SLOTS) - n_cells):
        sizes[rng.randrange(n_cells)] += 1
    cells = []
    next_node = 0
    for c, size in enumerate(sizes):
        slots = list(range(size))
        out_pins = [s for s in slots if rng.random() < 0.8] or [0]
        in_pins = list(range(next_node, next_node + 6))
        next_node += 6
        cells.append(OverlayCell(c, 0, slots, out_pins, in_pins, in_pins[:rng.randint(2, 5)]))
    links = []
    for c, cell in enumerate(cells):
        for dst in rng.sample(range(n_cells), rng.randint(0, min(2, n_cells - 1)) + 1):
            if dst == c:
                continue
            pin = cells[dst].in_pins[-1]
            links.append(OverlayLink(c, rng.choice(cell.out_pins), dst, pin, [1000 + len(links), pin]))
    user = gen_synthetic(seed, 8, 0.65, 3, name=f"fixture{seed}")
    n_les = rng.randint(2, min(SA_FIXTURE_MAX_LES, sum(sizes)))
    return OverlayFabric(cells, links, 3), gen_trigger(seed, n_les, user, 3)


def sa_optimality(runs: int, params: SAParams) -> Dict[str, Any]:
    """Seeded annealing runs on enumerable fixtures against the exhaustive minimum."""
    optimal = 0
    gaps = []
    for run in range(runs):
        fabric, trig = sa_fixture(params.seed + run)
        run_params = replace(params, seed=params.seed + run, restarts=1)
        annealed = map_trigger(fabric, trig, run_params).annealed_cost
        best = min_mapping_cost(fabric, trig, run_params)
        if annealed <= best + 1e-9:
            optimal += 1
        else:
            gaps.append(annealed - best)
    return {'runs': runs, 'optimal': optimal,
            'mean_gap': float(np.mean(gaps)) if gaps else 0.0}


# ----- acceptance -------------------------------------------------------------

def _verdict(value: Optional[float], threshold: float, relation: str) -> Dict[str, Any]:
    if value is None:
        passed = False
    elif relation == '>=':
        passed = value >= threshold
    elif relation == '<=':
        passed = value <= threshold
    else:
        passed = value == threshold
    return {'value': value, 'threshold': threshold, 'relation': relation, 'passed': bool(passed)}


def summarize(circuits: List[Dict[str, Any]], oracle: Dict[str, Any],
              sa: Dict[str, Any]) -> Dict[str, Any]:
    fractions = [c.get('fraction_connected', 0.0) for c in circuits]
    ratios = [c['overlay_ratio'] for c in circuits if c.get('overlay_ratio') is not None]
    triggers = [c['trigger'] for c in circuits if 'trigger' in c]
    speedups = [t['speedup'] for t in triggers if t.get('speedup') is not None]
    checks = sum(c.get('config_checks', 0) for c in circuits)
    failures = sum(c.get('config_failures', 0) for c in circuits)
    return {
        'circuits': len(circuits),
        'mean_fraction_connected': float(np.mean(fractions)) if fractions else 0.0,
        'min_fraction_connected': float(np.min(fractions)) if fractions else 0.0,
        'max_overlay_seconds': max((c.get('overlay_seconds', 0.0) for c in circuits), default=0.0),
        'mean_overlay_ratio': float(np.mean(ratios)) if ratios else None,
        'config_pass_rate': (checks - failures) / checks if checks else 0.0,
        'median_trigger_speedup': float(np.median(speedups)) if speedups else None,
        'trigger_verify_problems': sum(t.get('verify_problems', 0) for t in triggers),
        'legality_problems': sum(c.get('legality_problems', 0) for c in circuits),
        'matching_mismatches': oracle['mismatches'],
        'matching_seconds': oracle['seconds'],
        'sa_optimal_runs': sa['optimal'],
    }


def evaluate_acceptance(summary: Dict[str, Any], thresholds: Dict[str, float]) -> Dict[str, Dict[str, Any]]:
    """Acceptance verdicts of a bench summary against the configured thresholds."""
    return {
        'mean_fraction_connected': _verdict(summary['mean_fraction_connected'],
                                            thresholds['mean_fraction_connected'], '>='),
        'min_fraction_connected': _verdict(summary['min_fraction_connected'],
                                           thresholds['min_fraction_connected'], '>='),
        'overlay_seconds_per_circuit': _verdict(summary['max_overlay_seconds'],
                                                thresholds['max_seconds_per_circuit'], '<='),
        'mean_overlay_time_ratio': _verdict(summary['mean_overlay_ratio'],
                                            thresholds['max_overlay_time_ratio'], '<='),
        'matching_oracle_mismatches': _verdict(summary['matching_mismatches'], 0, '=='),
        'matching_oracle_seconds': _verdict(summary['matching_seconds'],
                                            thresholds['max_matching_seconds'], '<='),
        'config_pass_rate': _verdict(summary['config_pass_rate'], thresholds['config_pass_rate'], '>='),
        'median_trigger_speedup': _verdict(summary['median_trigger_speedup'],
                                           thresholds['min_median_trigger_speedup'], '>='),
        'trigger_mapping_violations': _verdict(summary['trigger_verify_problems'], 0, '=='),
        'sa_optimal_runs': _verdict(summary['sa_optimal_runs'], thresholds['min_sa_optimal_runs'], '>='),
        'legality_violations': _verdict(summary['legality_problems'], 0, '=='),
    }


def run_bench(settings: SettingsManager, jobs: int = 1,
              plan: Optional[List[Tuple[int, int, Optional[int]]]] = None) -> Dict[str, Any]:
    """
    Run the whole benchmark.

    Args:
        settings: Settings supplying the suite and the acceptance thresholds
        jobs: Worker processes for the suite circuits
        plan: (seed, LUT count, trigger LEs) overrides of the configured suite

    Returns:
        The statistics dictionary written to stats.json
    """
    config = SuiteConfig.from_settings(settings)
    suite = settings.get('suite')
    plan = plan if plan is not None else suite_circuits(settings)
    tasks = [(config, seed, n_luts, les) for seed, n_luts, les in plan]
    peak = _rss_mb()
    with Stopwatch() as watch:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
                circuits = []
                for row in pool.map(_circuit_task, tasks):
                    peak = max(peak, _rss_mb())
                    circuits.append(row)
        else:
            circuits = []
            for task in tasks:
                circuits.append(_circuit_task(task))
                peak = max(peak, _rss_mb())
        logger.info("Suite of %d circuits done", len(circuits))
        oracle = matching_oracle(int(suite['matching_instances']), int(suite['first_seed']))
        sa = sa_optimality(int(suite['sa_fixture_runs']), settings.sa_params(seed=int(suite['first_seed'])))
        peak = max(peak, _rss_mb())

    summary = summarize(circuits, oracle, sa)
    acceptance = evaluate_acceptance(summary, settings.acceptance())
    triggers = [c.pop('trigger') for c in circuits if 'trigger' in c]
    stats = {
        'kind': 'bench',
        'circuits': circuits,
        'trigger': triggers,
        'matching_oracle': oracle,
        'sa_fixtures': sa,
        'summary': summary,
        'acceptance': acceptance,
        'passed': all(v['passed'] for v in acceptance.values()),
        'system': {'peak_rss_mb': round(peak, 1), 'cpu_count': psutil.cpu_count() or 1,
                   'jobs': jobs, 'seconds': watch.seconds},
    }
    logger.info("Bench %s in %.1fs", "passed" if stats['passed'] else "FAILED", watch.seconds)
    return stats
