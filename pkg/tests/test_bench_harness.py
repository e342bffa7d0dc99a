import random

import pytest

import bench_harness
from bench_harness import (SuiteConfig, _verdict, brute_force_matching_size, evaluate_acceptance,
                           matching_oracle, random_bipartite, run_bench, run_trigger, sa_fixture, summarize,
                           suite_circuits)
from fabric_model import NodeKind, Occupancy
from settings_manager import SettingsManager
from trace_overlay import apply_to_mask
from trigger_overlay import RecompileResult, SAParams, TriggerMapping, min_mapping_cost

SMALL_SUITE = {
    'arch': {'tb_column_period': 2},
    'suite': {'matching_instances': 20, 'sa_fixture_runs': 5, 'requested_sets': 3,
              'observability_sizes': [1, 2], 'observability_samples': 5},
}


@pytest.fixture
def settings(tmp_path):
    manager = SettingsManager(str(tmp_path / "absent.json"))
    manager.update_settings(SMALL_SUITE)
    return manager


def test_brute_force_matching_on_known_graphs():
    assert brute_force_matching_size({'a': [1, 2], 'b': [1], 'c': [1]}) == 2
    assert brute_force_matching_size({'a': [], 'b': []}) == 0
    assert brute_force_matching_size({'a': [1], 'b': [2], 'c': [3]}) == 3


def test_random_bipartite_is_seeded():
    first = random_bipartite(random.Random(4), 6)
    assert first == random_bipartite(random.Random(4), 6)
    assert len(first) <= 6


def test_matching_oracle_agrees():
    result = matching_oracle(60, 2)
    assert result['instances'] == 60
    assert result['mismatches'] == 0
    assert result['seconds'] >= 0.0


def test_sa_fixture_is_enumerable():
    fabric, trig = sa_fixture(5)
    assert fabric.total_slots <= 8
    assert 2 <= len(trig.les()) <= 4
    assert trig.max_lut_inputs() <= fabric.lut_size
    assert min_mapping_cost(fabric, trig, SAParams()) >= 0.0


@pytest.mark.parametrize("value, threshold, relation, passed", [
    (0.96, 0.95, '>=', True),
    (0.94, 0.95, '>=', False),
    (12.0, 60.0, '<=', True),
    (1, 0, '==', False),
    (None, 1.0, '>=', False),
])
def test_verdicts(value, threshold, relation, passed):
    assert _verdict(value, threshold, relation)['passed'] is passed


def test_summary_and_acceptance(settings):
    circuits = [
        {'fraction_connected': 1.0, 'overlay_ratio': 0.2, 'overlay_seconds': 1.0,
         'config_checks': 10, 'config_failures': 0, 'legality_problems': 0,
         'trigger': {'speedup': 40.0, 'verify_problems': 0}},
        {'fraction_connected': 0.92, 'overlay_ratio': 0.4, 'overlay_seconds': 3.0,
         'config_checks': 10, 'config_failures': 0, 'legality_problems': 0},
    ]
    summary = summarize(circuits, {'mismatches': 0, 'seconds': 0.5}, {'optimal': 97})

    assert summary['mean_fraction_connected'] == pytest.approx(0.96)
    assert summary['min_fraction_connected'] == pytest.approx(0.92)
    assert summary['config_pass_rate'] == 1.0
    assert summary['median_trigger_speedup'] == 40.0

    acceptance = evaluate_acceptance(summary, settings.acceptance())
    assert len(acceptance) == 11
    assert all(v['passed'] for v in acceptance.values())

    summary['matching_mismatches'] = 1
    assert not evaluate_acceptance(summary, settings.acceptance())['matching_oracle_mismatches']['passed']


def test_suite_plan_follows_the_settings(settings):
    plan = suite_circuits(settings)
    assert plan[0] == (1, 50, 4)
    assert len(plan) == 10


def test_bench_on_one_small_circuit(settings):
    stats = run_bench(settings, plan=[(1, 12, 4)])

    assert stats['kind'] == 'bench'
    row = stats['circuits'][0]
    assert row['luts'] == 12
    assert row['legality_problems'] == 0
    assert row['config_failures'] == 0
    assert 'trigger' not in row
    assert stats['trigger'][0]['les'] == 4
    assert stats['matching_oracle']['mismatches'] == 0
    assert stats['sa_fixtures']['runs'] == 5
    assert set(stats['acceptance']) == set(evaluate_acceptance(stats['summary'], settings.acceptance()))
    assert stats['system']['jobs'] == 1


def test_trigger_row_counts_feed_route_problems(settings, compiled, forest, monkeypatch):
    user = next(n for n in compiled.mask.nodes_with(Occupancy.USER)
                if compiled.rrg.kinds[n] in (NodeKind.CHANX, NodeKind.CHANY))
    parent = compiled.rrg.in_edges[user][0]

    def feed_over_user_net(fabric, trig, params, rrg, mask, opins):
        return TriggerMapping({}, [], 0.0, [], input_feeds={trig.inputs[0]: {user: parent}})

    checked = []
    real_verify = bench_harness.verify_mapping

    def recording_verify(*args):
        checked.extend(real_verify(*args))
        return list(checked)

    monkeypatch.setattr(bench_harness, 'map_trigger', feed_over_user_net)
    monkeypatch.setattr(bench_harness, 'verify_mapping', recording_verify)
    monkeypatch.setattr(bench_harness, 'baseline_recompile_trigger',
                        lambda *args: RecompileResult(True, 1.0, None, None))

    row = run_trigger(SuiteConfig.from_settings(settings), compiled.netlist, compiled.arch, compiled.rrg,
                      apply_to_mask(compiled.mask, forest), compiled.placement, compiled.opins,
                      forest.nodes(), 1, 4)

    assert any(f"node {user} is USER" in p for p in checked)
    assert row['verify_problems'] == len(checked)


@pytest.mark.slow
def test_full_suite_meets_acceptance(tmp_path):
    stats = run_bench(SettingsManager(str(tmp_path / "absent.json")), jobs=2)
    failed = [name for name, verdict in stats['acceptance'].items() if not verdict['passed']]
    assert failed == []
