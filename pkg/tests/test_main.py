import json
import os
import shutil

import pytest

import common_utils
from flow_constants import (DEBUG_CONFIG_FILE, EXIT_PARTIAL, EXIT_SUCCESS, EXIT_VALIDATION, OVERLAY_REPORT_FILE,
                            PLACEMENT_FILE, ROUTING_FILE, STATS_FILE, TRIGGER_CONFIG_FILE)
from main import run
from run_logger import RunLogger

PROJECT_SETTINGS = {
    'arch': {'grid_width': 1, 'grid_height': 1, 'tb_column_period': 2},
    'router': {'w_hi': 32},
    'trigger_overlay': {'moves_per_le': 20},
    'suite': {'observability_sizes': [1, 2], 'observability_samples': 5},
}

COMPILE_STEPS = [
    ['synth-random', '--luts', '12', '--name', 'small'],
    ['gen-arch', '--for-netlist'],
    ['pnr', '--width', '32'],
    ['minw'],
    ['pnr', '--margin', '0.5'],
    ['build-trace-overlay', '--fanout', '2', '--margin', '0.5'],
    ['build-trigger-fabric'],
    ['synth-trigger', '--les', '4'],
]


@pytest.fixture(autouse=True)
def fresh_run_logger():
    yield
    RunLogger._instance = None


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    """A compiled project directory; tests copy it before changing anything."""
    directory = str(tmp_path_factory.mktemp("compiled"))
    common_utils.save_json(PROJECT_SETTINGS, os.path.join(directory, common_utils.DEFAULT_SETTINGS_FILE))
    statuses = [run(step + ['--project', directory]) for step in COMPILE_STEPS]
    RunLogger._instance = None
    assert statuses == [EXIT_SUCCESS] * len(COMPILE_STEPS)
    return directory


@pytest.fixture
def workdir(project, tmp_path):
    directory = str(tmp_path / "proj")
    shutil.copytree(project, directory)
    return directory


def _connected_signals(directory):
    with open(os.path.join(directory, OVERLAY_REPORT_FILE)) as f:
        reach = json.load(f)['reach']
    return [signal for signal, count in sorted(reach.items()) if count > 0]


def _read_bytes(directory, name):
    with open(os.path.join(directory, name), 'rb') as f:
        return f.read()


def test_debug_flow_end_to_end(workdir, capsys):
    capsys.readouterr()
    placement = _read_bytes(workdir, PLACEMENT_FILE)
    routing = _read_bytes(workdir, ROUTING_FILE)
    wanted = _connected_signals(workdir)[:1]
    assert wanted

    assert run(['select-signals', '--want'] + wanted + ['--project', workdir]) == EXIT_SUCCESS
    assert run(['map-trigger', '--project', workdir]) in (EXIT_SUCCESS, EXIT_PARTIAL)
    assert os.path.exists(os.path.join(workdir, TRIGGER_CONFIG_FILE))
    assert run(['verify', '--project', workdir]) == EXIT_SUCCESS
    assert run(['stats', '--project', workdir, '--pdf', os.path.join(workdir, 'stats.pdf')]) == EXIT_SUCCESS

    assert _read_bytes(workdir, PLACEMENT_FILE) == placement
    assert _read_bytes(workdir, ROUTING_FILE) == routing
    stats = common_utils.load_json(os.path.join(workdir, STATS_FILE))
    assert stats['circuit'] == 'small'
    assert 'trigger_mapping' in stats
    assert _read_bytes(workdir, 'stats.pdf')[:4] == b'%PDF'

    summaries = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [s['command'] for s in summaries] == ['select-signals', 'map-trigger', 'verify', 'stats']
    assert summaries[2]['violations'] == 0
    assert summaries[0]['written'] == [DEBUG_CONFIG_FILE]
    assert summaries[2]['written'] == []
    assert summaries[3]['written'] == [STATS_FILE]
    run_seconds = summaries[3]['run_seconds']
    assert {'pnr', 'minw', 'select-signals', 'verify'} <= set(run_seconds)
    assert 'bench' not in run_seconds
    assert run_seconds['pnr'] > 0.0
    assert 'run_seconds' not in stats


def test_signal_selection_is_reproducible(workdir):
    wanted = ','.join(_connected_signals(workdir)[:3])
    assert run(['select-signals', '--want', wanted, '--project', workdir]) in (EXIT_SUCCESS, EXIT_PARTIAL)
    first = _read_bytes(workdir, DEBUG_CONFIG_FILE)
    assert run(['select-signals', '--want', wanted, '--project', workdir]) in (EXIT_SUCCESS, EXIT_PARTIAL)
    assert _read_bytes(workdir, DEBUG_CONFIG_FILE) == first


def test_unknown_signal_is_a_validation_error(workdir, capsys):
    capsys.readouterr()
    assert run(['select-signals', '--want', 'no_such_signal', '--project', workdir]) == EXIT_VALIDATION
    summary = json.loads(capsys.readouterr().out)
    assert "no_such_signal" in summary['error']
    assert not os.path.exists(os.path.join(workdir, DEBUG_CONFIG_FILE))


def test_hand_edited_placement_is_refused(workdir):
    with open(os.path.join(workdir, PLACEMENT_FILE), 'a') as f:
        f.write("\n")
    assert run(['build-trace-overlay', '--project', workdir]) == EXIT_VALIDATION


def test_missing_artifacts_name_the_producer(tmp_path, capsys):
    assert run(['pnr', '--project', str(tmp_path)]) == EXIT_VALIDATION
    assert "gen-arch" in json.loads(capsys.readouterr().out)['error']


def test_every_run_is_logged(workdir):
    run(['verify', '--project', workdir])
    runs = RunLogger(os.path.join(workdir, common_utils.DEFAULT_RUN_LOG_FILE)).get_all_runs()
    assert [r['command'] for r in runs][:len(COMPILE_STEPS)] == [step[0] for step in COMPILE_STEPS]
    assert runs[-1]['command'] == 'verify'
    assert runs[-1]['circuit'] == 'small'
