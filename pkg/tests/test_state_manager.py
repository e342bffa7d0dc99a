import pytest

from errors import StaleArtifactError, ValidationError
from flow_constants import PLACEMENT_FILE
from state_manager import ANY_ARTIFACT, ProjectState


@pytest.fixture
def state(tmp_path):
    return ProjectState(str(tmp_path / "proj"))


def test_written_artifacts_are_recorded(state):
    state.write_text('netlist.blif', ".model m\n.end\n", 'synth-random')
    state.write_json('arch.json', {'grid_width': 2}, 'gen-arch', inputs=['netlist.blif'])

    assert state.read_json('arch.json') == {'grid_width': 2}
    record = ProjectState(state.directory).manifest['arch.json']
    assert record['command'] == 'gen-arch'
    assert record['inputs'] == {'netlist.blif': state.digest('netlist.blif')}


def test_hand_edited_artifact_is_stale(state):
    path = state.write_json('minw.json', {'w_min': 8}, 'minw')
    with open(path, 'w') as f:
        f.write('{"w_min": 2}')
    with pytest.raises(StaleArtifactError) as excinfo:
        state.read_json('minw.json')
    assert "modified" in str(excinfo.value)


def test_changed_input_makes_derivations_stale(state):
    state.write_text('netlist.blif', ".model m\n.end\n", 'synth-random')
    state.write_json(PLACEMENT_FILE, {'blocks': {}}, 'pnr', inputs=['netlist.blif'])
    state.write_text('netlist.blif', ".model other\n.end\n", 'synth-random')

    assert state.stale_inputs(PLACEMENT_FILE) == ['netlist.blif']
    with pytest.raises(StaleArtifactError):
        state.check_fresh(PLACEMENT_FILE)


def test_missing_artifact_names_its_producer(state):
    with pytest.raises(ValidationError) as excinfo:
        state.require(['overlay.json'])
    assert excinfo.value.field == 'overlay.json'
    assert "build-trace-overlay" in str(excinfo.value)


def test_locked_artifacts_cannot_be_rewritten(state):
    state.write_json(PLACEMENT_FILE, {'blocks': {}}, 'pnr')
    state.locked.add(PLACEMENT_FILE)
    with pytest.raises(ValidationError):
        state.write_json(PLACEMENT_FILE, {'blocks': {'a': [1, 1, 0]}}, 'select-signals')
    assert state.read_json(PLACEMENT_FILE) == {'blocks': {}}


def test_observers_hear_about_writes(state):
    heard = []

    def broken(name, record):
        raise RuntimeError("observer failure")

    state.register_observer('stats.json', lambda name, record: heard.append(('one', name)))
    state.register_observer(ANY_ARTIFACT, lambda name, record: heard.append(('any', name)))
    state.register_observer(ANY_ARTIFACT, broken)
    state.write_json('stats.json', {}, 'stats')
    state.write_json('minw.json', {}, 'minw')

    assert heard == [('one', 'stats.json'), ('any', 'stats.json'), ('any', 'minw.json')]
