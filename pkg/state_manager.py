"""
Project state for the FPGA Debug Overlay Toolkit.

A project is a directory of artifacts. Next to them, project_state.json
records for every artifact its content hash, the command that produced it
and the hashes of the artifacts it was derived from, so a derivation whose
inputs changed afterwards is detected as stale. Observers subscribe to
artifact writes; the command line uses one to report what each step wrote.
"""

import logging
import os
from typing import Dict, List, Callable, Any, Optional, Iterable, Set

import common_utils
from errors import StaleArtifactError, ValidationError
from flow_constants import PROJECT_STATE_FILE

logger = logging.getLogger(__name__)

ANY_ARTIFACT = '*'

# Which command writes each artifact, for hints when one is missing
PRODUCERS = {
    'arch.json': 'gen-arch',
    'netlist.blif': 'synth-random',
    'trigger.blif': 'synth-trigger',
    'placement.json': 'pnr',
    'routing.json': 'pnr',
    'minw.json': 'minw',
    'overlay.json': 'build-trace-overlay',
    'overlay_report.json': 'build-trace-overlay',
    'trigger_fabric.json': 'build-trigger-fabric',
    'debug_config.json': 'select-signals',
    'trigger_config.json': 'map-trigger',
    'stats.json': 'stats',
}


class ProjectState:
    """
    Artifact manifest of one project directory.

    Attributes:
        directory: Project directory
        manifest: artifact name -> {'sha256', 'command', 'inputs'}
    """

    def __init__(self, directory: str):
        self.directory = directory
        common_utils.ensure_dir_exists(directory)
        self.manifest: Dict[str, Dict[str, Any]] = {}
        self._observers: Dict[str, List[Callable[[str, Dict[str, Any]], None]]] = {}
        # Artifacts the current command must not rewrite
        self.locked: Set[str] = set()
        self.load()

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.directory, PROJECT_STATE_FILE)

    def path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def exists(self, name: str) -> bool:
        return os.path.exists(self.path(name))

    def load(self) -> None:
        try:
            data = common_utils.load_json(self.manifest_path, {})
        except ValueError as e:
            raise ValidationError(str(e), PROJECT_STATE_FILE) from e
        self.manifest = data.get('artifacts', {})

    def save(self) -> None:
        common_utils.save_json({'artifacts': self.manifest}, self.manifest_path)

    # ----- observers -----

    def register_observer(self, name: str, callback: Callable[[str, Dict[str, Any]], None]) -> None:
        """Call callback(name, record) whenever artifact name (or any, for '*') is recorded."""
        callbacks = self._observers.setdefault(name, [])
        if callback not in callbacks:
            callbacks.append(callback)

    def _notify_observers(self, name: str, record: Dict[str, Any]) -> None:
        for callback in self._observers.get(name, []) + self._observers.get(ANY_ARTIFACT, []):
            try:
                callback(name, record)
            except Exception as e:
                # Observer failures never abort a flow step
                logger.error("Error notifying observer for %s: %s", name, str(e))

    # ----- artifacts -----

    def require(self, names: Iterable[str]) -> None:
        """
        Raises:
            ValidationError: naming the first missing artifact and its producer
        """
        for name in names:
            if not self.exists(name):
                hint = PRODUCERS.get(name)
                suffix = f" (run '{hint}' first)" if hint else ""
                raise ValidationError(f"missing artifact {name}{suffix}", name)

    def record(self, name: str, command: str, inputs: Iterable[str] = ()) -> Dict[str, Any]:
        """Hash an artifact that was just written and remember where it came from."""
        record = {
            'sha256': common_utils.file_sha256(self.path(name)),
            'command': command,
            'inputs': {i: common_utils.file_sha256(self.path(i)) for i in sorted(set(inputs))},
        }
        self.manifest[name] = record
        self.save()
        self._notify_observers(name, record)
        return record

    def write_json(self, name: str, data: Dict[str, Any], command: str,
                   inputs: Iterable[str] = ()) -> str:
        self._check_unlocked(name)
        common_utils.save_json(data, self.path(name))
        self.record(name, command, inputs)
        return self.path(name)

    def write_text(self, name: str, text: str, command: str, inputs: Iterable[str] = ()) -> str:
        self._check_unlocked(name)
        try:
            with open(self.path(name), 'w', newline='\n') as f:
                f.write(text)
        except OSError as e:
            raise OSError(f"Failed to save {name}: {str(e)}") from e
        self.record(name, command, inputs)
        return self.path(name)

    def _check_unlocked(self, name: str) -> None:
        if name in self.locked:
            raise ValidationError("artifact is locked for this command", name)

    def read_json(self, name: str) -> Dict[str, Any]:
        """
        Load a JSON artifact after a freshness check.

        Raises:
            ValidationError: if missing or not JSON
            StaleArtifactError: if an input changed since it was derived
        """
        self.require([name])
        self.check_fresh(name)
        try:
            return common_utils.load_json(self.path(name))
        except ValueError as e:
            raise ValidationError(str(e), name) from e

    def stale_inputs(self, name: str) -> List[str]:
        record = self.manifest.get(name)
        if record is None:
            return []
        stale = []
        for input_name, digest in sorted(record.get('inputs', {}).items()):
            if common_utils.file_sha256(self.path(input_name)) != digest:
                stale.append(input_name)
        return stale

    def check_fresh(self, name: str) -> None:
        record = self.manifest.get(name)
        if record is not None and record.get('sha256') != common_utils.file_sha256(self.path(name)):
            raise StaleArtifactError(name, "file was modified after it was produced")
        stale = self.stale_inputs(name)
        if stale:
            raise StaleArtifactError(name, f"derived from changed input(s) {', '.join(stale)}")

    def digest(self, name: str) -> Optional[str]:
        return common_utils.file_sha256(self.path(name))
