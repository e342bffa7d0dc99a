"""
Run Logger for the FPGA Debug Overlay Toolkit.

Appends one CSV row per flow step (command, circuit, seed, wall time, status)
to the project's run_log.csv. Timings live here and in bench statistics only,
never in the deterministic artifacts. A single logger instance is shared by
everything running in a process.
"""

import csv
import logging
import os
from typing import Dict, List, Optional, Any

import common_utils

logger = logging.getLogger(__name__)

RUN_LOG_FIELDS = ['timestamp', 'command', 'circuit', 'seed', 'seconds', 'status', 'detail']


class RunLogger:
    """
    Singleton CSV log of flow step timings.

    Constructing it again with another path retargets the shared instance,
    so each project directory keeps its own log.
    """
    _instance = None

    def __new__(cls, log_file_path: Optional[str] = None):
        if cls._instance is None:
            cls._instance = super(RunLogger, cls).__new__(cls)
            cls._instance.log_file_path = log_file_path or common_utils.DEFAULT_RUN_LOG_FILE
            cls._instance._ensure_log_file_exists()
        elif log_file_path and log_file_path != cls._instance.log_file_path:
            cls._instance.log_file_path = log_file_path
            cls._instance._ensure_log_file_exists()
        return cls._instance

    def __init__(self, _=None):
        # Initialization is done in __new__
        pass

    def _ensure_log_file_exists(self) -> None:
        if not os.path.exists(self.log_file_path):
            log_dir = os.path.dirname(self.log_file_path)
            if log_dir:
                common_utils.ensure_dir_exists(log_dir)
            with open(self.log_file_path, 'w', newline='') as file:
                csv.writer(file).writerow(RUN_LOG_FIELDS)

    def log_run(self, command: str, circuit: str, seconds: float, status: str = 'ok',
                seed: Optional[int] = None, detail: str = '') -> bool:
        """
        Append one run record.

        Returns:
            True if the row was written; logging problems are reported, not raised
        """
        try:
            with open(self.log_file_path, 'a', newline='') as file:
                csv.writer(file).writerow([
                    common_utils.format_timestamp(), command, circuit,
                    '' if seed is None else seed, f"{seconds:.4f}", status, detail,
                ])
            logger.debug("Run logged: %s %s %.3fs %s", command, circuit, seconds, status)
            return True
        except OSError as e:
            logger.error("Error logging run: %s", str(e))
            return False

    def get_all_runs(self) -> List[Dict[str, Any]]:
        """All rows, oldest first."""
        if not os.path.exists(self.log_file_path):
            return []
        try:
            with open(self.log_file_path, 'r', newline='') as file:
                return list(csv.DictReader(file))
        except OSError as e:
            logger.error("Error reading run log: %s", str(e))
            return []

    def get_filtered_runs(self, filter_criteria: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
        runs = self.get_all_runs()
        if not filter_criteria:
            return runs
        return [run for run in runs
                if all(str(run.get(k, '')).lower() == str(v).lower() for k, v in filter_criteria.items())]

    def total_seconds(self, command: Optional[str] = None) -> float:
        runs = self.get_filtered_runs({'command': command} if command else None)
        total = 0.0
        for run in runs:
            try:
                total += float(run['seconds'])
            except (KeyError, ValueError):
                continue
        return total
