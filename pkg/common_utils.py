"""
Common utility functions for the FPGA Debug Overlay Toolkit.

This module provides reusable helpers for deterministic JSON artifacts,
content hashing, timestamps, directory handling and small numeric
conversions shared by the flow modules.
"""

import os
import json
import math
import time
import hashlib
import datetime
from typing import Dict, Any, Optional

# Default file paths
DEFAULT_SETTINGS_FILE = 'overlay_debug_settings.json'
DEFAULT_RUN_LOG_FILE = 'run_log.csv'


def dump_json_text(data: Any) -> str:
    """
    Serialize data to canonical JSON text.

    Keys are sorted and the indentation is fixed so that equal content always
    produces equal bytes, which is what the determinism checks compare.

    Args:
        data: JSON-compatible data

    Returns:
        JSON text terminated by a newline
    """
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def save_json(data: Dict[str, Any], filename: str) -> None:
    """
    Save dictionary data to a JSON file in canonical form.

    Args:
        data: Dictionary to save
        filename: Path to the output JSON file

    Raises:
        OSError: If the file cannot be written; the message names the file
    """
    directory = os.path.dirname(filename)
    if directory:
        ensure_dir_exists(directory)
    try:
        with open(filename, 'w', newline='\n') as f:
            f.write(dump_json_text(data))
    except OSError as e:
        raise OSError(f"Failed to save data to {filename}: {str(e)}") from e


def load_json(filename: str, default: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Load data from a JSON file.

    Args:
        filename: Path to the JSON file to load
        default: Default value to return if file doesn't exist

    Returns:
        Dictionary containing the loaded JSON data or default value

    Raises:
        ValueError: If the file exists but is not valid JSON
    """
    if not os.path.exists(filename):
        return default if default is not None else {}

    try:
        with open(filename, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"Failed to load data from {filename}: {str(e)}") from e


def file_sha256(filename: str) -> Optional[str]:
    """
    Hash a file's bytes.

    Args:
        filename: Path of the file to hash

    Returns:
        Hex digest, or None if the file does not exist
    """
    if not os.path.exists(filename):
        return None
    digest = hashlib.sha256()
    with open(filename, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            digest.update(chunk)
    return digest.hexdigest()


def text_sha256(text: str) -> str:
    """Hash a string as UTF-8."""
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def format_timestamp(timestamp: Optional[str] = None,
                     format_str: str = "%Y-%m-%d %H:%M:%S") -> str:
    """
    Format a timestamp string or generate current timestamp.

    Args:
        timestamp: Timestamp string to format (format: "%Y-%m-%d %H:%M:%S")
                  If None, current time is used
        format_str: Output format string

    Returns:
        Formatted timestamp string
    """
    if timestamp:
        try:
            dt = datetime.datetime.strptime(timestamp, "%Y-%m-%d %H:%M:%S")
            return dt.strftime(format_str)
        except ValueError:
            # If parsing fails, fall back to current time
            pass

    return datetime.datetime.now().strftime(format_str)


def ensure_dir_exists(directory: str) -> None:
    """
    Create directory if it doesn't exist.

    Args:
        directory: Path to directory to create
    """
    if not os.path.exists(directory):
        os.makedirs(directory)


def even_ceil(value: float, minimum: int = 2) -> int:
    """
    Round up to the nearest even integer, never below minimum.

    Channel widths are kept even because tracks come in direction pairs.

    Args:
        value: Width to round
        minimum: Smallest width to return

    Returns:
        Even integer >= value and >= minimum
    """
    width = int(math.ceil(value - 1e-9))
    if width % 2:
        width += 1
    return max(minimum, width)


class Stopwatch:
    """Context manager measuring wall time with perf_counter."""

    def __init__(self):
        self.seconds = 0.0
        self._start = 0.0

    def __enter__(self) -> 'Stopwatch':
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.seconds = time.perf_counter() - self._start
