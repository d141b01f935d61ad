"""
Shared utilities for the causal discovery scripts.
Provides logging setup, input validation, the error hierarchy and the
result-record writer used by every CLI wrapper.
"""

import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

import numpy as np

import config


class CausalDiscoveryError(Exception):
    """Base class for all errors raised by this project."""


class DesignError(CausalDiscoveryError, ValueError):
    """Experiment design inconsistent with the compounds it refers to."""


class StudyFormatError(CausalDiscoveryError, ValueError):
    """A study or graph file could not be parsed."""

    def __init__(self, message: str, path: Optional[Path] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
                if column is not None:
                    location += f":{column}"
            location += ": "
        super().__init__(f"{location}{message}")


# Configure logging
def setup_logging(script_name: str) -> logging.Logger:
    """Set up logging for a script."""
    logs_dir = config.LOGS_DIR
    logs_dir.mkdir(parents=True, exist_ok=True)

    log_file = logs_dir / f"{script_name}_{datetime.now():%Y%m%d_%H%M%S}.log"

    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ]
    )

    logger = logging.getLogger(script_name)
    logger.info("Logging initialized: %s", log_file)
    return logger


def validate_input_file(file_path: Path) -> None:
    """
    Validate that input file exists and is readable.

    Args:
        file_path: Path to validate

    Raises:
        FileNotFoundError: If file doesn't exist
        ValueError: If file is empty or not a file
    """
    if not file_path.exists():
        raise FileNotFoundError(f"Input file not found: {file_path}")

    if not file_path.is_file():
        raise ValueError(f"Path is not a file: {file_path}")

    if file_path.stat().st_size == 0:
        raise ValueError(f"Input file is empty: {file_path}")


def _to_jsonable(value: Any) -> Any:
    """Convert numpy containers and scalars to plain JSON types."""
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        # JSON has no inf/nan literals
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def build_record(record_type: str, payload: dict) -> dict:
    """Wrap a payload in the versioned result-record envelope."""
    record = {
        "schema_version": config.RESULT_SCHEMA_VERSION,
        "record_type": record_type,
    }
    record.update(_to_jsonable(payload))
    return record


def write_record(path: Path, record_type: str, payload: dict) -> Path:
    """Write a result record as deterministic (sorted-key) JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    record = build_record(record_type, payload)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_record(path: Path, record_type: Optional[str] = None) -> dict:
    """Read a result record, checking its schema version and type."""
    validate_input_file(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise StudyFormatError(e.msg, path=path, line=e.lineno, column=e.colno) from e
    if record.get("schema_version") != config.RESULT_SCHEMA_VERSION:
        raise StudyFormatError(
            f"unsupported schema_version {record.get('schema_version')!r}", path=path
        )
    if record_type is not None and record.get("record_type") != record_type:
        raise StudyFormatError(
            f"expected record_type {record_type!r}, found {record.get('record_type')!r}",
            path=path,
        )
    return record


def emit_error_record(exc: BaseException, stream=None) -> None:
    """Print a machine-readable error record (one JSON line) to stderr."""
    stream = stream if stream is not None else sys.stderr
    record = {
        "schema_version": config.RESULT_SCHEMA_VERSION,
        "status": "error",
        "error_type": type(exc).__name__,
        "message": str(exc),
    }
    print(json.dumps(record, sort_keys=True), file=stream)
