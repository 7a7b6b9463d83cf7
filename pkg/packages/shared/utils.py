"""
KDEXP - Shared Utilities
Common utility functions used across all packages
"""

import hashlib
import json
import logging
import os
import platform
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Union

import psutil
from pythonjsonlogger import jsonlogger

from packages.shared.config import shared_config

logger = logging.getLogger("KDEXP.Utils")


def configure_logging(
    level: Optional[str] = None,
    json_output: Optional[bool] = None,
) -> None:
    """Configure the root logger once per process"""
    level = (level or ("DEBUG" if shared_config.debug else shared_config.log_level)).upper()
    json_output = shared_config.log_json if json_output is None else json_output

    handler = logging.StreamHandler()
    if json_output:
        handler.setFormatter(jsonlogger.JsonFormatter(shared_config.log_format))
    else:
        handler.setFormatter(logging.Formatter(shared_config.log_format))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level)


def get_timestamp() -> str:
    """Get current timestamp in ISO format"""
    return datetime.now(timezone.utc).isoformat()


def safe_json_dumps(obj: Any, default: str = "{}") -> str:
    """Safely dump object to JSON string with fallback"""
    try:
        return json.dumps(obj, default=str, ensure_ascii=False, indent=2, sort_keys=True)
    except (TypeError, ValueError):
        logger.warning(f"Failed to serialize to JSON: {type(obj)}")
        return default


def canonical_hash(payload: Dict[str, Any]) -> str:
    """SHA-256 of the canonical (sorted, compact) JSON form of a mapping"""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def ensure_directory(path: Union[str, Path]) -> Path:
    """Ensure directory exists, create if it doesn't"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write text through a temp file in the same directory, then rename"""
    path = Path(path)
    ensure_directory(path.parent)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_json(path: Union[str, Path], payload: Any) -> Path:
    """Atomically write a JSON document"""
    return atomic_write_text(path, safe_json_dumps(payload) + "\n")


def get_system_info() -> Dict[str, Any]:
    """Get basic system information"""
    return {
        "platform": platform.platform(),
        "python_version": platform.python_version(),
        "cpu_count": psutil.cpu_count(),
        "memory_total": psutil.virtual_memory().total,
    }


# Performance monitoring utilities
class Timer:
    """Simple timer context manager"""

    def __init__(self, name: str = "Operation", log: Optional[logging.Logger] = None):
        self.name = name
        self.log = log or logger
        self.start_time: Optional[float] = None
        self.end_time: Optional[float] = None

    def __enter__(self) -> "Timer":
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.end_time = time.perf_counter()
        self.log.info(f"{self.name} completed in {self.duration:.2f} seconds")

    @property
    def duration(self) -> Optional[float]:
        if self.start_time is not None and self.end_time is not None:
            return self.end_time - self.start_time
        return None
