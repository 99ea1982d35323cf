# utils/logger.py

import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

load_dotenv()

LEVELS = {"DEBUG": 10, "INFO": 20, "METRICS": 25, "WARNING": 30, "ERROR": 40}


def _log_dir():
    """Log directory from the environment; empty string disables file logging"""
    value = os.getenv("LQSPARSE_LOG_DIR", "logs")
    return Path(value) if value else None


def _console_threshold():
    return LEVELS.get(os.getenv("LQSPARSE_LOG_LEVEL", "INFO").upper(), LEVELS["INFO"])


def to_plain(value):
    """Convert numpy payloads into JSON-serialisable values"""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def log_event(event_type, data, level="INFO"):
    """Log events to both file and console"""
    now = datetime.now(timezone.utc)
    timestamp = now.isoformat()
    log_entry = {
        "timestamp": timestamp,
        "event_type": event_type,
        "level": level,
        "data": to_plain(data),
    }

    log_dir = _log_dir()
    if log_dir is not None:
        try:
            log_dir.mkdir(parents=True, exist_ok=True)
            log_file = log_dir / f"lqsparse_{now.strftime('%Y%m%d')}.log"
            with open(log_file, "a") as f:
                f.write(json.dumps(log_entry) + "\n")
        except OSError as e:
            print(f"[{timestamp}] WARNING - log_write_failed: {e}", file=sys.stderr)

    if LEVELS.get(level, LEVELS["INFO"]) >= _console_threshold():
        print(f"[{timestamp}] {level} - {event_type}: {json.dumps(log_entry['data'])}", file=sys.stderr)


def log_error(error_msg, context=None):
    """Log errors with context"""
    error_data = {"error": str(error_msg)}
    if context:
        error_data["context"] = context
    log_event("error", error_data, "ERROR")


def log_metrics(metrics, event_type="metrics"):
    """Log numerical metrics (rates, residuals, table rows)"""
    log_event(event_type, metrics, "METRICS")
