# utils.py

from dataclasses import fields, is_dataclass
from datetime import datetime, date, time, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Union
import json

import numpy as np
import pandas as pd
import yaml

try:
    from rlnc_tdd.logging_config import get_logger
except ImportError:
    from logging_config import get_logger

logger = get_logger(__name__)

# Significant digits for machine-readable numeric output
SIG_DIGITS = 12


def now_utc() -> datetime:
    """Return current time as a timezone-aware UTC datetime."""
    return datetime.now(timezone.utc)


def resolve_user_path(path: Union[str, Path], *, base_dir: Union[str, Path, None] = None) -> Path:
    """Resolve a user-provided path.

    - Absolute paths are normalized.
    - Relative paths are resolved under base_dir (or current working directory).
    """
    raw = Path(path).expanduser()
    if raw.is_absolute():
        return raw.resolve()
    base = Path(base_dir).resolve() if base_dir is not None else Path.cwd().resolve()
    return (base / raw).resolve()


def read_yaml_file(path: Union[str, Path]) -> dict:
    """Read a YAML file and return a dict (empty dict for an empty file)."""
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def round_sig(value: float, digits: int = SIG_DIGITS) -> float:
    """Round a float to ``digits`` significant digits; non-finite values pass through."""
    if value == 0 or not np.isfinite(value):
        return float(value)
    return float(f"{value:.{digits}g}")


def _to_primitive(obj: Any) -> Any:
    """Recursively convert dataclasses, Enums, numpy values and datetimes to JSON-serializable primitives.

    Floats are rounded to ``SIG_DIGITS`` significant digits. Dataclass fields
    holding numpy arrays or DataFrames are converted without deep-copying.
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_primitive(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (datetime, date, time)):
        return obj.isoformat()
    if isinstance(obj, pd.DataFrame):
        return [_to_primitive(r) for r in obj.to_dict(orient="records")]
    if isinstance(obj, np.ndarray):
        return [_to_primitive(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return round_sig(float(obj))
    if isinstance(obj, dict):
        return {_key(k): _to_primitive(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [_to_primitive(v) for v in obj]
    return obj


def _key(k: Any) -> Any:
    if isinstance(k, tuple):
        return ",".join(str(_to_primitive(x)) for x in k)
    if isinstance(k, (np.integer, np.floating)):
        return str(k.item())
    return k


def write_json_file(path: Union[str, Path], data: Any, *, indent: int = 2) -> None:
    """Write data to a JSON file, creating the parent directory first."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as f:
        json.dump(_to_primitive(data), f, indent=indent, allow_nan=True)


def write_csv_file(path: Union[str, Path], frame: pd.DataFrame) -> None:
    """Write a DataFrame as CSV with ``SIG_DIGITS`` significant digits."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(p, index=False, float_format=f"%.{SIG_DIGITS}g")
