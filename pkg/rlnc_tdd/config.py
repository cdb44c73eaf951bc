"""
Configuration loading for link and analysis parameters.

Two syntaxes map onto the same key set:

- plain text ``key = value`` lines (``#`` comments, blank lines ignored)
- a YAML mapping, selected by a ``.yaml``/``.yml`` suffix

Every problem is reported as a ``ConfigError`` carrying the file path and the
1-based line number (0 for YAML, where lines are not tracked).
"""

from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

try:
    from rlnc_tdd.errors import ConfigError, PreconditionError
    from rlnc_tdd.logging_config import get_logger
    from rlnc_tdd.models import AnalysisConfig, LinkParams
    from rlnc_tdd.utils import read_yaml_file
except ImportError:
    from errors import ConfigError, PreconditionError
    from logging_config import get_logger
    from models import AnalysisConfig, LinkParams
    from utils import read_yaml_file

logger = get_logger(__name__)

# ─────────────────────────────────────────────────────────────
# ⚙️ KEYS
# ─────────────────────────────────────────────────────────────

REQUIRED_LINK_KEYS = (
    "pe", "rate_bps", "payload_bits", "header_bits", "coeff_bits", "ack_bits", "prop_delay_s",
)
OPTIONAL_LINK_KEYS = ("pe_ack", "tx_power", "rx_power", "t_wait_s")
LINK_KEYS = REQUIRED_LINK_KEYS + OPTIONAL_LINK_KEYS

# config key -> AnalysisConfig field
ANALYSIS_KEYS = {
    "lambda": "lambda_rate",
    "m": "m",
    "K": "k_max",
    "B": "capacity",
    "pmf_tol": "pmf_tol",
    "search_window": "search_window",
    "node_cap": "node_cap",
    "seed": "seed",
    "completions": "completions",
    "warmup": "warmup",
    "batches": "batches",
}

INTEGER_KEYS = {
    "payload_bits", "header_bits", "coeff_bits", "ack_bits",
    "m", "K", "B", "search_window", "node_cap", "seed", "completions", "batches",
}

DEFAULT_LINK_FILE = Path(__file__).with_name("default_link.yaml")


# ─────────────────────────────────────────────────────────────
# 📄 PARSING
# ─────────────────────────────────────────────────────────────

def _coerce(key: str, raw: Any, path: Optional[str], line: Optional[int]) -> Union[int, float]:
    if isinstance(raw, bool):
        raise ConfigError(f"value for '{key}' must be numeric, got {raw!r}", path, line)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"value for '{key}' must be numeric, got {raw!r}", path, line) from None
    if key in INTEGER_KEYS:
        if not value.is_integer():
            raise ConfigError(f"value for '{key}' must be an integer, got {raw!r}", path, line)
        return int(value)
    return value


def parse_config_text(text: str, path: Optional[str] = None) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Parse ``key = value`` lines.

    Returns:
        (values, line numbers) keyed by configuration key
    """
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        content = raw_line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", path, lineno)
        key, _, raw_value = content.partition("=")
        key, raw_value = key.strip(), raw_value.strip()
        if not key or not raw_value:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", path, lineno)
        if key not in LINK_KEYS and key not in ANALYSIS_KEYS:
            raise ConfigError(f"unknown key '{key}'", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate key '{key}' (first set on line {lines[key]})", path, lineno)
        values[key] = _coerce(key, raw_value, path, lineno)
        lines[key] = lineno
    return values, lines


def parse_config_mapping(data: Any, path: Optional[str] = None) -> Dict[str, Any]:
    """Validate a YAML mapping against the known keys."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of key: value", path, 0)
    values: Dict[str, Any] = {}
    for key, raw_value in data.items():
        key = str(key)
        if key not in LINK_KEYS and key not in ANALYSIS_KEYS:
            raise ConfigError(f"unknown key '{key}'", path, 0)
        if raw_value is None:
            continue
        values[key] = _coerce(key, raw_value, path, 0)
    return values


def build_config(values: Dict[str, Any], path: Optional[str] = None,
                 lines: Optional[Dict[str, int]] = None) -> AnalysisConfig:
    """Turn parsed key/value pairs into an ``AnalysisConfig``."""
    lines = lines or {}
    for key in REQUIRED_LINK_KEYS:
        if key not in values:
            raise ConfigError(f"missing required key '{key}'", path, 0 if path else None)

    link_kwargs = {k: values[k] for k in LINK_KEYS if k in values}
    link_kwargs.setdefault("pe_ack", values["pe"])
    try:
        link = LinkParams(**link_kwargs)
    except PreconditionError as exc:
        offending = str(exc).split()[0]
        raise ConfigError(str(exc), path, lines.get(offending)) from exc

    analysis_kwargs = {field: values[key] for key, field in ANALYSIS_KEYS.items() if key in values}
    cfg = AnalysisConfig(link=link, **analysis_kwargs)
    _validate_analysis(cfg, path, lines)
    return cfg


def _validate_analysis(cfg: AnalysisConfig, path: Optional[str], lines: Dict[str, int]) -> None:
    checks = (
        ("lambda", cfg.lambda_rate is None or cfg.lambda_rate >= 0, "must be non-negative"),
        ("m", cfg.m is None or cfg.m >= 1, "must be at least 1"),
        ("K", cfg.k_max is None or cfg.k_max >= 1, "must be at least 1"),
        ("B", cfg.capacity is None or cfg.capacity >= 1, "must be at least 1"),
        ("pmf_tol", 0 < cfg.pmf_tol < 1, "must lie in (0, 1)"),
        ("search_window", cfg.search_window >= 1, "must be at least 1"),
        ("node_cap", cfg.node_cap >= 1, "must be at least 1"),
        ("seed", 0 <= cfg.seed < 2 ** 64, "must be a 64-bit unsigned integer"),
        ("completions", cfg.completions >= 1, "must be at least 1"),
        ("warmup", 0 <= cfg.warmup < 1, "must lie in [0, 1)"),
        ("batches", cfg.batches >= 20, "must be at least 20"),
    )
    for key, ok, message in checks:
        if not ok:
            raise ConfigError(f"'{key}' {message}", path, lines.get(key))


def load_config(path: Union[str, Path]) -> AnalysisConfig:
    """Load a configuration file.

    Args:
        path: ``.yaml``/``.yml`` for YAML, anything else for ``key = value`` text

    Returns:
        AnalysisConfig with a validated LinkParams

    Raises:
        ConfigError: on any unreadable, unknown, malformed, missing or invalid entry
    """
    p = Path(path)
    shown = str(p)
    if not p.is_file():
        raise ConfigError("configuration file not found", shown)
    if p.suffix.lower() in (".yaml", ".yml"):
        try:
            data = read_yaml_file(p)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {exc}", shown, mark.line + 1 if mark else 0) from exc
        cfg = build_config(parse_config_mapping(data, shown), shown)
    else:
        values, lines = parse_config_text(p.read_text(encoding="utf-8"), shown)
        cfg = build_config(values, shown, lines)
    logger.debug("Loaded configuration from %s: %s", shown, cfg)
    return cfg


def load_default_config() -> AnalysisConfig:
    """The packaged high-latency link with its analysis defaults."""
    data = read_yaml_file(DEFAULT_LINK_FILE)
    return build_config(parse_config_mapping(data, str(DEFAULT_LINK_FILE)), str(DEFAULT_LINK_FILE))


def load_default_params() -> LinkParams:
    return load_default_config().link


def with_overrides(cfg: AnalysisConfig, **overrides: Any) -> AnalysisConfig:
    """Apply command-line overrides; ``None`` values are ignored.

    ``pe_ack`` overrides the link; every other key names an AnalysisConfig field.
    """
    overrides = {k: v for k, v in overrides.items() if v is not None}
    pe_ack = overrides.pop("pe_ack", None)
    if pe_ack is not None:
        try:
            cfg = replace(cfg, link=replace(cfg.link, pe_ack=float(pe_ack)))
        except PreconditionError as exc:
            raise ConfigError(f"--pe-ack: {exc}") from exc
    if overrides:
        cfg = replace(cfg, **overrides)
    _validate_analysis(cfg, None, {})
    return cfg
