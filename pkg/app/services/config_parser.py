"""Flat `key = value` experiment files with dotted section keys"""
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import ValidationError

from core.errors import ConfigError
from core.logging import get_logger
from models.experiment import ExperimentConfig

logger = get_logger("services.config_parser")

TOP_LEVEL = ("benchmark", "method", "protocol", "seeds")
SECTIONS = {
    "architecture": "architecture",
    "optimizer": "optimizer",
    "method": "method_block",
    "data": "data",
    "output": "output",
}
LIST_KEYS = {"seeds", "architecture.hidden", "architecture.backbone_widths", "optimizer.betas"}
# "auto" resolves at run time from the benchmark
AUTO_KEYS = {
    "architecture.hidden",
    "optimizer.epochs",
    "method.fisher_sample_cap",
    "data.train_per_task",
    "data.test_per_task",
    "data.num_tasks",
    "data.classes_per_task",
}


def parse_flat(text: str, source: str = "<string>") -> Dict[str, str]:
    """
    Read `key = value` lines; `#` starts a comment

    Raises:
        ConfigError: on a line without '=' or a repeated key
    """
    values: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def _coerce(key: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    if key in AUTO_KEYS and value.lower() in ("auto", "none", ""):
        return None
    if key in LIST_KEYS:
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def config_from_flat(flat: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a flat dotted mapping (strings or native values) into an ExperimentConfig"""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        value = _coerce(key, value)
        if key in TOP_LEVEL:
            nested[key] = value
            continue
        section, _, field = key.partition(".")
        if section not in SECTIONS or not field:
            raise ConfigError(f"unknown config key '{key}'")
        nested.setdefault(SECTIONS[section], {})[field] = value
    try:
        return ExperimentConfig(**nested)
    except ValidationError as exc:
        errors = exc.errors(include_url=False, include_context=False)
        summary = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in errors)
        raise ConfigError(f"invalid experiment config: {summary}", {"errors": errors}) from exc


def parse_config(
    path: Union[str, Path, None] = None, overrides: Optional[Mapping[str, Any]] = None
) -> ExperimentConfig:
    """
    Parse a config file, then apply overrides (which win)

    Args:
        path: flat key-value file; None means an empty file
        overrides: dotted key -> value, e.g. {"method": "kan_cl_bbewc"}

    Returns:
        ExperimentConfig: validated
    """
    flat: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        flat = parse_flat(path.read_text(encoding="utf-8"), str(path))
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = config_from_flat(flat)
    logger.debug(f"parsed config: {config.method} on {config.benchmark}")
    return config


def config_echo(config: ExperimentConfig) -> Dict[str, Any]:
    """Flat dotted dict that config_from_flat turns back into an equal config"""
    dumped = config.model_dump(by_alias=True)
    echo: Dict[str, Any] = {key: dumped[key] for key in TOP_LEVEL}
    for section, attr in SECTIONS.items():
        for field, value in dumped[attr].items():
            key = f"{section}.{field}"
            if value is None:
                value = "auto"
            elif isinstance(value, tuple):
                value = list(value)
            echo[key] = value
    return echo


def format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def dump_flat(config: ExperimentConfig) -> str:
    """Render a config back into the file format"""
    return "\n".join(f"{k} = {format_value(v)}" for k, v in config_echo(config).items()) + "\n"
