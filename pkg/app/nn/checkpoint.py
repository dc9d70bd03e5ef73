"""Versioned .npz checkpoint archive: flat key -> little-endian payload plus a config echo"""
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from core.config import settings
from core.errors import ParseError
from core.logging import get_logger

logger = get_logger("nn.checkpoint")

HEADER_KEY = "__header__"
CONFIG_KEY = "__config__"


def _little_endian(value: np.ndarray) -> np.ndarray:
    value = np.asarray(value)
    if np.issubdtype(value.dtype, np.integer):
        return value.astype("<i8")
    if value.dtype == np.bool_:
        return value
    return value.astype("<f8")


def save_checkpoint(path: Union[str, Path], arrays: Mapping[str, np.ndarray], config: Mapping[str, Any]) -> Path:
    """
    Write arrays keyed by dotted path (model.*, kancl.S.*, ewc.F.*, ...)

    Args:
        path: target .npz file; parent directories are created
        arrays: payload
        config: JSON-serializable config echo

    Returns:
        Path: the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {key: _little_endian(value) for key, value in arrays.items()}
    payload[HEADER_KEY] = np.array(settings.CHECKPOINT_HEADER)
    payload[CONFIG_KEY] = np.array(json.dumps(dict(config), sort_keys=True))
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **payload)
    tmp.replace(path)
    logger.debug(f"checkpoint with {len(arrays)} arrays written to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read an archive written by save_checkpoint; raises ParseError on a foreign header"""
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        if HEADER_KEY not in archive.files:
            raise ParseError(f"{path} has no checkpoint header")
        header = str(archive[HEADER_KEY])
        if header != settings.CHECKPOINT_HEADER:
            raise ParseError(
                f"{path} has header '{header}', expected '{settings.CHECKPOINT_HEADER}'"
            )
        config = json.loads(str(archive[CONFIG_KEY]))
        arrays = {key: archive[key] for key in archive.files if key not in (HEADER_KEY, CONFIG_KEY)}
    return arrays, config


def with_prefix(prefix: str, values: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {f"{prefix}{key}": value for key, value in values.items()}


def strip_prefix(prefix: str, values: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {key[len(prefix):]: value for key, value in values.items() if key.startswith(prefix)}
