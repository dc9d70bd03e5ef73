"""File helpers for JSON and CSV results"""
import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Union

from core.logging import get_logger

logger = get_logger("utils.helpers")


def load_json_file(file_path: Union[str, Path], default_value: Optional[Any] = None) -> Any:
    """
    Load a JSON file

    Args:
        file_path: path to read
        default_value: returned when the file is missing or unreadable

    Returns:
        the parsed data or default_value
    """
    path = Path(file_path)
    if not path.exists():
        logger.warning(f"File not found: {file_path}")
        return default_value
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
        logger.debug(f"Loaded JSON from {file_path}")
        return data
    except json.JSONDecodeError as e:
        logger.error(f"JSON decode error in {file_path}: {e}")
        return default_value


def save_json_file(file_path: Union[str, Path], data: Any) -> Path:
    """Write JSON (indent 2, sorted keys), creating parent directories"""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    logger.debug(f"Saved JSON to {file_path}")
    return path


def save_csv_rows(file_path: Union[str, Path], columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    """Write dict rows; floats use repr so reruns produce identical bytes"""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def load_csv_rows(file_path: Union[str, Path]) -> list:
    path = Path(file_path)
    if not path.exists():
        return []
    with path.open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
