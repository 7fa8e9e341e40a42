"""JSON utilities: safe loading, complex-matrix encoding, deterministic dumps."""

import json
from pathlib import Path
from typing import Any, Optional, Tuple, Union

import numpy as np


def is_valid_json(text: str) -> Tuple[bool, Any]:
    """
    Validate if a string is valid JSON and return the parsed object.

    Returns:
        Tuple of (is_valid, parsed_object_or_error_message)
    """
    try:
        return True, json.loads(text)
    except json.JSONDecodeError as e:
        return False, f"JSON decode error at line {e.lineno}, column {e.colno}: {e.msg}"


def load_json_safe(file_path: Union[str, Path]) -> Tuple[bool, Any, Optional[str]]:
    """
    Safely load a JSON file.

    Returns:
        Tuple of (success, data_or_none, error_message_or_none)
    """
    path = Path(file_path)
    if not path.exists():
        return False, None, f"File not found: {path}"
    try:
        content = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        return False, None, f"Encoding error: {e}"
    is_valid, parsed = is_valid_json(content)
    if not is_valid:
        return False, None, parsed
    return True, parsed, None


def encode_matrix(m: np.ndarray) -> Any:
    """Real matrices become nested lists; complex ones {"re": ..., "im": ...}."""
    arr = np.asarray(m)
    if np.iscomplexobj(arr) and np.any(arr.imag != 0):
        return {"re": arr.real.tolist(), "im": arr.imag.tolist()}
    return np.real(arr).tolist()


def decode_matrix(obj: Any) -> np.ndarray:
    if isinstance(obj, dict):
        re = np.asarray(obj.get("re", 0.0), dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(obj, dtype=complex)


def _default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return encode_matrix(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps_deterministic(payload: Any) -> str:
    """Sorted keys, fixed separators, NaN mapped to null."""
    return json.dumps(_nan_to_none(payload), sort_keys=True, indent=2, default=_default)


def _nan_to_none(obj: Any) -> Any:
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj
