"""Deterministic CSV/JSON writers shared by all result objects."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


def frame_to_csv(frame: pd.DataFrame, path=None) -> str:
    """Render a frame with round-trip float formatting and ``\\n`` line ends."""
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def to_builtin(obj):
    """Recursively convert numpy scalars/arrays and tuples for ``json``."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_builtin(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and obj == float("inf"):
        return "inf"
    return obj


def dumps_json(obj, path=None) -> str:
    """Sorted-key JSON; NaN is refused so every exported number is finite."""
    text = json.dumps(to_builtin(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
