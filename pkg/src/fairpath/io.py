"""JSON readers and writers for graphs, effect specs and reports."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .exceptions import DataError, GraphError
from .graph import CausalGraph, PseSpec


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def load_graph(path) -> CausalGraph:
    obj = read_json(path)
    try:
        return CausalGraph.from_dict(obj)
    except (KeyError, TypeError) as exc:
        raise GraphError(f"{path}: malformed graph ({exc})") from exc


def save_graph(graph: CausalGraph, path) -> None:
    write_json(graph.to_dict(), path)


def load_pse(path) -> PseSpec:
    obj = read_json(path)
    try:
        return PseSpec.from_dict(obj)
    except (KeyError, TypeError) as exc:
        raise GraphError(f"{path}: malformed path-specific effect spec ({exc})") from exc


def save_pse(spec: PseSpec, path) -> None:
    write_json(spec.to_dict(), path)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text: numpy values converted, non-finite floats as null."""
    return json.dumps(_plain(obj), indent=2) + "\n"


def write_json(obj, path=None) -> str:
    text = dumps(obj)
    if path is not None:
        Path(path).write_text(text)
    return text
