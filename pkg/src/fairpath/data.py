"""Tabular data with column roles, plus the input validation helpers used everywhere."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .exceptions import DataError

ROLES = ("treatment", "mediator", "baseline", "outcome")


@dataclass
class Dataset:
    """Numeric columns plus a role for each column named in ``roles``.

    Columns without a role are carried along untouched.
    """

    frame: pd.DataFrame
    roles: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frame = check_frame(self.frame)
        self.roles = dict(self.roles)
        for col, role in self.roles.items():
            if col not in self.frame.columns:
                raise DataError(f"role map names unknown column {col!r}")
            if role not in ROLES:
                raise DataError(f"unknown role {role!r} for column {col!r}; expected one of {ROLES}")
        for col in self.columns_with_role("treatment"):
            check_binary(self.frame[col].to_numpy(), col)

    def __len__(self):
        return len(self.frame)

    def __getitem__(self, col) -> np.ndarray:
        return self.frame[col].to_numpy(dtype=float)

    @property
    def columns(self) -> list:
        return list(self.frame.columns)

    def columns_with_role(self, role) -> list:
        return [c for c in self.frame.columns if self.roles.get(c) == role]

    def take(self, rows) -> "Dataset":
        return Dataset(self.frame.iloc[np.asarray(rows)].reset_index(drop=True), self.roles)

    def split(self, fraction: float = 0.5, seed: int = 0) -> tuple:
        """Random train/validate split; ``fraction`` goes to the first part."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.take(np.sort(order[:cut])), self.take(np.sort(order[cut:]))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.roles == other.roles and self.frame.equals(other.frame)


def check_frame(frame) -> pd.DataFrame:
    """Coerce to an all-float DataFrame, rejecting non-numeric or missing cells."""
    if isinstance(frame, Dataset):
        return frame.frame
    if not isinstance(frame, pd.DataFrame):
        frame = pd.DataFrame(frame)
    out = {}
    for col in frame.columns:
        values = pd.to_numeric(frame[col], errors="coerce")
        bad = values.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"non-numeric or missing cell in column {col!r} at row {row}")
        out[str(col)] = values.astype(float).to_numpy()
    return pd.DataFrame(out, index=range(len(frame)))


def check_binary(values, name) -> None:
    values = np.asarray(values, dtype=float)
    bad = ~np.isin(values, (0.0, 1.0))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(f"column {name!r} must be binary (0/1); found {values[row]!r} at row {row}")


def as_columns(data) -> Mapping:
    """A read-only name -> float array view of any supported data container."""
    if isinstance(data, Dataset):
        data = data.frame
    if isinstance(data, pd.DataFrame):
        return {c: data[c].to_numpy(dtype=float) for c in data.columns}
    if isinstance(data, Mapping):
        return {k: np.asarray(v, dtype=float) for k, v in data.items()}
    raise TypeError(f"unsupported data container {type(data).__name__}")


def n_rows(columns: Mapping) -> int:
    sizes = {np.shape(v)[0] for v in columns.values() if np.ndim(v) > 0}
    if len(sizes) != 1:
        raise DataError(f"columns have inconsistent lengths {sorted(sizes)}")
    return sizes.pop()


def require_columns(columns: Mapping, names, what="data") -> None:
    missing = [c for c in names if c not in columns]
    if missing:
        raise DataError(f"{what} is missing column(s) {missing}")


def load_dataset(path, role_map: Mapping | None = None) -> Dataset:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return Dataset(frame, role_map or {})


def save_dataset(data: Dataset, path) -> None:
    data.frame.to_csv(path, index=False, float_format="%.17g")


def load_roles(text_or_path) -> dict:
    """Role map from inline JSON or a JSON file path."""
    if text_or_path is None:
        return {}
    candidate = Path(str(text_or_path))
    text = candidate.read_text() if candidate.exists() else str(text_or_path)
    try:
        roles = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"role map is not valid JSON: {exc}") from exc
    if not isinstance(roles, dict):
        raise DataError("role map must be a JSON object")
    return roles
