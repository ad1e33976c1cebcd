"""Balanced panel datasets: loading, validation and regression design.

A panel holds one output ``y`` (N x T) and P inputs ``X`` (N x T x P).
Units keep their first-appearance order from the source file; that order is
the one any :class:`~stsfa.weights.SpatialWeights` must follow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd


class PanelError(ValueError):
    """Raised for malformed or unbalanced panel input."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class BalanceReport:
    n_units: int
    n_periods: int
    missing_cells: list = field(default_factory=list)
    duplicate_cells: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.missing_cells and not self.duplicate_cells


@dataclass(frozen=True)
class PanelSchema:
    """Column roles for :func:`load_panel_csv`."""

    unit: str
    time: str
    y: str
    x: Sequence[str]
    intercept: bool = True


@dataclass(frozen=True, eq=False)
class PanelDataset:
    unit_ids: tuple
    time_ids: tuple
    y: np.ndarray
    X: np.ndarray
    column_names: tuple

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        X = np.ascontiguousarray(self.X, dtype=float)
        if X.ndim == 2:
            X = X[:, :, None]
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        object.__setattr__(self, "time_ids", tuple(self.time_ids))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if y.ndim != 2 or X.ndim != 3 or X.shape[:2] != y.shape:
            raise PanelError(f"shape mismatch: y {y.shape}, X {X.shape}")
        n, t, p = X.shape
        if n < 2 or t < 1 or p < 1:
            raise PanelError(f"need N>=2, T>=1, P>=1; got N={n}, T={t}, P={p}")
        if len(self.unit_ids) != n or len(set(self.unit_ids)) != n:
            raise PanelError("unit_ids must be N distinct identifiers")
        if len(self.time_ids) != t or len(set(self.time_ids)) != t:
            raise PanelError("time_ids must be T distinct labels")
        try:
            ordered = all(a < b for a, b in zip(self.time_ids, self.time_ids[1:]))
        except TypeError:
            ordered = False
        if not ordered:
            raise PanelError("time_ids must be strictly increasing")
        if len(self.column_names) != p:
            raise PanelError("column_names must have P entries")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise PanelError("non-finite values in y or X")
        y.setflags(write=False)
        X.setflags(write=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[2]

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.unit_ids == other.unit_ids
            and self.time_ids == other.time_ids
            and self.column_names == other.column_names
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.X, other.X)
        )

    def take_units(self, order: Sequence[int]) -> "PanelDataset":
        order = np.asarray(order)
        return PanelDataset(
            tuple(self.unit_ids[i] for i in order),
            self.time_ids,
            self.y[order],
            self.X[order],
            self.column_names,
        )

    def intercept_column(self):
        """Index of a column of ones, or None."""
        for j in range(self.p):
            if np.all(self.X[:, :, j] == 1.0):
                return j
        return None

    # canonical serialization --------------------------------------------
    def to_dict(self) -> dict:
        return {
            "unit_ids": list(self.unit_ids),
            "time_ids": list(self.time_ids),
            "column_names": list(self.column_names),
            "shape": [self.n, self.t, self.p],
            "y": self.y.ravel(order="F").tolist(),
            "X": self.X.ravel(order="F").tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PanelDataset":
        n, t, p = d["shape"]
        y = np.asarray(d["y"], dtype=float).reshape((n, t), order="F")
        X = np.asarray(d["X"], dtype=float).reshape((n, t, p), order="F")
        return cls(tuple(d["unit_ids"]), tuple(d["time_ids"]), y, X, tuple(d["column_names"]))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path) -> "PanelDataset":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_csv(self, path, unit="unit", time="time", y="y") -> None:
        """Write long-format CSV readable by :func:`load_panel_csv`.

        The intercept column, if any, is dropped; reload with ``intercept=True``.
        """
        cols = [j for j in range(self.p) if j != self.intercept_column()]
        rows = {
            unit: np.repeat(np.asarray(self.unit_ids, dtype=object), self.t),
            time: np.tile(np.asarray(self.time_ids, dtype=object), self.n),
            y: self.y.ravel(),
        }
        for j in cols:
            rows[self.column_names[j]] = self.X[:, :, j].ravel()
        pd.DataFrame(rows).to_csv(path, index=False, float_format="%.17g")


def validate_balance(rows: pd.DataFrame, unit: str, time: str) -> BalanceReport:
    """List every missing and duplicated (unit, time) cell of a long table."""
    units = list(pd.unique(rows[unit]))
    times = sorted(pd.unique(rows[time]))
    counts = rows.groupby([unit, time], sort=False).size()
    dup = [(u, t) for (u, t), c in counts.items() if c > 1]
    present = set(counts.index)
    missing = [(u, t) for u in units for t in times if (u, t) not in present]
    return BalanceReport(len(units), len(times), missing, dup)


def _as_label(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def panel_from_frame(df: pd.DataFrame, schema: PanelSchema) -> PanelDataset:
    needed = [schema.unit, schema.time, schema.y, *schema.x]
    if not schema.x:
        raise PanelError("schema needs at least one input column")
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise PanelError(f"missing column(s): {', '.join(missing)}")
    for c in [schema.y, *schema.x]:
        if not pd.api.types.is_numeric_dtype(df[c]):
            bad = pd.to_numeric(df[c], errors="coerce").isna() & df[c].notna()
            first = df.index[bad][0] if bad.any() else None
            raise PanelError(f"non-numeric value in column {c!r} (row {first})")

    report = validate_balance(df, schema.unit, schema.time)
    if not report.ok:
        raise PanelError(
            f"unbalanced panel: {len(report.missing_cells)} missing, "
            f"{len(report.duplicate_cells)} duplicate cells",
            report,
        )
    units = [_as_label(u) for u in pd.unique(df[schema.unit])]
    times = sorted(_as_label(t) for t in pd.unique(df[schema.time]))
    n, t = len(units), len(times)
    uidx = {u: i for i, u in enumerate(units)}
    tidx = {v: j for j, v in enumerate(times)}
    ri = np.fromiter((uidx[_as_label(u)] for u in df[schema.unit]), int, len(df))
    ci = np.fromiter((tidx[_as_label(v)] for v in df[schema.time]), int, len(df))

    y = np.empty((n, t))
    y[ri, ci] = df[schema.y].to_numpy(float)
    cols = list(schema.x)
    X = np.empty((n, t, len(cols) + bool(schema.intercept)))
    off = 0
    names = []
    if schema.intercept:
        X[:, :, 0] = 1.0
        names.append("(Intercept)")
        off = 1
    for j, c in enumerate(cols):
        X[ri, ci, j + off] = df[c].to_numpy(float)
        names.append(c)
    return PanelDataset(tuple(units), tuple(times), y, X, tuple(names))


def load_panel_csv(path, schema: PanelSchema) -> PanelDataset:
    path = Path(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise PanelError(f"cannot read {path}: {exc}") from exc
    return panel_from_frame(df, schema)


def design_matrix(dataset: PanelDataset, log_transform: Iterable[str] = (), log_y: bool = False):
    """Return ``(y, X)`` with the named columns replaced by their natural log."""
    y = np.array(dataset.y)
    X = np.array(dataset.X)
    names = list(dataset.column_names)
    for c in log_transform:
        if c not in names:
            raise PanelError(f"unknown column {c!r}")
        j = names.index(c)
        if np.any(X[:, :, j] <= 0):
            raise PanelError(f"log requested on column {c!r} with values <= 0")
        X[:, :, j] = np.log(X[:, :, j])
    if log_y:
        if np.any(y <= 0):
            raise PanelError("log requested on output with values <= 0")
        y = np.log(y)
    return y, X


def transformed(dataset: PanelDataset, log_transform: Iterable[str] = (), log_y: bool = False) -> PanelDataset:
    y, X = design_matrix(dataset, log_transform, log_y)
    return PanelDataset(dataset.unit_ids, dataset.time_ids, y, X, dataset.column_names)
