"""Spatial weight matrices stored as sparse triplets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import spsolve

RHO_MARGIN = 1e-6
DENSE_SOLVE_MAX_N = 500


class WeightsError(ValueError):
    pass


class DeltaDomainError(WeightsError):
    def __init__(self, units, rho):
        self.units = list(units)
        self.rho = rho
        super().__init__(f"delta(rho={rho:g}) <= 0 for units {self.units[:10]}")


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """N x N nonnegative weights with zero diagonal.

    ``rows``, ``cols``, ``vals`` are sorted by (row, col). ``row_sums`` is
    always recomputed from the entries.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    standardized: bool = False
    unit_ids: tuple | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.vals, dtype=float)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise WeightsError("rows, cols, vals must be equal-length 1-D arrays")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= self.n or cols.max() >= self.n):
            raise WeightsError("index out of range")
        if np.any(rows == cols):
            raise WeightsError("diagonal entries are not allowed")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise WeightsError("weights must be finite and >= 0")
        keep = vals > 0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                raise WeightsError("duplicate (i, j) entries")
        for a in (rows, cols, vals):
            a.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "vals", vals)
        if self.unit_ids is not None:
            ids = tuple(self.unit_ids)
            if len(ids) != self.n:
                raise WeightsError("unit_ids length must equal n")
            object.__setattr__(self, "unit_ids", ids)
        rs = np.bincount(rows, weights=vals, minlength=self.n)
        rs.setflags(write=False)
        object.__setattr__(self, "_row_sums", rs)
        if self.standardized:
            nz = rs > 0
            if np.any(np.abs(rs[nz] - 1.0) > 1e-12):
                raise WeightsError("standardized flag set but row sums differ from 1")

    @property
    def row_sums(self) -> np.ndarray:
        return self._row_sums

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def tocsr(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))

    def toarray(self) -> np.ndarray:
        return self.tocsr().toarray()

    def with_ids(self, unit_ids) -> "SpatialWeights":
        return SpatialWeights(self.n, self.rows, self.cols, self.vals, self.standardized, tuple(unit_ids))

    def permute(self, order) -> "SpatialWeights":
        """Relabel so that new unit ``k`` is old unit ``order[k]``."""
        order = np.asarray(order)
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        ids = None if self.unit_ids is None else tuple(self.unit_ids[i] for i in order)
        return SpatialWeights(self.n, inv[self.rows], inv[self.cols], self.vals, self.standardized, ids)

    def empty_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_sums == 0)

    def rho_bound(self) -> float:
        """Half-width of the admissible, symmetric rho interval."""
        m = float(self.row_sums.max()) if self.n else 0.0
        return (1.0 - RHO_MARGIN) / max(1.0, m)

    def __eq__(self, other):
        if not isinstance(other, SpatialWeights):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    @classmethod
    def from_dense(cls, m, unit_ids=None) -> "SpatialWeights":
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise WeightsError("dense weights must be square")
        if np.any(np.diag(m) != 0):
            raise WeightsError("diagonal entries are not allowed")
        r, c = np.nonzero(m)
        return cls(m.shape[0], r, c, m[r, c], unit_ids=unit_ids)


def knn_weights(coordinates, k: int) -> SpatialWeights:
    """Binary k-nearest-neighbour weights; distance ties go to the lower index."""
    pts = np.asarray(coordinates, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise WeightsError("coordinates must be an N x 2 array")
    n = pts.shape[0]
    if not np.all(np.isfinite(pts)):
        raise WeightsError("coordinates must be finite")
    if k <= 0 or k >= n:
        raise WeightsError(f"need 0 < k < N, got k={k}, N={n}")
    rows = np.repeat(np.arange(n), k)
    cols = np.empty(n * k, dtype=np.int64)
    idx = np.arange(n)
    for i in range(n):
        d2 = np.sum((pts - pts[i]) ** 2, axis=1)
        d2[i] = np.inf
        # lexsort is stable on the secondary key, so equal distances keep index order
        nearest = np.lexsort((idx, d2))[:k]
        cols[i * k:(i + 1) * k] = np.sort(nearest)
    return SpatialWeights(n, rows, cols, np.ones(n * k))


def group_contiguity_weights(groups: Sequence, return_warnings: bool = False):
    """w_ij = 1 for distinct units sharing a label.

    Singleton groups produce empty rows; they are listed in the warnings.
    """
    labels = list(groups)
    n = len(labels)
    if n < 2:
        raise WeightsError("need at least two units")
    members: dict = {}
    for i, g in enumerate(labels):
        members.setdefault(g, []).append(i)
    if all(len(m) < 2 for m in members.values()):
        raise WeightsError("at least one group must have two or more units")
    rows, cols = [], []
    for m in members.values():
        for i in m:
            for j in m:
                if i != j:
                    rows.append(i)
                    cols.append(j)
    notes = [f"unit {m[0]} is alone in group {g!r}; its row is empty" for g, m in members.items() if len(m) == 1]
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    w = SpatialWeights(n, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.ones(len(rows)))
    if return_warnings:
        return w, notes
    return w


def row_standardize(W: SpatialWeights) -> SpatialWeights:
    rs = W.row_sums
    vals = W.vals / rs[W.rows]
    return SpatialWeights(W.n, W.rows, W.cols, vals, standardized=True, unit_ids=W.unit_ids)


def delta(W: SpatialWeights, rho: float) -> np.ndarray:
    """Per-unit attenuation ``1 - rho * row_sum``; empty rows give 1."""
    d = 1.0 - rho * W.row_sums
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise DeltaDomainError(bad, rho)
    return d


def spatial_inverse_apply(W: SpatialWeights, rho: float, v) -> np.ndarray:
    """Solve ``(I - rho W) x = v``."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != W.n:
        raise WeightsError("v length must equal n")
    if rho == 0.0 or W.nnz == 0:
        return v.copy()
    A = sparse.identity(W.n, format="csr") - rho * W.tocsr()
    if W.n <= DENSE_SOLVE_MAX_N:
        try:
            x = np.linalg.solve(A.toarray(), v)
        except np.linalg.LinAlgError as exc:
            raise WeightsError("singular system I - rho W") from exc
    else:
        x = _neumann_solve(W.tocsr(), rho, v)
    res = np.linalg.norm(A @ x - v)
    if res > 1e-10 * max(np.linalg.norm(v), 1e-300):
        raise WeightsError(f"solve residual {res:.3g} too large")
    return x


def _neumann_solve(M, rho, v, tol=1e-10, max_iter=10_000):
    # stationary iteration x <- v + rho W x
    x = v.copy()
    scale = max(np.linalg.norm(v), 1e-300)
    for _ in range(max_iter):
        x_new = v + rho * (M @ x)
        if np.linalg.norm(x_new - x) <= tol * 1e-2 * scale:
            return x_new
        x = x_new
    x_try = spsolve(sparse.identity(M.shape[0], format="csc") - rho * M.tocsc(), v)
    if not np.all(np.isfinite(x_try)):
        raise WeightsError("iterative solve did not converge")
    return x_try


def morans_i(x, W: SpatialWeights) -> float:
    z = np.asarray(x, dtype=float) - np.mean(x)
    s0 = W.vals.sum()
    den = z @ z
    if s0 == 0 or den == 0:
        return 0.0
    return float(W.n / s0 * (z @ (W.tocsr() @ z)) / den)


# file formats ---------------------------------------------------------------

def read_triplets(path, n: int | None = None) -> SpatialWeights:
    df = _read(path)
    cols = [c.strip().lower() for c in df.columns]
    if cols[:3] != ["i", "j", "w"]:
        raise WeightsError("triplet file needs header i,j,w")
    i = df.iloc[:, 0].to_numpy()
    j = df.iloc[:, 1].to_numpy()
    if not (np.issubdtype(i.dtype, np.integer) and np.issubdtype(j.dtype, np.integer)):
        raise WeightsError("triplet indices must be integers")
    size = n if n is not None else int(max(i.max(initial=-1), j.max(initial=-1)) + 1)
    return SpatialWeights(size, i, j, df.iloc[:, 2].to_numpy(float))


def write_triplets(W: SpatialWeights, path) -> None:
    pd.DataFrame({"i": W.rows, "j": W.cols, "w": W.vals}).to_csv(path, index=False, float_format="%.17g")


def read_groups(path):
    """Return ``(unit_ids, labels)`` from a ``unit_id,group`` CSV."""
    df = _read(path, dtype=str)
    if df.shape[1] < 2:
        raise WeightsError("group file needs columns unit_id,group")
    return list(df.iloc[:, 0]), list(df.iloc[:, 1])


def read_dense(path) -> SpatialWeights:
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise WeightsError(f"cannot read dense matrix {path}: {exc}") from exc
    if m.shape[0] > DENSE_SOLVE_MAX_N:
        raise WeightsError("dense weight files are limited to N <= 500")
    return SpatialWeights.from_dense(m)


def read_coords(path):
    df = _read(path)
    num = df.select_dtypes("number")
    if num.shape[1] < 2:
        raise WeightsError("coordinate file needs two numeric columns")
    ids = list(df.iloc[:, 0]) if df.shape[1] > 2 else list(range(len(df)))
    return ids, num.iloc[:, -2:].to_numpy(float)


def _read(path, **kw) -> pd.DataFrame:
    try:
        return pd.read_csv(Path(path), float_precision="round_trip", **kw)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise WeightsError(f"cannot read {path}: {exc}") from exc
