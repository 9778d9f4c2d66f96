"""
Spatial weight matrices: lattice contiguity, row standardisation,
validation and plain-text serialisation.

Weights are held as coordinate triples ``(row, col, weight)`` with 0-based
indices.  Two text formats are supported:

* coordinate list: a header line ``n=<int>`` followed by ``row col weight``
  lines;
* dense CSV: ``n`` lines of ``n`` comma-separated values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

__all__ = [
    "Scheme",
    "SpatialWeights",
    "ValidationReport",
    "WeightsFormat",
    "grid_contiguity",
    "load_weights",
    "row_standardize",
    "save_weights",
    "validate_weights",
]


class Scheme(str, enum.Enum):
    ROOK = "rook"
    QUEEN = "queen"


class WeightsFormat(str, enum.Enum):
    COORDINATE = "coordinate"
    DENSE_CSV = "dense_csv"


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        vals = np.asarray(self.weights, dtype=float).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and weights must have equal length")
        if self.n < 1:
            raise ValueError("n must be positive")
        if len(rows) and (rows.min() < 0 or cols.min() < 0 or rows.max() >= self.n or cols.max() >= self.n):
            raise ValueError(f"index out of range for an {self.n}x{self.n} matrix")
        if not np.all(np.isfinite(vals)):
            raise ValueError("weights must be finite")
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows) > 1 and np.any((np.diff(rows) == 0) & (np.diff(cols) == 0)):
            raise ValueError("duplicate (row, col) entries")
        for arr in (rows, cols, vals):
            arr.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "weights", vals)

    @classmethod
    def from_dense(cls, matrix, standardized: bool = False) -> "SpatialWeights":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {matrix.shape}")
        r, c = np.nonzero(matrix)
        return cls(matrix.shape[0], r, c, matrix[r, c], standardized)

    @cached_property
    def csr(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.weights, (self.rows, self.cols)), shape=(self.n, self.n))

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    @property
    def triples(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.weights.tolist()))

    @property
    def nnz(self) -> int:
        return len(self.weights)

    @property
    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=np.abs(self.weights), minlength=self.n)

    @property
    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=np.abs(self.weights), minlength=self.n)

    @property
    def max_abs_row_sum(self) -> float:
        return float(self.row_sums.max())

    @property
    def max_abs_col_sum(self) -> float:
        return float(self.col_sums.max())

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Complex spectrum of ``W``, computed once."""
        w = self.dense()
        if np.array_equal(w, w.T):
            return np.linalg.eigvalsh(w).astype(complex)
        return np.linalg.eigvals(w).astype(complex)

    def permute(self, order) -> "SpatialWeights":
        """Relabel locations so that new location ``k`` is old location ``order[k]``."""
        order = np.asarray(order)
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        return SpatialWeights(self.n, inv[self.rows], inv[self.cols], self.weights, self.standardized)


def grid_contiguity(rows: int, cols: int, scheme: Scheme | str = Scheme.QUEEN) -> SpatialWeights:
    """Binary contiguity on a ``rows x cols`` lattice, cells numbered row-major."""
    scheme = scheme if isinstance(scheme, Scheme) else Scheme(str(scheme).lower())
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError(f"a {rows}x{cols} grid needs at least two cells")
    if scheme is Scheme.ROOK:
        offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    src, dst = [], []
    for dr, dc in offsets:
        r2, c2 = rr + dr, cc + dc
        ok = (r2 >= 0) & (r2 < rows) & (c2 >= 0) & (c2 < cols)
        src.append(np.flatnonzero(ok))
        dst.append(r2[ok] * cols + c2[ok])
    src, dst = np.concatenate(src), np.concatenate(dst)
    return SpatialWeights(rows * cols, src, dst, np.ones(len(src)))


def row_standardize(w: SpatialWeights) -> SpatialWeights:
    if np.any(w.weights < 0):
        raise ValueError("row standardisation needs nonnegative weights")
    sums = w.row_sums
    return SpatialWeights(w.n, w.rows, w.cols, w.weights / sums[w.rows], standardized=True)


@dataclass(frozen=True)
class ValidationReport:
    zero_diagonal: bool
    nonnegative: bool
    max_row_sum: float
    max_col_sum: float
    bound: float
    rows_standardized: bool
    isolated: tuple
    col_bound: float | None = None

    @property
    def row_sums_bounded(self) -> bool:
        return self.max_row_sum <= self.bound

    @property
    def col_sums_bounded(self) -> bool:
        # Row standardisation bounds row sums only; column sums are checked
        # against an explicit col_bound when one is given.
        return self.col_bound is None or self.max_col_sum <= self.col_bound

    @property
    def passed(self) -> bool:
        return self.zero_diagonal and self.nonnegative and self.row_sums_bounded and self.col_sums_bounded

    def to_text(self) -> str:
        mark = {True: "pass", False: "FAIL"}
        col_bound = "none" if self.col_bound is None else f"{self.col_bound:.17g}"
        lines = [
            f"zero diagonal        {mark[self.zero_diagonal]}",
            f"nonnegative          {mark[self.nonnegative]}",
            f"max |row sum|        {self.max_row_sum:.17g} (bound {self.bound:.17g}) {mark[self.row_sums_bounded]}",
            f"max |col sum|        {self.max_col_sum:.17g} (bound {col_bound}) {mark[self.col_sums_bounded]}",
            f"row standardised     {self.rows_standardized}",
            f"isolated locations   {len(self.isolated)}",
            f"overall              {mark[self.passed]}",
        ]
        return "\n".join(lines) + "\n"


def validate_weights(w: SpatialWeights, bound: float = 1.0, col_bound: float | None = None) -> ValidationReport:
    """Check the regularity conditions on ``W``; never raises."""
    sums = np.bincount(w.rows, weights=w.weights, minlength=w.n)
    nz = sums != 0
    standardized = bool(np.all(np.abs(sums[nz] - 1.0) <= 1e-12))
    isolated = np.flatnonzero(np.bincount(w.rows, minlength=w.n) == 0)
    return ValidationReport(
        zero_diagonal=not bool(np.any(w.rows == w.cols)),
        nonnegative=not bool(np.any(w.weights < 0)),
        max_row_sum=w.max_abs_row_sum,
        max_col_sum=w.max_abs_col_sum,
        bound=float(bound),
        rows_standardized=standardized,
        isolated=tuple(int(i) for i in isolated),
        col_bound=None if col_bound is None else float(col_bound),
    )


def _infer_format(path: Path) -> WeightsFormat:
    return WeightsFormat.DENSE_CSV if path.suffix.lower() == ".csv" else WeightsFormat.COORDINATE


def save_weights(w: SpatialWeights, path, fmt: WeightsFormat | str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path) if fmt is None else WeightsFormat(fmt)
    if fmt is WeightsFormat.COORDINATE:
        lines = [f"n={w.n}"]
        lines += [f"{r} {c} {v:.17g}" for r, c, v in w.triples]
    else:
        lines = [",".join(f"{v:.17g}" for v in row) for row in w.dense()]
    path.write_text("\n".join(lines) + "\n")


def load_weights(path, fmt: WeightsFormat | str | None = None) -> SpatialWeights:
    path = Path(path)
    fmt = _infer_format(path) if fmt is None else WeightsFormat(fmt)
    text = path.read_text().splitlines()
    lines = [(k + 1, ln.strip()) for k, ln in enumerate(text) if ln.strip() and not ln.lstrip().startswith("#")]
    if fmt is WeightsFormat.COORDINATE:
        if not lines or not lines[0][1].replace(" ", "").startswith("n="):
            raise ValueError(f"{path}: missing 'n=<int>' header")
        try:
            n = int(lines[0][1].replace(" ", "")[2:])
        except ValueError:
            raise ValueError(f"{path}:{lines[0][0]}: bad header {lines[0][1]!r}") from None
        rows, cols, vals, seen = [], [], [], set()
        for lineno, ln in lines[1:]:
            parts = ln.split()
            try:
                r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
                if len(parts) != 3:
                    raise ValueError
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: expected 'row col weight', got {ln!r}") from None
            if (r, c) in seen:
                raise ValueError(f"{path}:{lineno}: duplicate entry ({r}, {c})")
            if not (0 <= r < n and 0 <= c < n):
                raise ValueError(f"{path}:{lineno}: index ({r}, {c}) outside {n}x{n}")
            seen.add((r, c))
            rows.append(r)
            cols.append(c)
            vals.append(v)
        vals = np.asarray(vals, dtype=float)
        if np.any(vals < 0):
            raise ValueError(f"{path}: negative weights are not allowed")
        w = SpatialWeights(n, rows, cols, vals)
    else:
        try:
            matrix = np.array([[float(x) for x in ln.split(",")] for _, ln in lines])
        except ValueError as exc:
            raise ValueError(f"{path}: cannot parse dense CSV ({exc})") from None
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"{path}: weight matrix is not square")
        if np.any(matrix < 0):
            raise ValueError(f"{path}: negative weights are not allowed")
        w = SpatialWeights.from_dense(matrix)
    if validate_weights(w).rows_standardized and w.nnz:
        w = SpatialWeights(w.n, w.rows, w.cols, w.weights, standardized=True)
    return w
