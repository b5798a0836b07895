"""Dataset container, fold splitting and CSV input/output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import as_generator

__all__ = [
    "DataError",
    "Dataset",
    "FoldSplit",
    "load_dataset",
    "save_dataset",
    "split_halves",
]

MIN_ROWS = 4


class DataError(ValueError):
    """Raised when a dataset violates its invariants."""


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed sample ``(X_i, Y_i, W_i)``.

    Arrays are copied and made read-only on construction.

    Parameters
    ----------
    x : array of shape (n, p)
        Covariates.
    y : array of shape (n,)
        Observed outcomes.
    w : array of shape (n,)
        Binary treatment indicators.
    """

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        w_raw = np.asarray(self.w, dtype=float).ravel()
        if x.ndim != 2:
            raise DataError(f"x must be a matrix, got shape {x.shape}")
        n = x.shape[0]
        if y.shape[0] != n or w_raw.shape[0] != n:
            raise DataError(
                f"row counts differ: x has {n}, y has {y.shape[0]}, w has {w_raw.shape[0]}"
            )
        if n < MIN_ROWS:
            raise DataError(f"need at least {MIN_ROWS} rows, got {n}")
        bad = np.flatnonzero((w_raw != 0) & (w_raw != 1))
        if bad.size:
            raise DataError(f"non-binary treatment at row {bad[0]}")
        if not np.all(np.isfinite(y)):
            raise DataError(f"non-finite outcome at row {np.flatnonzero(~np.isfinite(y))[0]}")
        if not np.all(np.isfinite(x)):
            i, j = np.argwhere(~np.isfinite(x))[0]
            raise DataError(f"non-finite covariate at row {i}, column x{j + 1}")
        w = w_raw.astype(np.int8)
        if w.sum() == 0 or w.sum() == n:
            raise DataError("both treatment arms must be non-empty")
        object.__setattr__(self, "x", _frozen(x, float))
        object.__setattr__(self, "y", _frozen(y, float))
        object.__setattr__(self, "w", _frozen(w, np.int8))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def arm_sizes(self) -> tuple[int, int]:
        n1 = int(self.w.sum())
        return self.n - n1, n1

    def with_intercept(self) -> "Dataset":
        return Dataset(np.column_stack([np.ones(self.n), self.x]), self.y, self.w)

    def flipped(self) -> "Dataset":
        """Same sample with treatment labels swapped."""
        return Dataset(self.x, self.y, 1 - self.w)


@dataclass(frozen=True, eq=False)
class FoldSplit:
    """Partition of ``0..n-1`` into two folds, labelled ``"A"`` and ``"B"``."""

    fold_a: np.ndarray
    fold_b: np.ndarray

    def __post_init__(self):
        a = _frozen(np.sort(np.asarray(self.fold_a, dtype=np.intp)), np.intp)
        b = _frozen(np.sort(np.asarray(self.fold_b, dtype=np.intp)), np.intp)
        n = a.size + b.size
        if not np.array_equal(np.sort(np.concatenate([a, b])), np.arange(n)):
            raise DataError("folds must be disjoint and cover 0..n-1")
        object.__setattr__(self, "fold_a", a)
        object.__setattr__(self, "fold_b", b)

    @property
    def n(self) -> int:
        return self.fold_a.size + self.fold_b.size

    def __getitem__(self, label: str) -> np.ndarray:
        if label == "A":
            return self.fold_a
        if label == "B":
            return self.fold_b
        raise KeyError(label)

    def other(self, label: str) -> str:
        return {"A": "B", "B": "A"}[label]


def split_halves(n: int, rng=None) -> FoldSplit:
    """Uniformly random split of ``n`` units into two halves.

    For odd ``n`` the first fold receives the extra unit.
    """
    if n < MIN_ROWS:
        raise DataError(f"need at least {MIN_ROWS} units to split, got {n}")
    perm = as_generator(rng).permutation(n)
    k = math.ceil(n / 2)
    return FoldSplit(perm[:k], perm[k:])


def save_dataset(ds: Dataset, path) -> None:
    """Write ``y,w,x1..xp`` CSV with 17 significant digits."""
    header = ["y", "w"] + [f"x{j + 1}" for j in range(ds.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            row = [f"{ds.y[i]:.17g}", str(int(ds.w[i]))]
            row.extend(f"{v:.17g}" for v in ds.x[i])
            fh.write(",".join(row) + "\n")


def load_dataset(path, has_header: bool = True) -> Dataset:
    """Read a ``y,w,x1..xp`` CSV file.

    Raises
    ------
    DataError
        On malformed rows, non-binary treatments or non-finite values; the
        message names the offending row (1-based data row) and column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if has_header:
            header = next(reader, None)
            if header is None:
                raise DataError("empty file")
            names = [h.strip() for h in header]
            if len(names) < 3 or names[0] != "y" or names[1] != "w":
                raise DataError(f"header must be y,w,x1,...,xp; got {','.join(names[:3])}...")
        width = None
        for k, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if width is None:
                width = len(rec)
                if width < 3:
                    raise DataError(f"row {k}: need at least 3 columns (y, w, x1)")
            if len(rec) != width:
                raise DataError(f"malformed row {k}: expected {width} columns, got {len(rec)}")
            try:
                vals = [float(c) for c in rec]
            except ValueError as exc:
                raise DataError(f"malformed row {k}: {exc}") from None
            for j, v in enumerate(vals):
                if not math.isfinite(v):
                    col = "y" if j == 0 else "w" if j == 1 else f"x{j - 1}"
                    raise DataError(f"non-finite value at row {k}, column {col}")
            if vals[1] not in (0.0, 1.0):
                raise DataError(f"non-binary treatment at row {k}")
            rows.append(vals)
    if not rows:
        raise DataError("no data rows")
    arr = np.array(rows)
    return Dataset(arr[:, 2:], arr[:, 0], arr[:, 1])
