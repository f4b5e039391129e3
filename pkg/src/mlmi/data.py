"""Two-level bivariate datasets with a cell-level missingness mask.

A dataset is a flat table of rows (group label, x, y) plus boolean
``*_observed`` masks. Missingness is carried by the mask, never by
sentinel values: masked cells are stored as NaN and must not enter any
computation — read values through :meth:`TwoLevelDataset.observed_values`
or by filtering on the mask.

Group labels are opaque integers; rows of one group need not be
contiguous. On construction labels are reindexed to 0..G-1 in order of
first appearance (``group_index``), which is what the model-fitting and
imputation code consumes. Datasets are immutable after construction and
safe to share across threads/processes.

CSV interchange schema (used by every CLI subcommand): header exactly
``group,x,y``, one row per observation, empty field = missing cell,
reals written with 17 significant digits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = ("group", "x", "y")
VARIABLES = ("x", "y")

_FLOAT_FMT = ".17g"


class CsvFormatError(ValueError):
    """Malformed dataset CSV (message carries the 1-based line number)."""


@dataclass(frozen=True)
class GroupView:
    """One group's slice of a dataset (row indices into the parent)."""

    group_id: int
    rows: np.ndarray
    x: np.ndarray
    y: np.ndarray
    x_observed: np.ndarray
    y_observed: np.ndarray


@dataclass(frozen=True)
class TwoLevelDataset:
    group_labels: np.ndarray
    x: np.ndarray
    y: np.ndarray
    x_observed: np.ndarray
    y_observed: np.ndarray
    # derived on construction
    group_index: np.ndarray = field(init=False, repr=False, compare=False)
    unique_labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = np.asarray(self.group_labels, dtype=np.int64)
        x = np.asarray(self.x, dtype=float).copy()
        y = np.asarray(self.y, dtype=float).copy()
        x_obs = np.asarray(self.x_observed, dtype=bool).copy()
        y_obs = np.asarray(self.y_observed, dtype=bool).copy()
        n = labels.shape[0]
        for name, arr in (("x", x), ("y", y), ("x_observed", x_obs), ("y_observed", y_obs)):
            if arr.shape != (n,):
                raise ValueError(f"column '{name}' has shape {arr.shape}, expected ({n},)")
        # Masked cells never carry a readable value.
        x[~x_obs] = np.nan
        y[~y_obs] = np.nan
        if np.isnan(x[x_obs]).any() or np.isnan(y[y_obs]).any():
            raise ValueError("observed cells must hold finite values, found NaN")
        uniq, index = np.unique(labels, return_inverse=True)
        # reindex in order of first appearance, not sorted-label order
        first_pos = np.full(uniq.shape[0], n, dtype=np.int64)
        np.minimum.at(first_pos, index, np.arange(n))
        rank = np.argsort(np.argsort(first_pos, kind="stable"), kind="stable")
        index = rank[index]
        uniq = uniq[np.argsort(first_pos, kind="stable")]
        for name, arr in (
            ("group_labels", labels),
            ("x", x),
            ("y", y),
            ("x_observed", x_obs),
            ("y_observed", y_obs),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        index.setflags(write=False)
        uniq.setflags(write=False)
        object.__setattr__(self, "group_index", index)
        object.__setattr__(self, "unique_labels", uniq)

    @classmethod
    def from_columns(cls, group, x, y, x_observed=None, y_observed=None) -> "TwoLevelDataset":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x_observed is None:
            x_observed = np.ones(x.shape[0], dtype=bool)
        if y_observed is None:
            y_observed = np.ones(y.shape[0], dtype=bool)
        return cls(np.asarray(group, dtype=np.int64), x, y, x_observed, y_observed)

    @property
    def n_rows(self) -> int:
        return self.group_labels.shape[0]

    @property
    def n_groups(self) -> int:
        return self.unique_labels.shape[0]

    def observed(self, var: str) -> np.ndarray:
        if var not in VARIABLES:
            raise ValueError(f"unknown variable {var!r}")
        return self.x_observed if var == "x" else self.y_observed

    def values(self, var: str) -> np.ndarray:
        """Raw column (masked cells are NaN); prefer observed_values."""
        if var not in VARIABLES:
            raise ValueError(f"unknown variable {var!r}")
        return self.x if var == "x" else self.y

    def observed_values(self, var: str) -> np.ndarray:
        return self.values(var)[self.observed(var)]

    def is_complete(self, variables=VARIABLES) -> bool:
        return all(bool(self.observed(v).all()) for v in variables)

    def groups(self) -> list[GroupView]:
        """Per-group views, ordered by first appearance; rows in original order.

        The views partition the dataset exactly: concatenating their row
        indices (in this order) reproduces every row once, and reproduces
        the original row order whenever groups are stored contiguously.
        """
        out = []
        for g in range(self.n_groups):
            rows = np.flatnonzero(self.group_index == g)
            out.append(
                GroupView(
                    group_id=int(self.unique_labels[g]),
                    rows=rows,
                    x=self.x[rows],
                    y=self.y[rows],
                    x_observed=self.x_observed[rows],
                    y_observed=self.y_observed[rows],
                )
            )
        return out


def listwise_delete(ds: TwoLevelDataset, variables=VARIABLES) -> TwoLevelDataset:
    """Drop every row with a masked cell among ``variables``.

    Groups left empty disappear. Idempotent; on complete data this is the
    identity (up to a fresh copy).
    """
    variables = tuple(variables)
    for v in variables:
        if v not in VARIABLES:
            raise ValueError(f"unknown variable {v!r}")
    keep = np.ones(ds.n_rows, dtype=bool)
    for v in variables:
        keep &= ds.observed(v)
    return TwoLevelDataset(
        ds.group_labels[keep],
        ds.x[keep],
        ds.y[keep],
        ds.x_observed[keep],
        ds.y_observed[keep],
    )


def _format_cell(value: float, observed: bool) -> str:
    return format(float(value), _FLOAT_FMT) if observed else ""


def write_csv(ds: TwoLevelDataset, path) -> None:
    """Serialize to the interchange CSV (inverse of read_csv)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for g, xv, yv, xo, yo in zip(
            ds.group_labels, ds.x, ds.y, ds.x_observed, ds.y_observed
        ):
            w.writerow((int(g), _format_cell(xv, xo), _format_cell(yv, yo)))


def read_csv(path) -> TwoLevelDataset:
    """Parse the interchange CSV; empty fields become masked cells."""
    path = Path(path)
    groups: list[int] = []
    xs: list[float] = []
    ys: list[float] = []
    x_obs: list[bool] = []
    y_obs: list[bool] = []
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("line 1: empty file, expected header 'group,x,y'") from None
        if tuple(header) != CSV_HEADER:
            raise CsvFormatError(f"line 1: expected header 'group,x,y', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CsvFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
            raw_g, raw_x, raw_y = (f.strip() for f in row)
            try:
                groups.append(int(raw_g))
            except ValueError:
                raise CsvFormatError(f"line {lineno}: group label {raw_g!r} is not an integer") from None
            for raw, vals, obs, name in ((raw_x, xs, x_obs, "x"), (raw_y, ys, y_obs, "y")):
                if raw == "":
                    vals.append(np.nan)
                    obs.append(False)
                else:
                    try:
                        vals.append(float(raw))
                    except ValueError:
                        raise CsvFormatError(
                            f"line {lineno}: field {name}={raw!r} is not a real number"
                        ) from None
                    obs.append(True)
    if not groups:
        raise CsvFormatError("line 2: no data rows")
    return TwoLevelDataset(
        np.array(groups, dtype=np.int64),
        np.array(xs, dtype=float),
        np.array(ys, dtype=float),
        np.array(x_obs, dtype=bool),
        np.array(y_obs, dtype=bool),
    )


def group_blocks(ds: TwoLevelDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row ordering that makes groups contiguous.

    Returns ``(order, starts, sizes)``: ``order`` is a stable permutation
    sorting rows by ``group_index``; slicing any column by ``order`` then
    by ``starts[g]:starts[g]+sizes[g]`` yields group g's rows in original
    relative order.
    """
    order = np.argsort(ds.group_index, kind="stable")
    sizes = np.bincount(ds.group_index, minlength=ds.n_groups)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return order, starts, sizes
