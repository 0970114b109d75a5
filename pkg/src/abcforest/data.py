"""Reference-table data model and CSV serialization.

A reference table is the training corpus for every classifier in the
package: one row per simulated dataset, holding the model index that
generated it, optionally the parameter draw, and the summary-statistic
vector. Tables are immutable after construction; every transform returns
a new table.

File format (one table per file, UTF-8):

    model[,param_<name>...][,stat_<name>...]
    1,0.42,-0.13,...

Model indices are 1-based in files. Reals are written in shortest
round-trip decimal form, so ``load_table(save_table(t)) == t`` bit-exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TableFormatError
from .seeding import rng_for


@dataclass(frozen=True)
class SimulationRecord:
    """One simulated dataset: generating model, optional parameters, summaries."""

    model: int
    params: np.ndarray | None
    summaries: np.ndarray


@dataclass(frozen=True)
class DataSplit:
    """Pairwise-disjoint row index sets over a reference table."""

    train_indices: np.ndarray
    validation_indices: np.ndarray
    test_indices: np.ndarray


class ReferenceTable:
    """Immutable columnar store of simulation records.

    Attributes
    ----------
    models : (N,) int array of 1-based model indices
    params : (N, p) float array of parameter draws, or None
    summaries : (N, d) float array
    summary_names : d column names (without the ``stat_`` file prefix)
    param_names : p column names (without the ``param_`` prefix), or None
    """

    def __init__(self, models, summaries, summary_names, params=None,
                 param_names=None, n_models=None):
        models = np.asarray(models, dtype=np.int64)
        summaries = np.asarray(summaries, dtype=np.float64)
        if summaries.ndim != 2:
            raise ValueError("summaries must be a 2-D array")
        if models.shape[0] != summaries.shape[0]:
            raise ValueError("models and summaries disagree on record count")
        if len(summary_names) != summaries.shape[1]:
            raise ValueError("summary_names length does not match summary width")
        if len(set(summary_names)) != len(summary_names):
            raise ValueError("summary_names must be unique")
        if models.size and models.min() < 1:
            raise ValueError("model indices must be >= 1")
        if summaries.size and not np.all(np.isfinite(summaries)):
            raise ValueError("summaries must be finite")
        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape[0] != models.shape[0]:
                raise ValueError("params and models disagree on record count")
            if param_names is None or len(param_names) != params.shape[1]:
                raise ValueError("param_names must match param width")
        self.models = models
        self.models.setflags(write=False)
        self.summaries = summaries
        self.summaries.setflags(write=False)
        self.summary_names = tuple(str(s) for s in summary_names)
        self.params = params
        if params is not None:
            self.params.setflags(write=False)
        self.param_names = tuple(param_names) if param_names is not None else None
        self.n_models = int(n_models) if n_models is not None else (
            int(models.max()) if models.size else 0)

    @property
    def n_summaries(self) -> int:
        return self.summaries.shape[1]

    def __len__(self) -> int:
        return self.models.shape[0]

    def __getitem__(self, i: int) -> SimulationRecord:
        p = self.params[i] if self.params is not None else None
        return SimulationRecord(int(self.models[i]), p, self.summaries[i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReferenceTable):
            return NotImplemented
        if self.summary_names != other.summary_names:
            return False
        if self.param_names != other.param_names:
            return False
        if not np.array_equal(self.models, other.models):
            return False
        if (self.params is None) != (other.params is None):
            return False
        if self.params is not None and not np.array_equal(self.params, other.params):
            return False
        return np.array_equal(self.summaries, other.summaries)

    def subset(self, indices) -> "ReferenceTable":
        """New table holding the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        params = self.params[idx] if self.params is not None else None
        return ReferenceTable(self.models[idx], self.summaries[idx],
                              self.summary_names, params, self.param_names,
                              n_models=self.n_models)

    def with_summaries(self, summaries, summary_names) -> "ReferenceTable":
        """New table with a replaced summary block (models/params carried over)."""
        return ReferenceTable(self.models, summaries, summary_names,
                              self.params, self.param_names, n_models=self.n_models)


def _fmt(x: float) -> str:
    return repr(float(x))


def save_table(table: ReferenceTable, path) -> None:
    """Write a table to `path` in the package CSV format."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            header = ["model"]
            if table.param_names is not None:
                header += [f"param_{n}" for n in table.param_names]
            header += [f"stat_{n}" for n in table.summary_names]
            fh.write(",".join(header) + "\n")
            for i in range(len(table)):
                cells = [str(int(table.models[i]))]
                if table.params is not None:
                    cells += [_fmt(v) for v in table.params[i]]
                cells += [_fmt(v) for v in table.summaries[i]]
                fh.write(",".join(cells) + "\n")
    except OSError as exc:
        raise TableFormatError(f"cannot write table to {path}: {exc}") from exc


def load_table(path) -> ReferenceTable:
    """Read a table written by :func:`save_table`, validating every cell."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise TableFormatError(f"cannot read table from {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableFormatError(f"{path}: empty file, expected a header line")
        if not header or header[0] != "model":
            raise TableFormatError(f"{path}: first header column must be 'model'")
        param_names, summary_names = [], []
        for col, name in enumerate(header[1:], start=2):
            if name.startswith("param_"):
                if summary_names:
                    raise TableFormatError(
                        f"{path}: param column {name!r} after stat columns (column {col})")
                param_names.append(name[len("param_"):])
            elif name.startswith("stat_"):
                summary_names.append(name[len("stat_"):])
            else:
                raise TableFormatError(
                    f"{path}: header column {col} ({name!r}) must start with param_ or stat_")
        if len(set(summary_names)) != len(summary_names):
            raise TableFormatError(f"{path}: duplicate stat column names")
        n_par, n_sum = len(param_names), len(summary_names)
        width = 1 + n_par + n_sum
        models, params, summaries = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != width:
                raise TableFormatError(
                    f"{path}: row {rownum} has {len(row)} cells, expected {width}")
            try:
                m = int(row[0])
            except ValueError:
                raise TableFormatError(
                    f"{path}: row {rownum}, column 'model': not an integer ({row[0]!r})")
            if m < 1:
                raise TableFormatError(
                    f"{path}: row {rownum}, column 'model': index {m} outside {{1..M}}")
            vals = []
            for j, cell in enumerate(row[1:]):
                name = header[1 + j]
                try:
                    v = float(cell)
                except ValueError:
                    raise TableFormatError(
                        f"{path}: row {rownum}, column {name!r}: not a number ({cell!r})")
                if not math.isfinite(v):
                    raise TableFormatError(
                        f"{path}: row {rownum}, column {name!r}: non-finite value ({cell!r})")
                vals.append(v)
            models.append(m)
            params.append(vals[:n_par])
            summaries.append(vals[n_par:])
        models_arr = np.asarray(models, dtype=np.int64)
        summaries_arr = (np.asarray(summaries, dtype=np.float64)
                         if models else np.empty((0, n_sum)))
        params_arr = None
        pn = None
        if n_par:
            params_arr = (np.asarray(params, dtype=np.float64)
                          if models else np.empty((0, n_par)))
            pn = param_names
        return ReferenceTable(models_arr, summaries_arr, summary_names,
                              params_arr, pn)


def load_observed(path, summary_names) -> np.ndarray:
    """Read one observed summary vector from a CSV file.

    Accepts either the full table format (the model and any param columns
    are ignored) or a header of ``stat_`` columns only; the stat names
    must match ``summary_names`` exactly, and the first data row is used.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
    if first.startswith("model"):
        table = load_table(path)
        if len(table) == 0:
            raise TableFormatError(f"{path}: no data rows")
        if table.summary_names != tuple(summary_names):
            raise TableFormatError(
                f"{path}: stat columns {table.summary_names} do not match the "
                f"training table's {tuple(summary_names)}")
        return table.summaries[0].copy()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = []
        for col, name in enumerate(header, start=1):
            if not name.startswith("stat_"):
                raise TableFormatError(
                    f"{path}: header column {col} ({name!r}) must start with stat_")
            names.append(name[len("stat_"):])
        if tuple(names) != tuple(summary_names):
            raise TableFormatError(
                f"{path}: stat columns {tuple(names)} do not match the "
                f"training table's {tuple(summary_names)}")
        try:
            row = next(reader)
        except StopIteration:
            raise TableFormatError(f"{path}: no data rows")
        if len(row) != len(names):
            raise TableFormatError(f"{path}: row 2 has {len(row)} cells, "
                                   f"expected {len(names)}")
        vals = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise TableFormatError(
                    f"{path}: row 2, column {name!r}: not a number ({cell!r})")
            if not math.isfinite(v):
                raise TableFormatError(
                    f"{path}: row 2, column {name!r}: non-finite value")
            vals.append(v)
        return np.asarray(vals, dtype=np.float64)


def split(table: ReferenceTable, sizes: Sequence[int], seed: int) -> DataSplit:
    """Uniformly random disjoint train/validation/test index sets.

    Deterministic given (table size, sizes, seed); sets are returned sorted.
    """
    n_train, n_valid, n_test = (int(s) for s in sizes)
    if min(n_train, n_valid, n_test) < 0:
        raise ValueError("split sizes must be nonnegative")
    total = n_train + n_valid + n_test
    if total > len(table):
        raise ValueError(
            f"split sizes sum to {total} but the table has {len(table)} records")
    perm = rng_for(seed, "split").permutation(len(table))
    a = np.sort(perm[:n_train])
    b = np.sort(perm[n_train:n_train + n_valid])
    c = np.sort(perm[n_train + n_valid:total])
    return DataSplit(a, b, c)
