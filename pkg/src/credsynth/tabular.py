"""Column-typed tables, CSV ingestion, row splits and fold partitions.

A :class:`Dataset` stores one numpy array per column: ``float64`` values for
numeric columns and ``int64`` category indices for categorical ones. The label
is an ordinary categorical column whose group is ``"label"`` and whose
categories are ``("0", "1")``.

Schema sidecar format (one column per line, ``#`` starts a comment)::

    name=income kind=numeric group=Fin
    name=segment kind=categorical group=Fin categories=A|B|C
    name=default kind=categorical group=label categories=0|1
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KINDS = ("numeric", "categorical")
GROUPS = ("Fin", "Degree", "SocInt", "label", "other")
LABEL_CATEGORIES = ("0", "1")


class DataError(ValueError):
    """Raised when data violates the tabular model's invariants."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    group: str = "other"
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.group not in GROUPS:
            raise DataError(f"column {self.name!r}: unknown group {self.group!r}")
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind == "categorical":
            if not self.categories:
                raise DataError(f"categorical column {self.name!r} needs at least one category")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"column {self.name!r}: duplicate categories")
        elif self.categories:
            raise DataError(f"numeric column {self.name!r} cannot list categories")
        if self.group == "label" and (self.kind != "categorical" or self.categories != LABEL_CATEGORIES):
            raise DataError(f"label column {self.name!r} must be categorical over 0|1")

    @property
    def is_numeric(self) -> bool:
        return self.kind == "numeric"


def label_column(name: str = "default") -> ColumnSchema:
    return ColumnSchema(name, "categorical", "label", LABEL_CATEGORIES)


def _check_schema(schema: Sequence[ColumnSchema]) -> tuple[ColumnSchema, ...]:
    schema = tuple(schema)
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise DataError("column names must be unique")
    if sum(c.group == "label" for c in schema) > 1:
        raise DataError("at most one label column is allowed")
    return schema


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column store.

    ``provenance`` is a free-form tag (e.g. ``"real:year1:train"`` or
    ``"synthetic:tvae"``) carried through every derived dataset so pipelines
    can audit where training rows came from.
    """

    schema: tuple[ColumnSchema, ...]
    columns: dict[str, np.ndarray]
    provenance: str = "real"
    n_rows: int = field(init=False)

    def __post_init__(self):
        schema = _check_schema(self.schema)
        object.__setattr__(self, "schema", schema)
        cols = {}
        n = None
        for col in schema:
            if col.name not in self.columns:
                raise DataError(f"missing data for column {col.name!r}")
            if col.is_numeric:
                arr = np.array(self.columns[col.name], dtype=np.float64)
                bad = np.flatnonzero(~np.isfinite(arr))
                if bad.size:
                    raise DataError(f"non-finite value at row {bad[0]}, column {col.name!r}")
            else:
                arr = np.array(self.columns[col.name], dtype=np.int64)
                bad = np.flatnonzero((arr < 0) | (arr >= len(col.categories)))
                if bad.size:
                    raise DataError(f"category index out of range at row {bad[0]}, column {col.name!r}")
            if arr.ndim != 1:
                raise DataError(f"column {col.name!r} must be one-dimensional")
            if n is not None and arr.shape[0] != n:
                raise DataError("all columns must have the same length")
            n = arr.shape[0]
            arr.setflags(write=False)
            cols[col.name] = arr
        extra = set(self.columns) - set(cols)
        if extra:
            raise DataError(f"data for undeclared columns: {sorted(extra)}")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "n_rows", 0 if n is None else n)

    # -- accessors ---------------------------------------------------------

    def __len__(self) -> int:
        return self.n_rows

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def label_name(self) -> str | None:
        for c in self.schema:
            if c.group == "label":
                return c.name
        return None

    @property
    def label(self) -> np.ndarray | None:
        """Binary label vector (1 = defaulter), or None for unlabeled data."""
        name = self.label_name
        return None if name is None else self.columns[name]

    @property
    def features(self) -> list[ColumnSchema]:
        return [c for c in self.schema if c.group != "label"]

    def values(self, name: str) -> np.ndarray:
        """Cell values as stored in CSV: floats, or category strings."""
        col = self.column(name)
        if col.is_numeric:
            return self.columns[name]
        return np.asarray(col.categories, dtype=object)[self.columns[name]]

    @property
    def rows(self) -> list[tuple]:
        vals = [self.values(c.name) for c in self.schema]
        return list(zip(*vals))

    # -- derivation --------------------------------------------------------

    def take(self, idx: np.ndarray, provenance: str | None = None) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.schema,
            {k: v[idx] for k, v in self.columns.items()},
            self.provenance if provenance is None else provenance,
        )

    def select(self, names: Iterable[str], keep_label: bool = True) -> Dataset:
        wanted = set(names)
        schema = [c for c in self.schema if c.name in wanted or (keep_label and c.group == "label")]
        return Dataset(tuple(schema), {c.name: self.columns[c.name] for c in schema}, self.provenance)

    def select_groups(self, groups: Iterable[str], keep_label: bool = True) -> Dataset:
        groups = set(groups)
        return self.select([c.name for c in self.schema if c.group in groups], keep_label)

    def with_provenance(self, provenance: str) -> Dataset:
        return replace(self, provenance=provenance)

    def same_cells(self, other: Dataset) -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        return all(np.array_equal(self.columns[k], other.columns[k]) for k in self.columns)


def concat(parts: Sequence[Dataset], provenance: str | None = None) -> Dataset:
    schema = parts[0].schema
    for p in parts[1:]:
        if p.schema != schema:
            raise DataError("cannot concatenate datasets with different schemas")
    cols = {c.name: np.concatenate([p.columns[c.name] for p in parts]) for c in schema}
    return Dataset(schema, cols, provenance or parts[0].provenance)


def from_values(schema: Sequence[ColumnSchema], data: dict[str, Sequence], provenance: str = "real") -> Dataset:
    """Build a Dataset from raw cell values (category strings for categoricals)."""
    cols = {}
    for col in schema:
        raw = data[col.name]
        if col.is_numeric:
            cols[col.name] = np.asarray(raw, dtype=np.float64)
        else:
            lookup = {c: i for i, c in enumerate(col.categories)}
            codes = np.empty(len(raw), dtype=np.int64)
            for r, v in enumerate(raw):
                try:
                    codes[r] = lookup[str(v)]
                except KeyError:
                    raise DataError(f"unknown category {v!r} at row {r}, column {col.name!r}") from None
            cols[col.name] = codes
    return Dataset(tuple(schema), cols, provenance)


# ---------------------------------------------------------------------------
# CSV and schema sidecar


def load_csv(path: str | Path, schema: Sequence[ColumnSchema], provenance: str | None = None) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    schema = _check_schema(schema)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        expected = [c.name for c in schema]
        if header != expected:
            raise DataError(f"{path}: header {header} does not match schema {expected}")
        lookups = [None if c.is_numeric else {v: i for i, v in enumerate(c.categories)} for c in schema]
        cols: list[list] = [[] for _ in schema]
        for r, record in enumerate(reader):
            if len(record) != len(schema):
                raise DataError(f"row {r}: expected {len(schema)} cells, got {len(record)}")
            for j, (cell, col, lk) in enumerate(zip(record, schema, lookups)):
                if lk is None:
                    try:
                        x = float(cell)
                    except ValueError:
                        raise DataError(f"unparseable numeric value {cell!r} at row {r}, column {col.name!r}") from None
                    if not math.isfinite(x):
                        raise DataError(f"non-finite value at row {r}, column {col.name!r}")
                    cols[j].append(x)
                else:
                    if cell not in lk:
                        raise DataError(f"unknown category {cell!r} at row {r}, column {col.name!r}")
                    cols[j].append(lk[cell])
    data = {c.name: np.asarray(v, dtype=np.float64 if c.is_numeric else np.int64) for c, v in zip(schema, cols)}
    return Dataset(schema, data, provenance or f"real:{path.stem}")


def write_csv(d: Dataset, path: str | Path) -> None:
    vals = [d.values(c.name) for c in d.schema]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.names)
        for row in zip(*vals):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def dump_schema(schema: Sequence[ColumnSchema]) -> str:
    lines = ["# credsynth schema: name kind group [categories separated by |]"]
    for c in schema:
        line = f"name={c.name} kind={c.kind} group={c.group}"
        if c.categories:
            line += " categories=" + "|".join(c.categories)
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_schema(text: str) -> tuple[ColumnSchema, ...]:
    cols = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = {}
        for tok in line.split():
            if "=" not in tok:
                raise DataError(f"schema line {lineno}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            fields[k] = v
        try:
            cats = tuple(fields["categories"].split("|")) if "categories" in fields else ()
            cols.append(ColumnSchema(fields["name"], fields["kind"], fields.get("group", "other"), cats))
        except KeyError as e:
            raise DataError(f"schema line {lineno}: missing key {e}") from None
    return _check_schema(cols)


def read_schema(path: str | Path) -> tuple[ColumnSchema, ...]:
    return parse_schema(Path(path).read_text(encoding="utf-8"))


def write_schema(schema: Sequence[ColumnSchema], path: str | Path) -> None:
    Path(path).write_text(dump_schema(schema), encoding="utf-8")


# ---------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: np.ndarray

    def train_idx(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def test_idx(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def split_rows(d: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle rows and cut them into ``round(fraction * n)`` and the rest."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fraction must lie in (0, 1), got {fraction}")
    if d.n_rows < 2:
        raise DataError("need at least 2 rows to split")
    perm = np.random.default_rng(seed).permutation(d.n_rows)
    cut = min(max(int(round(fraction * d.n_rows)), 1), d.n_rows - 1)
    first, second = np.sort(perm[:cut]), np.sort(perm[cut:])
    return d.take(first), d.take(second)


def kfold_partition(d: Dataset | int, k: int, seed: int) -> FoldAssignment:
    """Seeded shuffle of row indices, then modular striping into k folds."""
    n = d if isinstance(d, int) else d.n_rows
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if n < k:
        raise DataError(f"{n} rows cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    assignment.setflags(write=False)
    return FoldAssignment(k, assignment)
