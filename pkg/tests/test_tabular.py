from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from credsynth.tabular import (ColumnSchema, DataError, Dataset, concat, dump_schema, from_values,
                               kfold_partition, label_column, load_csv, parse_schema, split_rows, write_csv)

SCHEMA = (ColumnSchema("amount", "numeric", "Fin"), ColumnSchema("grade", "categorical", "Fin", ("A", "B")))


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_load_three_rows(tmp_path):
    d = load_csv(_write(tmp_path, "amount,grade\n1.5,A\n2,B\n-3e2,A\n"), SCHEMA)
    assert d.n_rows == 3 and d.names == ["amount", "grade"]
    assert d["amount"].tolist() == [1.5, 2.0, -300.0]
    assert d.values("grade").tolist() == ["A", "B", "A"]


def test_load_rejects_inf(tmp_path):
    with pytest.raises(DataError, match=r"non-finite value at row 1, column 'amount'"):
        load_csv(_write(tmp_path, "amount,grade\n1,A\ninf,B\n"), SCHEMA)


def test_load_rejects_nan(tmp_path):
    with pytest.raises(DataError, match="non-finite"):
        load_csv(_write(tmp_path, "amount,grade\nnan,A\n"), SCHEMA)


def test_load_rejects_unknown_category(tmp_path):
    with pytest.raises(DataError, match=r"unknown category 'Z' at row 0, column 'grade'"):
        load_csv(_write(tmp_path, "amount,grade\n1,Z\n"), SCHEMA)


def test_load_rejects_header_mismatch(tmp_path):
    with pytest.raises(DataError, match="header"):
        load_csv(_write(tmp_path, "grade,amount\nA,1\n"), SCHEMA)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv", SCHEMA)


def test_schema_rules():
    with pytest.raises(DataError):
        ColumnSchema("c", "categorical", "Fin", ())
    with pytest.raises(DataError):
        ColumnSchema("x", "numeric", "Fin", ("A",))
    with pytest.raises(DataError):
        Dataset((ColumnSchema("x", "numeric"), ColumnSchema("x", "numeric")), {"x": [1.0]})
    with pytest.raises(DataError):
        ColumnSchema("y", "categorical", "label", ("no", "yes"))


def test_dataset_is_read_only():
    d = from_values(SCHEMA, {"amount": [1.0, 2.0], "grade": ["A", "B"]})
    with pytest.raises(ValueError):
        d["amount"][0] = 5.0


def test_schema_text_round_trip():
    schema = SCHEMA + (label_column("default"),)
    assert parse_schema(dump_schema(schema)) == schema


@given(st.lists(st.tuples(st.floats(-1e12, 1e12, allow_nan=False), st.sampled_from("AB")), min_size=1, max_size=40))
def test_csv_round_trip(tmp_path_factory, rows):
    d = from_values(SCHEMA, {"amount": [r[0] for r in rows], "grade": [r[1] for r in rows]})
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, p)
    d2 = load_csv(p, SCHEMA)
    write_csv(d2, p)
    assert load_csv(p, SCHEMA).same_cells(d)


def _indexed(n, with_label=False):
    schema = [ColumnSchema("id", "numeric")]
    cols = {"id": np.arange(n, dtype=float)}
    if with_label:
        schema.append(label_column("y"))
        cols["y"] = np.zeros(n, np.int64)
    return Dataset(tuple(schema), cols)


def test_split_100_rows():
    d = _indexed(100)
    a, b = split_rows(d, 0.8, 7)
    assert (a.n_rows, b.n_rows) == (80, 20)
    assert sorted(np.r_[a["id"], b["id"]].tolist()) == d["id"].tolist()
    a2, b2 = split_rows(d, 0.8, 7)
    assert a.same_cells(a2) and b.same_cells(b2)


def test_split_carries_labels_with_rows():
    x = np.arange(10, dtype=float)
    y = np.zeros(10, np.int64)
    y[[1, 4, 8]] = 1
    d = Dataset((ColumnSchema("id", "numeric"), label_column("y")), {"id": x, "y": y})
    pairs = set(zip(x.tolist(), y.tolist()))
    a, b = split_rows(d, 0.5, 3)
    for part in (a, b):
        assert set(zip(part["id"].tolist(), part["y"].tolist())) <= pairs
    assert a.label.sum() + b.label.sum() == 3


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
def test_split_rejects_bad_fraction(fraction):
    with pytest.raises(DataError):
        split_rows(_indexed(10), fraction, 0)


def test_split_rejects_single_row():
    with pytest.raises(DataError):
        split_rows(_indexed(1), 0.5, 0)


@given(st.integers(2, 300), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_split_composes_to_three_way_partition(n, f1, f2, seed):
    d = _indexed(n)
    a, rest = split_rows(d, f1, seed)
    assert a.n_rows == min(max(round(f1 * n), 1), n - 1)
    if rest.n_rows < 2:
        return
    b, c = split_rows(rest, f2, seed + 1)
    ids = np.r_[a["id"], b["id"], c["id"]]
    assert sorted(ids.tolist()) == d["id"].tolist()


def test_kfold_ten_rows_ten_folds():
    fa = kfold_partition(10, 10, 0)
    assert fa.sizes().tolist() == [1] * 10


def test_kfold_103_rows():
    assert sorted(Counter(kfold_partition(103, 10, 5).sizes().tolist()).items()) == [(10, 7), (11, 3)]


def test_kfold_seed_changes_assignment_not_sizes():
    a, b = kfold_partition(1000, 10, 1), kfold_partition(1000, 10, 2)
    assert not np.array_equal(a.assignment, b.assignment)
    assert np.array_equal(np.bincount(a.assignment), np.bincount(b.assignment))


def test_kfold_errors():
    with pytest.raises(DataError):
        kfold_partition(10, 1, 0)
    with pytest.raises(DataError):
        kfold_partition(3, 5, 0)


@given(st.integers(2, 500), st.integers(2, 20), st.integers(0, 2**31))
def test_kfold_partition_properties(n, k, seed):
    if n < k:
        return
    fa = kfold_partition(n, k, seed)
    sizes = fa.sizes()
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    seen = np.concatenate([fa.test_idx(f) for f in range(k)])
    assert sorted(seen.tolist()) == list(range(n))
    for f in range(k):
        assert np.intersect1d(fa.train_idx(f), fa.test_idx(f)).size == 0
    assert np.array_equal(kfold_partition(n, k, seed).assignment, fa.assignment)


def test_concat_and_provenance():
    d = _indexed(4)
    both = concat([d, d], provenance="mix")
    assert both.n_rows == 8 and both.provenance == "mix"
    assert d.take([0, 1], "sub").provenance == "sub"
