import json

import pytest

from credsynth.cli import bench_main, simdata_main
from credsynth.tabular import load_csv, read_schema


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "sim.json"
    cfg.write_text(json.dumps({"n_borrowers": 1500, "seed": 3}))
    out = root / "data"
    assert simdata_main(["gen", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def _plan(tmp_path, **kw):
    plan = {"experiment": "T", "mode": "real", "folds": 3,
            "classifiers": [{"name": "gbdt", "kind": "gbdt", "n_trees": 10}, {"name": "logistic", "kind": "logistic"}]}
    plan.update(kw)
    p = tmp_path / "plan.json"
    p.write_text(json.dumps(plan))
    return p


def test_simdata_outputs(data_dir):
    assert {p.name for p in data_dir.iterdir()} == {"year1.csv", "year2.csv", "schema.txt", "truth.json"}
    schema = read_schema(data_dir / "schema.txt")
    assert load_csv(data_dir / "year1.csv", schema).n_rows == 1500


def test_simdata_bad_config(tmp_path):
    assert simdata_main(["gen", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_borrowers": 1500, "colour": "red"}))
    assert simdata_main(["gen", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text(json.dumps({"base_rate": 0.9}))
    assert simdata_main(["gen", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_bench_run_and_compare(data_dir, tmp_path, capsys):
    plan = _plan(tmp_path)
    out = tmp_path / "r"
    assert bench_main(["run", "--plan", str(plan), "--data", str(data_dir), "--out", str(out), "--seed", "1"]) == 0
    assert {"report.json", "timings.json", "report.md", "performance.csv", "comparison.csv"} <= {
        p.name for p in out.iterdir()}
    first = (out / "report.json").read_bytes()
    out2 = tmp_path / "r2"
    assert bench_main(["run", "--plan", str(plan), "--data", str(data_dir), "--out", str(out2), "--seed", "1"]) == 0
    assert (out2 / "report.json").read_bytes() == first
    capsys.readouterr()
    assert bench_main(["compare", "--a", str(out), "--b", str(out2), "--metric", "ks", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows and all(r["p_value"] == 1.0 and r["stars"] == "" for r in rows)


def test_bench_folds_override(data_dir, tmp_path):
    out = tmp_path / "r"
    assert bench_main(["run", "--plan", str(_plan(tmp_path)), "--data", str(data_dir), "--out", str(out),
                       "--folds", "2"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["plan"]["folds"] == 2 and len(rep["folds"]["gbdt"]) == 2


def test_validation_errors(data_dir, tmp_path):
    out = str(tmp_path / "r")
    assert bench_main(["run", "--plan", str(tmp_path / "nope.json"), "--data", str(data_dir), "--out", out]) == 2
    assert bench_main(["run", "--plan", str(_plan(tmp_path, folds=1)), "--data", str(data_dir), "--out", out]) == 2
    assert bench_main(["run", "--plan", str(_plan(tmp_path)), "--data", str(tmp_path), "--out", out]) == 2
    assert bench_main(["compare", "--a", str(tmp_path), "--b", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        bench_main(["compare", "--a", "x", "--b", "y", "--metric", "gini"])
    assert exc.value.code == 2


def test_degenerate_data_exit_3(data_dir, tmp_path):
    bad = tmp_path / "data"
    bad.mkdir()
    (bad / "schema.txt").write_bytes((data_dir / "schema.txt").read_bytes())
    for name in ("year1.csv", "year2.csv"):
        lines = (data_dir / name).read_text().splitlines()
        header = lines[0].split(",")
        li = header.index("default")
        rows = [l.split(",") for l in lines[1:]]
        for r in rows:
            r[li] = "0"
        (bad / name).write_text("\n".join([lines[0]] + [",".join(r) for r in rows]) + "\n")
    assert bench_main(["run", "--plan", str(_plan(tmp_path)), "--data", str(bad), "--out", str(tmp_path / "r")]) == 3
