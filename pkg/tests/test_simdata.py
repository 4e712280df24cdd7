import json

import numpy as np
import pytest

from credsynth.metrics import auc
from credsynth.models import FitConfig, design_matrix, fit, fit_logistic, predict_proba
from credsynth.simdata import SimConfig, degree_sequence, generate, schema_for, write_bundle
from credsynth.tabular import load_csv, read_schema


def test_config_validation():
    for bad in (dict(base_rate=0.6), dict(n_borrowers=1), dict(graph="ws"), dict(n_fin_features=0)):
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_erdos_renyi_mean_degree():
    deg = degree_sequence(1000, "erdos-renyi", seed=1, p=0.01)
    assert abs(deg.mean() - 0.01 * 999) < 0.5
    assert deg.sum() % 2 == 0


def test_barabasi_albert_min_degree():
    deg = degree_sequence(2000, "barabasi-albert", seed=1, m=2)
    assert deg.min() >= 2 and deg.sum() % 2 == 0
    assert deg.max() > 10 * np.median(deg)  # heavy tail


def test_degree_errors():
    with pytest.raises(ValueError):
        degree_sequence(1, "erdos-renyi")
    with pytest.raises(ValueError):
        degree_sequence(10, "barabasi-albert", m=10)
    with pytest.raises(ValueError):
        degree_sequence(10, "erdos-renyi", p=2.0)


def test_determinism_and_schema(small_sim):
    y1, y2, truth = small_sim
    a1, a2, t2 = generate(SimConfig(n_borrowers=3000, seed=11))
    assert y1.same_cells(a1) and y2.same_cells(a2) and truth.to_json() == t2.to_json()
    assert y1.schema == y2.schema == schema_for(SimConfig())
    assert {c.group for c in y1.schema} == {"Fin", "Degree", "SocInt", "label"}


def test_default_rate_near_base(small_sim):
    _, _, truth = small_sim
    for rate in truth.default_rates.values():
        assert abs(rate - 0.12) <= 0.2 * 0.12


def test_zero_signal_gives_noise_features():
    y1, _, truth = generate(SimConfig(n_borrowers=20_000, signal_fin=0.0, signal_socint=0.0, seed=5))
    y = y1.label
    for col in y1.features:
        s = y1[col.name] if col.is_numeric else y1[col.name].astype(float)
        assert abs(auc(s, y) - 0.5) <= 0.02, col.name


def test_no_drift_keeps_performance():
    y1, y2, _ = generate(SimConfig(n_borrowers=20_000, drift=0.0, seed=6))
    cols = [c.name for c in y1.features]
    m = fit(design_matrix(y1, cols), y1.label, FitConfig(kind="logistic"))
    a1 = auc(predict_proba(m, design_matrix(y1, cols)), y1.label)
    a2 = auc(predict_proba(m, design_matrix(y2, cols)), y2.label)
    assert abs(a1 - a2) <= 0.02


def test_fixture_regime():
    y1, _, truth = generate(SimConfig())
    fin_aucs = [max(a, 1 - a) for k, a in truth.feature_aucs["year1"].items() if k.startswith("fin_")]
    # "span ~0.53-0.70", read as both ends within 0.02
    assert 0.51 <= min(fin_aucs) <= 0.55 and 0.68 <= max(fin_aucs) <= 0.72
    soc = [c.name for c in y1.schema if c.group in ("Degree", "SocInt")]
    idx = np.arange(y1.n_rows)
    tr, te = idx % 5 != 0, idx % 5 == 0
    X = design_matrix(y1, soc)
    m = fit(X[tr], y1.label[tr], FitConfig(kind="logistic"))
    a = auc(predict_proba(m, X[te]), y1.label[te])
    assert 0.58 <= a <= 0.70


def test_coefficient_signs_recovered():
    y1, _, truth = generate(SimConfig(n_borrowers=60_000, seed=3))
    fin = [c.name for c in y1.schema if c.name.startswith("fin_")]
    m = fit_logistic(design_matrix(y1, fin), y1.label, FitConfig(kind="logistic", l2=1e-6))
    for name, w in zip(fin, m.weights):
        if abs(truth.coefficients[name]) >= 0.3:
            assert np.sign(w) == np.sign(truth.coefficients[name]), name


def test_write_bundle(tmp_path):
    cfg = SimConfig(n_borrowers=200, seed=1)
    write_bundle(tmp_path, cfg)
    assert {p.name for p in tmp_path.iterdir()} == {"year1.csv", "year2.csv", "schema.txt", "truth.json"}
    schema = read_schema(tmp_path / "schema.txt")
    y1, y2, _ = generate(cfg)
    assert load_csv(tmp_path / "year1.csv", schema).same_cells(y1)
    assert load_csv(tmp_path / "year2.csv", schema).same_cells(y2)
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert set(truth) >= {"coefficients", "default_rates", "feature_aucs", "marginals", "intercepts"}
