import numpy as np
import pytest

from credsynth.metrics import cstest_quality, kstest_quality
from credsynth.synth import (ARCHITECTURES, CtganModel, IndependentModel, SynthConfig, TvaeModel, cond_layout, fit,
                             fit_ctgan, fit_independent, fit_tvae, load_model, sample, sample_conditions, save_model)
from credsynth.tabular import ColumnSchema, DataError, Dataset, label_column
from credsynth.transform import encode, fit_transform_spec

from conftest import mixed_dataset

FAST = dict(epochs=3, batch_size=100, latent_dim=8, architecture="B")


def _cat_ds(counts, names=None):
    names = names or tuple(f"v{i}" for i in range(len(counts)))
    codes = np.repeat(np.arange(len(counts)), counts)
    return Dataset((ColumnSchema("c", "categorical", "Fin", names),), {"c": codes})


def _bimodal(n, rng):
    x = np.where(rng.random(n) < 0.5, rng.normal(-3, 0.5, n), rng.normal(3, 0.5, n))
    c = rng.integers(0, 2, n)
    return Dataset((ColumnSchema("x", "numeric"), ColumnSchema("c", "categorical", "Fin", ("a", "b"))),
                   {"x": x, "c": c})


# configuration

def test_config_validation():
    for bad in (dict(method="gan"), dict(architecture="C"), dict(batch_size=1), dict(epochs=0), dict(latent_dim=0),
                dict(gan_loss="wasserstein")):
        with pytest.raises(ValueError):
            SynthConfig(**bad)


def test_arch_b_is_64_64():
    for method in ("tvae", "ctgan"):
        assert ARCHITECTURES[(method, "B")] == ((64, 64), (64, 64))
        assert SynthConfig(method=method, architecture="B").dims() == ((64, 64), (64, 64))


def test_config_roundtrip():
    cfg = SynthConfig(method="ctgan", hidden=(16, 8), seed=4)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg


# log-frequency condition sampling

def _cond_draws(counts, n=10_000, seed=0):
    d = _cat_ds(counts)
    spec = fit_transform_spec(d, seed=0)
    layout = cond_layout(d, spec)
    _, cat, cond = sample_conditions(layout, n, np.random.default_rng(seed))
    assert np.all(cond.sum(axis=1) == 1.0)
    return layout, cat


def test_balanced_condition_sampling():
    _, cat = _cond_draws((500, 500))
    assert abs(cat.mean() - 0.5) <= 0.02


def test_rare_category_log_frequency():
    layout, cat = _cond_draws((9900, 100))
    expected = np.log(101) / (np.log(9901) + np.log(101))
    assert layout.log_freq[0][1] == pytest.approx(expected)
    assert abs(expected - np.log(100) / (np.log(9900) + np.log(100))) < 1e-3
    assert abs(cat.mean() - 0.334) <= 0.02


def test_layout_invariants(rng):
    d = mixed_dataset(300, rng)
    spec = fit_transform_spec(d, seed=0, include_label=True)
    layout = cond_layout(d, spec)
    widths = sum(len(c.categories) for c in d.schema if not c.is_numeric)
    assert layout.width == widths
    for p in layout.log_freq:
        assert p.sum() == pytest.approx(1.0) and np.all(p > 0)


# fitting errors

def test_empty_dataset_rejected():
    d = Dataset((ColumnSchema("x", "numeric"),), {"x": np.zeros(0)})
    for method in ("tvae", "ctgan", "independent"):
        with pytest.raises(DataError):
            fit(d, SynthConfig(method=method))


def test_ctgan_needs_a_categorical(rng):
    d = Dataset((ColumnSchema("x", "numeric"),), {"x": rng.normal(size=50)})
    with pytest.raises(DataError, match="tvae|independent"):
        fit_ctgan(d, SynthConfig(method="ctgan", **FAST))


def test_method_mismatch(rng):
    with pytest.raises(ValueError):
        fit_tvae(mixed_dataset(50, rng), SynthConfig(method="ctgan"))


def test_sample_n_zero(rng):
    m = fit_independent(mixed_dataset(50, rng))
    with pytest.raises(ValueError):
        sample(m, 0)


# structure, closure and determinism

@pytest.mark.parametrize("method", ["tvae", "ctgan"])
def test_network_shapes(method, rng):
    d = mixed_dataset(200, rng)
    m = fit(d, SynthConfig(method=method, **FAST))
    width = m.spec.width
    if isinstance(m, TvaeModel):
        assert m.encoder.n_out == 2 * m.latent_dim and m.encoder.n_in == width
        assert m.decoder.n_in == m.latent_dim and m.decoder.n_out == width
    else:
        assert isinstance(m, CtganModel)
        assert m.generator.n_in == m.latent_dim + m.layout.width
        assert m.generator.n_out == width
        assert m.discriminator.n_out == 1


@pytest.mark.parametrize("method", ["tvae", "ctgan", "independent"])
def test_closure_and_determinism(method, rng):
    d = mixed_dataset(300, rng)
    cfg = SynthConfig(method=method, seed=3, **FAST)
    s1 = sample(fit(d, cfg), 500, seed=9)
    s2 = sample(fit(d, cfg), 500, seed=9)
    assert s1.same_cells(s2)
    assert s1.schema == d.schema and s1.n_rows == 500
    assert s1.provenance == f"synthetic:{method}"
    for col in d.schema:
        v = s1[col.name]
        if col.is_numeric:
            assert np.all(np.isfinite(v))
        else:
            assert v.min() >= 0 and v.max() < len(col.categories)
    # Dataset construction already validated; re-validate through a copy
    Dataset(s1.schema, {c.name: s1[c.name] for c in s1.schema})
    assert not sample(fit(d, cfg), 500, seed=10).same_cells(s1)


@pytest.mark.parametrize("method", ["tvae", "ctgan", "independent"])
def test_constant_categorical_reproduced(method, rng):
    n = 200
    d = Dataset((ColumnSchema("x", "numeric"), ColumnSchema("c", "categorical", "Fin", ("only", "never")),
                 ColumnSchema("k", "categorical", "Fin", ("a", "b"))),
                {"x": rng.normal(size=n), "c": np.zeros(n, np.int64), "k": rng.integers(0, 2, n)})
    s = sample(fit(d, SynthConfig(method=method, **FAST)), 1000, seed=1)
    assert np.all(s["c"] == 0)


@pytest.mark.parametrize("method", ["tvae", "ctgan"])
def test_save_load_roundtrip(method, rng, tmp_path):
    d = mixed_dataset(200, rng)
    m = fit(d, SynthConfig(method=method, **FAST))
    save_model(m, tmp_path / "m.json")
    m2 = load_model(tmp_path / "m.json")
    assert sample(m2, 300, seed=5).same_cells(sample(m, 300, seed=5))


def test_label_synthesized_as_categorical(rng):
    d = mixed_dataset(400, rng)
    s = sample(fit(d, SynthConfig(method="tvae", **FAST)), 400, seed=0)
    assert s.schema[-1] == label_column("y") and set(np.unique(s.label)) <= {0, 1}


# independent baseline

def test_independent_frequencies():
    m = fit_independent(_cat_ds((7000, 3000)))
    s = sample(m, 10_000, seed=2)
    assert abs(s["c"].mean() - 0.3) <= 0.02
    assert m.categorical["c"].sum() == pytest.approx(1.0)


def test_independent_breaks_correlation(rng):
    n = 10_000
    a = rng.normal(size=n)
    b = 0.9 * a + np.sqrt(0.19) * rng.normal(size=n)
    d = Dataset((ColumnSchema("x1", "numeric"), ColumnSchema("x2", "numeric")), {"x1": a, "x2": b})
    assert np.corrcoef(a, b)[0, 1] > 0.88
    s = sample(fit_independent(d), n, seed=1)
    assert abs(np.corrcoef(s["x1"], s["x2"])[0, 1]) <= 0.1


def test_independent_numeric_marginal(rng):
    d = _bimodal(10_000, rng)
    fresh = _bimodal(10_000, np.random.default_rng(99))
    s = sample(fit_independent(d), 10_000, seed=4)
    assert kstest_quality(fresh["x"], s["x"]) >= 0.95


def test_independent_single_row():
    d = Dataset((ColumnSchema("x", "numeric"), ColumnSchema("c", "categorical", "Fin", ("a", "b", "c"))),
                {"x": [2.5], "c": [2]})
    s = sample(fit_independent(d), 100, seed=0)
    assert np.all(s["c"] == 2) and np.allclose(s["x"], 2.5)


# TVAE training behaviour

def test_elbo_trend(rng):
    d = _bimodal(2000, rng)
    m = fit_tvae(d, SynthConfig(method="tvae", architecture="B", epochs=40, batch_size=200, latent_dim=8, seed=1))
    h = np.asarray(m.elbo_history)
    assert np.all(np.isfinite(h)) and len(h) == 40
    assert np.median(np.diff(h)) >= 0
    assert h[-5:].mean() > h[:5].mean()


def test_latent_mean_pulled_to_prior(rng):
    d = mixed_dataset(2000, rng)
    m = fit_tvae(d, SynthConfig(method="tvae", architecture="B", epochs=30, batch_size=200, latent_dim=16, seed=2))
    X = encode(d, m.spec, 0).values
    assert np.linalg.norm(m.encode_mean(X).mean(axis=0)) <= 1.0


def test_max_seconds_budget(rng):
    d = mixed_dataset(500, rng)
    m = fit_tvae(d, SynthConfig(method="tvae", epochs=10_000, batch_size=100, latent_dim=8, max_seconds=0.5))
    assert 1 <= len(m.elbo_history) < 10_000


@pytest.fixture(scope="module")
def bimodal_fit():
    d = _bimodal(10_000, np.random.default_rng(2024))
    fresh = _bimodal(10_000, np.random.default_rng(7))
    m = fit_tvae(d, SynthConfig(method="tvae", architecture="B", seed=0))
    return fresh, sample(m, 10_000, seed=1)


@pytest.mark.slow
def test_tvae_fidelity_kstest(bimodal_fit):
    fresh, s = bimodal_fit
    ks = kstest_quality(fresh["x"], s["x"])
    print(f"tvae fidelity: KSTest {ks:.4f}")
    assert ks >= 0.90


@pytest.mark.slow
@pytest.mark.xfail(reason="a chi-square p-value is ~uniform even for a perfect sampler, so p >= 0.90 holds about "
                          "10% of the time; TVAE's prior-sampled category share also drifts ~0.03 from the data",
                   strict=False)
def test_tvae_fidelity_cstest(bimodal_fit):
    fresh, s = bimodal_fit
    cs = cstest_quality(fresh["c"], s["c"])
    print(f"tvae fidelity: CSTest {cs:.4f} (share {s['c'].mean():.4f})")
    assert cs >= 0.90
