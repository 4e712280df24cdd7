"""Tabular synthesizers: TVAE-lite, CTGAN-lite and an independent-marginals baseline.

All three consume the mode-specific encoding from :mod:`credsynth.transform`
(fitted with the label column included, so labels are synthesized jointly)
and emit Datasets with the training schema.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .neural import ADVERSARIAL_ADAM, DEFAULT_ADAM, AdamState, DenseNet, adam_step, mlp
from .tabular import DataError, Dataset
from .transform import (ModeNormalizer, TransformSpec, decode, encode, fit_mode_normalizer,
                        fit_transform_spec)

METHODS = ("tvae", "ctgan", "independent")

# (first network, second network) hidden sizes: encoder/decoder for TVAE,
# generator/discriminator for CTGAN. Arch A mirrors the reference defaults.
ARCHITECTURES = {
    ("tvae", "A"): ((128, 128), (128, 128)),
    ("tvae", "B"): ((64, 64), (64, 64)),
    ("ctgan", "A"): ((256, 256), (256, 256)),
    ("ctgan", "B"): ((64, 64), (64, 64)),
}
GUMBEL_TAU = 0.2
_LOG_SIGMA_RANGE = (np.log(0.01), 0.0)


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    method: str = "tvae"
    architecture: str = "A"
    epochs: int = 300
    batch_size: int = 500
    latent_dim: int = 128
    seed: int = 0
    max_modes: int = 10
    hidden: tuple[int, ...] | None = None
    loss_factor: float = 2.0
    gan_loss: str = "non-saturating"
    max_seconds: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown synthesizer method {self.method!r}")
        if self.architecture not in ("A", "B"):
            raise ValueError("architecture must be 'A' or 'B'")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        if self.gan_loss != "non-saturating":
            raise ValueError("only the non-saturating GAN loss is implemented")
        if self.hidden is not None:
            object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def dims(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if self.hidden is not None:
            return self.hidden, self.hidden
        return ARCHITECTURES[(self.method, self.architecture)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden) if self.hidden is not None else None
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> SynthConfig:
        obj = dict(obj)
        if obj.get("hidden") is not None:
            obj["hidden"] = tuple(obj["hidden"])
        return cls(**obj)


def _span_pairs(spec: TransformSpec) -> list[tuple[int, int]]:
    return [(s.softmax_slice.start, s.softmax_slice.stop) for s in spec.spans]


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        if idx.shape[0] >= 2:
            yield idx


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _support(X: np.ndarray) -> np.ndarray:
    """Columns of the encoding that were ever hot in training."""
    return X.max(axis=0) > 0


def _draw_spans(logits: np.ndarray, spans, rng: np.random.Generator, support: np.ndarray) -> np.ndarray:
    """Replace each span of logits by a one-hot draw from its softmax, restricted to the training support."""
    hard = logits.copy()
    rows = np.arange(logits.shape[0])
    for a, b in spans:
        p = _softmax(np.where(support[a:b], logits[:, a:b], -np.inf))
        cdf = np.cumsum(p, axis=1)
        u = rng.random(logits.shape[0]) * cdf[:, -1]
        k = np.minimum((cdf < u[:, None]).sum(axis=1), b - a - 1)
        hard[:, a:b] = 0.0
        hard[rows, a + k] = 1.0
    return hard


def _check_fit_input(d: Dataset, cfg: SynthConfig, method: str):
    if cfg.method != method:
        raise ValueError(f"config method is {cfg.method!r}, expected {method!r}")
    if d.n_rows == 0:
        raise DataError("cannot fit a synthesizer on an empty dataset")


class _Budget:
    def __init__(self, max_seconds):
        self.max_seconds = max_seconds
        self.t0 = time.perf_counter()

    def exhausted(self) -> bool:
        return self.max_seconds is not None and time.perf_counter() - self.t0 > self.max_seconds


# ---------------------------------------------------------------------------
# TVAE-lite


@dataclass
class TvaeModel:
    encoder: DenseNet
    decoder: DenseNet
    log_sigma: np.ndarray
    latent_dim: int
    spec: TransformSpec
    config: SynthConfig
    support: np.ndarray
    elbo_history: list[float] = field(default_factory=list)

    def encode_mean(self, X: np.ndarray) -> np.ndarray:
        return self.encoder.forward(X)[:, :self.latent_dim]


def fit_tvae(d: Dataset, cfg: SynthConfig) -> TvaeModel:
    """Train encoder/decoder by minimizing ``loss_factor * reconstruction + KL``.

    Reconstruction is a Gaussian negative log-likelihood on the tanh-squashed
    alpha scalars (one learned noise scale per column) plus softmax
    cross-entropy on every mode and category span. The recorded ELBO per
    epoch is ``-(reconstruction + KL)`` averaged over rows.
    """
    _check_fit_input(d, cfg, "tvae")
    rng = np.random.default_rng(cfg.seed)
    spec = fit_transform_spec(d, cfg.max_modes, cfg.seed, include_label=True)
    X = encode(d, spec, cfg.seed).values
    L = cfg.latent_dim
    enc_dims, dec_dims = cfg.dims()
    encoder = mlp(spec.width, enc_dims, 2 * L, rng)
    decoder = mlp(L, tuple(reversed(dec_dims)), spec.width, rng)
    alpha = spec.alpha_index
    spans = _span_pairs(spec)
    log_sigma = np.full(alpha.shape[0], np.log(0.1))
    opt_e = AdamState.for_net(encoder, weight_decay=1e-5, **DEFAULT_ADAM)
    opt_d = AdamState.for_net(decoder, weight_decay=1e-5, **DEFAULT_ADAM)
    opt_s = AdamState(**DEFAULT_ADAM)
    opt_s.m, opt_s.v = [np.zeros_like(log_sigma)], [np.zeros_like(log_sigma)]
    model = TvaeModel(encoder, decoder, log_sigma, L, spec, cfg, _support(X))
    budget = _Budget(cfg.max_seconds)
    for _ in range(cfg.epochs):
        elbo_sum = 0.0
        for idx in _batches(X.shape[0], cfg.batch_size, rng):
            x = X[idx]
            nb = x.shape[0]
            h, cache_e = encoder.forward(x, keep=True)
            mu = h[:, :L]
            ls = np.clip(h[:, L:], -10.0, 5.0)
            sig = np.exp(ls)
            eps = rng.standard_normal(mu.shape)
            z = mu + sig * eps
            out, cache_d = decoder.forward(z, keep=True)

            g_out = np.zeros_like(out)
            rec = 0.0
            if alpha.size:
                a_hat = np.tanh(out[:, alpha])
                s2 = np.exp(2 * model.log_sigma)
                diff = a_hat - x[:, alpha]
                rec += float((diff**2 / (2 * s2)).sum() + nb * model.log_sigma.sum())
                g_out[:, alpha] = diff / s2 * (1 - a_hat**2)
                g_ls_sigma = (1.0 - diff**2 / s2).sum(axis=0)
            for a, b in spans:
                p = _softmax(out[:, a:b])
                t = x[:, a:b]
                rec -= float((t * np.log(np.maximum(p, 1e-12))).sum())
                g_out[:, a:b] = p - t
            kl = float(0.5 * (mu**2 + sig**2 - 1.0 - 2.0 * ls).sum())
            elbo_sum -= rec + kl

            g_out *= cfg.loss_factor / nb
            grads_d, g_z = decoder.backward(cache_d, g_out)
            g_mu = g_z + mu / nb
            g_ls = g_z * eps * sig + (sig**2 - 1.0) / nb
            g_ls = np.where((h[:, L:] > -10.0) & (h[:, L:] < 5.0), g_ls, 0.0)
            grads_e, _ = encoder.backward(cache_e, np.hstack([g_mu, g_ls]))
            adam_step(decoder, grads_d, opt_d)
            adam_step(encoder, grads_e, opt_e)
            if alpha.size:
                _adam_array(model.log_sigma, g_ls_sigma * cfg.loss_factor / nb, opt_s)
                np.clip(model.log_sigma, *_LOG_SIGMA_RANGE, out=model.log_sigma)
        model.elbo_history.append(elbo_sum / X.shape[0])
        if not np.isfinite(model.elbo_history[-1]):
            raise SynthesisError("TVAE training diverged (non-finite ELBO)")
        if budget.exhausted():
            break
    return model


def _adam_array(p: np.ndarray, g: np.ndarray, st: AdamState):
    st.step += 1
    m, v = st.m[0], st.v[0]
    m *= st.beta1
    m += (1 - st.beta1) * g
    v *= st.beta2
    v += (1 - st.beta2) * g * g
    p -= st.lr * (m / (1 - st.beta1**st.step)) / (np.sqrt(v / (1 - st.beta2**st.step)) + st.eps)


def _sample_tvae(model: TvaeModel, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, model.latent_dim))
    out = model.decoder.forward(z)
    alpha = model.spec.alpha_index
    res = _draw_spans(out, _span_pairs(model.spec), rng, model.support)
    if alpha.size:
        noise = rng.standard_normal((n, alpha.size)) * np.exp(model.log_sigma)
        res[:, alpha] = np.clip(np.tanh(out[:, alpha]) + noise, -1.0, 1.0)
    return res


# ---------------------------------------------------------------------------
# CTGAN-lite


@dataclass
class CondLayout:
    """One conditioning span per categorical column of the encoding."""

    columns: list[str]
    cond_offsets: list[int]
    data_spans: list[tuple[int, int]]
    log_freq: list[np.ndarray]
    freq: list[np.ndarray]

    @property
    def width(self) -> int:
        return sum(b - a for a, b in self.data_spans)

    def to_dict(self) -> dict:
        return {"columns": self.columns, "cond_offsets": self.cond_offsets,
                "data_spans": [list(s) for s in self.data_spans],
                "log_freq": [p.tolist() for p in self.log_freq], "freq": [p.tolist() for p in self.freq]}

    @classmethod
    def from_dict(cls, obj: dict) -> CondLayout:
        return cls(obj["columns"], obj["cond_offsets"], [tuple(s) for s in obj["data_spans"]],
                   [np.array(p) for p in obj["log_freq"]], [np.array(p) for p in obj["freq"]])


def cond_layout(d: Dataset, spec: TransformSpec) -> CondLayout:
    cols, offs, spans, logf, freq = [], [], [], [], []
    off = 0
    for s in spec.spans:
        if s.kind != "categorical":
            continue
        k = s.width
        counts = np.bincount(d[s.column], minlength=k).astype(np.float64)
        lf = np.log(counts + 1.0)
        cols.append(s.column)
        offs.append(off)
        spans.append((s.start, s.stop))
        logf.append(lf / lf.sum())
        freq.append(counts / counts.sum())
        off += k
    return CondLayout(cols, offs, spans, logf, freq)


def sample_conditions(layout: CondLayout, n: int, rng: np.random.Generator,
                      log_frequency: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pick a column uniformly per row, then a category by (log-)frequency.

    Returns (column index, category index, one-hot condition matrix).
    """
    col = rng.integers(len(layout.columns), size=n)
    cat = np.zeros(n, np.int64)
    for j in range(len(layout.columns)):
        rows = np.flatnonzero(col == j)
        if rows.size:
            p = layout.log_freq[j] if log_frequency else layout.freq[j]
            cat[rows] = rng.choice(p.shape[0], rows.size, p=p)
    cond = np.zeros((n, layout.width))
    cond[np.arange(n), np.asarray(layout.cond_offsets)[col] + cat] = 1.0
    return col, cat, cond


@dataclass
class CtganModel:
    generator: DenseNet
    discriminator: DenseNet
    latent_dim: int
    layout: CondLayout
    spec: TransformSpec
    config: SynthConfig
    support: np.ndarray
    loss_history: list[tuple[float, float]] = field(default_factory=list)


def _gen_head(raw: np.ndarray, spec: TransformSpec, rng: np.random.Generator):
    """tanh on alpha scalars, gumbel-softmax on spans; returns (output, cache)."""
    out = np.empty_like(raw)
    alpha = spec.alpha_index
    out[:, alpha] = np.tanh(raw[:, alpha])
    for a, b in _span_pairs(spec):
        g = -np.log(-np.log(rng.uniform(1e-20, 1.0, (raw.shape[0], b - a))))
        out[:, a:b] = _softmax((raw[:, a:b] + g) / GUMBEL_TAU)
    return out


def _gen_head_backward(out: np.ndarray, g: np.ndarray, spec: TransformSpec) -> np.ndarray:
    gr = np.empty_like(g)
    alpha = spec.alpha_index
    gr[:, alpha] = g[:, alpha] * (1 - out[:, alpha] ** 2)
    for a, b in _span_pairs(spec):
        y = out[:, a:b]
        gs = g[:, a:b]
        gr[:, a:b] = y * (gs - (gs * y).sum(axis=1, keepdims=True)) / GUMBEL_TAU
    return gr


def _bce_logits(z: np.ndarray, target: float) -> tuple[float, np.ndarray]:
    n = z.shape[0]
    val = float((np.maximum(z, 0) - z * target + np.log1p(np.exp(-np.abs(z)))).sum() / n)
    p = 0.5 * (1 + np.tanh(0.5 * z))
    return val, (p - target) / n


def fit_ctgan(d: Dataset, cfg: SynthConfig) -> CtganModel:
    """Alternate discriminator and generator updates with training-by-sampling.

    Each row of a batch conditions on one categorical column (chosen
    uniformly) and one category (chosen by log-frequency); the real rows fed
    to the discriminator carry the same condition. The generator minimizes
    the non-saturating adversarial loss plus a cross-entropy that enforces
    the requested category.
    """
    _check_fit_input(d, cfg, "ctgan")
    spec = fit_transform_spec(d, cfg.max_modes, cfg.seed, include_label=True)
    layout = cond_layout(d, spec)
    if not layout.columns:
        raise DataError("CTGAN needs at least one categorical column; use the tvae or independent method")
    rng = np.random.default_rng(cfg.seed)
    X = encode(d, spec, cfg.seed).values
    by_cat = [[np.flatnonzero(d[c] == k) for k in range(layout.freq[j].shape[0])]
              for j, c in enumerate(layout.columns)]
    L = cfg.latent_dim
    g_dims, d_dims = cfg.dims()
    gen = mlp(L + layout.width, g_dims, spec.width, rng, residual=True)
    dis = mlp(spec.width + layout.width, d_dims, 1, rng, hidden_activation="leaky_relu")
    opt_g = AdamState.for_net(gen, weight_decay=1e-6, **ADVERSARIAL_ADAM)
    opt_d = AdamState.for_net(dis, weight_decay=1e-6, **ADVERSARIAL_ADAM)
    model = CtganModel(gen, dis, L, layout, spec, cfg, _support(X))
    width = spec.width
    spans_arr = layout.data_spans
    bs = min(cfg.batch_size, max(2, X.shape[0]))
    steps = max(1, X.shape[0] // bs)
    budget = _Budget(cfg.max_seconds)

    def real_rows(col, cat):
        idx = np.empty(col.shape[0], np.int64)
        for i, (j, k) in enumerate(zip(col, cat)):
            pool = by_cat[j][k]
            idx[i] = pool[rng.integers(pool.shape[0])]
        return idx

    for _ in range(cfg.epochs):
        ld_sum = lg_sum = 0.0
        for _ in range(steps):
            # discriminator
            col, cat, cond = sample_conditions(layout, bs, rng)
            perm = rng.permutation(bs)
            x_real = X[real_rows(col[perm], cat[perm])]
            z = rng.standard_normal((bs, L))
            fake = _gen_head(gen.forward(np.hstack([z, cond])), spec, rng)
            d_real, c_real = dis.forward(np.hstack([x_real, cond[perm]]), keep=True)
            d_fake, c_fake = dis.forward(np.hstack([fake, cond]), keep=True)
            l1, g1 = _bce_logits(d_real, 1.0)
            l2, g2 = _bce_logits(d_fake, 0.0)
            gr1, _ = dis.backward(c_real, g1)
            gr2, _ = dis.backward(c_fake, g2)
            adam_step(dis, [a + b for a, b in zip(gr1, gr2)], opt_d)
            ld_sum += l1 + l2

            # generator
            col, cat, cond = sample_conditions(layout, bs, rng)
            z = rng.standard_normal((bs, L))
            raw, c_gen = gen.forward(np.hstack([z, cond]), keep=True)
            fake = _gen_head(raw, spec, rng)
            d_fake, c_fake = dis.forward(np.hstack([fake, cond]), keep=True)
            lg, gd = _bce_logits(d_fake, 1.0)
            _, g_in = dis.backward(c_fake, gd)
            g_raw = _gen_head_backward(fake, g_in[:, :width], spec)
            for j, (a, b) in enumerate(spans_arr):
                rows = np.flatnonzero(col == j)
                if rows.size == 0:
                    continue
                p = _softmax(raw[rows, a:b])
                t = np.zeros_like(p)
                t[np.arange(rows.size), cat[rows]] = 1.0
                lg -= float((t * np.log(np.maximum(p, 1e-12))).sum()) / bs
                g_raw[rows, a:b] += (p - t) / bs
            grads_g, _ = gen.backward(c_gen, g_raw)
            adam_step(gen, grads_g, opt_g)
            lg_sum += lg
        model.loss_history.append((ld_sum / steps, lg_sum / steps))
        if not np.isfinite(ld_sum + lg_sum):
            raise SynthesisError("CTGAN training diverged")
        if budget.exhausted():
            break
    return model


def _sample_ctgan(model: CtganModel, n: int, rng: np.random.Generator) -> np.ndarray:
    _, _, cond = sample_conditions(model.layout, n, rng, log_frequency=False)
    z = rng.standard_normal((n, model.latent_dim))
    raw = model.generator.forward(np.hstack([z, cond]))
    out = _draw_spans(raw, _span_pairs(model.spec), rng, model.support)
    alpha = model.spec.alpha_index
    out[:, alpha] = np.tanh(raw[:, alpha])
    return out


# ---------------------------------------------------------------------------
# independent marginals


@dataclass
class IndependentModel:
    schema: tuple
    numeric: dict[str, ModeNormalizer]
    categorical: dict[str, np.ndarray]
    seed: int = 0


def fit_independent(d: Dataset, seed: int = 0, max_modes: int = 10) -> IndependentModel:
    if d.n_rows == 0:
        raise DataError("cannot fit a synthesizer on an empty dataset")
    num, cat = {}, {}
    for j, col in enumerate(d.schema):
        if col.is_numeric:
            num[col.name] = fit_mode_normalizer(d[col.name], col.name, max_modes, seed + j)
        else:
            counts = np.bincount(d[col.name], minlength=len(col.categories)).astype(np.float64)
            cat[col.name] = counts / counts.sum()
    return IndependentModel(d.schema, num, cat, seed)


def _quota_draw(p: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n codes whose counts are the largest-remainder rounding of n * p, in random order."""
    raw = n * p
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    if short:
        frac = raw - counts
        order = np.lexsort((rng.random(p.shape[0]), -frac))
        counts[order[:short]] += 1
    return rng.permutation(np.repeat(np.arange(p.shape[0]), counts))


# ---------------------------------------------------------------------------
# shared entry points


def fit(d: Dataset, cfg: SynthConfig):
    if cfg.method == "tvae":
        return fit_tvae(d, cfg)
    if cfg.method == "ctgan":
        return fit_ctgan(d, cfg)
    return fit_independent(d, cfg.seed, cfg.max_modes)


def sample(model, n: int, seed: int = 0) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(model, IndependentModel):
        cols = {}
        for col in model.schema:
            if col.is_numeric:
                cols[col.name] = model.numeric[col.name].sample(n, rng)
            else:
                cols[col.name] = _quota_draw(model.categorical[col.name], n, rng)
        return Dataset(model.schema, cols, "synthetic:independent")
    if isinstance(model, TvaeModel):
        out = _sample_tvae(model, n, rng)
    elif isinstance(model, CtganModel):
        out = _sample_ctgan(model, n, rng)
    else:
        raise TypeError(f"not a synthesizer model: {type(model).__name__}")
    return decode(out, model.spec, provenance=f"synthetic:{model.config.method}")


# ---------------------------------------------------------------------------
# persistence


def save_model(model, path: str | Path) -> None:
    """JSON file: a header (method, config, transform spec) plus network parameters."""
    if isinstance(model, TvaeModel):
        obj = {"method": "tvae", "config": model.config.to_dict(), "spec": model.spec.to_dict(),
               "encoder": model.encoder.to_dict(), "decoder": model.decoder.to_dict(),
               "log_sigma": model.log_sigma.tolist(), "support": model.support.tolist(),
               "elbo_history": model.elbo_history}
    elif isinstance(model, CtganModel):
        obj = {"method": "ctgan", "config": model.config.to_dict(), "spec": model.spec.to_dict(),
               "generator": model.generator.to_dict(), "discriminator": model.discriminator.to_dict(),
               "layout": model.layout.to_dict(), "support": model.support.tolist()}
    elif isinstance(model, IndependentModel):
        spec = TransformSpec(model.schema, tuple(
            model.numeric[c.name] if c.is_numeric else _onehot(c) for c in model.schema))
        obj = {"method": "independent", "seed": model.seed, "spec": spec.to_dict(),
               "categorical": {k: v.tolist() for k, v in model.categorical.items()}}
    else:
        raise TypeError(f"not a synthesizer model: {type(model).__name__}")
    Path(path).write_text(json.dumps(obj), encoding="utf-8")


def _onehot(col):
    from .transform import OneHot
    return OneHot(col.name, col.categories)


def load_model(path: str | Path):
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = TransformSpec.from_dict(obj["spec"])
    if obj["method"] == "tvae":
        cfg = SynthConfig.from_dict(obj["config"])
        return TvaeModel(DenseNet.from_dict(obj["encoder"]), DenseNet.from_dict(obj["decoder"]),
                         np.array(obj["log_sigma"]), cfg.latent_dim, spec, cfg,
                         np.array(obj["support"], dtype=bool), obj["elbo_history"])
    if obj["method"] == "ctgan":
        cfg = SynthConfig.from_dict(obj["config"])
        return CtganModel(DenseNet.from_dict(obj["generator"]), DenseNet.from_dict(obj["discriminator"]),
                          cfg.latent_dim, CondLayout.from_dict(obj["layout"]), spec, cfg,
                          np.array(obj["support"], dtype=bool))
    if obj["method"] == "independent":
        num = {e.column: e for e in spec.encoders if isinstance(e, ModeNormalizer)}
        cat = {k: np.array(v) for k, v in obj["categorical"].items()}
        return IndependentModel(spec.schema, num, cat, obj["seed"])
    raise ValueError(f"unknown synthesizer method {obj['method']!r}")
