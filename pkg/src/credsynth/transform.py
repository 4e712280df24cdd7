"""Invertible numeric encoding of a Dataset.

Numeric columns get mode-specific normalization. A Gaussian mixture is fitted,
each value is assigned to one mixture component, and the value is stored as a
clipped scalar ``alpha = (x - mean_m) / (SCALE_FACTOR * std_m)`` next to a
one-hot indicator of ``m``. Categorical columns are one-hot encoded.

Text format written by :func:`dump_spec`::

    column=income kind=numeric modes=2 lo=0.1 hi=9.5 integral=false
      mode mean=1.25 std=0.5 weight=0.6
      mode mean=4.0 std=1.0 weight=0.4
    column=segment kind=categorical categories=A|B|C
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tabular import ColumnSchema, Dataset, DataError

SCALE_FACTOR = 4.0
STD_FLOOR = 1e-6
WEIGHT_FLOOR = 0.005
MAX_FIT_ROWS = 5_000
BIC_PATIENCE = 2
_EM_ITERS = 200
_EM_TOL = 1e-6
# variance regularizer relative to the column's overall variance, keeps
# components from collapsing onto single values of discrete-valued columns
_REL_VAR_REG = 1e-3


@dataclass(frozen=True)
class ModeNormalizer:
    """Gaussian-mixture modes of one numeric column.

    ``lo``/``hi`` are the observed range and ``integral`` marks all-integer
    columns; decoding clips to the range and rounds integral columns.
    """

    column: str
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray
    max_modes: int
    lo: float = -np.inf
    hi: float = np.inf
    integral: bool = False

    @property
    def n_modes(self) -> int:
        return int(self.means.shape[0])

    @property
    def modes(self) -> list[tuple[float, float, float]]:
        return [(float(m), float(s), float(w)) for m, s, w in zip(self.means, self.stds, self.weights)]

    def finish(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(x, self.lo, self.hi)
        return np.round(x) if self.integral else x

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        m = rng.choice(self.n_modes, n, p=self.weights)
        return self.finish(rng.normal(self.means[m], self.stds[m]))

    def log_resp(self, x: np.ndarray) -> np.ndarray:
        z = (x[:, None] - self.means[None, :]) / self.stds[None, :]
        lp = np.log(self.weights)[None, :] - np.log(self.stds)[None, :] - 0.5 * z * z
        return lp - _logsumexp(lp)[:, None]


@dataclass(frozen=True)
class OneHot:
    column: str
    categories: tuple[str, ...]


@dataclass(frozen=True)
class ColumnSpan:
    column: str
    kind: str  # "numeric" or "categorical"
    start: int
    stop: int

    @property
    def width(self) -> int:
        return self.stop - self.start

    @property
    def softmax_slice(self) -> slice:
        """Indices of the span holding a one-hot block (mode or category)."""
        return slice(self.start + 1, self.stop) if self.kind == "numeric" else slice(self.start, self.stop)


@dataclass(frozen=True)
class TransformSpec:
    schema: tuple[ColumnSchema, ...]
    encoders: tuple
    spans: tuple[ColumnSpan, ...] = field(init=False)
    width: int = field(init=False)

    def __post_init__(self):
        spans = []
        pos = 0
        for enc in self.encoders:
            if isinstance(enc, ModeNormalizer):
                w = 1 + enc.n_modes
                spans.append(ColumnSpan(enc.column, "numeric", pos, pos + w))
            else:
                w = len(enc.categories)
                spans.append(ColumnSpan(enc.column, "categorical", pos, pos + w))
            pos += w
        object.__setattr__(self, "spans", tuple(spans))
        object.__setattr__(self, "width", pos)

    @property
    def columns(self) -> list[str]:
        return [e.column for e in self.encoders]

    @property
    def alpha_index(self) -> np.ndarray:
        return np.array([s.start for s in self.spans if s.kind == "numeric"], dtype=np.int64)

    @property
    def onehot_slices(self) -> list[slice]:
        """Every block that must hold exactly one 1: mode indicators and categories."""
        return [s.softmax_slice for s in self.spans]

    def span(self, column: str) -> ColumnSpan:
        for s in self.spans:
            if s.column == column:
                return s
        raise KeyError(column)

    def encoder(self, column: str):
        for e in self.encoders:
            if e.column == column:
                return e
        raise KeyError(column)

    def to_dict(self) -> dict:
        cols = []
        for enc in self.encoders:
            if isinstance(enc, ModeNormalizer):
                cols.append({
                    "column": enc.column, "kind": "numeric", "max_modes": enc.max_modes,
                    "means": enc.means.tolist(), "stds": enc.stds.tolist(), "weights": enc.weights.tolist(),
                    "lo": enc.lo, "hi": enc.hi, "integral": enc.integral,
                })
            else:
                cols.append({"column": enc.column, "kind": "categorical", "categories": list(enc.categories)})
        schema = [
            {"name": c.name, "kind": c.kind, "group": c.group, "categories": list(c.categories)}
            for c in self.schema
        ]
        return {"schema": schema, "columns": cols}

    @classmethod
    def from_dict(cls, obj: dict) -> TransformSpec:
        schema = tuple(ColumnSchema(c["name"], c["kind"], c["group"], tuple(c["categories"])) for c in obj["schema"])
        encoders = []
        for c in obj["columns"]:
            if c["kind"] == "numeric":
                encoders.append(ModeNormalizer(
                    c["column"], np.array(c["means"]), np.array(c["stds"]), np.array(c["weights"]), c["max_modes"],
                    c["lo"], c["hi"], c["integral"]))
            else:
                encoders.append(OneHot(c["column"], tuple(c["categories"])))
        return cls(schema, tuple(encoders))


@dataclass(frozen=True)
class EncodedMatrix:
    values: np.ndarray
    spec: TransformSpec

    def validate(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[1] != self.spec.width:
            raise DataError(f"encoded width {v.shape[-1]} does not match spec width {self.spec.width}")
        for sl in self.spec.onehot_slices:
            block = v[:, sl]
            if not (np.all((block == 0) | (block == 1)) and np.all(block.sum(axis=1) == 1)):
                raise DataError(f"span {sl} is not a hard one-hot block")
        a = v[:, self.spec.alpha_index]
        if a.size and (a.min() < -1 or a.max() > 1):
            raise DataError("alpha scalars outside [-1, 1]")


# ---------------------------------------------------------------------------
# Gaussian mixture fitting


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def _em(x: np.ndarray, k: int, var_reg: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n = x.shape[0]
    means = np.quantile(x, (np.arange(k) + 0.5) / k)
    var = np.full(k, x.var() / k**2 + var_reg)
    w = np.full(k, 1.0 / k)
    prev = -np.inf
    ll = prev
    for _ in range(_EM_ITERS):
        z = (x[:, None] - means) ** 2 / var
        lp = np.log(w) - 0.5 * np.log(2 * np.pi * var) - 0.5 * z
        norm = _logsumexp(lp)
        ll = float(norm.sum())
        resp = np.exp(lp - norm[:, None])
        nk = resp.sum(axis=0) + 1e-12
        w = nk / n
        means = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - means) ** 2).sum(axis=0) / nk + var_reg
        if ll - prev < _EM_TOL * abs(ll):
            break
        prev = ll
    return means, np.sqrt(var), w, ll


def fit_mode_normalizer(x: np.ndarray, column: str, max_modes: int, seed: int = 0) -> ModeNormalizer:
    """Fit mixtures of growing size, keep the BIC-best, prune light modes.

    The sweep over k stops once BIC_PATIENCE successive sizes fail to improve.
    """
    if max_modes < 1:
        raise ValueError("max_modes must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    bounds = dict(lo=float(x.min()), hi=float(x.max()), integral=bool(np.all(x == np.round(x))))
    if x.shape[0] > MAX_FIT_ROWS:
        x = np.random.default_rng(seed).choice(x, MAX_FIT_ROWS, replace=False)
    total_var = float(x.var())
    if total_var <= STD_FLOOR**2:
        return ModeNormalizer(column, np.array([float(x.mean())]), np.array([STD_FLOOR]), np.array([1.0]),
                              max_modes, **bounds)
    var_reg = _REL_VAR_REG * total_var
    n = x.shape[0]
    n_unique = np.unique(x).shape[0]
    best = None
    worse = 0
    for k in range(1, min(max_modes, n_unique) + 1):
        means, stds, w, ll = _em(x, k, var_reg)
        bic = -2 * ll + (3 * k - 1) * np.log(n)
        if best is None or bic < best[0]:
            best = (bic, means, stds, w)
            worse = 0
        else:
            worse += 1
            if worse >= BIC_PATIENCE:
                break
    _, means, stds, w = best
    keep = w >= WEIGHT_FLOOR
    means, stds, w = means[keep], np.maximum(stds[keep], STD_FLOOR), w[keep]
    order = np.argsort(means, kind="mergesort")
    return ModeNormalizer(column, means[order], stds[order], w[order] / w.sum(), max_modes, **bounds)


def fit_transform_spec(d: Dataset, max_modes: int = 10, seed: int = 0, include_label: bool = False) -> TransformSpec:
    """One encoder per column; the label column is skipped unless asked for."""
    if d.n_rows == 0:
        raise DataError("cannot fit a transform on an empty dataset")
    encoders = []
    cols = [c for c in d.schema if include_label or c.group != "label"]
    for j, col in enumerate(cols):
        if col.is_numeric:
            encoders.append(fit_mode_normalizer(d[col.name], col.name, max_modes, seed + j))
        else:
            encoders.append(OneHot(col.name, col.categories))
    return TransformSpec(tuple(cols), tuple(encoders))


# ---------------------------------------------------------------------------
# encode / decode


def encode(d: Dataset, spec: TransformSpec, seed: int = 0) -> EncodedMatrix:
    for col in spec.schema:
        try:
            have = d.column(col.name)
        except KeyError:
            raise DataError(f"dataset lacks column {col.name!r}") from None
        if have != col:
            raise DataError(f"column {col.name!r} does not match the fitted schema")
    rng = np.random.default_rng(seed)
    out = np.zeros((d.n_rows, spec.width))
    rows = np.arange(d.n_rows)
    for enc, span in zip(spec.encoders, spec.spans):
        x = d[enc.column]
        if isinstance(enc, ModeNormalizer):
            if enc.n_modes == 1:
                m = np.zeros(d.n_rows, dtype=np.int64)
            else:
                p = np.exp(enc.log_resp(x))
                u = rng.random(d.n_rows)
                m = (np.cumsum(p, axis=1) < u[:, None]).sum(axis=1)
                m = np.minimum(m, enc.n_modes - 1)
            out[:, span.start] = np.clip((x - enc.means[m]) / (SCALE_FACTOR * enc.stds[m]), -1.0, 1.0)
            out[rows, span.start + 1 + m] = 1.0
        else:
            out[rows, span.start + x] = 1.0
    return EncodedMatrix(out, spec)


def decode(m: EncodedMatrix | np.ndarray, spec: TransformSpec | None = None, provenance: str = "decoded") -> Dataset:
    """Invert :func:`encode`; soft spans are resolved by argmax."""
    if isinstance(m, EncodedMatrix):
        values, spec = m.values, m.spec
    else:
        values = np.asarray(m)
    if values.ndim != 2 or values.shape[1] != spec.width:
        raise DataError(f"matrix width {values.shape[-1]} does not match spec width {spec.width}")
    cols = {}
    for enc, span in zip(spec.encoders, spec.spans):
        if isinstance(enc, ModeNormalizer):
            mode = np.argmax(values[:, span.start + 1:span.stop], axis=1)
            alpha = np.clip(values[:, span.start], -1.0, 1.0)
            cols[enc.column] = enc.finish(alpha * SCALE_FACTOR * enc.stds[mode] + enc.means[mode])
        else:
            cols[enc.column] = np.argmax(values[:, span.start:span.stop], axis=1)
    return Dataset(spec.schema, cols, provenance)


def dump_spec(spec: TransformSpec) -> str:
    lines = []
    for enc in spec.encoders:
        if isinstance(enc, ModeNormalizer):
            lines.append(f"column={enc.column} kind=numeric modes={enc.n_modes} "
                         f"lo={enc.lo!r} hi={enc.hi!r} integral={str(enc.integral).lower()}")
            for mu, sd, w in enc.modes:
                lines.append(f"  mode mean={mu!r} std={sd!r} weight={w!r}")
        else:
            lines.append(f"column={enc.column} kind=categorical categories=" + "|".join(enc.categories))
    return "\n".join(lines) + "\n"


def spec_to_json(spec: TransformSpec) -> str:
    return json.dumps(spec.to_dict(), sort_keys=True)
