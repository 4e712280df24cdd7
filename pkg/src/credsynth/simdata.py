"""Seeded two-year simulated credit portfolio with known ground truth.

Feature layout for the default config:

* ``fin_00 .. fin_07`` (Fin, numeric): one-factor correlated latents pushed
  through four marginal shapes in rotation: log-normal, segment-driven
  bimodal, Gaussian, and a hidden 30/70 two-mode mixture. ``fin_01`` is a
  noisy near-copy of ``fin_00``'s latent, so correlation screening has
  something to remove.
* ``segment`` (A/B/C) and ``product`` (card/loan), both Fin and categorical.
* ``degree`` (Degree): node degree in a random graph over the borrowers.
* ``soc_00 .. soc_03`` (SocInt): noisy neighbourhood aggregates, with the
  last column pure noise.
* ``default`` (label): Bernoulli draw from a logistic model with linear Fin
  effects, one pairwise interaction, one threshold effect and a
  neighbourhood-risk term. The intercept is solved so the expected default
  rate equals ``base_rate``.

Year 2 applies covariate shift (latent mean and segment mix) and concept
drift (coefficients shrink and move toward a permuted copy, nonlinear and
social terms decay), all scaled by ``drift``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .metrics import auc
from .tabular import ColumnSchema, Dataset, label_column

SEGMENTS = ("A", "B", "C")
PRODUCTS = ("card", "loan")
_FIN_BETA = (1.3, -1.0, 0.6, 0.65, -0.5, 0.45, 0.3, 0.0)
_LOADINGS = (0.55, 0.5, 0.35, 0.45, 0.25, 0.4, 0.3, 0.2)


@dataclass(frozen=True)
class SimConfig:
    n_borrowers: int = 20_000
    n_fin_features: int = 8
    n_socint_features: int = 4
    graph: str = "barabasi-albert"
    graph_m: int = 3
    graph_p: float = 0.0003
    base_rate: float = 0.12
    signal_fin: float = 1.0
    signal_socint: float = 1.0
    drift: float = 0.7
    seed: int = 2018

    def __post_init__(self):
        if not 0.01 < self.base_rate < 0.5:
            raise ValueError("base_rate must lie in (0.01, 0.5)")
        if self.n_borrowers < 2 or self.n_fin_features < 1 or self.n_socint_features < 1:
            raise ValueError("counts must be >= 1 (and at least 2 borrowers)")
        if self.graph not in ("erdos-renyi", "barabasi-albert"):
            raise ValueError(f"unknown graph model {self.graph!r}")
        if self.graph == "barabasi-albert" and not 1 <= self.graph_m < self.n_borrowers:
            raise ValueError("barabasi-albert needs 1 <= m < n")
        if self.graph == "erdos-renyi" and not 0.0 <= self.graph_p <= 1.0:
            raise ValueError("erdos-renyi needs p in [0, 1]")
        if self.drift < 0:
            raise ValueError("drift must be non-negative")

    @classmethod
    def from_json(cls, text: str) -> SimConfig:
        return cls(**json.loads(text))


@dataclass
class SimTruth:
    coefficients: dict[str, float]
    intercepts: dict[str, float]
    default_rates: dict[str, float]
    feature_aucs: dict[str, dict[str, float]]
    marginals: dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def schema_for(cfg: SimConfig) -> tuple[ColumnSchema, ...]:
    cols = [ColumnSchema(f"fin_{j:02d}", "numeric", "Fin") for j in range(cfg.n_fin_features)]
    cols += [ColumnSchema("segment", "categorical", "Fin", SEGMENTS),
             ColumnSchema("product", "categorical", "Fin", PRODUCTS),
             ColumnSchema("degree", "numeric", "Degree")]
    cols += [ColumnSchema(f"soc_{j:02d}", "numeric", "SocInt") for j in range(cfg.n_socint_features)]
    cols.append(label_column("default"))
    return tuple(cols)


def degree_sequence(n: int, model: str = "barabasi-albert", seed: int = 0, m: int = 3,
                    p: float = 0.01) -> np.ndarray:
    return _graph_degrees(n, model, seed, m, p)[0]


def _graph_degrees(n, model, seed, m, p):
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if model == "erdos-renyi":
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        g = nx.fast_gnp_random_graph(n, p, seed=seed)
    elif model == "barabasi-albert":
        if not 1 <= m < n:
            raise ValueError("m must satisfy 1 <= m < n")
        g = nx.barabasi_albert_graph(n, m, seed=seed)
    else:
        raise ValueError(f"unknown graph model {model!r}")
    edges = np.array(list(g.edges()), dtype=np.int64).reshape(-1, 2)
    deg = np.bincount(edges.ravel(), minlength=n).astype(np.int64)
    return deg, edges


def _neighbour_mean(values, edges, deg):
    tot = np.zeros(deg.shape[0])
    np.add.at(tot, edges[:, 0], values[edges[:, 1]])
    np.add.at(tot, edges[:, 1], values[edges[:, 0]])
    return np.divide(tot, deg, out=np.zeros_like(tot), where=deg > 0)


def _solve_intercept(eta, rate):
    lo, hi = -30.0, 30.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(eta + mid)))) < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _year(cfg: SimConfig, year: int, drift: float, rng: np.random.Generator, beta: np.ndarray):
    keep = 1.0 - min(drift, 1.0)
    n = cfg.n_borrowers
    nf = cfg.n_fin_features
    seg_p = np.array([0.5 - 0.15 * drift, 0.3, 0.2 + 0.15 * drift])
    segment = rng.choice(3, n, p=seg_p / seg_p.sum())
    product = (rng.random(n) < 0.4).astype(np.int64)
    factor = rng.normal(size=n)
    lat = np.empty((n, nf))
    for j in range(nf):
        lam = _LOADINGS[j % len(_LOADINGS)]
        lat[:, j] = lam * factor + np.sqrt(1 - lam**2) * rng.normal(size=n)
    if nf > 1:
        lat[:, 1] = 0.9 * lat[:, 0] + np.sqrt(1 - 0.81) * rng.normal(size=n)
    lat += 0.35 * drift
    fin = np.empty_like(lat)
    seg_shift = np.array([0.0, 1.5, 3.5])
    hidden = rng.random(n) < 0.3
    for j in range(nf):
        shape = j % 4
        if shape == 0:
            fin[:, j] = np.exp(0.6 * lat[:, j] + 1.0)
        elif shape == 1:
            fin[:, j] = lat[:, j] + seg_shift[segment]
        elif shape == 2:
            fin[:, j] = 10.0 + 2.0 * lat[:, j]
        else:
            fin[:, j] = lat[:, j] + 4.0 * hidden
    # standardized latent drives risk, so marginal shapes don't change the truth
    z = lat
    if cfg.graph == "barabasi-albert":
        deg, edges = _graph_degrees(n, "barabasi-albert", int(rng.integers(2**31)), cfg.graph_m, 0.0)
    else:
        deg, edges = _graph_degrees(n, "erdos-renyi", int(rng.integers(2**31)), 0, cfg.graph_p)
    own_risk = z @ beta[:nf]
    nb_risk = _neighbour_mean(own_risk, edges, deg)
    nb_seg_c = _neighbour_mean((segment == 2).astype(float), edges, deg)
    ldeg = np.log1p(deg)
    soc = np.empty((n, cfg.n_socint_features))
    for j in range(cfg.n_socint_features):
        k = j % 4
        if j == cfg.n_socint_features - 1 and cfg.n_socint_features > 1:
            soc[:, j] = rng.normal(size=n)
        elif k == 0:
            soc[:, j] = nb_risk + 0.4 * rng.normal(size=n)
        elif k == 1:
            soc[:, j] = nb_seg_c + 0.1 * rng.normal(size=n)
        else:
            soc[:, j] = ldeg * (1 + 0.2 * rng.normal(size=n)) + 0.5 * nb_risk
    sf = cfg.signal_fin
    eta = sf * own_risk
    eta = eta + sf * np.array([0.0, 0.25, 0.6])[segment] - sf * 0.2 * product
    if nf > 3:
        eta = eta + sf * keep * 0.6 * z[:, 0] * z[:, 3]
    if nf > 2:
        eta = eta + sf * keep * 0.5 * (z[:, 2] > 1.0)
    eta = eta + cfg.signal_socint * (1.2 * (1 - 0.5 * min(drift, 1.0)) * nb_risk - 0.15 * (ldeg - ldeg.mean()))
    b0 = _solve_intercept(eta, cfg.base_rate)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(eta + b0)))).astype(np.int64)
    cols = {f"fin_{j:02d}": fin[:, j] for j in range(nf)}
    cols.update(segment=segment, product=product, degree=deg.astype(np.float64))
    cols.update({f"soc_{j:02d}": soc[:, j] for j in range(cfg.n_socint_features)})
    cols["default"] = y
    return Dataset(schema_for(cfg), cols, f"real:year{year}"), b0


def generate(cfg: SimConfig = SimConfig()) -> tuple[Dataset, Dataset, SimTruth]:
    ss = np.random.SeedSequence(cfg.seed)
    s_coef, s1, s2 = ss.spawn(3)
    nf = cfg.n_fin_features
    base = np.array([_FIN_BETA[j % len(_FIN_BETA)] for j in range(nf)])
    beta1 = base.copy()
    perm = np.random.default_rng(s_coef).permutation(nf)
    mix = min(cfg.drift, 1.0)
    beta2 = (1 - 0.3 * mix) * ((1 - mix) * base + mix * base[perm])
    y1, b1 = _year(cfg, 1, 0.0, np.random.default_rng(s1), beta1)
    y2, b2 = _year(cfg, 2, cfg.drift, np.random.default_rng(s2), beta2)
    aucs = {}
    for name, d in (("year1", y1), ("year2", y2)):
        yy = d.label
        aucs[name] = {c.name: float(auc(d[c.name], yy)) for c in d.features if c.is_numeric}
    truth = SimTruth(
        coefficients={f"fin_{j:02d}": float(cfg.signal_fin * beta1[j]) for j in range(nf)},
        intercepts={"year1": float(b1), "year2": float(b2)},
        default_rates={"year1": float(y1.label.mean()), "year2": float(y2.label.mean())},
        feature_aucs=aucs,
        marginals={
            "fin (j % 4 == 0)": "log-normal exp(0.6 z + 1)",
            "fin (j % 4 == 1)": "z + segment shift (0, 1.5, 3.5)",
            "fin (j % 4 == 2)": "Gaussian 10 + 2 z",
            "fin (j % 4 == 3)": "z + 4 * Bernoulli(0.3)",
            "risk extras": "0.6 z0 z3 interaction, 1.2 * [z2 > 1] threshold (both decay with drift), segment and product effects",
            "social": "1.2 * (1 - drift / 2) * neighbour mean of own Fin risk, -0.15 * centered log1p(degree)",
        },
        config=asdict(cfg),
    )
    return y1, y2, truth


def write_bundle(out_dir: str | Path, cfg: SimConfig = SimConfig()) -> SimTruth:
    from .tabular import write_csv, write_schema

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    y1, y2, truth = generate(cfg)
    write_csv(y1, out / "year1.csv")
    write_csv(y2, out / "year2.csv")
    write_schema(y1.schema, out / "schema.txt")
    (out / "truth.json").write_text(truth.to_json(), encoding="utf-8")
    return truth
