"""Classifier performance, synthetic-data fidelity and paired significance tests.

Tail probabilities use regularized incomplete gamma/beta functions evaluated by
power series and Lentz continued fractions (the classic pairing: series below
the transition point, continued fraction above it).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .tabular import DataError, Dataset, concat, kfold_partition

_EPS = 1e-15
_FPMIN = 1e-300
_MAXIT = 500


# ---------------------------------------------------------------------------
# special functions


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def _gamma_series(a, x):
    ap = a
    term = total = 1.0 / a
    for _ in range(_MAXIT):
        ap += 1
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    b = x + 1 - a
    c = 1 / _FPMIN
    d = 1 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        d = _FPMIN if abs(d) < _FPMIN else d
        c = b + an / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1) / (a + b + 2):
        return math.exp(lbt) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _beta_cf(b, a, 1 - x) / b


def _beta_cf(a, b, x):
    qab, qap, qam = a + b, a + 1, a - 1
    c = 1.0
    d = 1 - qab * x / qap
    d = _FPMIN if abs(d) < _FPMIN else d
    d = 1 / d
    h = d
    for m in range(1, _MAXIT):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1 + aa * d
        d = _FPMIN if abs(d) < _FPMIN else d
        c = 1 + aa / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1 + aa * d
        d = _FPMIN if abs(d) < _FPMIN else d
        c = 1 + aa / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < _EPS:
            break
    return h


def chi2_sf(stat: float, df: int) -> float:
    return gammainc_upper(df / 2.0, stat / 2.0)


def t_two_sided(t: float, df: int) -> float:
    t2 = t * t
    if t2 < df:
        # df / (df + t^2) is near 1 here; work with its complement to avoid cancellation
        return 1.0 - betainc(0.5, df / 2.0, t2 / (df + t2))
    return betainc(df / 2.0, 0.5, df / (df + t2))


# ---------------------------------------------------------------------------
# distribution distances


def ks_statistic(a, b) -> float:
    """Supremum distance between the two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_statistic needs two non-empty samples")
    return float(_kernels.ecdf_distance(a, b))


def kstest_quality(real_col, synth_col) -> float:
    return 1.0 - ks_statistic(real_col, synth_col)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    p_value: float
    pooled_categories: int


def chi2_homogeneity(real_counts, synth_counts, min_expected: float = 5.0) -> ChiSquareResult:
    """Two-sample chi-square on a 2 x c table of category counts.

    Categories with zero total are dropped. While some expected cell falls
    below ``min_expected``, the lightest category is merged into whichever
    adjacent category is lighter.
    """
    table = np.vstack([np.asarray(real_counts, float), np.asarray(synth_counts, float)])
    table = table[:, table.sum(axis=0) > 0]
    cols = [table[:, j] for j in range(table.shape[1])]
    row_tot = table.sum(axis=1)
    n = row_tot.sum()
    while len(cols) > 1:
        tot = np.array([c.sum() for c in cols])
        expected_min = tot * row_tot.min() / n
        if expected_min.min() >= min_expected:
            break
        j = int(np.argmin(tot))
        if j == 0:
            k = 1
        elif j == len(cols) - 1:
            k = j - 1
        else:
            k = j - 1 if tot[j - 1] <= tot[j + 1] else j + 1
        cols[min(j, k)] = cols[j] + cols[k]
        del cols[max(j, k)]
    if len(cols) < 2:
        return ChiSquareResult(0.0, 0, 1.0, len(cols))
    obs = np.column_stack(cols)
    exp = np.outer(row_tot, obs.sum(axis=0)) / n
    stat = float(((obs - exp) ** 2 / exp).sum())
    df = obs.shape[1] - 1
    return ChiSquareResult(stat, df, min(max(chi2_sf(stat, df), 0.0), 1.0), obs.shape[1])


def cstest_quality(real_col, synth_col, n_categories: int | None = None) -> float:
    """p-value of the chi-square homogeneity test on category counts."""
    real_col = np.asarray(real_col)
    synth_col = np.asarray(synth_col)
    if real_col.size == 0 or synth_col.size == 0:
        raise ValueError("cstest_quality needs two non-empty samples")
    if real_col.dtype.kind in "iu" and synth_col.dtype.kind in "iu":
        k = n_categories or int(max(real_col.max(), synth_col.max())) + 1
        rc = np.bincount(real_col, minlength=k)
        sc = np.bincount(synth_col, minlength=k)
    else:
        cats = sorted(set(real_col.tolist()) | set(synth_col.tolist()))
        lookup = {c: i for i, c in enumerate(cats)}
        rc = np.bincount([lookup[v] for v in real_col.tolist()], minlength=len(cats))
        sc = np.bincount([lookup[v] for v in synth_col.tolist()], minlength=len(cats))
    return chi2_homogeneity(rc, sc).p_value


# ---------------------------------------------------------------------------
# classifier performance


def _scored(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("need at least one positive and one negative label")
    return s, y


def auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via mid-ranks."""
    s, y = _scored(scores, labels)
    return float(_kernels.rank_auc(s, y))


def ks_discrimination(scores, labels) -> float:
    s, y = _scored(scores, labels)
    return ks_statistic(s[y == 1], s[y == 0])


def f_measure(predictions, labels) -> float:
    p = np.asarray(predictions).astype(bool)
    y = np.asarray(labels).astype(bool)
    if p.shape != y.shape:
        raise ValueError("predictions and labels must have equal length")
    tp = float(np.sum(p & y))
    fp = float(np.sum(p & ~y))
    fn = float(np.sum(~p & y))
    if tp == 0:
        return 0.0
    prec = tp / (tp + fp)
    rec = tp / (tp + fn)
    return 2 * prec * rec / (prec + rec)


# ---------------------------------------------------------------------------
# paired comparison


@dataclass(frozen=True)
class PairedComparison:
    a: tuple[float, ...]
    b: tuple[float, ...]
    mean_diff: float
    rel_diff_pct: float
    t_stat: float
    p_value: float
    degenerate: bool
    label: str = ""

    @property
    def sig05(self) -> bool:
        return self.p_value < 0.05

    @property
    def sig10(self) -> bool:
        return self.p_value < 0.1

    @property
    def stars(self) -> str:
        return "**" if self.sig05 else ("*" if self.sig10 else "")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["a"] = list(self.a)
        out["b"] = list(self.b)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> PairedComparison:
        obj = dict(obj)
        obj["a"] = tuple(obj["a"])
        obj["b"] = tuple(obj["b"])
        return cls(**obj)


def paired_t_test(a, b, label: str = "") -> PairedComparison:
    """Two-sided paired t-test on per-fold metrics; diff reported as mean(a-b)/mean(b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired_t_test needs two equal-length vectors with k >= 2")
    d = a - b
    k = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    mb = float(b.mean())
    rel = 100.0 * mean / mb if mb != 0 else 0.0
    if sd == 0.0 or sd < 1e-14 * max(abs(mean), 1e-300):
        degenerate = True
        t = 0.0 if mean == 0 else math.copysign(math.inf, mean)
        p = 1.0 if mean == 0 else 0.0
    else:
        degenerate = False
        t = mean / (sd / math.sqrt(k))
        p = t_two_sided(t, k - 1)
    return PairedComparison(tuple(a.tolist()), tuple(b.tolist()), mean, rel, t, p, degenerate, label)


# ---------------------------------------------------------------------------
# synthetic data fidelity


@dataclass
class QualityReport:
    kstest: dict[str, float] = field(default_factory=dict)
    cstest: dict[str, float] = field(default_factory=dict)
    detection: float | None = None

    @property
    def kstest_mean(self) -> float | None:
        return float(np.mean(list(self.kstest.values()))) if self.kstest else None

    @property
    def cstest_mean(self) -> float | None:
        return float(np.mean(list(self.cstest.values()))) if self.cstest else None

    def to_dict(self) -> dict:
        return {"kstest": dict(self.kstest), "cstest": dict(self.cstest), "detection": self.detection,
                "kstest_mean": self.kstest_mean, "cstest_mean": self.cstest_mean,
                "detection_definition": "1 - F-measure of a logistic real-vs-synthetic detector"}

    @classmethod
    def from_dict(cls, obj: dict) -> QualityReport:
        return cls(dict(obj["kstest"]), dict(obj["cstest"]), obj["detection"])


def _detector_features(d: Dataset, spec, ref: Dataset) -> np.ndarray:
    """Encoded columns plus pairwise products of standardized raw columns."""
    from .transform import encode

    enc = encode(d, spec, seed=0).values
    compact = []
    owner = []
    for j, col in enumerate(spec.schema):
        if col.is_numeric:
            mu = ref[col.name].mean()
            sd = ref[col.name].std() or 1.0
            compact.append(((d[col.name] - mu) / sd)[:, None])
            owner.append(j)
        else:
            oh = np.zeros((d.n_rows, len(col.categories)))
            oh[np.arange(d.n_rows), d[col.name]] = 1.0
            compact.append(oh)
            owner += [j] * len(col.categories)
    c = np.hstack(compact)
    owner = np.array(owner)
    iu, ju = np.triu_indices(c.shape[1], k=1)
    keep = owner[iu] != owner[ju]
    return np.hstack([enc, c[:, iu[keep]] * c[:, ju[keep]]])


def logistic_detection(real: Dataset, synth: Dataset, folds: int = 3, seed: int = 0,
                       spec=None, l2: float = 1.0) -> float:
    """Mean over folds of 1 - F, where F scores a logistic detector of synthetic rows."""
    from .models import FitConfig, fit_logistic, predict_proba
    from .transform import fit_transform_spec

    if real.schema != synth.schema:
        raise DataError("real and synthetic schemas differ")
    if real.n_rows == 0 or synth.n_rows == 0:
        raise DataError("logistic_detection needs non-empty datasets")
    if spec is None:
        spec = fit_transform_spec(real, include_label=True, seed=seed)
    stacked = concat([real.with_provenance("mix"), synth.with_provenance("mix")])
    X = _detector_features(stacked, spec, real)
    y = np.r_[np.zeros(real.n_rows, np.int64), np.ones(synth.n_rows, np.int64)]
    fa = kfold_partition(stacked, folds, seed)
    cfg = FitConfig(kind="logistic", l2=l2)
    scores = []
    for k in range(folds):
        tr, te = fa.train_idx(k), fa.test_idx(k)
        if y[tr].min() == y[tr].max():
            raise DataError("detector fold lost one of the classes")
        model = fit_logistic(X[tr], y[tr], cfg)
        pred = predict_proba(model, X[te]) >= 0.5
        scores.append(1.0 - f_measure(pred, y[te]))
    return float(np.clip(np.mean(scores), 0.0, 1.0))


def quality_report(real: Dataset, synth: Dataset, detection: bool = True, folds: int = 3,
                   seed: int = 0, spec=None) -> QualityReport:
    if real.schema != synth.schema:
        raise DataError("real and synthetic schemas differ")
    rep = QualityReport()
    for col in real.schema:
        if col.is_numeric:
            rep.kstest[col.name] = kstest_quality(real[col.name], synth[col.name])
        else:
            rep.cstest[col.name] = cstest_quality(real[col.name], synth[col.name], len(col.categories))
    if detection:
        rep.detection = logistic_detection(real, synth, folds, seed, spec)
    return rep
