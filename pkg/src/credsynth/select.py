"""Univariate screening and greedy correlation-based feature selection."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .metrics import auc, ks_discrimination
from .models import design_matrix
from .tabular import DataError, Dataset

KS_MIN = 0.01
AUC_MIN = 0.53
RHO = 0.7


@dataclass(frozen=True)
class UnivariateScore:
    feature: str
    ks: float
    auc: float
    passes: bool


@dataclass(frozen=True)
class Rejection:
    feature: str
    cause: str  # "low-power" or "correlated"
    partner: str | None = None
    correlation: float | None = None

    @property
    def description(self) -> str:
        if self.cause == "correlated":
            return f"correlated-with {self.partner} ({self.correlation:.4f})"
        return "low-power"


@dataclass
class SelectionResult:
    ranked: list[UnivariateScore]
    selected: list[str] = field(default_factory=list)
    rejected: list[Rejection] = field(default_factory=list)
    fallback: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "ks", "auc", "status", "cause"])
        causes = {r.feature: r.description for r in self.rejected}
        for s in self.ranked:
            status = "selected" if s.feature in self.selected else "rejected"
            w.writerow([s.feature, f"{s.ks:.6f}", f"{s.auc:.6f}", status, causes.get(s.feature, "")])
        return buf.getvalue()


def _feature_score(d: Dataset, name: str, y: np.ndarray) -> np.ndarray:
    col = d.column(name)
    if col.is_numeric:
        return d[name]
    codes = d[name]
    counts = np.bincount(codes, minlength=len(col.categories))
    events = np.bincount(codes, weights=y, minlength=len(col.categories))
    rate = np.divide(events, counts, out=np.zeros(len(col.categories)), where=counts > 0)
    return rate[codes]


def univariate_filter(d: Dataset, ks_min: float = KS_MIN, auc_min: float = AUC_MIN) -> list[UnivariateScore]:
    """Score each feature on its own; sorted by AUC, then KS, then name."""
    y = d.label
    if y is None:
        raise DataError("univariate_filter needs a labeled dataset")
    if y.min() == y.max():
        raise DataError("univariate_filter needs both classes present")
    out = []
    for col in d.features:
        s = _feature_score(d, col.name, y)
        a = auc(s, y)
        a = max(a, 1.0 - a)
        ks = ks_discrimination(s, y)
        out.append(UnivariateScore(col.name, ks, a, ks >= ks_min and a >= auc_min))
    out.sort(key=lambda u: (-u.auc, -u.ks, u.feature))
    return out


def _rankdata(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    s = x[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], s.size]
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(0.5 * (starts + ends - 1), ends - starts)
    return ranks


def feature_correlations(d: Dataset, names: list[str], method: str = "pearson") -> np.ndarray:
    """|correlation| between features; one-hot blocks use the max over indicator pairs."""
    blocks = [design_matrix(d, [n]) for n in names]
    M = np.hstack(blocks) if blocks else np.zeros((d.n_rows, 0))
    if method == "spearman":
        M = np.column_stack([_rankdata(M[:, j]) for j in range(M.shape[1])])
    elif method != "pearson":
        raise ValueError(f"unknown correlation method {method!r}")
    Mc = M - M.mean(axis=0)
    sd = np.sqrt((Mc * Mc).sum(axis=0))
    Z = np.divide(Mc, sd, out=np.zeros_like(Mc), where=sd > 0)
    C = np.abs(Z.T @ Z)
    owner = np.repeat(np.arange(len(names)), [b.shape[1] for b in blocks])
    out = np.zeros((len(names), len(names)))
    for i in range(len(names)):
        for j in range(len(names)):
            out[i, j] = C[np.ix_(owner == i, owner == j)].max()
    np.fill_diagonal(out, 1.0)
    return np.clip(out, 0.0, 1.0)


def correlation_select(scores: list[UnivariateScore], d: Dataset, rho: float = RHO,
                       method: str = "pearson") -> SelectionResult:
    """Greedy pass: keep the strongest remaining feature, drop those correlated above rho."""
    result = SelectionResult(list(scores))
    candidates = [s.feature for s in scores if s.passes]
    result.rejected += [Rejection(s.feature, "low-power") for s in scores if not s.passes]
    if not candidates:
        return result
    corr = feature_correlations(d, candidates, method)
    remaining = list(range(len(candidates)))
    while remaining:
        top = remaining.pop(0)
        result.selected.append(candidates[top])
        keep = []
        for j in remaining:
            if corr[top, j] > rho:
                result.rejected.append(Rejection(candidates[j], "correlated", candidates[top], float(corr[top, j])))
            else:
                keep.append(j)
        remaining = keep
    return result


def select_features(d: Dataset, ks_min: float = KS_MIN, auc_min: float = AUC_MIN, rho: float = RHO,
                    method: str = "pearson") -> SelectionResult:
    """Filter then decorrelate. If nothing passes the filter, keep the top-ranked feature."""
    scores = univariate_filter(d, ks_min, auc_min)
    res = correlation_select(scores, d, rho, method)
    if not res.selected and scores:
        res.selected = [scores[0].feature]
        res.rejected = [r for r in res.rejected if r.feature != scores[0].feature]
        res.fallback = True
    return res
