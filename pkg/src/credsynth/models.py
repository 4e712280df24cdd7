"""Default-probability classifiers: L2 logistic regression and gradient-boosted trees.

Persistence text formats::

    logistic v1
    l2=<float>
    intercept=<float>
    weights=<w1> <w2> ...
    mean=<m1> <m2> ...
    std=<s1> <s2> ...

    gbdt v1
    init=<log-odds>
    learning_rate=<float>
    max_depth=<int>
    n_features=<int>
    tree
    split <feature> <threshold>
    leaf <value>
    ...

Trees are written pre-order (node, left subtree, right subtree).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .tabular import DataError, Dataset

MODEL_KINDS = ("logistic", "gbdt")
LOGIT_CLIP = 36.0


@dataclass(frozen=True)
class FitConfig:
    kind: str = "gbdt"
    l2: float = 1.0
    max_iter: int = 100
    tol: float = 1e-6
    learning_rate: float = 0.1
    n_trees: int = 200
    max_depth: int = 3
    min_samples_leaf: int = 20
    subsample: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.l2 <= 0 or self.learning_rate <= 0 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("hyper-parameters must be strictly positive")
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")


def sigmoid(z):
    z = np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _xy(X, y):
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("X must be a matrix with one row per label")
    if X.shape[0] < 2:
        raise DataError("need at least 2 rows to fit")
    if y.min() == y.max():
        raise DataError("labels contain a single class")
    return X, y


# ---------------------------------------------------------------------------
# logistic regression


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    l2: float
    mean: np.ndarray
    std: np.ndarray
    n_iter: int = 0

    def decision(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.std) @ self.weights + self.intercept


def fit_logistic(X, y, cfg: FitConfig = FitConfig(kind="logistic")) -> LogisticModel:
    """Newton's method on the L2-penalized log-likelihood of standardized features."""
    X, y = _xy(X, y)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    Z = np.hstack([np.ones((X.shape[0], 1)), (X - mean) / std])
    pen = np.full(Z.shape[1], cfg.l2)
    pen[0] = 0.0
    beta = np.zeros(Z.shape[1])

    def objective(b):
        z = np.clip(Z @ b, -LOGIT_CLIP, LOGIT_CLIP)
        return float((np.logaddexp(0, z) - y * z).sum() + 0.5 * (pen * b * b).sum())

    obj = objective(beta)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        p = sigmoid(Z @ beta)
        grad = Z.T @ (p - y) + pen * beta
        if np.linalg.norm(grad) < cfg.tol * max(1.0, X.shape[0] ** 0.5):
            break
        w = p * (1 - p)
        H = (Z * w[:, None]).T @ Z + np.diag(pen) + 1e-10 * np.eye(Z.shape[1])
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = beta - t * step
            c_obj = objective(cand)
            if c_obj <= obj or t < 1e-8:
                break
            t *= 0.5
        if c_obj > obj:
            break
        stalled = obj - c_obj <= 1e-15 * max(1.0, abs(obj))
        beta, obj = cand, c_obj
        if stalled:
            break
    return LogisticModel(beta[1:].copy(), float(beta[0]), cfg.l2, mean, std, it)


# ---------------------------------------------------------------------------
# gradient-boosted trees


@dataclass
class GbdtModel:
    init: float
    learning_rate: float
    max_depth: int
    n_features: int
    roots: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    feature: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    threshold: np.ndarray = field(default_factory=lambda: np.zeros(0))
    left: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    right: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    value: np.ndarray = field(default_factory=lambda: np.zeros(0))
    train_loss: list[float] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return int(self.roots.shape[0])

    def decision(self, X: np.ndarray) -> np.ndarray:
        if self.n_trees == 0:
            return np.full(X.shape[0], self.init)
        return self.init + _kernels.forest_apply(
            X, self.roots, self.feature, self.threshold, self.left, self.right, self.value)

    def tree_depths(self) -> list[int]:
        def depth(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(depth(self.left[k]), depth(self.right[k]))
        return [depth(r) for r in self.roots]


class _TreeBuffer:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1


def _logloss(y, f) -> float:
    f = np.clip(f, -LOGIT_CLIP, LOGIT_CLIP)
    return float(np.mean(np.logaddexp(0, f) - y * f))


def fit_gbdt(X, y, cfg: FitConfig = FitConfig()) -> GbdtModel:
    """Stagewise boosting on logistic loss.

    Each tree is grown on the residuals y - p by squared-error splits; every
    leaf then takes one Newton step sum(r) / sum(p (1 - p)), shrunk by the
    learning rate.
    """
    X, y = _xy(X, y)
    n, n_feat = X.shape
    prior = y.mean()
    init = float(np.log(prior / (1 - prior)))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T)
    xs = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    rng = np.random.default_rng(cfg.seed)
    buf = _TreeBuffer()
    roots = []
    F = np.full(n, init)
    losses = [_logloss(y, F)]
    n_sub = max(2 * cfg.min_samples_leaf, int(round(cfg.subsample * n)))
    for _ in range(cfg.n_trees):
        p = sigmoid(F)
        resid = y - p
        hess = p * (1 - p)
        node = np.zeros(n, np.int64)
        if cfg.subsample < 1.0 and n_sub < n:
            node[:] = -1
            node[rng.choice(n, n_sub, replace=False)] = 0
        level = [buf.add()]
        roots.append(level[0])
        in_play = node >= 0
        for depth in range(cfg.max_depth + 1):
            if depth < cfg.max_depth:
                gain, feat, thr = _kernels.best_splits(xs, order, node, resid, len(level), cfg.min_samples_leaf)
            else:
                feat = np.full(len(level), -1)
            next_level = []
            new_node = np.full(n, -1, np.int64)
            for k, nid in enumerate(level):
                rows = in_play & (node == k)
                if feat[k] >= 0 and gain[k] > 1e-12:
                    f, t = int(feat[k]), float(thr[k])
                    buf.feature[nid], buf.threshold[nid] = f, t
                    lid, rid = buf.add(), buf.add()
                    buf.left[nid], buf.right[nid] = lid, rid
                    goes_left = X[:, f] <= t
                    new_node[rows & goes_left] = len(next_level)
                    new_node[rows & ~goes_left] = len(next_level) + 1
                    next_level += [lid, rid]
                else:
                    den = hess[rows].sum()
                    buf.value[nid] = cfg.learning_rate * resid[rows].sum() / den if den > 1e-12 else 0.0
            if not next_level:
                break
            node = new_node
            in_play = node >= 0
            level = next_level
        r = roots[-1]
        F = F + _kernels.forest_apply(
            X, np.array([r], np.int64), np.array(buf.feature, np.int64), np.array(buf.threshold),
            np.array(buf.left, np.int64), np.array(buf.right, np.int64), np.array(buf.value))
        losses.append(_logloss(y, F))
    return GbdtModel(
        init, cfg.learning_rate, cfg.max_depth, n_feat,
        np.array(roots, np.int64), np.array(buf.feature, np.int64), np.array(buf.threshold),
        np.array(buf.left, np.int64), np.array(buf.right, np.int64), np.array(buf.value), losses)


# ---------------------------------------------------------------------------
# shared entry points


def fit(X, y, cfg: FitConfig):
    return fit_logistic(X, y, cfg) if cfg.kind == "logistic" else fit_gbdt(X, y, cfg)


def predict_proba(model, X) -> np.ndarray:
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    width = model.weights.shape[0] if isinstance(model, LogisticModel) else model.n_features
    if X.ndim != 2 or X.shape[1] != width:
        raise DataError(f"expected {width} features, got shape {X.shape}")
    return sigmoid(model.decision(X))


def design_matrix(d: Dataset, columns: list[str]) -> np.ndarray:
    """Raw numeric columns and one-hot categoricals, in the given column order."""
    blocks = []
    for name in columns:
        col = d.column(name)
        if col.is_numeric:
            blocks.append(d[name][:, None])
        else:
            oh = np.zeros((d.n_rows, len(col.categories)))
            oh[np.arange(d.n_rows), d[name]] = 1.0
            blocks.append(oh)
    if not blocks:
        return np.zeros((d.n_rows, 0))
    return np.hstack(blocks)


# ---------------------------------------------------------------------------
# persistence


def _fmt(xs) -> str:
    return " ".join(repr(float(x)) for x in xs)


def dump_model(model) -> str:
    if isinstance(model, LogisticModel):
        return "\n".join([
            "logistic v1", f"l2={model.l2!r}", f"intercept={model.intercept!r}",
            "weights=" + _fmt(model.weights), "mean=" + _fmt(model.mean), "std=" + _fmt(model.std),
        ]) + "\n"
    lines = ["gbdt v1", f"init={model.init!r}", f"learning_rate={model.learning_rate!r}",
             f"max_depth={model.max_depth}", f"n_features={model.n_features}"]

    def walk(k):
        if model.feature[k] < 0:
            lines.append(f"leaf {float(model.value[k])!r}")
        else:
            lines.append(f"split {int(model.feature[k])} {float(model.threshold[k])!r}")
            walk(model.left[k])
            walk(model.right[k])

    for r in model.roots:
        lines.append("tree")
        walk(r)
    return "\n".join(lines) + "\n"


def load_model(text: str):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    head = lines[0]
    kv = {}
    body = []
    for ln in lines[1:]:
        if "=" in ln and not body:
            k, v = ln.split("=", 1)
            kv[k] = v
        else:
            body.append(ln)
    if head == "logistic v1":
        vec = lambda s: np.array([float(x) for x in s.split()])
        return LogisticModel(vec(kv["weights"]), float(kv["intercept"]), float(kv["l2"]),
                             vec(kv["mean"]), vec(kv["std"]))
    if head != "gbdt v1":
        raise ValueError(f"unknown model header {head!r}")
    buf = _TreeBuffer()
    roots = []
    pos = 0

    def read():
        nonlocal pos
        tok = body[pos].split()
        pos += 1
        nid = buf.add()
        if tok[0] == "leaf":
            buf.value[nid] = float(tok[1])
        else:
            buf.feature[nid], buf.threshold[nid] = int(tok[1]), float(tok[2])
            buf.left[nid] = read()
            buf.right[nid] = read()
        return nid

    while pos < len(body):
        if body[pos] != "tree":
            raise ValueError(f"expected 'tree', got {body[pos]!r}")
        pos += 1
        roots.append(read())
    return GbdtModel(
        float(kv["init"]), float(kv["learning_rate"]), int(kv["max_depth"]), int(kv["n_features"]),
        np.array(roots, np.int64), np.array(buf.feature, np.int64), np.array(buf.threshold),
        np.array(buf.left, np.int64), np.array(buf.right, np.int64), np.array(buf.value))
