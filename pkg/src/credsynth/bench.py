"""Experiment orchestration: real baselines, TSTR runs, paired comparisons and reports.

A run loads a data directory (``schema.txt``, ``year1.csv``, ``year2.csv``),
splits year 1 into a training set and a same-year holdout, keeps year 2 as
the next-year holdout, and runs k-fold cross-validation with per-fold
feature selection. In TSTR mode the classifiers are trained on a synthetic
sample of the training set and scored on the real holdouts.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .metrics import PairedComparison, QualityReport, auc, ks_discrimination, paired_t_test, quality_report
from .models import FitConfig, design_matrix, fit, predict_proba
from .select import AUC_MIN, KS_MIN, RHO, select_features
from .synth import SynthConfig, fit as fit_synth, sample
from .tabular import GROUPS, DataError, Dataset, kfold_partition, load_csv, read_schema, split_rows

SPLITS = ("fold", "holdout_same", "holdout_next")
METRICS = ("auc", "ks")
REPORT_VERSION = 1


class DegenerateDataError(DataError):
    """A fold, holdout or synthetic sample lacks one of the two label classes."""


class LeakageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# plan


@dataclass(frozen=True)
class ClassifierSpec:
    name: str
    config: FitConfig

    def to_dict(self) -> dict:
        return {"name": self.name, **asdict(self.config)}

    @classmethod
    def from_dict(cls, obj: dict) -> ClassifierSpec:
        obj = dict(obj)
        name = obj.pop("name", obj.get("kind", "gbdt"))
        return cls(name, FitConfig(**obj))


DEFAULT_CLASSIFIERS = (ClassifierSpec("gbdt", FitConfig(kind="gbdt")),
                       ClassifierSpec("logistic", FitConfig(kind="logistic")))


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything a run needs besides the data directory.

    ``architectures`` lists candidate synthesizer architectures; with more
    than one, each is fitted and the one with the best detection score
    (ties broken by mean KSTest) trains the classifiers.
    """

    experiment: str = "S01"
    mode: str = "real"
    synth_groups: tuple[str, ...] = ("Fin",)
    classifier_groups: tuple[str, ...] = ("Fin",)
    synth: SynthConfig = SynthConfig(method="tvae", architecture="B")
    architectures: tuple[str, ...] = ()
    classifiers: tuple[ClassifierSpec, ...] = DEFAULT_CLASSIFIERS
    baseline: str | None = "logistic"
    folds: int = 10
    seed: int = 0
    train_fraction: float = 0.8
    ks_min: float = KS_MIN
    auc_min: float = AUC_MIN
    rho: float = RHO
    corr_method: str = "pearson"
    detection_folds: int = 3

    def __post_init__(self):
        if self.mode not in ("real", "tstr"):
            raise DataError(f"mode must be 'real' or 'tstr', got {self.mode!r}")
        for g in (*self.synth_groups, *self.classifier_groups):
            if g not in GROUPS or g == "label":
                raise DataError(f"unknown feature group {g!r}")
        if not self.classifier_groups:
            raise DataError("classifier_groups must not be empty")
        if self.mode == "tstr" and not set(self.classifier_groups) <= set(self.synth_groups):
            raise DataError("classifier feature groups must be a subset of the synthesizer groups")
        if self.folds < 2:
            raise DataError("folds must be >= 2")
        if not self.classifiers:
            raise DataError("at least one classifier is required")
        names = [c.name for c in self.classifiers]
        if len(set(names)) != len(names):
            raise DataError("classifier names must be unique")
        if self.baseline is not None and self.baseline not in names:
            object.__setattr__(self, "baseline", None)
        for a in self.architectures:
            if a not in ("A", "B"):
                raise DataError(f"unknown architecture {a!r}")
        if self.corr_method not in ("pearson", "spearman"):
            raise DataError(f"unknown correlation method {self.corr_method!r}")
        if self.detection_folds < 2:
            raise DataError("detection_folds must be >= 2")

    def with_overrides(self, seed: int | None = None, folds: int | None = None) -> ExperimentPlan:
        plan = self
        if seed is not None:
            plan = replace(plan, seed=seed, synth=replace(plan.synth, seed=seed))
        if folds is not None:
            plan = replace(plan, folds=folds)
        return plan

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment, "mode": self.mode,
            "synth_groups": list(self.synth_groups), "classifier_groups": list(self.classifier_groups),
            "synth": self.synth.to_dict(), "architectures": list(self.architectures),
            "classifiers": [c.to_dict() for c in self.classifiers], "baseline": self.baseline,
            "folds": self.folds, "seed": self.seed, "train_fraction": self.train_fraction,
            "ks_min": self.ks_min, "auc_min": self.auc_min, "rho": self.rho,
            "corr_method": self.corr_method, "detection_folds": self.detection_folds,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> ExperimentPlan:
        obj = dict(obj)
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise DataError(f"unknown plan keys: {', '.join(sorted(unknown))}")
        try:
            if "synth" in obj:
                obj["synth"] = SynthConfig.from_dict(obj["synth"])
            if "classifiers" in obj:
                obj["classifiers"] = tuple(ClassifierSpec.from_dict(c) for c in obj["classifiers"])
            for key in ("synth_groups", "classifier_groups", "architectures"):
                if key in obj:
                    obj[key] = tuple(obj[key])
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"invalid plan: {exc}") from exc


def load_plan(path: str | Path) -> ExperimentPlan:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"plan file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"plan file is not valid JSON: {exc}") from exc
    return ExperimentPlan.from_dict(obj)


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class DataBundle:
    train: Dataset
    holdout_same: Dataset
    holdout_next: Dataset


def load_bundle(data_dir: str | Path, train_fraction: float = 0.8, seed: int = 0) -> DataBundle:
    root = Path(data_dir)
    schema = read_schema(root / "schema.txt")
    year1 = load_csv(root / "year1.csv", schema, "real:year1")
    year2 = load_csv(root / "year2.csv", schema, "real:year2")
    return make_bundle(year1, year2, train_fraction, seed)


def make_bundle(year1: Dataset, year2: Dataset, train_fraction: float = 0.8, seed: int = 0) -> DataBundle:
    if year1.label is None:
        raise DataError("year-1 data has no label column")
    if year1.schema != year2.schema:
        raise DataError("year-1 and year-2 schemas differ")
    train, same = split_rows(year1, train_fraction, seed)
    return DataBundle(train.with_provenance("real:train"), same.with_provenance("real:holdout-same"),
                      year2.with_provenance("real:holdout-next"))


# ---------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    values: dict[str, dict[str, float]]  # split -> metric -> value

    def __post_init__(self):
        for split, m in self.values.items():
            for name, v in m.items():
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{split}/{name} = {v} lies outside [0, 1]")

    def get(self, split: str, metric: str) -> float:
        return self.values[split][metric]


@dataclass(frozen=True)
class LadderEntry:
    """One synthesizer fit and its quality scores."""

    experiment: str
    method: str
    architecture: str
    seed: int
    quality: QualityReport

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "method": self.method, "architecture": self.architecture,
                "seed": self.seed, "quality": self.quality.to_dict()}

    @classmethod
    def from_dict(cls, obj: dict) -> LadderEntry:
        return cls(obj["experiment"], obj["method"], obj["architecture"], obj["seed"],
                   QualityReport.from_dict(obj["quality"]))


def summarize(folds: list[FoldMetrics]) -> dict[str, dict[str, dict[str, float]]]:
    """Mean and sample std (ddof=1) of every split/metric over folds."""
    out = {}
    for split in SPLITS:
        out[split] = {}
        for metric in METRICS:
            v = np.array([f.get(split, metric) for f in folds])
            out[split][metric] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}
    return out


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    folds: dict[str, list[FoldMetrics]]
    selections: list[list[str]]
    quality: QualityReport | None = None
    ladder: list[LadderEntry] = field(default_factory=list)
    chosen_architecture: str | None = None
    provenance: dict[str, str] = field(default_factory=dict)
    comparisons: list[dict] = field(default_factory=list)
    # wall-clock minutes; kept out of the JSON so reruns stay byte-identical
    timings: dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def summary(self) -> dict:
        return {name: summarize(fl) for name, fl in self.folds.items()}

    def metric_vector(self, classifier: str, split: str, metric: str) -> np.ndarray:
        if classifier not in self.folds:
            raise KeyError(f"report has no classifier {classifier!r}")
        if split not in SPLITS or metric not in METRICS:
            raise ValueError(f"unknown split/metric {split!r}/{metric!r}")
        return np.array([f.get(split, metric) for f in self.folds[classifier]])

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "plan": self.plan.to_dict(),
            "folds": {name: [{"fold": f.fold, "values": f.values} for f in fl] for name, fl in self.folds.items()},
            "summary": self.summary,
            "selections": self.selections,
            "quality": self.quality.to_dict() if self.quality is not None else None,
            "ladder": [e.to_dict() for e in self.ladder],
            "chosen_architecture": self.chosen_architecture,
            "provenance": self.provenance,
            "comparisons": self.comparisons,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> ExperimentReport:
        if obj.get("version") != REPORT_VERSION:
            raise DataError(f"unsupported report version {obj.get('version')}")
        folds = {name: [FoldMetrics(f["fold"], f["values"]) for f in fl] for name, fl in obj["folds"].items()}
        return cls(
            ExperimentPlan.from_dict(obj["plan"]), folds, [list(s) for s in obj["selections"]],
            QualityReport.from_dict(obj["quality"]) if obj["quality"] is not None else None,
            [LadderEntry.from_dict(e) for e in obj["ladder"]], obj["chosen_architecture"],
            dict(obj["provenance"]), list(obj["comparisons"]),
        )

    @classmethod
    def from_json(cls, text: str) -> ExperimentReport:
        return cls.from_dict(json.loads(text))


def load_report(path: str | Path) -> ExperimentReport:
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    if not p.is_file():
        raise DataError(f"report not found: {p}")
    try:
        return ExperimentReport.from_json(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"malformed report {p}: {exc}") from exc


# ---------------------------------------------------------------------------
# pipeline


def _require_both_classes(d: Dataset, what: str):
    y = d.label
    if y is None or y.size == 0 or y.min() == y.max():
        raise DegenerateDataError(f"{what} has a single label class")


def _scores(y: np.ndarray, p: np.ndarray) -> dict[str, float]:
    return {"auc": auc(p, y), "ks": ks_discrimination(p, y)}


def fold_training_set(train: Dataset, plan: ExperimentPlan, fold: int) -> Dataset:
    """The K-1 partitions a fold's selection and classifiers are fitted on."""
    fa = kfold_partition(train, plan.folds, plan.seed)
    return train.take(fa.train_idx(fold)).select_groups(plan.classifier_groups)


def fold_selection(part: Dataset, plan: ExperimentPlan):
    return select_features(part, plan.ks_min, plan.auc_min, plan.rho, plan.corr_method)


def cross_validate(train: Dataset, holdout_same: Dataset, holdout_next: Dataset, plan: ExperimentPlan):
    """k-fold CV with in-fold selection; returns (fold metrics per classifier, selections)."""
    fa = kfold_partition(train, plan.folds, plan.seed)
    for h, what in ((holdout_same, "same-year holdout"), (holdout_next, "next-year holdout")):
        _require_both_classes(h, what)
    folds = {c.name: [] for c in plan.classifiers}
    selections = []
    y_same, y_next = holdout_same.label, holdout_next.label
    for k in range(plan.folds):
        part = train.take(fa.train_idx(k)).select_groups(plan.classifier_groups)
        val = train.take(fa.test_idx(k))
        _require_both_classes(part, f"fold {k} training partition")
        _require_both_classes(val, f"fold {k} validation partition")
        chosen = fold_selection(part, plan).selected
        selections.append(chosen)
        X = design_matrix(part, chosen)
        Xv, Xs, Xn = (design_matrix(d, chosen) for d in (val, holdout_same, holdout_next))
        for spec in plan.classifiers:
            model = fit(X, part.label, replace(spec.config, seed=spec.config.seed + k))
            folds[spec.name].append(FoldMetrics(k, {
                "fold": _scores(val.label, predict_proba(model, Xv)),
                "holdout_same": _scores(y_same, predict_proba(model, Xs)),
                "holdout_next": _scores(y_next, predict_proba(model, Xn)),
            }))
    return folds, selections


def _internal_comparisons(folds: dict[str, list[FoldMetrics]], baseline: str | None) -> list[dict]:
    if baseline is None:
        return []
    out = []
    base = folds[baseline]
    for name, fl in folds.items():
        if name == baseline:
            continue
        for split in SPLITS:
            for metric in METRICS:
                a = [f.get(split, metric) for f in fl]
                b = [f.get(split, metric) for f in base]
                cmp = paired_t_test(a, b, f"{name} vs {baseline}")
                out.append({"a": name, "b": baseline, "split": split, "metric": metric, "result": cmp.to_dict()})
    return out


def run_real_baseline(plan: ExperimentPlan, bundle: DataBundle) -> ExperimentReport:
    t0 = time.perf_counter()
    folds, selections = cross_validate(bundle.train, bundle.holdout_same, bundle.holdout_next, plan)
    return ExperimentReport(
        plan, folds, selections,
        provenance={"classifier_train": bundle.train.provenance, "holdout_same": bundle.holdout_same.provenance,
                    "holdout_next": bundle.holdout_next.provenance},
        comparisons=_internal_comparisons(folds, plan.baseline),
        timings={"classifiers_minutes": (time.perf_counter() - t0) / 60.0},
    )


def best_architecture(entries: list[LadderEntry]) -> LadderEntry:
    """Highest detection score, ties broken by mean KSTest, then by architecture name."""
    if not entries:
        raise ValueError("no ladder entries to choose from")
    def key(e):
        det = e.quality.detection if e.quality.detection is not None else -1.0
        ks = e.quality.kstest_mean if e.quality.kstest_mean is not None else -1.0
        return (-det, -ks, e.architecture)
    return min(entries, key=key)


def synthesize(plan: ExperimentPlan, real: Dataset):
    """Fit every candidate architecture; return (synthetic sample, ladder entries, chosen arch, minutes)."""
    archs = plan.architectures or (plan.synth.architecture,)
    fits = {}
    ladder = []
    minutes = {}
    for arch in archs:
        cfg = replace(plan.synth, architecture=arch)
        t0 = time.perf_counter()
        model = fit_synth(real, cfg)
        minutes[f"synth_{cfg.method}_{arch}_minutes"] = (time.perf_counter() - t0) / 60.0
        synth = sample(model, real.n_rows, seed=plan.seed + 1)
        q = quality_report(real, synth, folds=plan.detection_folds, seed=plan.seed)
        ladder.append(LadderEntry(plan.experiment, cfg.method, arch, cfg.seed, q))
        fits[arch] = synth
    chosen = best_architecture(ladder)
    return fits[chosen.architecture], ladder, chosen.architecture, minutes


def run_tstr(plan: ExperimentPlan, bundle: DataBundle) -> ExperimentReport:
    if plan.mode != "tstr":
        plan = replace(plan, mode="tstr")
    real = bundle.train.select_groups(plan.synth_groups)
    synth, ladder, arch, minutes = synthesize(plan, real)
    if synth.n_rows != real.n_rows:
        raise LeakageError("synthetic sample size differs from the real training size")
    _require_both_classes(synth, "synthetic sample")
    if not synth.provenance.startswith("synthetic:"):
        raise LeakageError(f"classifier training data has provenance {synth.provenance!r}")
    t0 = time.perf_counter()
    folds, selections = cross_validate(synth, bundle.holdout_same, bundle.holdout_next, plan)
    minutes["classifiers_minutes"] = (time.perf_counter() - t0) / 60.0
    quality = next(e.quality for e in ladder if e.architecture == arch)
    return ExperimentReport(
        plan, folds, selections, quality, ladder, arch,
        provenance={"classifier_train": synth.provenance, "synth_fit": real.provenance,
                    "holdout_same": bundle.holdout_same.provenance,
                    "holdout_next": bundle.holdout_next.provenance},
        comparisons=_internal_comparisons(folds, plan.baseline),
        timings=minutes,
    )


def run(plan: ExperimentPlan, bundle: DataBundle) -> ExperimentReport:
    return run_tstr(plan, bundle) if plan.mode == "tstr" else run_real_baseline(plan, bundle)


def compare(a: ExperimentReport, b: ExperimentReport, metric: str = "auc", split: str = "holdout_same",
            classifier: str | None = None) -> PairedComparison:
    """Paired t-test of report ``a`` against ``b`` over matching folds of one classifier."""
    if classifier is None:
        common = [n for n in a.folds if n in b.folds]
        if not common:
            raise DataError("reports share no classifier")
        classifier = common[0]
    va = a.metric_vector(classifier, split, metric)
    vb = b.metric_vector(classifier, split, metric)
    if va.size != vb.size:
        raise DataError(f"fold counts differ: {va.size} vs {vb.size}")
    return paired_t_test(va, vb, f"{classifier} {split} {metric}")


# ---------------------------------------------------------------------------
# emission


def fmt_mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


def _quality_rows(r: ExperimentReport) -> list[dict]:
    rows = []
    for e in r.ladder:
        q = e.quality
        mins = r.timings.get(f"synth_{e.method}_{e.architecture}_minutes")
        rows.append({"experiment": e.experiment, "method": e.method, "arch": e.architecture, "seed": e.seed,
                     "exec_minutes": "" if mins is None else f"{mins:.2f}",
                     "cstest": "" if q.cstest_mean is None else f"{q.cstest_mean:.4f}",
                     "kstest": "" if q.kstest_mean is None else f"{q.kstest_mean:.4f}",
                     "detection": "" if q.detection is None else f"{q.detection:.4f}",
                     "chosen": "yes" if e.architecture == r.chosen_architecture else ""})
    return rows


def _performance_rows(r: ExperimentReport) -> list[dict]:
    rows = []
    for name, s in r.summary.items():
        for split in SPLITS:
            rows.append({"classifier": name, "split": split,
                         "auc_mean": s[split]["auc"]["mean"], "auc_std": s[split]["auc"]["std"],
                         "ks_mean": s[split]["ks"]["mean"], "ks_std": s[split]["ks"]["std"]})
    return rows


def comparison_rows(comparisons: list[tuple[str, PairedComparison]]) -> list[dict]:
    return [{"label": label, "diff_pct": f"{c.rel_diff_pct:.2f}", "mean_diff": f"{c.mean_diff:.6f}",
             "t": f"{c.t_stat:.4f}", "p_value": f"{c.p_value:.4f}", "stars": c.stars}
            for label, c in comparisons]


def _report_comparisons(r: ExperimentReport) -> list[tuple[str, PairedComparison]]:
    return [(f"{c['a']} vs {c['b']} {c['split']} {c['metric']}", PairedComparison.from_dict(c["result"]))
            for c in r.comparisons]


def _write_csv(path: Path, rows: list[dict], header: list[str]):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _md_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines)


def render_markdown(r: ExperimentReport, extra: list[tuple[str, PairedComparison]] = ()) -> str:
    parts = [f"# {r.plan.experiment} ({r.plan.mode})", ""]
    if r.ladder:
        q = _quality_rows(r)
        parts += ["## Synthetic data quality", "",
                  _md_table(["Exp", "Method", "Arch", "Seed", "Exec Time (m)", "CSTest", "KSTest", "Detection"],
                            [[x["experiment"], x["method"] + ("*" if x["chosen"] else ""), x["arch"], x["seed"],
                              x["exec_minutes"], x["cstest"], x["kstest"], x["detection"]] for x in q]), ""]
    rows = []
    for name, s in r.summary.items():
        row = [name]
        for split in SPLITS:
            for metric in METRICS:
                row.append(fmt_mean_std(s[split][metric]["mean"], s[split][metric]["std"]))
        rows.append(row)
    header = ["Classifier"] + [f"{m.upper()} {s}" for s in SPLITS for m in METRICS]
    parts += [f"## Classifier performance ({r.plan.folds}-fold mean ± std)", "", _md_table(header, rows), ""]
    cmps = _report_comparisons(r) + list(extra)
    if cmps:
        parts += ["## Paired comparisons", "",
                  _md_table(["Comparison", "Diff (%)", "p-value", ""],
                            [[x["label"], x["diff_pct"], x["p_value"], x["stars"]] for x in comparison_rows(cmps)]),
                  "", "** p < 0.05, * p < 0.1", ""]
    return "\n".join(parts)


def emit_report(r: ExperimentReport, fmt: str, out_dir: str | Path,
                extra: list[tuple[str, PairedComparison]] = ()) -> list[Path]:
    """Write the report in one format; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "json":
        p = out / "report.json"
        p.write_text(r.to_json(), encoding="utf-8")
        t = out / "timings.json"
        t.write_text(json.dumps(r.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written += [p, t]
    elif fmt == "csv":
        p = out / "quality.csv"
        _write_csv(p, _quality_rows(r), ["experiment", "method", "arch", "seed", "exec_minutes", "cstest",
                                         "kstest", "detection", "chosen"])
        written.append(p)
        p = out / "performance.csv"
        _write_csv(p, [{k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()}
                       for row in _performance_rows(r)],
                   ["classifier", "split", "auc_mean", "auc_std", "ks_mean", "ks_std"])
        written.append(p)
        p = out / "comparison.csv"
        _write_csv(p, comparison_rows(_report_comparisons(r) + list(extra)),
                   ["label", "diff_pct", "mean_diff", "t", "p_value", "stars"])
        written.append(p)
        p = out / "selection.csv"
        _write_csv(p, [{"fold": k, "selected": "|".join(s)} for k, s in enumerate(r.selections)],
                   ["fold", "selected"])
        written.append(p)
    elif fmt == "markdown":
        p = out / "report.md"
        p.write_text(render_markdown(r, extra), encoding="utf-8")
        written.append(p)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return written
