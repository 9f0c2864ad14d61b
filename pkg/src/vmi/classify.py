"""Shrinkage LDA, one-vs-rest composition, repeated stratified CV and accuracy tables."""
from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    CLASS_ORDER,
    AnalysisConfig,
    DimensionMismatch,
    EpochSet,
    VisualClass,
    VmiError,
)
from .csp import (
    CspModel,
    InsufficientTrials,
    fit_ovr_csp_from_covs,
    ledoit_wolf_gamma,
    log_variance_features,
    trial_covariances,
)

__all__ = [
    "SingleClass", "DegenerateCovariance", "DimensionMismatch", "InsufficientTrials",
    "RldaModel", "OvrEntry", "OvrClassifier", "EvalReport", "TableLayout",
    "fit_rlda", "rlda_score", "train_ovr", "predict", "cross_validate",
    "stratified_folds", "render_report", "format_cell",
]


class SingleClass(VmiError, ValueError):
    def __init__(self, message: str, label: VisualClass | None = None):
        super().__init__(message)
        self.label = label


class DegenerateCovariance(VmiError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class RldaModel:
    w: np.ndarray
    b: float
    gamma: float
    class_means: tuple[np.ndarray, np.ndarray]
    pooled_cov: np.ndarray

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "b": self.b,
            "gamma": self.gamma,
            "class_means": [m.tolist() for m in self.class_means],
            "pooled_cov": self.pooled_cov.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RldaModel":
        return cls(
            np.array(d["w"], dtype=float), float(d["b"]), float(d["gamma"]),
            tuple(np.array(m, dtype=float) for m in d["class_means"]),
            np.array(d["pooled_cov"], dtype=float),
        )


def fit_rlda(X, y, gamma="analytic") -> RldaModel:
    """Binary shrinkage LDA; ``y`` is 0/1 (or bool) and class 1 scores positive.

    The pooled within-class covariance S is shrunk to
    ``(1 - gamma) S + gamma (tr S / d) I``; ``gamma="analytic"`` picks the
    Ledoit-Wolf intensity from the class-centred samples.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} and y {y.shape} disagree")
    if y.all() or not y.any():
        raise SingleClass("both classes must be present to fit RLDA")
    n, d = X.shape
    if n <= d:
        warnings.warn(f"RLDA fitted with n={n} <= d={d}; relying on shrinkage", RuntimeWarning, stacklevel=2)
    mu0, mu1 = X[~y].mean(axis=0), X[y].mean(axis=0)
    centred = np.where(y[:, None], X - mu1, X - mu0)
    S = centred.T @ centred / n
    if gamma == "analytic":
        gamma = ledoit_wolf_gamma(centred[:, :, None] * centred[:, None, :])
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    S_shrunk = (1.0 - gamma) * S + gamma * (np.trace(S) / d) * np.eye(d)
    try:
        chol = np.linalg.cholesky(S_shrunk)
    except np.linalg.LinAlgError:
        raise DegenerateCovariance("pooled covariance is not positive definite after shrinkage") from None
    w = np.linalg.solve(chol.T, np.linalg.solve(chol, mu1 - mu0))
    if not np.all(np.isfinite(w)):
        raise DegenerateCovariance("non-finite discriminant weights")
    b = -float(w @ (mu1 + mu0)) / 2.0
    return RldaModel(w, b, gamma, (mu0, mu1), S_shrunk)


def rlda_score(m: RldaModel, x) -> np.ndarray | float:
    """w^T x + b for a vector, or one score per row for a matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.w.shape[0]:
        raise DimensionMismatch(f"feature dimension {x.shape[-1]} != model dimension {m.w.shape[0]}")
    s = x @ m.w + m.b
    return float(s) if np.ndim(s) == 0 else s


@dataclass(frozen=True, eq=False)
class OvrEntry:
    label: VisualClass
    csp: CspModel
    rlda: RldaModel
    # training-score spread, used only when score standardization is enabled
    score_mean: float = 0.0
    score_std: float = 1.0


@dataclass(frozen=True, eq=False)
class OvrClassifier:
    entries: tuple[OvrEntry, ...]
    standardize_scores: bool = False

    @property
    def classes(self) -> tuple[VisualClass, ...]:
        return tuple(e.label for e in self.entries)

    @property
    def n_channels(self) -> int:
        return self.entries[0].csp.filters.shape[1]

    def decision_function_covs(self, covs: np.ndarray) -> np.ndarray:
        scores = np.empty((covs.shape[0], len(self.entries)))
        for k, e in enumerate(self.entries):
            s = rlda_score(e.rlda, log_variance_features(e.csp.filters, covs))
            if self.standardize_scores:
                s = (s - e.score_mean) / e.score_std
            scores[:, k] = s
        return scores

    def decision_function(self, es: EpochSet) -> np.ndarray:
        if es.n_channels != self.n_channels:
            raise DimensionMismatch(f"classifier expects {self.n_channels} channels, epochs have {es.n_channels}")
        return self.decision_function_covs(trial_covariances(es.data))

    def to_dict(self) -> dict:
        return {
            "standardize_scores": self.standardize_scores,
            "entries": [
                {
                    "label": e.label.value, "csp": e.csp.to_dict(), "rlda": e.rlda.to_dict(),
                    "score_mean": e.score_mean, "score_std": e.score_std,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OvrClassifier":
        entries = tuple(
            OvrEntry(
                VisualClass(e["label"]), CspModel.from_dict(e["csp"]), RldaModel.from_dict(e["rlda"]),
                float(e["score_mean"]), float(e["score_std"]),
            )
            for e in d["entries"]
        )
        return cls(entries, bool(d["standardize_scores"]))


def _fit_binary_from_covs(covs, labels, target: VisualClass, cfg: AnalysisConfig) -> OvrEntry:
    y = np.array([lab is target for lab in labels])
    if not y.any():
        raise SingleClass(f"class {target.value} has no training trials", target)
    if y.all():
        raise SingleClass(f"no training trials outside class {target.value}", target)
    try:
        csp = fit_ovr_csp_from_covs(covs, labels, target, cfg.n_csp_pairs, cfg.shrinkage)
        feats = log_variance_features(csp.filters, covs)
        rlda = fit_rlda(feats, y, cfg.shrinkage)
    except VmiError as exc:
        raise type(exc)(f"[class {target.value}] {exc}") from exc
    train_scores = rlda_score(rlda, feats)
    spread = float(np.std(train_scores)) or 1.0
    return OvrEntry(target, csp, rlda, float(np.mean(train_scores)), spread)


def _train_ovr_from_covs(covs, labels, cfg: AnalysisConfig, classes=CLASS_ORDER) -> OvrClassifier:
    entries = tuple(_fit_binary_from_covs(covs, labels, c, cfg) for c in classes)
    return OvrClassifier(entries, cfg.standardize_scores)


def train_ovr(es: EpochSet, cfg: AnalysisConfig | None = None) -> OvrClassifier:
    """One target-vs-rest CSP + RLDA pair per class, in the fixed class order.

    ``es`` should already be band-pass filtered to the analysis band.
    """
    cfg = cfg or AnalysisConfig()
    present = set(es.labels)
    for c in CLASS_ORDER:
        if c not in present:
            raise SingleClass(f"[class {c.value}] no trials of this class in the training set", c)
    return _train_ovr_from_covs(trial_covariances(es.data), es.labels, cfg)


def predict(clf: OvrClassifier, es: EpochSet) -> list[VisualClass]:
    """Arg-max over per-class scores; ties go to the earliest class in order."""
    scores = clf.decision_function(es)
    return [clf.classes[k] for k in np.argmax(scores, axis=1)]


def _predict_from_scores(clf: OvrClassifier, scores: np.ndarray) -> list[VisualClass]:
    return [clf.classes[k] for k in np.argmax(scores, axis=1)]


def stratified_folds(labels: Sequence, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per trial; each class is shuffled then dealt round-robin."""
    labels = list(labels)
    fold = np.empty(len(labels), dtype=int)
    offset = 0
    for value in sorted({getattr(lab, "value", lab) for lab in labels}):
        idx = np.array([i for i, lab in enumerate(labels) if getattr(lab, "value", lab) == value])
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return fold


@dataclass(frozen=True, eq=False)
class EvalReport:
    per_fold_acc: tuple[float, ...]
    mean_acc: float
    std_acc: float
    confusion: np.ndarray
    scheme: str
    chance_level: float
    classes: tuple[str, ...] = ()
    task: str = ""

    @classmethod
    def from_folds(cls, per_fold_acc, confusion, scheme, chance_level, classes=(), task="") -> "EvalReport":
        acc = np.asarray(per_fold_acc, dtype=float)
        std = float(acc.std(ddof=1)) if acc.size > 1 else 0.0
        return cls(tuple(acc.tolist()), float(acc.mean()), std, np.asarray(confusion),
                   scheme, float(chance_level), tuple(classes), task)

    def cell(self) -> str:
        return format_cell(self.mean_acc, self.std_acc)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "scheme": self.scheme,
            "mean_acc": self.mean_acc,
            "std_acc": self.std_acc,
            "std_definition": "sample std over all fold accuracies (all repeats)",
            "chance_level": self.chance_level,
            "classes": list(self.classes),
            "confusion": np.asarray(self.confusion).tolist(),
            "per_fold_acc": list(self.per_fold_acc),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            tuple(d["per_fold_acc"]), d["mean_acc"], d["std_acc"], np.array(d["confusion"]),
            d["scheme"], d["chance_level"], tuple(d.get("classes", ())), d.get("task", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def cross_validate(
    es: EpochSet,
    cfg: AnalysisConfig | None = None,
    binary_target: VisualClass | None = None,
) -> EvalReport:
    """Repeated stratified k-fold accuracy of the CSP + RLDA pipeline.

    ``binary_target=None`` runs the four-class one-vs-rest decoder; a class
    runs the single target-vs-rest binary task. All fitting, including
    shrinkage selection, happens on the training folds only.
    """
    cfg = cfg or AnalysisConfig()
    cv = cfg.cv
    labels = list(es.labels)
    counts = {c: labels.count(c) for c in CLASS_ORDER if c in labels}
    if not counts:
        raise InsufficientTrials("no trials")
    short = {c.value: n for c, n in counts.items() if n < cv.folds}
    if short:
        raise InsufficientTrials(f"every class needs >= {cv.folds} trials, got {short}")

    # per-trial covariances carry everything the pipeline learns from; no fitting here
    covs = trial_covariances(es.data)
    n = len(labels)
    if binary_target is None:
        classes = tuple(c for c in CLASS_ORDER if c in counts)
        names = tuple(c.value for c in classes)
        truth = np.array([classes.index(lab) for lab in labels])
        chance = 1.0 / len(classes)
        task = "four-class"
    else:
        if binary_target not in counts:
            raise SingleClass(f"[class {binary_target.value}] no trials of this class", binary_target)
        names = (f"not {binary_target.value}", binary_target.value)
        truth = np.array([int(lab is binary_target) for lab in labels])
        prior = truth.mean()
        chance = float(max(prior, 1 - prior))
        task = f"{binary_target.value} vs rest"

    accs = []
    confusion = np.zeros((len(names), len(names)), dtype=int)
    for r in range(cv.repeats):
        rng = np.random.default_rng([cv.seed, r])
        if cv.stratified:
            fold = stratified_folds(labels, cv.folds, rng)
        else:
            fold = rng.permutation(n) % cv.folds
        for k in range(cv.folds):
            test = fold == k
            train_idx, test_idx = np.flatnonzero(~test), np.flatnonzero(test)
            train_labels = [labels[i] for i in train_idx]
            if binary_target is None:
                clf = _train_ovr_from_covs(covs[train_idx], train_labels, cfg, classes)
                pred = np.argmax(clf.decision_function_covs(covs[test_idx]), axis=1)
            else:
                entry = _fit_binary_from_covs(covs[train_idx], train_labels, binary_target, cfg)
                feats = log_variance_features(entry.csp.filters, covs[test_idx])
                pred = (rlda_score(entry.rlda, feats) > 0).astype(int)
            true = truth[test_idx]
            accs.append(float(np.mean(pred == true)))
            np.add.at(confusion, (true, pred), 1)
    scheme = (
        f"{'stratified ' if cv.stratified else ''}{cv.folds}-fold x {cv.repeats} repeats, "
        f"seed {cv.seed}; +/- is the std over {len(accs)} fold accuracies"
    )
    return EvalReport.from_folds(accs, confusion, scheme, chance, names, task)


class TableLayout(enum.Enum):
    TABLE_I = "table1"
    TABLE_II = "table2"


def format_cell(mean_acc: float, std_acc: float) -> str:
    """Fractions in, "mean% (±std)" out, both in percentage points."""
    return f"{100 * mean_acc:.2f}% (±{100 * std_acc:.2f})"


def _row_name(task) -> str:
    if isinstance(task, VisualClass):
        return task.display_name
    return str(task)


def render_report(
    reports: Mapping[object, Mapping[str, EvalReport]],
    layout: TableLayout = TableLayout.TABLE_I,
) -> str:
    """Plain-text table: one row per task, one column per subject plus Average.

    The Average cell is the mean of the subject means (± the mean of the
    subject stds). Table II rows follow the fixed class order.
    """
    tasks = list(reports)
    if layout is TableLayout.TABLE_II:
        def key(t):
            cls = t if isinstance(t, VisualClass) else VisualClass(t)
            return CLASS_ORDER.index(cls)
        tasks.sort(key=key)
        title = "The result of one versus rest approach"
    else:
        title = "The performance comparison of the executed session"
    subjects: list[str] = []
    for t in tasks:
        for s in reports[t]:
            if s not in subjects:
                subjects.append(s)
    header = ["Task", *subjects, "Average"]
    rows = []
    for t in tasks:
        row = [_row_name(t if layout is TableLayout.TABLE_I else
                         (t if isinstance(t, VisualClass) else VisualClass(t)))]
        means, stds = [], []
        for s in subjects:
            rep = reports[t].get(s)
            if rep is None:
                row.append("-")
                continue
            row.append(rep.cell())
            means.append(rep.mean_acc)
            stds.append(rep.std_acc)
        row.append(format_cell(float(np.mean(means)), float(np.mean(stds))) if means else "-")
        rows.append(row)
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    fmt = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([title, rule, fmt(header), rule, *(fmt(r) for r in rows), rule]) + "\n"
