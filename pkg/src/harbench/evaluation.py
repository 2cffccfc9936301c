"""K-fold, leave-one-subject-out and hold-out experiments.

Every fold runs the same ordered pipeline: split, fit scaler and PCA on the
training windows only, train the network, score the test windows.  Each fold
plan is audited for leakage before anything is fitted.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from harbench.dataset import (
    LEAVE_ONE_TRIAL_OUT,
    SEMI_NON_OVERLAPPING,
    TECHNIQUES,
    DatasetManifest,
    TrialSet,
    load_manifest,
    load_trials,
)
from harbench.errors import ConfigError, HarbenchError
from harbench.features import extract_feature_matrix
from harbench.model import VARIANT_EPOCHS, TrainConfig, forward, init_mlp, train
from harbench.pipeline import PipelineModel
from harbench.preprocess import apply_pca, apply_scaler, fit_pca, fit_scaler
from harbench.windowing import (
    GROUPING_NONE,
    GROUPING_SUBJECT,
    GROUPING_TRIAL,
    FoldAudit,
    FoldPlan,
    WindowSet,
    folds_from_assignment,
    audit_fold_plan,
    trial_folds,
    window_trialset,
)

logger = logging.getLogger(__name__)

SCHEMES = ("kfold", "loso", "holdout")

# Conventions echoed into every report.
CONVENTIONS = {
    "normalization": "z-score (population std, std < 1e-12 -> 1), fitted per fold on train",
    "pca": "covariance 1/(N-1), Jacobi eigendecomposition, fitted per fold on train",
    "moments": "population (1/W) central moments; excess kurtosis",
    "quantiles": "linear interpolation at (W-1)*q",
    "auc": "trapezoid with unit sample spacing",
    "loss": "categorical cross-entropy",
    "init": "He-normal weights, zero biases",
    "optimizer": "Adam",
}


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str
    technique: str = SEMI_NON_OVERLAPPING
    scheme: str = "kfold"
    k: int = 10
    holdout_test_fraction: float = 0.3
    variant: str = "V1"
    retained_variance: float = 0.95
    split_seed: int = 0
    init_seed: int = 0
    shuffle_seed: int = 0
    epochs: int | None = None
    batch_size: int = 16
    learning_rate: float = 1e-3
    leaky_slope: float = 0.01

    def __post_init__(self) -> None:
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"unknown windowing technique {self.technique!r}; expected one of {TECHNIQUES}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown validation scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if not 0.0 < self.holdout_test_fraction < 1.0:
            raise ConfigError(f"holdout_test_fraction must be in (0, 1), got {self.holdout_test_fraction}")
        if self.variant not in VARIANT_EPOCHS:
            raise ConfigError(f"variant must be one of {sorted(VARIANT_EPOCHS)}, got {self.variant!r}")
        if not 0.0 < self.retained_variance <= 1.0:
            raise ConfigError(f"retained_variance must be in (0, 1], got {self.retained_variance}")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown experiment field(s): {unknown}")
        if "manifest" not in raw:
            raise ConfigError("experiment config needs a 'manifest' path")
        try:
            return cls(**dict(raw))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @property
    def effective_epochs(self) -> int:
        return self.epochs if self.epochs is not None else VARIANT_EPOCHS[self.variant]

    def train_config(self, fold: int = 0) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.effective_epochs,
            learning_rate=self.learning_rate,
            shuffle_seed=self.shuffle_seed + fold,
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, split_seed=seed, init_seed=seed, shuffle_seed=seed)

    def check_support(self, manifest: DatasetManifest) -> None:
        if self.technique not in manifest.supported_windowing:
            raise ConfigError(
                f"{manifest.name} does not support {self.technique} windows "
                f"(benchmark support table allows {sorted(manifest.supported_windowing)})"
            )


def _stratified_window_deal(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Window indices, shuffled within each class, classes concatenated."""
    order = []
    for label in np.unique(labels):
        idx = np.flatnonzero(labels == label)
        order.append(idx[rng.permutation(idx.size)])
    return np.concatenate(order) if order else np.empty(0, dtype=np.int64)


def _subject_assignment(ws: WindowSet, k: int, rng: np.random.Generator) -> dict[str, int]:
    subjects = list(dict.fromkeys(ws.subject_ids))
    if k > len(subjects):
        raise ConfigError(f"k={k} exceeds group count ({len(subjects)} subjects)")
    return {subjects[j]: pos % k for pos, j in enumerate(rng.permutation(len(subjects)))}


def _default_grouping(ws: WindowSet, grouping: str | None) -> str:
    if grouping is None:
        return GROUPING_TRIAL if ws.technique == LEAVE_ONE_TRIAL_OUT else GROUPING_NONE
    return grouping


def kfold_splits(ws: WindowSet, k: int, seed: int, grouping: str | None = None) -> FoldPlan:
    """k folds; whole trials per fold for leave-one-trial-out windows, else stratified windows."""
    grouping = _default_grouping(ws, grouping)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if grouping == GROUPING_TRIAL:
        return trial_folds(ws, k, seed)
    rng = np.random.default_rng(seed)
    if grouping == GROUPING_SUBJECT:
        assignment = _subject_assignment(ws, k, rng)
        return FoldPlan(folds_from_assignment(ws.subject_ids, assignment, k), GROUPING_SUBJECT)
    n = len(ws)
    if k > n:
        raise ConfigError(f"k={k} exceeds group count ({n} windows)")
    dealt = _stratified_window_deal(ws.labels, rng)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[dealt] = np.arange(n) % k
    folds = tuple((np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)) for f in range(k))
    return FoldPlan(folds, GROUPING_NONE)


def loso_splits(ws: WindowSet) -> FoldPlan:
    """One fold per subject, in order of first appearance."""
    subjects = list(dict.fromkeys(ws.subject_ids))
    if len(subjects) < 2:
        raise ConfigError("leave-one-subject-out needs at least 2 subjects")
    assignment = {s: i for i, s in enumerate(subjects)}
    return FoldPlan(folds_from_assignment(ws.subject_ids, assignment, len(subjects)), GROUPING_SUBJECT)


def _largest_remainder(counts: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation proportional to ``counts`` that sums to ``total``."""
    exact = counts * (total / counts.sum())
    alloc = np.floor(exact).astype(np.int64)
    short = total - int(alloc.sum())
    if short > 0:
        # stable: ties go to the earlier class
        order = np.argsort(-(exact - alloc), kind="stable")
        alloc[order[:short]] += 1
    return alloc


def holdout_split(
    ws: WindowSet, test_fraction: float, seed: int, grouping: str | None = None
) -> FoldPlan:
    """A single stratified train/test split."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must be in (0, 1), got {test_fraction}")
    grouping = _default_grouping(ws, grouping)
    rng = np.random.default_rng(seed)
    if grouping == GROUPING_NONE:
        labels = ws.labels
        classes = np.unique(labels)
        counts = np.array([np.count_nonzero(labels == c) for c in classes], dtype=np.float64)
        per_class = _largest_remainder(counts, int(round(test_fraction * len(ws))))
        test_parts = []
        for c, n_test in zip(classes, per_class):
            idx = np.flatnonzero(labels == c)
            test_parts.append(idx[rng.permutation(idx.size)[:n_test]])
        is_test = np.zeros(len(ws), dtype=bool)
        is_test[np.concatenate(test_parts)] = True
    else:
        keys = ws.trial_ids if grouping == GROUPING_TRIAL else ws.subject_ids
        first_label: dict[str, int] = {}
        for key, w in zip(keys, ws.windows):
            first_label.setdefault(key, w.activity_id)
        if grouping == GROUPING_SUBJECT:
            # subjects span all classes; shuffle them as a single stratum
            first_label = {key: 0 for key in first_label}
        by_label: dict[int, list[str]] = {}
        for key, label in first_label.items():
            by_label.setdefault(label, []).append(key)
        test_keys: set[str] = set()
        for label in sorted(by_label):
            groups = by_label[label]
            n_test = int(round(test_fraction * len(groups)))
            if len(groups) >= 2:
                n_test = min(max(n_test, 1), len(groups) - 1)
            test_keys.update(groups[j] for j in rng.permutation(len(groups))[:n_test])
        is_test = np.fromiter((key in test_keys for key in keys), dtype=bool, count=len(ws))
    train, test = np.flatnonzero(~is_test), np.flatnonzero(is_test)
    if train.size == 0 or test.size == 0:
        raise ConfigError(
            f"hold-out split with fraction {test_fraction} leaves an empty side "
            f"({train.size} train, {test.size} test)"
        )
    return FoldPlan(((train, test),), grouping)


@dataclass
class Metrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    zero_support: list[int]


def metrics(confusion: np.ndarray) -> Metrics:
    """Per-class precision/recall/F1 from a K x K matrix (rows true, columns predicted).

    Undefined ratios (no predictions, no support) are reported as 0; classes
    with no support are listed in ``zero_support``.
    """
    cm = np.asarray(confusion, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion counts must be nonnegative")
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    total = cm.sum()
    return Metrics(
        accuracy=float(tp.sum() / total) if total > 0 else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support.astype(np.int64),
        zero_support=[int(i) for i in np.flatnonzero(support == 0)],
    )


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    accuracy: float | None
    components: int | None
    final_train_loss: float | None
    confusion: np.ndarray
    audit: FoldAudit


@dataclass
class EvalReport:
    config: dict[str, Any]
    dataset: str
    n_windows: int
    window_samples: int
    feature_dim: int
    class_count: int
    label_map: dict[int, int]
    folds: list[FoldResult]
    mean_accuracy: float | None
    precision: list[float]
    recall: list[float]
    f1: list[float]
    zero_support_classes: list[int]
    confusion: np.ndarray
    valid: bool
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def fold_accuracies(self) -> list[float | None]:
        return [f.accuracy for f in self.folds]

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        """Report as plain data.  Timing is wall-clock and excluded by default,
        so the default rendering is reproducible byte for byte."""
        out = {
            "config": self.config,
            "dataset": self.dataset,
            "conventions": CONVENTIONS,
            "n_windows": self.n_windows,
            "window_samples": self.window_samples,
            "feature_dim": self.feature_dim,
            "class_count": self.class_count,
            "label_map": {str(k): v for k, v in self.label_map.items()},
            "folds": [
                {
                    "fold": f.fold,
                    "n_train": f.n_train,
                    "n_test": f.n_test,
                    "accuracy": f.accuracy,
                    "pca_components": f.components,
                    "final_train_loss": f.final_train_loss,
                    "audit": f.audit.to_dict(),
                }
                for f in self.folds
            ],
            "fold_accuracies": self.fold_accuracies,
            "mean_accuracy": self.mean_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "zero_support_classes": self.zero_support_classes,
            "confusion": self.confusion.tolist(),
            "valid": self.valid,
        }
        if include_timing:
            out["timing"] = self.timing
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2) + "\n"

    def to_table(self) -> str:
        cfg = self.config
        scheme = cfg["scheme"]
        if scheme == "kfold":
            scheme = f"kfold (k={cfg['k']})"
        elif scheme == "holdout":
            scheme = f"holdout (test fraction {cfg['holdout_test_fraction']})"
        lines = [
            f"dataset: {self.dataset}   windows: {cfg['technique']}   validation: {scheme}   "
            f"variant: {cfg['variant']} ({cfg['epochs'] or VARIANT_EPOCHS[cfg['variant']]} epochs)",
            f"{'fold':>6} {'train':>8} {'test':>7} {'pca d':>6} {'accuracy %':>11}  audit",
        ]
        for f in self.folds:
            acc = "-" if f.accuracy is None else f"{100 * f.accuracy:.2f}"
            comps = "-" if f.components is None else str(f.components)
            audit = "ok" if f.audit.ok else "FAILED: " + "; ".join(f.audit.problems)
            lines.append(f"{f.fold:>6} {f.n_train:>8} {f.n_test:>7} {comps:>6} {acc:>11}  {audit}")
        mean = "-" if self.mean_accuracy is None else f"{100 * self.mean_accuracy:.2f}"
        lines.append(f"{'mean':>6} {'':>8} {'':>7} {'':>6} {mean:>11}")
        if not self.valid:
            lines.append("REPORT INVALID: at least one fold failed its leakage audit")
        if self.timing:
            lines.append(
                "feature extraction per window: "
                f"min {self.timing['min_s']:.2e} s, mean {self.timing['mean_s']:.2e} s, "
                f"max {self.timing['max_s']:.2e} s"
            )
        return "\n".join(lines) + "\n"


def make_splits(ws: WindowSet, cfg: ExperimentConfig) -> FoldPlan:
    if cfg.scheme == "kfold":
        return kfold_splits(ws, cfg.k, cfg.split_seed)
    if cfg.scheme == "loso":
        return loso_splits(ws)
    return holdout_split(ws, cfg.holdout_test_fraction, cfg.split_seed)


def fit_fold(
    X: np.ndarray,
    y: np.ndarray,
    train_idx: np.ndarray,
    cfg: ExperimentConfig,
    class_count: int,
    fold: int = 0,
) -> tuple[PipelineModel, float]:
    """Fit scaler, PCA and network on the given training rows only."""
    X_train = X[train_idx]
    scaler = fit_scaler(X_train)
    Z_train = apply_scaler(scaler, X_train)
    pca = fit_pca(Z_train, cfg.retained_variance)
    P_train = apply_pca(pca, Z_train)
    params = init_mlp(pca.n_components, class_count, seed=cfg.init_seed + fold, alpha=cfg.leaky_slope)
    params, history = train(params, P_train, y[train_idx], cfg.train_config(fold))
    return PipelineModel(scaler=scaler, pca=pca, mlp=params), history.loss[-1]


def _run_fold(
    fold: int,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    audit: FoldAudit,
    X: np.ndarray,
    y: np.ndarray,
    cfg: ExperimentConfig,
    class_count: int,
) -> FoldResult:
    empty = np.zeros((class_count, class_count), dtype=np.int64)
    if not audit.ok:
        return FoldResult(fold, train_idx.size, test_idx.size, None, None, None, empty, audit)
    missing = sorted(set(np.unique(y[test_idx]).tolist()) - set(np.unique(y[train_idx]).tolist()))
    if missing:
        raise HarbenchError(f"fold {fold}: test classes {missing} are absent from the training split")
    # fitted statistics must come from training rows only
    if np.intersect1d(train_idx, test_idx).size:
        raise HarbenchError(f"fold {fold}: test rows would be passed to a fit call")
    try:
        model, final_loss = fit_fold(X, y, train_idx, cfg, class_count, fold)
    except HarbenchError as exc:
        raise type(exc)(f"fold {fold}: {exc}") from exc
    pred = np.argmax(forward(model.mlp, model.transform(X[test_idx])), axis=1)
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (y[test_idx], pred), 1)
    accuracy = float(np.trace(confusion) / test_idx.size)
    logger.info("fold %d: accuracy %.4f (pca d=%d)", fold, accuracy, model.pca.n_components)
    return FoldResult(
        fold, train_idx.size, test_idx.size, accuracy, model.pca.n_components, final_loss, confusion, audit
    )


@dataclass
class PreparedData:
    trialset: TrialSet
    windows: WindowSet
    features: np.ndarray
    layout: tuple[str, ...]
    seconds: np.ndarray


def prepare(cfg: ExperimentConfig, trialset: TrialSet | None = None, jobs: int = 1) -> PreparedData:
    """Load, window and featurise the dataset named by ``cfg``."""
    if trialset is None:
        manifest = load_manifest(cfg.manifest)
        cfg.check_support(manifest)
        trialset = load_trials(manifest, jobs=jobs)
    else:
        cfg.check_support(trialset.manifest)
    ws = window_trialset(trialset, cfg.technique)
    if len(ws) == 0:
        raise HarbenchError("windowing produced no windows")
    X, layout, seconds = extract_feature_matrix(ws, trialset.manifest)
    return PreparedData(trialset, ws, X, layout, seconds)


def run_experiment(
    cfg: ExperimentConfig,
    jobs: int = 1,
    out_dir: str | Path | None = None,
    trialset: TrialSet | None = None,
) -> EvalReport:
    """Run one (dataset, windowing, validation) cell and aggregate an EvalReport.

    ``trialset`` may be supplied to skip reading the manifest's files.  When
    ``out_dir`` is given the report, a text table, timing and the window/fold
    index are written there.
    """
    data = prepare(cfg, trialset, jobs)
    ws, X = data.windows, data.features
    y = ws.labels
    K = data.trialset.class_count
    plan = make_splits(ws, cfg)
    audits = audit_fold_plan(ws, plan)
    for a in audits:
        if not a.ok:
            logger.error("fold %d failed leakage audit: %s", a.fold, "; ".join(a.problems))

    args = [(f, tr, te, audits[f], X, y, cfg, K) for f, (tr, te) in enumerate(plan.folds)]
    if jobs > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: _run_fold(*a), args))
    else:
        results = [_run_fold(*a) for a in args]

    valid_results = [r for r in results if r.accuracy is not None]
    confusion = sum((r.confusion for r in valid_results), np.zeros((K, K), dtype=np.int64))
    m = metrics(confusion)
    mean_acc = math.fsum(r.accuracy for r in valid_results) / len(valid_results) if valid_results else None
    seconds = data.seconds
    report = EvalReport(
        config=cfg.to_dict(),
        dataset=data.trialset.manifest.name,
        n_windows=len(ws),
        window_samples=ws.window_samples,
        feature_dim=X.shape[1],
        class_count=K,
        label_map=dict(data.trialset.label_map),
        folds=results,
        mean_accuracy=mean_acc,
        precision=m.precision.tolist(),
        recall=m.recall.tolist(),
        f1=m.f1.tolist(),
        zero_support_classes=m.zero_support,
        confusion=confusion,
        valid=all(a.ok for a in audits),
        timing={
            "n_windows": int(seconds.size),
            "window_samples": ws.window_samples,
            "channels": data.trialset.manifest.n_channels,
            "min_s": float(seconds.min()),
            "mean_s": float(seconds.mean()),
            "median_s": float(np.median(seconds)),
            "max_s": float(seconds.max()),
        },
    )
    if out_dir is not None:
        write_report(report, out_dir, ws, plan)
    return report


def write_report(report: EvalReport, out_dir: str | Path, ws: WindowSet, plan: FoldPlan) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    (out / "timing.json").write_text(json.dumps(report.timing, indent=2) + "\n", encoding="utf-8")
    index = {"technique": ws.technique, "window_samples": ws.window_samples, "windows": ws.to_index()}
    index.update(plan.to_dict())
    (out / "windows.json").write_text(json.dumps(index) + "\n", encoding="utf-8")
