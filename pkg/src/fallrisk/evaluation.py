"""Repeated stratified k-fold cross-validation and the feature-set ablation."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FallRiskError, InvariantViolation, TooFewSamples
from .features import TABLE_ORDER, FeatureConfig, FeatureSet, Scaling, balance_arrays
from .gbdt import Hyperparams, fit_arrays


class CrossValidationError(FallRiskError):
    def __init__(self, repeat, fold, cause):
        self.repeat, self.fold = repeat, fold
        super().__init__(f"repeat {repeat} fold {fold}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class CvConfig:
    k: int = 10
    repeats: int = 10
    seed: int = 42
    feature_set: FeatureSet = FeatureSet.KEYPOINTS_KNEE_HEAD
    hyperparams: Hyperparams = Hyperparams()
    noise_sigma: float = 2.0
    threshold: float = 0.5

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["feature_set"] = self.feature_set.value
        return d


def kfold_split(labels, k: int, seed: int, repeat_index: int = 0):
    """Stratified partition into ``k`` folds; returns ``[(train, test), ...]``.

    Each class is shuffled and dealt round-robin, continuing the deal across
    classes, so per-class and overall fold sizes both differ by at most one.
    """
    y = np.asarray(labels)
    classes = sorted(set(y.tolist()))
    counts = {c: int((y == c).sum()) for c in classes}
    if k < 2:
        raise TooFewSamples("k must be >= 2")
    if not classes or min(counts.values()) < k:
        raise TooFewSamples(f"every class needs at least k={k} samples, got {counts}")
    rng = np.random.default_rng([seed, repeat_index])
    dealt = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in classes])
    fold_of = np.empty(len(y), dtype=np.intp)
    fold_of[dealt] = np.arange(len(dealt)) % k
    out = []
    for f in range(k):
        out.append((np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)))
    return out


def partition_digest(labels, k, seed, repeats) -> str:
    h = hashlib.sha256()
    for r in range(repeats):
        for _, test in kfold_split(labels, k, seed, r):
            h.update(test.astype(np.int64).tobytes())
            h.update(b"|")
    return h.hexdigest()


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


@dataclass
class CvReport:
    feature_set: str
    mean_accuracy: float
    per_fold_accuracies: list  # [repeat][fold]
    per_repeat_means: list
    confusion_totals: dict  # tp, fp, tn, fn
    first_repeat_mean: float
    pooled_accuracy: float
    n_samples: int
    config: dict
    partition_digest: str
    folds: list = field(default_factory=list)  # per-fold rows
    leakage_checks: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def evaluate_fold(X, y, S, ids, train, test, cfg: CvConfig, repeat, fold, on_fold=None):
    bal = balance_arrays(X[train], y[train], ids[train], S[train], cfg.noise_sigma,
                         [cfg.seed, repeat, fold, 1])
    test_ids = set(ids[test].tolist())
    leaked = {s for s in bal.source_ids[bal.augmented].tolist() if s in test_ids}
    if leaked:
        raise InvariantViolation(f"augmented samples leaked into the test fold: {sorted(leaked)[:5]}")
    if on_fold is not None:
        on_fold(repeat, fold, bal, ids[test])
    scaling = Scaling.fit(bal.X)
    model = fit_arrays(bal.X, bal.y, cfg.hyperparams, cfg.seed, cfg.feature_set, scaling)
    pred = model.predict(X[test], cfg.threshold)
    truth = y[test].astype(bool)
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    tn = int((~pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    return {
        "repeat": repeat,
        "fold": fold,
        "feature_set": cfg.feature_set.value,
        "accuracy": (tp + tn) / len(test),
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
        "n_test": int(len(test)),
    }


def cross_validate(dataset, cfg: CvConfig, feature_cfg: FeatureConfig = FeatureConfig(),
                   on_fold=None) -> CvReport:
    """Repeated stratified k-fold CV; augmentation only ever sees training folds.

    ``on_fold(repeat, fold, balanced_train, test_source_ids)`` is called for
    every fold before training, for auditing.
    """
    X, S = dataset.feature_matrix(cfg.feature_set, feature_cfg)
    y = dataset.y
    ids = np.asarray(dataset.source_ids, dtype=object)
    if len(set(y.tolist())) < 2:
        raise TooFewSamples("dataset needs both classes")

    rows = []
    for r in range(cfg.repeats):
        for f, (train, test) in enumerate(kfold_split(y, cfg.k, cfg.seed, r)):
            try:
                rows.append(evaluate_fold(X, y, S, ids, train, test, cfg, r, f, on_fold))
            except InvariantViolation:
                raise
            except Exception as exc:
                raise CrossValidationError(r, f, exc) from exc

    rows.sort(key=lambda row: (row["repeat"], row["fold"]))
    per_fold = [[row["accuracy"] for row in rows if row["repeat"] == r] for r in range(cfg.repeats)]
    per_repeat = [_mean(accs) for accs in per_fold]
    conf = {key: sum(row[key] for row in rows) for key in ("tp", "fp", "tn", "fn")}
    total = sum(row["n_test"] for row in rows)
    if sum(conf.values()) != total or total != cfg.repeats * len(y):
        raise InvariantViolation("confusion totals do not match the number of test evaluations")
    return CvReport(
        feature_set=cfg.feature_set.value,
        mean_accuracy=_mean(per_repeat),
        per_fold_accuracies=per_fold,
        per_repeat_means=per_repeat,
        confusion_totals=conf,
        first_repeat_mean=per_repeat[0],
        pooled_accuracy=(conf["tp"] + conf["tn"]) / total,
        n_samples=len(y),
        config=cfg.to_dict(),
        partition_digest=partition_digest(y, cfg.k, cfg.seed, cfg.repeats),
        folds=rows,
        leakage_checks=len(rows),
    )


def ablation_table(dataset, base_cfg: CvConfig, feature_cfg: FeatureConfig = FeatureConfig(),
                   feature_sets=TABLE_ORDER, on_fold=None):
    """One CV run per feature set, all sharing the fold partitions of ``base_cfg.seed``."""
    out = []
    for fs in feature_sets:
        cfg = CvConfig(**{**base_cfg.__dict__, "feature_set": fs})
        out.append((fs, cross_validate(dataset, cfg, feature_cfg, on_fold)))
    return out


def ablation_json(rows) -> str:
    doc = {"rows": [{"feature_set": fs.value, "report": rep.to_dict()} for fs, rep in rows]}
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


ROW_LABELS = {
    FeatureSet.KNEE_DIST: "knee distances",
    FeatureSet.KNEE_HEAD_DIST: "knee + head distances",
    FeatureSet.KEYPOINTS_KNEE: "keypoints + knee distances",
    FeatureSet.KEYPOINTS_KNEE_HEAD: "keypoints + knee + head distances",
}


def format_table(rows) -> str:
    header = ("Feature representation", "Accuracy (%)", "Std over repeats", "FP", "FN")
    body = []
    for fs, rep in rows:
        sd = float(np.std(rep.per_repeat_means)) if len(rep.per_repeat_means) > 1 else 0.0
        body.append((
            ROW_LABELS.get(fs, fs.value),
            f"{100 * rep.mean_accuracy:.2f}",
            f"{100 * sd:.2f}",
            str(rep.confusion_totals["fp"]),
            str(rep.confusion_totals["fn"]),
        ))
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r))
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
    return "\n".join(lines) + "\n"


def write_fold_csv(path, reports):
    cols = ["repeat", "fold", "feature_set", "accuracy", "tp", "fp", "tn", "fn"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rep in reports:
            for row in rep.folds:
                w.writerow([repr(row[c]) if c == "accuracy" else row[c] for c in cols])
