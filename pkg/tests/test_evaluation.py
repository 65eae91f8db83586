import csv
import json
from dataclasses import dataclass

import numpy as np
import pytest

from fallrisk.errors import InvariantViolation, TooFewSamples
from fallrisk.evaluation import (
    CrossValidationError,
    CvConfig,
    ablation_json,
    ablation_table,
    cross_validate,
    format_table,
    kfold_split,
    write_fold_csv,
)
from fallrisk.features import TABLE_ORDER, FeatureSet
from fallrisk.gbdt import Hyperparams

FAST = Hyperparams(n_trees=20, min_samples_leaf=5)


@dataclass
class ArrayDataset:
    """Minimal dataset: a fixed 2-column feature matrix for the knee feature set."""

    X: np.ndarray
    y: np.ndarray

    @property
    def source_ids(self):
        return [f"row-{i}" for i in range(len(self.y))]

    def feature_matrix(self, feature_set, cfg=None):
        return self.X, np.full(self.X.shape, 100.0)


def separable(n=200, seed=0):
    """Labels are a threshold of feature 0, with a margin around the threshold
    like the knee margin kept by the scene generator."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 0.4, n) + 0.6 * (rng.uniform(size=n) < 0.5)
    X = np.column_stack([x, rng.normal(size=n)])
    return ArrayDataset(X, (x > 0.5).astype(int))


def test_fold_sizes():
    y = np.array([0, 1] * 50)
    folds = kfold_split(y, 10, seed=1)
    assert [len(t) for _, t in folds] == [10] * 10
    y = np.array([0] * 48 + [1] * 47)
    sizes = [len(t) for _, t in kfold_split(y, 10, seed=1)]
    assert set(sizes) <= {9, 10} and sum(sizes) == 95


@pytest.mark.parametrize("n0,n1,k", [(50, 50, 10), (48, 47, 10), (13, 29, 4), (7, 7, 7), (100, 11, 5)])
def test_partition_laws(n0, n1, k):
    y = np.array([0] * n0 + [1] * n1)
    rng = np.random.default_rng(n0 * 100 + n1)
    y = rng.permutation(y)
    for r in range(3):
        folds = kfold_split(y, k, seed=5, repeat_index=r)
        tests = [t for _, t in folds]
        allidx = np.concatenate(tests)
        assert sorted(allidx.tolist()) == list(range(len(y)))
        for train, test in folds:
            assert not set(train) & set(test)
            assert len(train) + len(test) == len(y)
        sizes = [len(t) for t in tests]
        assert max(sizes) - min(sizes) <= 1
        for c in (0, 1):
            per = [int((y[t] == c).sum()) for t in tests]
            assert max(per) - min(per) <= 1
    assert [t.tolist() for _, t in kfold_split(y, k, 5, 1)] == [t.tolist() for _, t in kfold_split(y, k, 5, 1)]
    assert [t.tolist() for _, t in kfold_split(y, k, 5, 0)] != [t.tolist() for _, t in kfold_split(y, k, 5, 1)]


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        kfold_split(np.array([0] * 20 + [1] * 3), 5, 0)
    with pytest.raises(ValueError):
        CvConfig(k=1)
    with pytest.raises(ValueError):
        CvConfig(repeats=0)


def test_separable_dataset_is_perfect():
    rep = cross_validate(separable(), CvConfig(k=10, repeats=2, feature_set=FeatureSet.KNEE_DIST,
                                               hyperparams=Hyperparams(n_trees=20, min_samples_leaf=1)))
    assert rep.mean_accuracy == 1.0


def test_coin_flip_labels_near_chance():
    rng = np.random.default_rng(11)
    ds = ArrayDataset(rng.normal(size=(2000, 2)), rng.integers(0, 2, 2000))
    rep = cross_validate(ds, CvConfig(k=10, repeats=1, feature_set=FeatureSet.KNEE_DIST, hyperparams=FAST))
    assert 0.4 <= rep.mean_accuracy <= 0.6


def test_report_invariants_and_reproducibility(small_dataset):
    cfg = CvConfig(k=5, repeats=3, feature_set=FeatureSet.KNEE_HEAD_DIST, hyperparams=FAST)
    a = cross_validate(small_dataset, cfg)
    b = cross_validate(small_dataset, cfg)
    assert a.to_json() == b.to_json()
    assert a.mean_accuracy == pytest.approx(np.mean(a.per_repeat_means), abs=1e-15)
    assert sum(a.confusion_totals.values()) == 3 * len(small_dataset)
    assert all(0 <= acc <= 1 for accs in a.per_fold_accuracies for acc in accs)
    assert len(a.per_fold_accuracies) == 3 and all(len(r) == 5 for r in a.per_fold_accuracies)
    assert a.first_repeat_mean == a.per_repeat_means[0]
    doc = json.loads(a.to_json())
    assert doc["config"]["k"] == 5 and doc["config"]["feature_set"] == "knee-head"


def test_first_repeat_independent_of_repeat_count(small_dataset):
    one = cross_validate(small_dataset, CvConfig(k=5, repeats=1, feature_set=FeatureSet.KNEE_DIST, hyperparams=FAST))
    ten = cross_validate(small_dataset, CvConfig(k=5, repeats=10, feature_set=FeatureSet.KNEE_DIST, hyperparams=FAST))
    assert one.per_fold_accuracies[0] == ten.per_fold_accuracies[0]
    assert one.folds == [row for row in ten.folds if row["repeat"] == 0]


def test_leakage_audit(small_dataset):
    seen = []

    def audit(repeat, fold, balanced, test_ids):
        test = set(test_ids.tolist())
        assert not test & set(balanced.source_ids[balanced.augmented].tolist())
        assert not test & set(balanced.source_ids.tolist())
        seen.append((repeat, fold, int(balanced.augmented.sum())))

    ds = small_dataset
    keep = np.flatnonzero(ds.y == 1)[:80].tolist() + np.flatnonzero(ds.y == 0).tolist()
    unbalanced = type(ds)([ds.frames[i] for i in keep], [ds.labels[i] for i in keep],
                          [ds.source_ids[i] for i in keep], ds.header)
    rep = cross_validate(unbalanced, CvConfig(k=5, repeats=2, feature_set=FeatureSet.KNEE_DIST, hyperparams=FAST),
                         on_fold=audit)
    assert len(seen) == 10 == rep.leakage_checks
    assert all(n_aug > 0 for _, _, n_aug in seen)


def test_leak_detection_raises(monkeypatch, small_dataset):
    import fallrisk.evaluation as ev

    real = ev.balance_arrays

    def leaky(X, y, ids, S, sigma, seed):
        out = real(X, y, ids, S, sigma, seed)
        out.augmented[:] = True
        out.source_ids[:] = "scene-11-000000"
        return out

    monkeypatch.setattr(ev, "balance_arrays", leaky)
    with pytest.raises(InvariantViolation):
        cross_validate(small_dataset, CvConfig(k=5, repeats=1, feature_set=FeatureSet.KNEE_DIST, hyperparams=FAST))


def test_fold_failure_names_the_fold(monkeypatch, small_dataset):
    import fallrisk.evaluation as ev

    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(ev, "fit_arrays", boom)
    with pytest.raises(CrossValidationError, match="repeat 0 fold 0"):
        cross_validate(small_dataset, CvConfig(k=5, repeats=1, feature_set=FeatureSet.KNEE_DIST))


def test_ablation_rows(small_dataset, tmp_path):
    rows = ablation_table(small_dataset, CvConfig(k=4, repeats=1, hyperparams=FAST))
    assert [fs for fs, _ in rows] == list(TABLE_ORDER)
    assert len({rep.partition_digest for _, rep in rows}) == 1
    text = format_table(rows)
    lines = text.splitlines()
    assert len(lines) == 6 and "Accuracy" in lines[0]
    assert lines[2].startswith("knee distances") and lines[5].startswith("keypoints + knee + head distances")
    doc = json.loads(ablation_json(rows))
    assert [r["feature_set"] for r in doc["rows"]] == ["knee", "knee-head", "kp-knee", "kp-knee-head"]
    write_fold_csv(tmp_path / "f.csv", [rep for _, rep in rows])
    with open(tmp_path / "f.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["repeat", "fold", "feature_set", "accuracy", "tp", "fp", "tn", "fn"]
    assert len(table) == 1 + 4 * 4
