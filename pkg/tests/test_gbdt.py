import json
import math

import numpy as np
import pytest

import oracles
from oracles import stump_mismatches
from fallrisk.errors import CorruptModel, SchemaMismatch, SingleClass, VersionMismatch
from fallrisk.features import AT_RISK, NOT_AT_RISK, FeatureSet, FeatureVector, Scaling
from fallrisk.gbdt import (
    Forest,
    Hyperparams,
    fit_arrays,
    load_model,
    logistic_loss,
    predict,
    predict_proba,
    save_model,
)
from fallrisk.gbdt import _backend

STUMP = Hyperparams(n_trees=1, max_leaves=2, min_samples_leaf=1)


def threshold_dataset(n=200, seed=0):
    x = np.random.default_rng(seed).uniform(0, 1, n)
    return x[:, None], (x > 0.5).astype(float)


def test_hyperparam_defaults_and_validation():
    hp = Hyperparams()
    assert (hp.learning_rate, hp.n_trees, hp.max_leaves, hp.max_depth, hp.min_samples_leaf, hp.lambda_l2) == \
        (0.1, 100, 31, None, 20, 0.0)
    for bad in (dict(learning_rate=0), dict(n_trees=0), dict(max_leaves=1), dict(min_samples_leaf=0)):
        with pytest.raises(ValueError):
            Hyperparams(**bad)


def test_constant_features_give_single_leaves():
    X = np.ones((40, 3))
    y = np.array([0, 1] * 20, dtype=float)
    f = fit_arrays(X, y, Hyperparams(n_trees=10, min_samples_leaf=1))
    assert all(t.n_leaves == 1 for t in f.trees)
    for x in (np.zeros(3), np.full(3, 1e6), np.ones(3)):
        assert predict_proba(f, x) == pytest.approx(0.5, abs=1e-9)


def test_threshold_dataset_learned_within_10_trees():
    X, y = threshold_dataset()
    f = fit_arrays(X, y, Hyperparams(min_samples_leaf=1))
    staged = [(f.predict_proba(X, k) >= 0.5) == y.astype(bool) for k in range(1, 11)]
    assert any(acc.all() for acc in staged)
    assert (f.predict(X) == y.astype(bool)).all()
    assert predict_proba(f, [0.9]) > 0.9
    # one stump already separates: the first tree splits between the classes
    t = f.trees[0]
    assert t.feature[0] == 0
    assert X[y == 0].max() < t.threshold[0] < X[y == 1].min()


def test_threshold_dataset_boosting_trace():
    # hand-rolled trace: each round the separating stump moves both leaves by
    # -G/H * lr with G, H from the current (shared) class probabilities
    X, y = threshold_dataset()
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    f = fit_arrays(X, y, Hyperparams(n_trees=10, min_samples_leaf=1))
    base = math.log(n_pos / n_neg)
    zp = zn = base
    for _ in range(10):
        pp, pn = 1 / (1 + math.exp(-zp)), 1 / (1 + math.exp(-zn))
        zp += -(n_pos * (pp - 1)) / (n_pos * pp * (1 - pp)) * 0.1
        zn += -(n_neg * pn) / (n_neg * pn * (1 - pn)) * 0.1
    assert f.raw_score([[0.9]])[0] == pytest.approx(zp, rel=1e-9)
    assert f.raw_score([[0.1]])[0] == pytest.approx(zn, rel=1e-9)


def test_stump_oracle_small():
    assert stump_mismatches(30, seed=1) == []


def test_stump_oracle_unbalanced_labels():
    # unbalanced labels: sums are inexact, so compare gain to rounding and
    # choose datasets with a clear winner
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 30:
        n = int(rng.integers(20, 200))
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        y = (rng.uniform(size=n) < rng.uniform(0.2, 0.8)).astype(float)
        if y.min() == y.max():
            continue
        f = fit_arrays(X, y, STUMP)
        p = y.mean()
        g, h = p - y, np.full(n, p * (1 - p))
        gain, feat, thr = oracles.exhaustive_stump(X, g, h)
        t = f.trees[0]
        assert t.gain[0] == pytest.approx(gain, rel=1e-9)
        assert (t.feature[0], t.threshold[0]) == (feat, thr)
        checked += 1


def test_tie_break_lowest_feature_then_threshold():
    X = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float)
    y = np.array([0, 0, 1, 1], dtype=float)
    t = fit_arrays(X, y, STUMP).trees[0]
    assert (t.feature[0], t.threshold[0]) == (0, 1.5)
    # two equally good thresholds on one feature: the lower one wins
    X = np.array([[0], [1], [2], [3], [4], [5]], dtype=float)
    y = np.array([0, 1, 1, 0, 0, 1], dtype=float)
    want = oracles.exhaustive_stump(X, np.where(y == 1, -0.5, 0.5), np.full(6, 0.25))
    t = fit_arrays(X, y, STUMP).trees[0]
    assert (float(t.gain[0]), int(t.feature[0]), float(t.threshold[0])) == want


def test_midpoint_of_adjacent_floats():
    a = 1.0
    b = np.nextafter(a, 2.0)
    X = np.array([[a], [a], [b], [b]])
    y = np.array([0, 0, 1, 1], dtype=float)
    t = fit_arrays(X, y, STUMP).trees[0]
    assert t.threshold[0] == a
    assert (fit_arrays(X, y, STUMP).predict(X) == y.astype(bool)).all()


def test_single_class_and_schema_errors():
    with pytest.raises(SingleClass):
        fit_arrays(np.zeros((5, 2)), np.ones(5))
    with pytest.raises(SchemaMismatch):
        fit_arrays(np.zeros((5, 2)), np.ones(4))
    with pytest.raises(SchemaMismatch):
        fit_arrays(np.zeros((4, 3)), np.array([0, 1, 0, 1.0]), feature_set=FeatureSet.KNEE_DIST)
    f = fit_arrays(np.eye(4)[:, :2], np.array([0, 1, 0, 1.0]), STUMP)
    with pytest.raises(SchemaMismatch):
        f.predict_proba(np.zeros(3))


def test_feature_vector_schema_checked(trained_model):
    with pytest.raises(SchemaMismatch):
        trained_model.predict_proba(FeatureVector(np.zeros(2), FeatureSet.KNEE_DIST, np.ones(2)))


def test_empty_forest_is_half():
    f = Forest(0.0, [], Hyperparams(), 2)
    assert predict_proba(f, [3.0, -1.0]) == 0.5


def test_predict_threshold_conventions():
    half = Forest(0.0, [], Hyperparams(), 1)
    assert predict(half, [0.0], 0.5) == AT_RISK
    low = Forest(math.log(0.49 / 0.51), [], Hyperparams(), 1)
    assert predict_proba(low, [0.0]) == pytest.approx(0.49)
    assert predict(low, [0.0]) == NOT_AT_RISK
    very_low = Forest(-700.0, [], Hyperparams(), 1)
    assert predict(very_low, [0.0], 0.0) == AT_RISK


def test_probability_strictly_inside_unit_interval():
    for base in (-1e6, -745.0, 0.0, 40.0, 1e6):
        p = predict_proba(Forest(base, [], Hyperparams(), 1), [0.0])
        assert 0.0 < p < 1.0


def boosting_suites():
    from fallrisk.synthetic import generate_dataset

    ds = generate_dataset(500, 0.5, seed=21)
    for fs in (FeatureSet.KNEE_DIST, FeatureSet.KEYPOINTS_KNEE_HEAD):
        X, _ = ds.feature_matrix(fs)
        yield fs.value, X, ds.y.astype(float)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 4))
    yield "random", X, (X[:, 0] + 0.5 * rng.normal(size=300) > 0).astype(float)


@pytest.mark.parametrize("name,X,y", list(boosting_suites()), ids=lambda v: v if isinstance(v, str) else "")
def test_training_invariants(name, X, y):
    hp = Hyperparams(n_trees=40, max_leaves=8, min_samples_leaf=5)
    f = fit_arrays(X, y, hp)
    losses = [logistic_loss(y, f.predict_proba(X, k)) for k in range(len(f.trees) + 1)]
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
    Z = f._matrix(X)
    for t in f.trees:
        assert t.n_leaves <= hp.max_leaves
        internal = t.feature >= 0
        assert (t.gain[internal] > 0).all()
        leaves, counts = np.unique(t.apply(Z), return_counts=True)
        assert (t.feature[leaves] < 0).all()
        assert counts.min() >= hp.min_samples_leaf
        assert np.array_equal(t.count[leaves], counts)


def test_max_depth_respected():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(400, 3))
    y = (np.sin(3 * X[:, 0]) + X[:, 1] > 0).astype(float)
    f = fit_arrays(X, y, Hyperparams(n_trees=5, max_depth=2, min_samples_leaf=1))
    for t in f.trees:
        depth = {0: 0}
        for node in range(len(t.feature)):
            if t.feature[node] >= 0:
                depth[t.left[node]] = depth[t.right[node]] = depth[node] + 1
        assert max(depth.values()) <= 2
        assert t.n_leaves <= 4


def test_monotone_routing(trained_model):
    f = trained_model
    rng = np.random.default_rng(0)
    Z = rng.uniform(-0.2, 1.2, (200, f.n_features))
    # thresholds live in the scaled space; work there and map back
    lo = np.array(f.scaling.minimum)
    span = np.array(f.scaling.maximum) - lo
    span[span == 0] = 1.0
    base = f.predict_proba(Z * span + lo)
    for j in range(f.n_features):
        cuts = np.unique(np.concatenate([t.threshold[t.feature == j] for t in f.trees] + [[-np.inf, np.inf]]))
        pos = np.searchsorted(cuts, Z[:, j], side="left")
        lower = np.maximum(cuts[pos - 1], Z[:, j] - 1.0)
        upper = np.minimum(cuts[pos], Z[:, j] + 1.0)
        # any value in (lower, upper] routes identically (split is x <= threshold)
        Z2 = Z.copy()
        Z2[:, j] = lower + (upper - lower) * rng.uniform(0.01, 1.0, len(Z))
        X2 = Z2 * span + lo
        ok = f._matrix(X2)[:, j]
        same_cell = np.searchsorted(cuts, ok, side="left") == pos
        p2 = f.predict_proba(X2)
        assert np.array_equal(p2[same_cell], base[same_cell])
        assert same_cell.mean() > 0.9


def test_round_trip_bit_exact(trained_model):
    data = save_model(trained_model)
    g = load_model(data)
    X = np.random.default_rng(1).uniform(-1, 2, (1000, trained_model.n_features))
    assert trained_model.predict_proba(X).tobytes() == g.predict_proba(X).tobytes()
    assert save_model(g) == data
    assert g.feature_set is FeatureSet.KEYPOINTS_KNEE_HEAD


def test_model_stream_errors(trained_model):
    data = save_model(trained_model)
    for cut in (1, len(data) // 2, len(data) - 3):
        with pytest.raises(CorruptModel):
            load_model(data[:cut])
    doc = json.loads(data)
    doc["version"] = 99
    with pytest.raises(VersionMismatch):
        load_model(json.dumps(doc).encode())
    doc["version"] = 1
    doc["trees"][0]["left"][0] = 0
    with pytest.raises(CorruptModel):
        load_model(json.dumps(doc).encode())
    with pytest.raises(CorruptModel):
        load_model(b"\xff\xfe")


def test_deterministic_serialization():
    X, y = threshold_dataset(300, seed=4)
    X = np.column_stack([X, np.random.default_rng(1).normal(size=300)])
    a = save_model(fit_arrays(X, y, Hyperparams(n_trees=20, min_samples_leaf=3), seed=7))
    b = save_model(fit_arrays(X, y, Hyperparams(n_trees=20, min_samples_leaf=3), seed=7))
    assert a == b


@pytest.mark.skipif("cython" not in _backend.available(), reason="compiled kernel not built")
def test_backends_bit_identical():
    from fallrisk.synthetic import generate_dataset

    ds = generate_dataset(300, 0.4, seed=13)
    for fs in (FeatureSet.KNEE_DIST, FeatureSet.KEYPOINTS_KNEE_HEAD):
        X, _ = ds.feature_matrix(fs)
        for hp in (Hyperparams(n_trees=15), Hyperparams(n_trees=10, max_leaves=5, max_depth=3,
                                                         min_samples_leaf=2, lambda_l2=1.0)):
            a = fit_arrays(X, ds.y, hp, feature_set=fs, scaling=Scaling.fit(X), backend="python")
            b = fit_arrays(X, ds.y, hp, feature_set=fs, scaling=Scaling.fit(X), backend="cython")
            assert save_model(a) == save_model(b)
    assert stump_mismatches(20, seed=3, backend="python") == []


def test_backend_selection(monkeypatch):
    assert _backend.get_grower("python").__module__.endswith("_grow_py")
    monkeypatch.setenv("FALLRISK_BACKEND", "python")
    assert _backend.default_backend() == "python"
    with pytest.raises(ValueError):
        _backend.get_grower("fortran")
