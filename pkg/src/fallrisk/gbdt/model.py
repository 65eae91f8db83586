"""Gradient-boosted decision trees for binary classification.

Logistic loss, second-order (Newton) leaf values, leaf-wise growth with
exact greedy split search.  The tree grower runs in a compiled kernel when
available (see :mod:`fallrisk.gbdt._backend`).
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import CorruptModel, SchemaMismatch, SingleClass, VersionMismatch
from ..features import AT_RISK, NOT_AT_RISK, FeatureSet, FeatureVector, Scaling
from . import _backend

FORMAT_NAME = "fallrisk-forest"
FORMAT_VERSION = 1

_PROB_LO = sys.float_info.min
_PROB_HI = 1.0 - 2.0 ** -53


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.1
    n_trees: int = 100
    max_leaves: int = 31
    max_depth: int | None = None  # None: unlimited
    min_samples_leaf: int = 20
    lambda_l2: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.lambda_l2 < 0:
            raise ValueError("lambda_l2 must be >= 0")


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf.

    ``value`` holds leaf outputs already multiplied by the learning rate.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    count: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            f = self.feature[nd]
            go_left = X[active, f] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "count": self.count.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(
            feature=np.array(d["feature"], dtype=np.intp),
            threshold=np.array(d["threshold"], dtype=float),
            left=np.array(d["left"], dtype=np.intp),
            right=np.array(d["right"], dtype=np.intp),
            value=np.array(d["value"], dtype=float),
            gain=np.array(d["gain"], dtype=float),
            count=np.array(d["count"], dtype=np.intp),
        )


@dataclass
class Forest:
    base_score: float
    trees: list
    hyperparams: Hyperparams
    n_features: int
    feature_set: FeatureSet | None = None
    scaling: Scaling | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def _matrix(self, features) -> np.ndarray:
        if isinstance(features, FeatureVector):
            if self.feature_set is not None and features.feature_set is not self.feature_set:
                raise SchemaMismatch(
                    f"model expects {self.feature_set.value}, got {features.feature_set.value}"
                )
            features = features.values
        X = np.asarray(features, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaMismatch(f"model expects {self.n_features} features, got shape {X.shape}")
        if self.scaling is not None:
            X = self.scaling.apply(X)
        return X

    def raw_score(self, features, n_trees: int | None = None) -> np.ndarray:
        X = self._matrix(features)
        score = np.full(len(X), self.base_score)
        for tree in self.trees[:n_trees]:
            score = score + tree.predict(X)
        return score

    def predict_proba(self, features, n_trees: int | None = None) -> np.ndarray:
        """Probability of the at-risk class for each row."""
        return sigmoid(self.raw_score(features, n_trees))

    def predict(self, features, threshold: float = 0.5) -> np.ndarray:
        """Boolean at-risk decision per row; a tie at the threshold is at risk."""
        return self.predict_proba(features) >= threshold


def sigmoid(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(-z))
    return np.clip(p, _PROB_LO, _PROB_HI)


def logistic_loss(y, p) -> float:
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def presort(X) -> np.ndarray:
    """Per-feature stable ascending sample order, shape (n_features, n)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.intp))


def fit_arrays(X, y, hp: Hyperparams = Hyperparams(), seed: int = 0,
               feature_set: FeatureSet | None = None, scaling: Scaling | None = None,
               backend: str | None = None) -> Forest:
    """Train on a feature matrix ``X`` and 0/1 labels ``y``.

    ``scaling`` is applied to ``X`` before training and stored in the model
    so predictions take unscaled features. Training uses no randomness;
    ``seed`` is recorded for provenance.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise SchemaMismatch(f"inconsistent shapes X{X.shape}, y{y.shape}")
    if feature_set is not None and X.shape[1] != feature_set.dim:
        raise SchemaMismatch(f"{feature_set.value} expects {feature_set.dim} features, got {X.shape[1]}")
    if len(X) < 2:
        raise SingleClass("need at least 2 samples")
    pos = float(y.mean())
    if pos in (0.0, 1.0):
        raise SingleClass("all labels identical")
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or Inf")
    if scaling is not None:
        X = np.ascontiguousarray(scaling.apply(X))

    grow = _backend.get_grower(backend)
    base = math.log(pos / (1.0 - pos))
    order0 = presort(X)
    max_depth = -1 if hp.max_depth is None else hp.max_depth
    F = np.full(len(X), base)
    trees = []
    for _ in range(hp.n_trees):
        p = sigmoid(F)
        g = p - y
        h = p * (1.0 - p)
        out = grow(X, order0.copy(), g, h, hp.max_leaves, max_depth, hp.min_samples_leaf, hp.lambda_l2)
        value = np.where(out["feature"] < 0, out["value"] * hp.learning_rate, 0.0)
        tree = Tree(out["feature"], out["threshold"], out["left"], out["right"], value, out["gain"], out["count"])
        F = F + value[out["leaf_of"]]
        trees.append(tree)
    return Forest(base, trees, hp, X.shape[1], feature_set, scaling, seed)


def fit(samples, hp: Hyperparams = Hyperparams(), seed: int = 0, scale: bool = True,
        backend: str | None = None) -> Forest:
    """Train on a list of :class:`~fallrisk.features.LabeledSample`."""
    samples = list(samples)
    if not samples:
        raise SingleClass("no samples")
    fs = samples[0].features.feature_set
    for s in samples:
        if s.features.feature_set is not fs or len(s.features.values) != fs.dim:
            raise SchemaMismatch("samples do not share one feature schema")
    X = np.vstack([s.features.values for s in samples])
    y = np.array([s.label == AT_RISK for s in samples], dtype=float)
    scaling = Scaling.fit(X) if scale else None
    return fit_arrays(X, y, hp, seed, fs, scaling, backend)


def predict_proba(forest: Forest, features) -> float:
    return float(forest.predict_proba(features)[0])


def predict(forest: Forest, features, threshold: float = 0.5) -> str:
    return AT_RISK if predict_proba(forest, features) >= threshold else NOT_AT_RISK


# -- serialization ---------------------------------------------------------

def forest_to_dict(forest: Forest) -> dict:
    hp = asdict(forest.hyperparams)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "hyperparams": hp,
        "n_features": forest.n_features,
        "feature_set": forest.feature_set.value if forest.feature_set else None,
        "seed": forest.seed,
        "base_score": forest.base_score,
        "scaling": forest.scaling.to_dict() if forest.scaling else None,
        "meta": forest.meta,
        "trees": [t.to_dict() for t in forest.trees],
    }


def save_model(forest: Forest) -> bytes:
    return (json.dumps(forest_to_dict(forest), separators=(",", ":"), allow_nan=False) + "\n").encode()


def load_model(data: bytes) -> Forest:
    try:
        doc = json.loads(data.decode() if isinstance(data, (bytes, bytearray)) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"unreadable model stream: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptModel("not a fallrisk model")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {doc.get('version')!r}, expected {FORMAT_VERSION}")
    try:
        hp = Hyperparams(**doc["hyperparams"])
        fs = FeatureSet(doc["feature_set"]) if doc["feature_set"] is not None else None
        scaling = Scaling.from_dict(doc["scaling"]) if doc["scaling"] is not None else None
        trees = [Tree.from_dict(t) for t in doc["trees"]]
        n_features = int(doc["n_features"])
        forest = Forest(float(doc["base_score"]), trees, hp, n_features, fs, scaling,
                        int(doc["seed"]), dict(doc.get("meta") or {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"malformed model: {exc}") from None
    _check_forest(forest)
    return forest


def _check_forest(forest: Forest):
    for k, t in enumerate(forest.trees):
        n = len(t.feature)
        arrays = (t.threshold, t.left, t.right, t.value, t.gain, t.count)
        if n == 0 or any(len(a) != n for a in arrays):
            raise CorruptModel(f"tree {k}: inconsistent node arrays")
        internal = t.feature >= 0
        if (t.feature[internal] >= forest.n_features).any():
            raise CorruptModel(f"tree {k}: feature index out of range")
        kids = np.concatenate([t.left[internal], t.right[internal]])
        if ((kids <= 0) | (kids >= n)).any() or len(set(kids.tolist())) != len(kids):
            raise CorruptModel(f"tree {k}: bad child links")
        if not np.isfinite(t.value).all() or not np.isfinite(t.threshold).all():
            raise CorruptModel(f"tree {k}: non-finite values")
    if forest.scaling is not None and len(forest.scaling.minimum) != forest.n_features:
        raise CorruptModel("scaling metadata does not match feature count")
