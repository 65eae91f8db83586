"""Feature vectors for the four landmark feature sets, scaling and balancing.

Layout of every vector, in this order:

* keypoint coordinates ``x0, y0, ..., x16, y16`` divided by the working
  resolution (1080, 828), when the set includes keypoints;
* left-knee and right-knee signed distances to the selected bed boundary;
* head signed distance to the same boundary, when the set includes it.

Distances are divided by the bed's short-axis length, so a value of 0.5 is
half a bed width inside the boundary and negative values lie outside.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass, MissingLandmark, SchemaMismatch
from .geometry import (
    FEATURE_MIN_CONFIDENCE,
    LEFT_KNEE,
    RIGHT_KNEE,
    ROI_HEIGHT,
    ROI_WIDTH,
    SIDE_MIN_CONFIDENCE,
    BedModel,
    Side,
    Skeleton,
    boundary_distances,
    determine_side,
    head_point,
)

AT_RISK = "at_risk"
NOT_AT_RISK = "not_at_risk"
LABELS = (NOT_AT_RISK, AT_RISK)


class FeatureSet(enum.Enum):
    KNEE_DIST = "knee"
    KNEE_HEAD_DIST = "knee-head"
    KEYPOINTS_KNEE = "kp-knee"
    KEYPOINTS_KNEE_HEAD = "kp-knee-head"

    @property
    def has_keypoints(self) -> bool:
        return self in (FeatureSet.KEYPOINTS_KNEE, FeatureSet.KEYPOINTS_KNEE_HEAD)

    @property
    def has_head(self) -> bool:
        return self in (FeatureSet.KNEE_HEAD_DIST, FeatureSet.KEYPOINTS_KNEE_HEAD)

    @property
    def dim(self) -> int:
        return 34 * self.has_keypoints + 2 + self.has_head

    @property
    def columns(self) -> list[str]:
        cols = []
        if self.has_keypoints:
            for i in range(17):
                cols += [f"kp{i}_x", f"kp{i}_y"]
        cols += ["left_knee_dist", "right_knee_dist"]
        if self.has_head:
            cols.append("head_dist")
        return cols


# Row order of the feature-set ablation.
TABLE_ORDER = (
    FeatureSet.KNEE_DIST,
    FeatureSet.KNEE_HEAD_DIST,
    FeatureSet.KEYPOINTS_KNEE,
    FeatureSet.KEYPOINTS_KNEE_HEAD,
)


@dataclass(frozen=True)
class FeatureConfig:
    side_min_confidence: float = SIDE_MIN_CONFIDENCE
    feature_min_confidence: float = FEATURE_MIN_CONFIDENCE


@dataclass
class FeatureVector:
    values: np.ndarray
    feature_set: FeatureSet
    # Pixel size of one unit of each dimension; Gaussian noise given in
    # pixels is divided by this before being added.
    pixel_scale: np.ndarray
    side: Side | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.pixel_scale = np.asarray(self.pixel_scale, dtype=float)
        if self.values.shape != (self.feature_set.dim,):
            raise SchemaMismatch(
                f"{self.feature_set.value} expects {self.feature_set.dim} values, got {self.values.shape}"
            )

    def __len__(self):
        return len(self.values)


@dataclass
class LabeledSample:
    features: FeatureVector
    label: str
    source_id: str
    augmented: bool = False


def resolve_side(skeleton: Skeleton, bed: BedModel, cfg: FeatureConfig = FeatureConfig()) -> Side:
    """Side rule with the indeterminate fallback when a landmark is missing."""
    try:
        return determine_side(skeleton, bed, cfg.side_min_confidence)
    except MissingLandmark:
        return Side.INDETERMINATE


def build_features(skeleton: Skeleton, bed: BedModel, feature_set: FeatureSet,
                   cfg: FeatureConfig = FeatureConfig(), side: Side | None = None) -> FeatureVector:
    if side is None:
        side = resolve_side(skeleton, bed, cfg)
    conf = skeleton.confidence
    for i in (LEFT_KNEE, RIGHT_KNEE):
        if conf[i] < cfg.feature_min_confidence:
            raise MissingLandmark(f"knee {i} below feature confidence threshold")

    width = bed.short_axis_length
    values, scale = [], []
    if feature_set.has_keypoints:
        values.append((skeleton.xy / np.array([ROI_WIDTH, ROI_HEIGHT])).ravel())
        scale.append(np.tile([ROI_WIDTH, ROI_HEIGHT], 17).astype(float))
    pts = skeleton.xy[[LEFT_KNEE, RIGHT_KNEE]]
    if feature_set.has_head:
        pts = np.vstack([pts, head_point(skeleton, cfg.feature_min_confidence)])
    dists = boundary_distances(pts, bed, side)
    values.append(dists / width)
    scale.append(np.full(len(dists), width))
    return FeatureVector(np.concatenate(values), feature_set, np.concatenate(scale), side)


def stack(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Stack feature vectors into ``(values, pixel_scale)`` matrices."""
    vectors = list(vectors)
    sets = {v.feature_set for v in vectors}
    if len(sets) > 1:
        raise SchemaMismatch(f"mixed feature sets: {sorted(s.value for s in sets)}")
    return np.vstack([v.values for v in vectors]), np.vstack([v.pixel_scale for v in vectors])


@dataclass(frozen=True)
class Scaling:
    """Per-dimension min-max normalisation fitted on training data."""

    minimum: tuple
    maximum: tuple

    @classmethod
    def fit(cls, X) -> "Scaling":
        X = np.asarray(X, dtype=float)
        return cls(tuple(X.min(axis=0).tolist()), tuple(X.max(axis=0).tolist()))

    @classmethod
    def identity(cls, dim) -> "Scaling":
        return cls((0.0,) * dim, (1.0,) * dim)

    def apply(self, X) -> np.ndarray:
        lo = np.array(self.minimum)
        span = np.array(self.maximum) - lo
        span[span == 0] = 1.0
        return (np.asarray(X, dtype=float) - lo) / span

    def to_dict(self) -> dict:
        return {"min": list(self.minimum), "max": list(self.maximum)}

    @classmethod
    def from_dict(cls, d) -> "Scaling":
        return cls(tuple(map(float, d["min"])), tuple(map(float, d["max"])))


@dataclass
class BalancedArrays:
    X: np.ndarray
    y: np.ndarray
    source_ids: np.ndarray
    augmented: np.ndarray
    rows: np.ndarray  # input row each output row was taken from


def balance_arrays(X, y, source_ids, pixel_scale, noise_sigma: float, seed) -> BalancedArrays:
    """Oversample the minority class with Gaussian-perturbed duplicates.

    ``y`` holds 0/1 labels. Noise of ``noise_sigma`` pixels is applied in
    the pre-normalisation space, i.e. divided by ``pixel_scale`` per value.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    source_ids = np.asarray(source_ids, dtype=object)
    pixel_scale = np.asarray(pixel_scale, dtype=float)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    counts = [int((y == c).sum()) for c in (0, 1)]
    if min(counts) == 0:
        raise EmptyClass(f"class counts {counts}: both classes must be present")

    rng = np.random.default_rng(seed)
    minority = int(np.argmin(counts))
    deficit = abs(counts[1] - counts[0])
    pool = np.flatnonzero(y == minority)
    picks = pool[rng.integers(0, len(pool), size=deficit)] if deficit else np.empty(0, dtype=int)
    dup = X[picks].copy()
    if deficit and noise_sigma > 0:
        dup += rng.normal(0.0, noise_sigma, size=dup.shape) / pixel_scale[picks]

    rows = np.concatenate([np.arange(len(X)), picks])
    aug = np.concatenate([np.zeros(len(X), bool), np.ones(deficit, bool)])
    order = rng.permutation(len(rows))
    return BalancedArrays(
        X=np.vstack([X, dup])[order],
        y=y[rows][order],
        source_ids=source_ids[rows][order],
        augmented=aug[order],
        rows=rows[order],
    )


def balance_dataset(samples, noise_sigma: float = 2.0, seed=0) -> list[LabeledSample]:
    samples = list(samples)
    if not samples:
        raise EmptyClass("no samples")
    X, scale = stack(s.features for s in samples)
    y = np.array([1 if s.label == AT_RISK else 0 for s in samples])
    ids = np.array([s.source_id for s in samples], dtype=object)
    out = balance_arrays(X, y, ids, scale, noise_sigma, seed)
    result = []
    for xi, row, aug in zip(out.X, out.rows, out.augmented):
        src = samples[row]
        if not aug:
            result.append(src)
            continue
        fv = FeatureVector(xi, src.features.feature_set, src.features.pixel_scale, src.features.side)
        result.append(LabeledSample(fv, src.label, src.source_id, augmented=True))
    return result
