"""Labeled frame datasets stored as newline-delimited JSON.

An optional header line ``{"generator_version": ..., "seed": ..., "params": ...}``
is followed by one record per sample::

    {"label": "at_risk" | "not_at_risk", "source_id": "...", "frame": {...}}

Features are always recomputed from the frames, so every feature set can be
evaluated from the same file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .features import AT_RISK, LABELS, FeatureConfig, FeatureSet, LabeledSample, build_features
from .geometry import scene_from_frame
from .records import FrameRecord, dumps, frame_from_dict


@dataclass
class Dataset:
    frames: list
    labels: list
    source_ids: list
    header: dict | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.frames)

    @property
    def y(self) -> np.ndarray:
        return np.array([lab == AT_RISK for lab in self.labels], dtype=np.int64)

    def scenes(self):
        if "scenes" not in self._cache:
            self._cache["scenes"] = [scene_from_frame(f) for f in self.frames]
        return self._cache["scenes"]

    def feature_matrix(self, feature_set: FeatureSet, cfg: FeatureConfig = FeatureConfig()):
        """``(X, pixel_scale)`` for every sample, cached per feature set."""
        key = (feature_set, cfg)
        if key not in self._cache:
            vecs = [build_features(sk, bed, feature_set, cfg) for sk, bed in self.scenes()]
            X = np.vstack([v.values for v in vecs])
            S = np.vstack([v.pixel_scale for v in vecs])
            self._cache[key] = (X, S)
        return self._cache[key]

    def samples(self, feature_set: FeatureSet, cfg: FeatureConfig = FeatureConfig()) -> list[LabeledSample]:
        out = []
        for (sk, bed), label, sid in zip(self.scenes(), self.labels, self.source_ids):
            out.append(LabeledSample(build_features(sk, bed, feature_set, cfg), label, sid))
        return out


def record_line(label: str, source_id: str, frame: FrameRecord) -> str:
    return dumps({"label": label, "source_id": source_id, "frame": frame.to_dict()})


def header_line(generator_version, seed, params) -> str:
    return dumps({"generator_version": generator_version, "seed": seed, "params": params})


def parse_dataset(lines) -> Dataset:
    frames, labels, ids = [], [], []
    header = None
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", line_no) from None
        if isinstance(obj, dict) and "generator_version" in obj:
            if frames or header is not None:
                raise ValidationError("header must be the first record", line_no)
            header = obj
            continue
        if not isinstance(obj, dict) or not {"label", "source_id", "frame"} <= obj.keys():
            raise ValidationError("sample needs label, source_id and frame", line_no)
        if obj["label"] not in LABELS:
            raise ValidationError(f"unknown label {obj['label']!r}", line_no)
        if not isinstance(obj["source_id"], str):
            raise ValidationError("source_id must be a string", line_no)
        frames.append(frame_from_dict(obj["frame"], line_no))
        labels.append(obj["label"])
        ids.append(obj["source_id"])
    return Dataset(frames, labels, ids, header)


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh)


def write_dataset(path, dataset: Dataset):
    lines = []
    if dataset.header is not None:
        h = dataset.header
        lines.append(header_line(h["generator_version"], h["seed"], h["params"]))
    for frame, label, sid in zip(dataset.frames, dataset.labels, dataset.source_ids):
        lines.append(record_line(label, sid, frame))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
