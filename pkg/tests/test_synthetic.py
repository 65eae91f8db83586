import numpy as np
import pytest

from fallrisk.dataset import read_dataset
from fallrisk.errors import InvalidParams
from fallrisk.features import AT_RISK, NOT_AT_RISK, FeatureSet
from fallrisk.geometry import Point2, determine_side, knee_distances, scene_from_frame
from fallrisk.synthetic import (
    BODY,
    BODY_HEIGHT_FRACTION,
    BODY_SCALE_JITTER,
    GeneratorConfig,
    PostureTemplate,
    SceneParams,
    _scene_params,
    dataset_lines,
    generate_dataset,
    generate_scene,
    oracle_label,
    sample_pose,
    write_generated,
)
from conftest import make_skeleton

CLEAN = dict(keypoint_noise_sigma=0.0, dropout_prob=0.0, contour_jitter=0.0)


def params(posture, **kw):
    base = dict(bed_width=300.0, bed_length=700.0, bed_rotation=10.0, bed_center=Point2(540.0, 414.0),
                posture=posture, **CLEAN)
    base.update(kw)
    return SceneParams(**base)


def knee_dists(frame):
    skel, bed = scene_from_frame(frame)
    return knee_distances(skel, bed, determine_side(skel, bed))


def test_lying_center_example():
    for seed in range(25):
        p = params(PostureTemplate.LYING_CENTER, bed_rotation=float(seed - 12))
        frame, label = generate_scene(p, seed)
        assert label == NOT_AT_RISK
        half = p.bed_width / 2
        for d in knee_dists(frame):
            assert 0 < d and abs(d - half) <= 0.7 * half


def test_knee_over_edge_example():
    for seed in range(25):
        frame, label = generate_scene(params(PostureTemplate.KNEE_OVER_EDGE), seed)
        assert label == AT_RISK
        assert min(knee_dists(frame)) < 0


def test_oracle_label_examples(bed):
    assert oracle_label(make_skeleton((20, 50), ((30, 100), (40, 120))), bed) == NOT_AT_RISK
    assert oracle_label(make_skeleton((20, 50), ((-1, 100), (40, 120))), bed) == AT_RISK
    assert oracle_label(make_skeleton((20, 50), ((5, 100), (40, 120))), bed, tau=10) == AT_RISK


def test_turning_around_produces_both_labels():
    labels = {generate_scene(params(PostureTemplate.TURNING_AROUND, at_risk_hint=h), s)[1]
              for s in range(10) for h in (True, False)}
    assert labels == {AT_RISK, NOT_AT_RISK}


def test_invalid_params():
    for bad in (dict(bed_width=150.0), dict(bed_length=900.0), dict(bed_rotation=30.0),
                dict(bed_width=450.0, bed_length=440.0), dict(bed_center=Point2(100.0, 100.0))):
        with pytest.raises(InvalidParams):
            generate_scene(params(PostureTemplate.LYING_CENTER, **bad), 0)
    for bad in (dict(n=1), dict(n=10, class_mix=0.0), dict(n=10, class_mix=1.0)):
        with pytest.raises(InvalidParams):
            generate_dataset(**bad)


def test_scene_determinism():
    p = params(PostureTemplate.CLIMBING_OUT, keypoint_noise_sigma=2.0, dropout_prob=0.1)
    a = generate_scene(p, 17)
    b = generate_scene(p, 17)
    assert a[1] == b[1]
    assert a[0].to_dict() == b[0].to_dict()


def test_1000_scenes_byte_identical():
    cfg = GeneratorConfig(1000, 0.5, seed=42)
    assert "\n".join(dataset_lines(cfg)) == "\n".join(dataset_lines(cfg))


def test_same_seed_identical_files(tmp_path):
    cfg = GeneratorConfig(120, 0.4, seed=9)
    write_generated(tmp_path / "a.jsonl", cfg)
    write_generated(tmp_path / "b.jsonl", cfg)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    write_generated(tmp_path / "c.jsonl", GeneratorConfig(120, 0.4, seed=10))
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()
    ds = read_dataset(tmp_path / "a.jsonl")
    assert ds.header["seed"] == 9 and ds.header["params"]["class_mix"] == 0.4
    assert "generator_version" in ds.header


def test_noise_free_labels_match_oracle(tmp_path):
    cfg = GeneratorConfig(100, 0.5, seed=1, keypoint_noise_sigma=0.0, dropout_prob=0.0)
    write_generated(tmp_path / "d.jsonl", cfg)
    ds = read_dataset(tmp_path / "d.jsonl")
    for (skel, bed), label in zip(ds.scenes(), ds.labels):
        assert oracle_label(skel, bed) == label


def test_noise_free_knee_features_separate_at_tau():
    for tau in (0.0, 15.0):
        ds = generate_dataset(600, 0.5, seed=2, tau=tau, keypoint_noise_sigma=0.0, dropout_prob=0.0)
        X, _ = ds.feature_matrix(FeatureSet.KNEE_DIST)
        widths = np.array([bed.short_axis_length for _, bed in ds.scenes()])
        pred = X.min(axis=1) * widths < tau
        assert np.array_equal(pred, ds.y.astype(bool))


def test_class_mix_count():
    ds = generate_dataset(2000, 0.3, seed=42)
    n_pos = int(ds.y.sum())
    assert abs(n_pos - 600) <= 0.05 * 600


def test_all_templates_used():
    cfg = GeneratorConfig(300, 0.5, seed=4)
    seen = {_scene_params(cfg, i, i % 2 == 0).posture for i in range(300)}
    assert seen == set(PostureTemplate)


def test_plausibility_10000_scenes():
    cfg = GeneratorConfig(10000, 0.5, seed=77)
    limbs = [((11, 13), "thigh"), ((12, 14), "thigh"), ((13, 15), "shin"), ((14, 16), "shin"),
             ((5, 7), "upper_arm"), ((6, 8), "upper_arm"), ((7, 9), "forearm"), ((8, 10), "forearm")]
    for i in range(cfg.n):
        p = _scene_params(cfg, i, i % 2 == 0)
        pose = sample_pose(p.posture, np.random.default_rng([cfg.seed, i, 1]), p.bed_width, p.bed_length,
                           p.at_risk_hint)
        xy = p.to_frame(pose.local)
        assert (xy >= 0).all() and (xy[:, 0] <= 1080).all() and (xy[:, 1] <= 828).all(), i
        hmin = BODY_HEIGHT_FRACTION * p.bed_length * (1 - BODY_SCALE_JITTER)
        hmax = BODY_HEIGHT_FRACTION * p.bed_length * (1 + BODY_SCALE_JITTER)
        assert hmin <= pose.height <= hmax
        for (a, b), name in limbs:
            length = np.linalg.norm(xy[a] - xy[b])
            assert length <= BODY[name] * pose.height + 1e-9, (i, name)
            if name in ("upper_arm", "forearm"):
                assert length >= 0.6 * BODY[name] * pose.height - 1e-9
