"""Synthetic bed scenes with ground-truth fall-risk labels.

Each scene is a rectangular bed seen from a ceiling camera plus one posed
17-keypoint skeleton.  Poses are built in bed-local coordinates, where ``u``
runs across the bed towards the edge the body is nearest to (that edge sits
at ``u = +W/2``) and ``v`` runs along the bed towards the feet, then rotated
and translated into the 1080x828 working frame.

Labels come from :func:`oracle_label` on the noise-free landmarks against the
bed fitted from the emitted contour, so re-labelling a stored noise-free
frame reproduces the stored label exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import Dataset, header_line, record_line
from .errors import InvalidParams
from .features import AT_RISK, NOT_AT_RISK
from .geometry import (
    FLIP_INDEX,
    ROI_HEIGHT,
    ROI_WIDTH,
    BedModel,
    Point2,
    Skeleton,
    determine_side,
    fit_bed_model,
    knee_distances,
)
from .records import FrameRecord

GENERATOR_VERSION = 1

# Segment lengths as fractions of body height.
BODY = {
    "torso": 0.30,
    "neck": 0.12,
    "shoulder_w": 0.22,
    "hip_w": 0.16,
    "upper_arm": 0.17,
    "forearm": 0.15,
    "thigh": 0.24,
    "shin": 0.24,
}
BODY_HEIGHT_FRACTION = 0.7  # of bed length
BODY_SCALE_JITTER = 0.08
DROPOUT_CONFIDENCE = 0.05
DROPOUT_DISPLACEMENT = 25.0
CONTOUR_POINTS_PER_EDGE = 8
KNEE_MARGIN = 12.0  # px kept clear of the boundary on either side


class PostureTemplate(enum.Enum):
    LYING_CENTER = "lying_center"
    LYING_EDGE = "lying_edge"
    KNEE_OVER_EDGE = "knee_over_edge"
    SITTING_EDGE = "sitting_edge"
    CLIMBING_OUT = "climbing_out"
    TURNING_AROUND = "turning_around"


AT_RISK_TEMPLATES = (
    PostureTemplate.KNEE_OVER_EDGE,
    PostureTemplate.SITTING_EDGE,
    PostureTemplate.CLIMBING_OUT,
    PostureTemplate.TURNING_AROUND,
)
SAFE_TEMPLATES = (
    PostureTemplate.LYING_CENTER,
    PostureTemplate.LYING_EDGE,
    PostureTemplate.TURNING_AROUND,
)


@dataclass(frozen=True)
class SceneParams:
    bed_width: float
    bed_length: float
    bed_rotation: float  # degrees
    bed_center: Point2
    posture: PostureTemplate
    keypoint_noise_sigma: float = 2.0
    dropout_prob: float = 0.02
    contour_jitter: float = 1.0
    tau: float = 0.0
    label_flip_prob: float = 0.0
    # TurningAround only: request the at-risk (True) or safe (False) variant.
    at_risk_hint: bool | None = None

    def validate(self):
        if not 200 <= self.bed_width <= 500:
            raise InvalidParams(f"bed_width {self.bed_width} outside [200, 500]")
        if not 500 <= self.bed_length <= 800:
            raise InvalidParams(f"bed_length {self.bed_length} outside [500, 800]")
        if not self.bed_length > self.bed_width:
            raise InvalidParams("bed_length must exceed bed_width")
        if not -25 <= self.bed_rotation <= 25:
            raise InvalidParams(f"bed_rotation {self.bed_rotation} outside [-25, 25]")
        if self.keypoint_noise_sigma < 0 or self.contour_jitter < 0:
            raise InvalidParams("noise levels must be non-negative")
        if not (0 <= self.dropout_prob <= 1 and 0 <= self.label_flip_prob <= 1):
            raise InvalidParams("probabilities must lie in [0, 1]")
        corners = self.bed_corners()
        pad = self.contour_jitter
        if (corners[:, 0].min() - pad < 0 or corners[:, 0].max() + pad > ROI_WIDTH
                or corners[:, 1].min() - pad < 0 or corners[:, 1].max() + pad > ROI_HEIGHT):
            raise InvalidParams("bed does not fit inside the 1080x828 frame")

    def rotation_matrix(self) -> np.ndarray:
        t = math.radians(self.bed_rotation)
        return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])

    def to_frame(self, local) -> np.ndarray:
        """Map bed-local (x across, y along) points into frame pixels."""
        return np.asarray(local, dtype=float) @ self.rotation_matrix().T + np.asarray(self.bed_center)

    def bed_corners(self) -> np.ndarray:
        w, l = self.bed_width / 2, self.bed_length / 2
        return self.to_frame([[-w, -l], [w, -l], [w, l], [-w, l]])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["posture"] = self.posture.value
        d["bed_center"] = [float(self.bed_center[0]), float(self.bed_center[1])]
        return d


@dataclass
class Pose:
    """Noise-free skeleton in bed-local coordinates plus body dimensions."""

    local: np.ndarray  # (17, 2) in (x across, y along)
    height: float


def _unit(angle_deg):
    a = math.radians(angle_deg)
    return np.array([math.sin(a), math.cos(a)])  # 0 deg points along +v (feet)


def _rotate(vec, angle_deg):
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def _knee_targets(template, rng, w, thigh, hint):
    """Signed knee distances to the near edge (positive inside)."""
    inside = lambda hi: rng.uniform(KNEE_MARGIN, max(hi, KNEE_MARGIN + 1))
    if template is PostureTemplate.LYING_CENTER:
        return None
    if template is PostureTemplate.LYING_EDGE:
        return [inside(0.35 * w), inside(0.35 * w)]
    if template is PostureTemplate.KNEE_OVER_EDGE:
        out = -rng.uniform(15, 80)
        other = -rng.uniform(15, 80) if rng.random() < 0.5 else inside(0.3 * w)
        return [out, other]
    if template is PostureTemplate.SITTING_EDGE:
        return [-rng.uniform(15, 0.8 * thigh), -rng.uniform(15, 0.8 * thigh)]
    if template is PostureTemplate.CLIMBING_OUT:
        return [-rng.uniform(15, 100), inside(0.4 * w)]
    # turning around: label decided by the hint
    if hint is None:
        hint = bool(rng.random() < 0.5)
    if hint:
        other = -rng.uniform(KNEE_MARGIN, 60) if rng.random() < 0.5 else inside(0.5 * w)
        return [-rng.uniform(KNEE_MARGIN, 60), other]
    return [inside(0.8 * w), inside(0.8 * w)]


def sample_pose(template: PostureTemplate, rng, bed_width, bed_length, hint=None) -> Pose:
    """Pose a skeleton for ``template`` in bed-local coordinates."""
    w = bed_width / 2
    height = BODY_HEIGHT_FRACTION * bed_length * rng.uniform(1 - BODY_SCALE_JITTER, 1 + BODY_SCALE_JITTER)
    L = {k: f * height for k, f in BODY.items()}

    sitting = template is PostureTemplate.SITTING_EDGE
    torso_angle = {
        PostureTemplate.LYING_CENTER: (-10, 10),
        PostureTemplate.LYING_EDGE: (-15, 15),
        PostureTemplate.KNEE_OVER_EDGE: (-20, 20),
        PostureTemplate.SITTING_EDGE: (-180, 180),
        PostureTemplate.CLIMBING_OUT: (-70, -20),
        PostureTemplate.TURNING_AROUND: (-70, 70),
    }[template]
    # angle measured from "towards the head" (-v); negative tilts the head towards +u
    phi = rng.uniform(*torso_angle)
    up = -_unit(phi)  # hips -> shoulders, (u, v)
    across = np.array([-up[1], up[0]])
    torso_proj = rng.uniform(0.1, 0.4) if sitting else rng.uniform(0.9, 1.0)

    hip_v = rng.uniform(-0.05, 0.12) * bed_length
    targets = _knee_targets(template, rng, w, L["thigh"], hint)
    thigh_proj = L["thigh"] * rng.uniform(0.75, 1.0)
    reach = 0.95 * thigh_proj
    hip_off = across * L["hip_w"] / 2  # + for one hip, - for the other

    if targets is None:
        hip_u = rng.uniform(-0.12, 0.12) * w
        spread = L["hip_w"] / 2 + rng.uniform(0.0, 0.05) * w
        knees_u = sorted([hip_u - spread, hip_u + spread])
    else:
        knees_u = sorted(w - d for d in targets)
        if sitting:
            hip_u = w - rng.uniform(5, 40)
        elif template is PostureTemplate.CLIMBING_OUT:
            hip_u = w - rng.uniform(0, 60)
        else:
            hip_u = float(np.mean(knees_u)) - rng.uniform(0.0, 0.1) * w
    hips_u = sorted([hip_u - abs(hip_off[0]), hip_u + abs(hip_off[0])])
    # keep every thigh within reach, moving the pelvis first and knees last
    lo = max(k - h + hip_u - reach for k, h in zip(knees_u, hips_u))
    hi = min(k - h + hip_u + reach for k, h in zip(knees_u, hips_u))
    if lo <= hi:
        hip_u = float(np.clip(hip_u, lo, hi))
    else:
        hip_u = (lo + hi) / 2
    shift = hip_u - (hips_u[0] + hips_u[1]) / 2
    hips_u = [h + shift for h in hips_u]
    knees_u = [float(np.clip(k, h - reach, h + reach)) for k, h in zip(knees_u, hips_u)]

    hip_c = np.array([hip_u, hip_v])
    hip_a = hip_c - hip_off
    hip_b = hip_c + hip_off
    if hip_a[0] > hip_b[0]:
        hip_a, hip_b = hip_b, hip_a
    hips = [hip_a, hip_b]
    knees = []
    for ku, hp in zip(knees_u, hips):
        du = ku - hp[0]
        if sitting:
            dv = rng.uniform(-0.3, 0.3) * math.sqrt(max(thigh_proj ** 2 - du ** 2, 0.0))
        else:
            dv = math.sqrt(max(thigh_proj ** 2 - du ** 2, 0.0))
        knees.append(np.array([ku, hp[1] + dv]))

    ankles = []
    for kn, hp in zip(knees, hips):
        if sitting:
            ankles.append(kn + np.array([L["shin"] * rng.uniform(0.05, 0.3), rng.uniform(-5, 5)]))
            continue
        thigh_dir = (kn - hp) / max(np.linalg.norm(kn - hp), 1e-9)
        bend = rng.uniform(-40, 40)
        if kn[0] > w:  # leg already over the edge keeps heading out
            bend = -abs(bend)
        ankles.append(kn + _rotate(thigh_dir, bend) * L["shin"] * rng.uniform(0.7, 1.0))

    sh_c = hip_c + up * L["torso"] * torso_proj
    sh_a, sh_b = sh_c - across * L["shoulder_w"] / 2, sh_c + across * L["shoulder_w"] / 2
    if sh_a[0] > sh_b[0]:
        sh_a, sh_b = sh_b, sh_a
    nose = sh_c + up * L["neck"] * (torso_proj if sitting else 1.0)
    eye_a = nose - up * 0.02 * height - across * 0.03 * height
    eye_b = nose - up * 0.02 * height + across * 0.03 * height
    ear_a = nose - up * 0.04 * height - across * 0.06 * height
    ear_b = nose - up * 0.04 * height + across * 0.06 * height

    elbows, wrists = [], []
    for sh in (sh_a, sh_b):
        upper = _rotate(-up, rng.uniform(-45, 45)) * L["upper_arm"] * rng.uniform(0.6, 1.0)
        el = sh + upper
        fore = _rotate(upper / np.linalg.norm(upper), rng.uniform(-60, 60)) * L["forearm"] * rng.uniform(0.6, 1.0)
        elbows.append(el)
        wrists.append(el + fore)

    # COCO order; the "a" member is the left body part before facing flips
    uv = np.array([
        nose, eye_a, eye_b, ear_a, ear_b, sh_a, sh_b, elbows[0], elbows[1],
        wrists[0], wrists[1], hips[0], hips[1], knees[0], knees[1], ankles[0], ankles[1],
    ])
    if rng.random() < 0.5:
        uv = uv[list(FLIP_INDEX)]
    side = 1.0 if rng.random() < 0.5 else -1.0
    head_down = 1.0 if rng.random() < 0.5 else -1.0
    local = np.column_stack([side * uv[:, 0], head_down * uv[:, 1]])
    return Pose(local=local, height=height)


def oracle_label(skeleton: Skeleton, bed: BedModel, tau: float = 0.0) -> str:
    """Ground truth: at risk iff a knee is closer than ``tau`` to leaving the bed."""
    side = determine_side(skeleton, bed)
    return AT_RISK if min(knee_distances(skeleton, bed, side)) < tau else NOT_AT_RISK


def _contour(params: SceneParams, rng) -> np.ndarray:
    corners = params.bed_corners()
    t = np.arange(CONTOUR_POINTS_PER_EDGE) / CONTOUR_POINTS_PER_EDGE
    pts = [corners[i] + t[:, None] * (corners[(i + 1) % 4] - corners[i]) for i in range(4)]
    pts = np.vstack(pts)
    if params.contour_jitter > 0:
        pts = pts + rng.uniform(-params.contour_jitter, params.contour_jitter, size=pts.shape)
    return np.clip(pts, [0, 0], [ROI_WIDTH, ROI_HEIGHT])


def _clip_frame(xy):
    return np.clip(xy, [0.0, 0.0], [ROI_WIDTH, ROI_HEIGHT])


@dataclass
class Scene:
    frame: FrameRecord
    label: str
    clean: np.ndarray  # noise-free (17, 2) keypoints in frame pixels
    params: SceneParams


def render_scene(params: SceneParams, rng, ts=0.0, session="synthetic") -> Scene:
    pose = sample_pose(params.posture, rng, params.bed_width, params.bed_length, params.at_risk_hint)
    clean = _clip_frame(params.to_frame(pose.local))
    contour = _contour(params, rng)

    bed = fit_bed_model(contour)
    label = oracle_label(Skeleton.from_xy(clean), bed, params.tau)
    if params.label_flip_prob > 0 and rng.random() < params.label_flip_prob:
        label = NOT_AT_RISK if label == AT_RISK else AT_RISK

    xy = clean.copy()
    if params.keypoint_noise_sigma > 0:
        xy = xy + rng.normal(0.0, params.keypoint_noise_sigma, size=xy.shape)
    conf = rng.uniform(0.5, 1.0, size=17)
    dropped = rng.random(17) < params.dropout_prob
    if dropped.any():
        conf[dropped] = rng.uniform(0.0, DROPOUT_CONFIDENCE, size=int(dropped.sum()))
        xy[dropped] += rng.normal(0.0, DROPOUT_DISPLACEMENT, size=(int(dropped.sum()), 2))
    xy = _clip_frame(xy)

    frame = FrameRecord(
        ts=float(ts), session=session, image_w=ROI_WIDTH, image_h=ROI_HEIGHT,
        bed_contour=contour, keypoints=np.column_stack([xy, conf]),
    )
    return Scene(frame, label, clean, params)


def generate_scene(params: SceneParams, rng_seed, ts=0.0, session="synthetic") -> tuple[FrameRecord, str]:
    params.validate()
    scene = render_scene(params, np.random.default_rng(rng_seed), ts, session)
    return scene.frame, scene.label


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    class_mix: float = 0.5
    seed: int = 42
    tau: float = 0.0
    keypoint_noise_sigma: float = 2.0
    dropout_prob: float = 0.02
    contour_jitter: float = 1.0
    label_flip_prob: float = 0.0

    def validate(self):
        if self.n < 2:
            raise InvalidParams("n must be >= 2")
        if not 0 < self.class_mix < 1:
            raise InvalidParams("class_mix must lie strictly between 0 and 1")
        if self.keypoint_noise_sigma < 0 or self.contour_jitter < 0:
            raise InvalidParams("noise levels must be non-negative")
        if not (0 <= self.dropout_prob <= 1 and 0 <= self.label_flip_prob <= 1):
            raise InvalidParams("probabilities must lie in [0, 1]")


def _scene_params(cfg: GeneratorConfig, index: int, at_risk: bool) -> SceneParams:
    """Draw bed geometry and posture for scene ``index`` so that everything fits."""
    rng = np.random.default_rng([cfg.seed, index, 0])
    pool = AT_RISK_TEMPLATES if at_risk else SAFE_TEMPLATES
    posture = pool[int(rng.integers(len(pool)))]
    margin = cfg.contour_jitter + 1.0
    for _ in range(1000):
        width = rng.uniform(200, 500)
        length = rng.uniform(max(500.0, 1.2 * width), 800)
        rotation = rng.uniform(-25, 25)
        params = SceneParams(
            bed_width=width, bed_length=length, bed_rotation=rotation, bed_center=Point2(0.0, 0.0),
            posture=posture, keypoint_noise_sigma=cfg.keypoint_noise_sigma,
            dropout_prob=cfg.dropout_prob, contour_jitter=cfg.contour_jitter, tau=cfg.tau,
            label_flip_prob=cfg.label_flip_prob, at_risk_hint=at_risk,
        )
        # the pose is the first thing render_scene draws from the scene rng
        pose = sample_pose(posture, np.random.default_rng([cfg.seed, index, 1]), width, length, at_risk)
        extent = np.vstack([params.to_frame(pose.local), params.bed_corners()])
        lo = -extent.min(axis=0) + margin
        hi = np.array([ROI_WIDTH, ROI_HEIGHT]) - extent.max(axis=0) - margin
        if (lo <= hi).all():
            center = rng.uniform(lo, hi)
            return replace(params, bed_center=Point2(float(center[0]), float(center[1])))
    raise InvalidParams(f"could not place scene {index}")


def generate_records(cfg: GeneratorConfig):
    """Yield ``(index, frame, label, source_id)`` for every scene."""
    cfg.validate()
    n_pos = int(round(cfg.n * cfg.class_mix))
    intents = np.zeros(cfg.n, dtype=bool)
    intents[:n_pos] = True
    intents = np.random.default_rng([cfg.seed, cfg.n]).permutation(intents)
    session = f"synthetic-{cfg.seed}"
    for i in range(cfg.n):
        params = _scene_params(cfg, i, bool(intents[i]))
        frame, label = generate_scene(params, [cfg.seed, i, 1], ts=i / 15.0, session=session)
        yield i, frame, label, f"scene-{cfg.seed}-{i:06d}"


def generate_dataset(n: int, class_mix: float = 0.5, seed: int = 42, **kwargs) -> Dataset:
    cfg = GeneratorConfig(n=n, class_mix=class_mix, seed=seed, **kwargs)
    frames, labels, ids = [], [], []
    for _, frame, label, sid in generate_records(cfg):
        frames.append(frame)
        labels.append(label)
        ids.append(sid)
    header = {"generator_version": GENERATOR_VERSION, "seed": seed, "params": asdict(cfg)}
    return Dataset(frames, labels, ids, header)


def dataset_lines(cfg: GeneratorConfig):
    yield header_line(GENERATOR_VERSION, cfg.seed, asdict(cfg))
    for _, frame, label, sid in generate_records(cfg):
        yield record_line(label, sid, frame)


def write_generated(path, cfg: GeneratorConfig):
    with open(path, "w", encoding="utf-8") as fh:
        for line in dataset_lines(cfg):
            fh.write(line + "\n")
