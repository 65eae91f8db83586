"""Bed model fitting, side-of-bed rule and signed landmark distances.

Image coordinates: x grows rightwards, y grows downwards.  The bed is
modelled as the minimum-area rectangle around the segmented contour; its two
long edges are the left and right boundary lines and the segment joining the
midpoints of the short edges is the middle line.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateContour, MissingLandmark, NonFinite, OutOfBounds
from .records import N_KEYPOINTS, FrameRecord

ROI_WIDTH = 1080
ROI_HEIGHT = 828

NOSE = 0
HEAD_FALLBACK = (1, 2, 3, 4)  # eyes, ears
LEFT_KNEE = 13
RIGHT_KNEE = 14

KEYPOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)
# COCO index of the mirrored body part, used for left/right relabelling.
FLIP_INDEX = (0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15)

SIDE_MIN_CONFIDENCE = 0.05
FEATURE_MIN_CONFIDENCE = 0.0


class Point2(NamedTuple):
    x: float
    y: float


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    INDETERMINATE = "indeterminate"


def _finite(arr, what="input"):
    arr = np.asarray(arr, dtype=float)
    if not np.isfinite(arr).all():
        raise NonFinite(f"{what} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class Keypoint:
    position: Point2
    confidence: float
    index: int


class Skeleton:
    """17 COCO keypoints with confidences, immutable."""

    __slots__ = ("_data",)

    def __init__(self, keypoints):
        data = _finite(keypoints, "skeleton").copy()
        if data.shape != (N_KEYPOINTS, 3):
            raise ValueError(f"skeleton needs shape (17, 3), got {data.shape}")
        if ((data[:, 2] < 0) | (data[:, 2] > 1)).any():
            raise ValueError("keypoint confidence outside [0, 1]")
        data.setflags(write=False)
        self._data = data

    @classmethod
    def from_xy(cls, xy, confidence=1.0):
        xy = np.asarray(xy, dtype=float)
        conf = np.broadcast_to(np.asarray(confidence, dtype=float), (N_KEYPOINTS,))
        return cls(np.column_stack([xy, conf]))

    @property
    def array(self) -> np.ndarray:
        return self._data

    @property
    def xy(self) -> np.ndarray:
        return self._data[:, :2]

    @property
    def confidence(self) -> np.ndarray:
        return self._data[:, 2]

    def __getitem__(self, index) -> Keypoint:
        x, y, c = self._data[index]
        return Keypoint(Point2(float(x), float(y)), float(c), int(index))

    def __len__(self):
        return N_KEYPOINTS

    def __repr__(self):
        return f"Skeleton({self._data.tolist()!r})"

    def transformed(self, fn) -> "Skeleton":
        """Apply ``fn`` to the (17, 2) coordinate block, keeping confidences."""
        return Skeleton(np.column_stack([fn(self.xy), self.confidence]))

    def flipped(self) -> "Skeleton":
        """Swap every left/right keypoint pair (labels only, not positions)."""
        return Skeleton(self._data[list(FLIP_INDEX)])


@dataclass(frozen=True)
class Line:
    """Directed line through ``start`` towards ``end``."""

    start: Point2
    end: Point2

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.end, self.start)
        return d / math.hypot(*d)

    @property
    def midpoint(self) -> Point2:
        return Point2((self.start.x + self.end.x) / 2, (self.start.y + self.end.y) / 2)


@dataclass(frozen=True)
class BedModel:
    corners: tuple  # 4 Point2, counter-clockwise (positive shoelace area)
    left_line: Line
    right_line: Line
    middle_line: Line
    long_axis_length: float
    short_axis_length: float

    @property
    def centroid(self) -> Point2:
        c = np.mean(np.array(self.corners), axis=0)
        return Point2(float(c[0]), float(c[1]))

    def inward_normal(self, boundary: Line) -> np.ndarray:
        """Unit normal of ``boundary`` pointing towards the bed interior."""
        d = boundary.direction
        n = np.array([-d[1], d[0]])
        if np.dot(np.subtract(self.centroid, boundary.start), n) < 0:
            n = -n
        return n

    @property
    def left_normal(self) -> np.ndarray:
        """Unit normal of the middle line pointing towards the left line."""
        n = self.inward_normal(self.right_line)
        return n

    def boundary(self, side: Side) -> Line:
        if side is Side.LEFT:
            return self.left_line
        if side is Side.RIGHT:
            return self.right_line
        raise ValueError("no single boundary for an indeterminate side")


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def min_area_rectangle(points):
    """Minimum-area enclosing rectangle by rotating calipers over the hull.

    Returns ``(corners, area)`` with corners counter-clockwise.
    """
    hull = convex_hull(points)
    if len(hull) < 3:
        raise DegenerateContour("contour points are collinear")
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    u = edges[keep] / lengths[keep, None]  # (m, 2) edge directions
    v = np.column_stack([-u[:, 1], u[:, 0]])
    pu = hull @ u.T  # (n_hull, m)
    pv = hull @ v.T
    umin, umax = pu.min(axis=0), pu.max(axis=0)
    vmin, vmax = pv.min(axis=0), pv.max(axis=0)
    areas = (umax - umin) * (vmax - vmin)
    k = int(np.argmin(areas))
    if not areas[k] > 0:
        raise DegenerateContour("contour encloses zero area")
    uk, vk = u[k], v[k]
    corners = np.array([
        umin[k] * uk + vmin[k] * vk,
        umax[k] * uk + vmin[k] * vk,
        umax[k] * uk + vmax[k] * vk,
        umin[k] * uk + vmax[k] * vk,
    ])
    return corners, float(areas[k])


def fit_bed_model(contour) -> BedModel:
    pts = _finite(contour, "contour").reshape(-1, 2)
    if len(pts) < 4:
        raise DegenerateContour(f"need at least 4 contour points, got {len(pts)}")
    corners, _ = min_area_rectangle(pts)

    sides = [np.linalg.norm(corners[(i + 1) % 4] - corners[i]) for i in range(4)]
    # edges (0,1),(2,3) are parallel, as are (1,2),(3,0)
    if sides[0] >= sides[1]:
        long_edges = [(0, 1), (3, 2)]
        short_mid = [(corners[1] + corners[2]) / 2, (corners[0] + corners[3]) / 2]
    else:
        long_edges = [(1, 2), (0, 3)]
        short_mid = [(corners[0] + corners[1]) / 2, (corners[2] + corners[3]) / 2]
    long_len = max(sides[0], sides[1])
    short_len = min(sides[0], sides[1])

    # Canonical long-axis direction: the one reached by rotating "down" (+y)
    # through less than 90 degrees.
    a, b = long_edges[0]
    d = corners[b] - corners[a]
    d = d / math.hypot(*d)
    if d[1] < 0 or (d[1] == 0 and d[0] < 0):
        d = -d
    # Once d is rotated onto +y, the image +x axis corresponds to n.
    n = np.array([d[1], -d[0]])

    lines = []
    for i, j in long_edges:
        p, q = corners[i], corners[j]
        if np.dot(q - p, d) < 0:
            p, q = q, p
        lines.append(Line(Point2(*map(float, p)), Point2(*map(float, q))))
    mids = [np.dot(np.add(ln.start, ln.end) / 2, n) for ln in lines]
    left, right = (lines[0], lines[1]) if mids[0] < mids[1] else (lines[1], lines[0])

    m0, m1 = short_mid
    if np.dot(m1 - m0, d) < 0:
        m0, m1 = m1, m0
    middle = Line(Point2(*map(float, m0)), Point2(*map(float, m1)))

    ccw = corners
    area2 = np.sum(ccw[:, 0] * np.roll(ccw[:, 1], -1) - np.roll(ccw[:, 0], -1) * ccw[:, 1])
    if area2 < 0:
        ccw = ccw[::-1]
    return BedModel(
        corners=tuple(Point2(float(x), float(y)) for x, y in ccw),
        left_line=left,
        right_line=right,
        middle_line=middle,
        long_axis_length=float(long_len),
        short_axis_length=float(short_len),
    )


def signed_distance(p, boundary: Line, bed: BedModel) -> float:
    """Perpendicular distance to ``boundary``; positive on the bed side."""
    p = _finite(p, "point")
    n = bed.inward_normal(boundary)
    return float(np.dot(p - np.asarray(boundary.start), n))


def signed_distances(points, boundary: Line, bed: BedModel) -> np.ndarray:
    """Vectorised :func:`signed_distance` for an (n, 2) array of points."""
    pts = _finite(points, "points").reshape(-1, 2)
    n = bed.inward_normal(boundary)
    return (pts - np.asarray(boundary.start)) @ n


def head_point(skeleton: Skeleton, min_confidence: float = SIDE_MIN_CONFIDENCE) -> Point2:
    conf = skeleton.confidence
    if conf[NOSE] >= min_confidence:
        return Point2(*map(float, skeleton.xy[NOSE]))
    idx = [i for i in HEAD_FALLBACK if conf[i] >= min_confidence]
    if not idx:
        raise MissingLandmark("no head keypoint above the confidence threshold")
    c = skeleton.xy[idx].mean(axis=0)
    return Point2(float(c[0]), float(c[1]))


def _knees(skeleton: Skeleton, min_confidence: float) -> np.ndarray:
    conf = skeleton.confidence
    for i in (LEFT_KNEE, RIGHT_KNEE):
        if conf[i] < min_confidence:
            raise MissingLandmark(f"{KEYPOINT_NAMES[i]} confidence {conf[i]:.3f} below {min_confidence}")
    return skeleton.xy[[LEFT_KNEE, RIGHT_KNEE]]


def middle_offsets(points, bed: BedModel) -> np.ndarray:
    """Signed offset from the middle line, positive towards the left line."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = bed.left_normal
    return (pts - np.asarray(bed.middle_line.start)) @ n


def determine_side(skeleton: Skeleton, bed: BedModel,
                   min_confidence: float = SIDE_MIN_CONFIDENCE) -> Side:
    head = head_point(skeleton, min_confidence)
    knees = _knees(skeleton, min_confidence)
    off = middle_offsets(np.vstack([head, knees]), bed)
    if (off > 0).all():
        return Side.LEFT
    if (off < 0).all():
        return Side.RIGHT
    return Side.INDETERMINATE


def boundary_distances(points, bed: BedModel, side: Side) -> np.ndarray:
    """Signed distances of ``points`` to the boundary chosen by ``side``.

    An indeterminate side measures each point against its nearer long edge,
    which is the smaller of the two signed distances.
    """
    if side is Side.INDETERMINATE:
        dl = signed_distances(points, bed.left_line, bed)
        dr = signed_distances(points, bed.right_line, bed)
        return np.minimum(dl, dr)
    return signed_distances(points, bed.boundary(side), bed)


def knee_distances(skeleton: Skeleton, bed: BedModel, side: Side,
                   min_confidence: float = SIDE_MIN_CONFIDENCE) -> tuple[float, float]:
    knees = _knees(skeleton, min_confidence)
    d = boundary_distances(knees, bed, side)
    return float(d[0]), float(d[1])


@dataclass(frozen=True)
class RoiTransform:
    source_width: float
    source_height: float
    crop_origin: Point2
    crop_width: float
    crop_height: float
    target_width: int = ROI_WIDTH
    target_height: int = ROI_HEIGHT

    def __post_init__(self):
        if (self.target_width, self.target_height) != (ROI_WIDTH, ROI_HEIGHT):
            raise ValueError(f"target size is fixed at {ROI_WIDTH}x{ROI_HEIGHT}")
        x0, y0 = self.crop_origin
        if self.crop_width <= 0 or self.crop_height <= 0:
            raise ValueError("crop size must be positive")
        if x0 < 0 or y0 < 0 or x0 + self.crop_width > self.source_width or y0 + self.crop_height > self.source_height:
            raise OutOfBounds("crop rectangle exceeds the source image")

    @classmethod
    def full_image(cls, width, height) -> "RoiTransform":
        return cls(width, height, Point2(0.0, 0.0), width, height)

    @property
    def scale(self) -> tuple[float, float]:
        return self.target_width / self.crop_width, self.target_height / self.crop_height

    def forward(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        sx, sy = self.scale
        return (xy - np.asarray(self.crop_origin)) * np.array([sx, sy])

    def inverse(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        sx, sy = self.scale
        return xy / np.array([sx, sy]) + np.asarray(self.crop_origin)


def apply_roi(frame: FrameRecord, t: RoiTransform) -> FrameRecord:
    x0, y0 = t.crop_origin
    c = frame.bed_contour
    if ((c[:, 0] < x0) | (c[:, 0] > x0 + t.crop_width) | (c[:, 1] < y0) | (c[:, 1] > y0 + t.crop_height)).any():
        raise OutOfBounds("bed contour leaves the crop rectangle")
    kps = frame.keypoints.copy()
    kps[:, :2] = t.forward(kps[:, :2])
    return frame.replace(
        image_w=t.target_width,
        image_h=t.target_height,
        bed_contour=t.forward(c),
        keypoints=kps,
    )


def normalize_frame(frame: FrameRecord) -> FrameRecord:
    """Bring a frame to the working resolution, resizing the whole image."""
    if (frame.image_w, frame.image_h) == (ROI_WIDTH, ROI_HEIGHT):
        return frame
    return apply_roi(frame, RoiTransform.full_image(frame.image_w, frame.image_h))


def scene_from_frame(frame: FrameRecord) -> tuple[Skeleton, BedModel]:
    frame = normalize_frame(frame)
    return Skeleton(frame.keypoints), fit_bed_model(frame.bed_contour)
