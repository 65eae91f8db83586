"""Frame records and their newline-delimited JSON encoding.

One record per line::

    {"ts": 0.0, "session": "bed-3", "image_w": 1080, "image_h": 828,
     "bed_contour": [[x, y], ...], "keypoints": [[x, y, conf], ...]}

Serialization is canonical: fixed key order, no whitespace, floats written
with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

N_KEYPOINTS = 17

FRAME_KEYS = ("ts", "session", "image_w", "image_h", "bed_contour", "keypoints")


@dataclass(frozen=True)
class FrameRecord:
    ts: float
    session: str
    image_w: int
    image_h: int
    bed_contour: np.ndarray  # (n, 2)
    keypoints: np.ndarray  # (17, 3): x, y, confidence

    def __post_init__(self):
        contour = np.array(self.bed_contour, dtype=float).reshape(-1, 2)
        kps = np.array(self.keypoints, dtype=float)
        contour.setflags(write=False)
        kps.setflags(write=False)
        object.__setattr__(self, "bed_contour", contour)
        object.__setattr__(self, "keypoints", kps)

    def replace(self, **changes) -> "FrameRecord":
        fields = {k: getattr(self, k) for k in FRAME_KEYS}
        fields.update(changes)
        return FrameRecord(**fields)

    def to_dict(self) -> dict:
        return {
            "ts": float(self.ts),
            "session": self.session,
            "image_w": int(self.image_w),
            "image_h": int(self.image_h),
            "bed_contour": [[float(x), float(y)] for x, y in self.bed_contour],
            "keypoints": [[float(x), float(y), float(c)] for x, y, c in self.keypoints],
        }


def dumps(obj) -> str:
    """Canonical single-line JSON used for every record this package writes."""
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def serialize_frame(frame: FrameRecord) -> str:
    return dumps(frame.to_dict())


def _number(value, what, line_no):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{what} must be a number, got {value!r}", line_no)
    if not math.isfinite(value):
        raise ValidationError(f"{what} is not finite", line_no)
    return float(value)


def frame_from_dict(obj, line_no=None, check_bounds=True) -> FrameRecord:
    """Validate a decoded record and build a FrameRecord."""
    if not isinstance(obj, dict):
        raise ValidationError("record is not an object", line_no)
    missing = [k for k in FRAME_KEYS if k not in obj]
    if missing:
        raise ValidationError(f"missing field(s): {', '.join(missing)}", line_no)

    ts = _number(obj["ts"], "ts", line_no)
    session = obj["session"]
    if not isinstance(session, str):
        raise ValidationError("session must be a string", line_no)
    w = obj["image_w"]
    h = obj["image_h"]
    for name, v in (("image_w", w), ("image_h", h)):
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise ValidationError(f"{name} must be a positive integer", line_no)

    contour = obj["bed_contour"]
    if not isinstance(contour, list) or len(contour) < 4:
        n = len(contour) if isinstance(contour, list) else "?"
        raise ValidationError(f"bed_contour needs at least 4 points, got {n}", line_no)
    pts = []
    for i, p in enumerate(contour):
        if not isinstance(p, list) or len(p) != 2:
            raise ValidationError(f"bed_contour[{i}] must be [x, y]", line_no)
        pts.append([_number(v, f"bed_contour[{i}]", line_no) for v in p])

    kps_in = obj["keypoints"]
    if not isinstance(kps_in, list) or len(kps_in) != N_KEYPOINTS:
        n = len(kps_in) if isinstance(kps_in, list) else "?"
        raise ValidationError(f"expected {N_KEYPOINTS} keypoints, got {n}", line_no)
    kps = []
    for i, k in enumerate(kps_in):
        if not isinstance(k, list) or len(k) != 3:
            raise ValidationError(f"keypoints[{i}] must be [x, y, confidence]", line_no)
        x, y, c = (_number(v, f"keypoints[{i}]", line_no) for v in k)
        if not 0.0 <= c <= 1.0:
            raise ValidationError(f"keypoints[{i}] confidence {c} outside [0, 1]", line_no)
        kps.append([x, y, c])

    if check_bounds:
        allxy = np.array(pts + [k[:2] for k in kps])
        if (allxy[:, 0] < 0).any() or (allxy[:, 0] > w).any() or (allxy[:, 1] < 0).any() or (allxy[:, 1] > h).any():
            raise ValidationError("coordinates outside image bounds", line_no)

    return FrameRecord(ts=ts, session=session, image_w=w, image_h=h, bed_contour=pts, keypoints=kps)


def parse_frame(line: str, line_no=None) -> FrameRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON ({exc.msg})", line_no) from None
    return frame_from_dict(obj, line_no)


@dataclass
class FrameReader:
    """Stateful ingestion that enforces per-session timestamp monotonicity."""

    last_ts: dict = field(default_factory=dict)

    def check(self, frame: FrameRecord, line_no=None):
        prev = self.last_ts.get(frame.session)
        if prev is not None and frame.ts < prev:
            raise ValidationError(
                f"non-monotone timestamp {frame.ts} < {prev} in session {frame.session!r}", line_no
            )

    def commit(self, frame: FrameRecord):
        self.last_ts[frame.session] = frame.ts

    def ingest(self, line: str, line_no=None) -> FrameRecord:
        frame = parse_frame(line, line_no)
        self.check(frame, line_no)
        self.commit(frame)
        return frame


def ingest_frame(line: str, reader: FrameReader | None = None, line_no=None) -> FrameRecord:
    if reader is None:
        return parse_frame(line, line_no)
    return reader.ingest(line, line_no)
