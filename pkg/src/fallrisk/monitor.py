"""Per-frame scoring and debounced alerting over a stream of frame records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import MissingLandmark, ParseError, SchemaMismatch
from .features import AT_RISK, NOT_AT_RISK, FeatureConfig, build_features
from .geometry import Side, determine_side, scene_from_frame
from .records import FrameReader, FrameRecord, dumps, parse_frame

RAISED = "raised"
CLEARED = "cleared"


@dataclass(frozen=True)
class ScoreConfig:
    threshold: float = 0.5
    features: FeatureConfig = FeatureConfig()
    echo_features: bool = False


@dataclass
class RiskScore:
    ts: float
    session: str
    probability: float
    label: str
    degraded: bool = False
    features: list | None = None

    def to_dict(self) -> dict:
        d = {
            "type": "score",
            "ts": self.ts,
            "session": self.session,
            "probability": self.probability,
            "label": self.label,
            "degraded": self.degraded,
        }
        if self.features is not None:
            d["features"] = self.features
        return d


@dataclass
class AlertEvent:
    ts: float
    session: str
    kind: str
    probability: float
    consecutive_frames: int
    reason: str = "debounce"

    def to_dict(self) -> dict:
        return {
            "type": "alert",
            "ts": self.ts,
            "session": self.session,
            "kind": self.kind,
            "probability": self.probability,
            "consecutive_frames": self.consecutive_frames,
            "reason": self.reason,
        }


def score_frame(frame: FrameRecord, model, cfg: ScoreConfig = ScoreConfig(),
                previous: RiskScore | None = None) -> RiskScore:
    """Score one frame.

    When the side rule cannot resolve the head or knees the score is flagged
    ``degraded`` and carries the previous label (and probability) forward.
    With no previous score the fallback features are used as-is.
    """
    if model.feature_set is None:
        raise SchemaMismatch("model has no feature set; cannot build features from frames")
    skeleton, bed = scene_from_frame(frame)
    degraded = False
    try:
        side = determine_side(skeleton, bed, cfg.features.side_min_confidence)
    except MissingLandmark:
        degraded = True
        side = Side.INDETERMINATE
    try:
        fv = build_features(skeleton, bed, model.feature_set, cfg.features, side)
    except MissingLandmark:
        if previous is None:
            raise
        return RiskScore(frame.ts, frame.session, previous.probability, previous.label, True)
    echo = fv.values.tolist() if cfg.echo_features else None
    if degraded and previous is not None:
        return RiskScore(frame.ts, frame.session, previous.probability, previous.label, True, echo)
    p = float(model.predict_proba(fv)[0])
    label = AT_RISK if p >= cfg.threshold else NOT_AT_RISK
    return RiskScore(frame.ts, frame.session, p, label, degraded, echo)


@dataclass
class AlertState:
    consecutive_at_risk: int = 0
    consecutive_safe: int = 0
    active: bool = False


class Debouncer:
    """Raise after N consecutive at-risk frames, clear after M safe ones."""

    def __init__(self, raise_after: int = 3, clear_after: int = 5):
        if raise_after < 1 or clear_after < 1:
            raise ValueError("debounce counts must be >= 1")
        self.raise_after = raise_after
        self.clear_after = clear_after
        self.state = AlertState()

    def update(self, at_risk: bool):
        """Feed one label; returns ``(kind, consecutive_frames)`` or None."""
        s = self.state
        if at_risk:
            s.consecutive_at_risk += 1
            s.consecutive_safe = 0
            if not s.active and s.consecutive_at_risk == self.raise_after:
                s.active = True
                return RAISED, s.consecutive_at_risk
        else:
            s.consecutive_safe += 1
            s.consecutive_at_risk = 0
            if s.active and s.consecutive_safe == self.clear_after:
                s.active = False
                return CLEARED, s.consecutive_safe
        return None


def debounce(labels, raise_after: int, clear_after: int, flush: bool = True):
    """Events ``(index, kind)`` for a boolean label sequence."""
    d = Debouncer(raise_after, clear_after)
    events = []
    for i, lab in enumerate(labels):
        ev = d.update(bool(lab))
        if ev:
            events.append((i, ev[0]))
    if flush and d.state.active:
        events.append((len(labels) - 1, CLEARED))
    return events


@dataclass
class _Session:
    debouncer: Debouncer
    last: RiskScore | None = None


@dataclass
class Monitor:
    model: object
    raise_after: int = 3
    clear_after: int = 5
    cfg: ScoreConfig = ScoreConfig()
    sessions: dict = field(default_factory=dict)
    reader: FrameReader = field(default_factory=FrameReader)

    def __post_init__(self):
        if self.raise_after < 1 or self.clear_after < 1:
            raise ValueError("debounce counts must be >= 1")

    def _session(self, name) -> _Session:
        if name not in self.sessions:
            self.sessions[name] = _Session(Debouncer(self.raise_after, self.clear_after))
        return self.sessions[name]

    def process(self, frame: FrameRecord):
        sess = self._session(frame.session)
        score = score_frame(frame, self.model, self.cfg, sess.last)
        sess.last = score
        out = [score]
        ev = sess.debouncer.update(score.label == AT_RISK)
        if ev:
            out.append(AlertEvent(frame.ts, frame.session, ev[0], score.probability, ev[1]))
        return out

    def flush(self):
        out = []
        for name in sorted(self.sessions):
            sess = self.sessions[name]
            st = sess.debouncer.state
            if st.active and sess.last is not None:
                st.active = False
                out.append(AlertEvent(sess.last.ts, name, CLEARED, sess.last.probability,
                                      st.consecutive_safe, reason="end_of_stream"))
        return out


def run_monitor(lines, model, raise_after=3, clear_after=5, threshold=0.5, echo_features=False,
                on_diagnostic=None):
    """Yield output records (dicts) for every valid frame, then flush events.

    Malformed or invalid lines are reported through ``on_diagnostic(message)``
    and skipped; they never affect the other records.
    """
    mon = Monitor(model, raise_after, clear_after, ScoreConfig(threshold, FeatureConfig(), echo_features))
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            frame = parse_frame(line, line_no)
            mon.reader.check(frame, line_no)
            records = mon.process(frame)
            mon.reader.commit(frame)
        except (ParseError, MissingLandmark, ValueError) as exc:
            if on_diagnostic is not None:
                msg = str(exc) if isinstance(exc, ParseError) else f"line {line_no}: {exc}"
                on_diagnostic(f"{type(exc).__name__}: {msg}")
            continue
        for rec in records:
            yield rec.to_dict()
    for ev in mon.flush():
        yield ev.to_dict()


def format_record(record: dict) -> str:
    return dumps(record)


def parse_output(line: str) -> dict:
    return json.loads(line)
