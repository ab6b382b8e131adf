"""Per-observation gaze measures.

An observation is one (child, activity) pair; its sessions 1, 8 and 16 are
pooled.  Frames missing from every score stream count in the denominator
but never as mutual gaze.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_model import Activity, Cohort, DataError, Group, SessionRecord
from .kernels import run_lengths

MEASURES_HEADER = ["child_id", "activity", "group", "mutual_gaze_ratio",
                   "mutual_gaze_duration_frames", "human_coded_ratio",
                   "session_1_ratio", "session_1_duration_frames",
                   "session_8_ratio", "session_8_duration_frames",
                   "session_16_ratio", "session_16_duration_frames"]


@dataclass(frozen=True)
class MeasureConfig:
    score_threshold: float = 0.6
    min_run_seconds: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.score_threshold < 1.0:
            raise ValueError("score_threshold must lie in (0, 1)")
        if not self.min_run_seconds > 0:
            raise ValueError("min_run_seconds must be positive")

    def min_run_frames(self, fps: float) -> int:
        """Runs must be strictly longer than this many frames to count."""
        # tolerance keeps 1.0 s * 25 fps at exactly 25
        return math.ceil(self.min_run_seconds * fps - 1e-9)


@dataclass(frozen=True)
class MeasureSet:
    child_id: str
    activity: Activity
    group: Group
    mutual_gaze_ratio: float
    mutual_gaze_duration_frames: float | None
    human_coded_ratio: float
    per_session: dict[int, tuple[float, float | None]] = field(default_factory=dict)

    @property
    def observation_key(self) -> tuple[str, Activity]:
        return (self.child_id, self.activity)


def binarize(session: SessionRecord, cfg: MeasureConfig = MeasureConfig()) -> np.ndarray:
    """Frame mask: True where any child-trainer score is strictly above threshold."""
    out = np.zeros(session.total_frames, dtype=np.bool_)
    for stream in session.streams:
        out[stream.frame_index[stream.score > cfg.score_threshold]] = True
    return out


def gaze_runs(binarized) -> list[tuple[int, int]]:
    starts, lengths = run_lengths(binarized)
    return list(zip(starts.tolist(), lengths.tolist()))


def _check(sessions):
    if len(sessions) == 0:
        raise DataError("an observation needs at least one session")


def _qualifying_lengths(sessions, cfg):
    out = []
    for s in sessions:
        _, lengths = run_lengths(binarize(s, cfg))
        out.append(lengths[lengths > cfg.min_run_frames(s.fps)])
    return np.concatenate(out) if out else np.empty(0, np.int64)


def mutual_gaze_ratio(sessions: Sequence[SessionRecord], cfg: MeasureConfig = MeasureConfig()) -> float:
    """Pooled fraction of frames flagged as mutual gaze."""
    _check(sessions)
    hits = sum(int(binarize(s, cfg).sum()) for s in sessions)
    return hits / sum(s.total_frames for s in sessions)


def mutual_gaze_duration(sessions: Sequence[SessionRecord],
                         cfg: MeasureConfig = MeasureConfig()) -> float | None:
    """Mean length in frames of runs longer than ``min_run_seconds``.

    Runs from all sessions are pooled before averaging.  Returns ``None`` if
    no run qualifies.
    """
    _check(sessions)
    lengths = _qualifying_lengths(sessions, cfg)
    if lengths.size == 0:
        return None
    return float(lengths.sum()) / lengths.size


def human_coded_ratio(sessions: Sequence[SessionRecord]) -> float:
    _check(sessions)
    looked = sum(a.length_s for s in sessions for a in s.annotations)
    total = sum(s.duration_s for s in sessions)
    return min(1.0, looked / total)


def observation_measures(sessions: Sequence[SessionRecord],
                         cfg: MeasureConfig = MeasureConfig()) -> MeasureSet:
    _check(sessions)
    keys = {s.observation_key for s in sessions}
    if len(keys) != 1:
        raise DataError(f"sessions span several observations: {sorted(keys)}")
    first = sessions[0]
    per_session = {s.session_index: (mutual_gaze_ratio([s], cfg), mutual_gaze_duration([s], cfg))
                   for s in sorted(sessions, key=lambda s: s.session_index)}
    return MeasureSet(
        child_id=first.child_id,
        activity=first.activity,
        group=first.group,
        mutual_gaze_ratio=mutual_gaze_ratio(sessions, cfg),
        mutual_gaze_duration_frames=mutual_gaze_duration(sessions, cfg),
        human_coded_ratio=human_coded_ratio(sessions),
        per_session=per_session,
    )


def compute_measures(cohort: Cohort, cfg: MeasureConfig = MeasureConfig()) -> list[MeasureSet]:
    """One :class:`MeasureSet` per observation, ordered by observation key."""
    return [observation_measures(sessions, cfg) for sessions in cohort.observations().values()]


def _fmt(x):
    return "" if x is None else repr(float(x))


def format_measures_csv(measures: Sequence[MeasureSet]) -> str:
    lines = [",".join(MEASURES_HEADER)]
    for m in measures:
        cells = [m.child_id, m.activity.value, m.group.value, _fmt(m.mutual_gaze_ratio),
                 _fmt(m.mutual_gaze_duration_frames), _fmt(m.human_coded_ratio)]
        for idx in (1, 8, 16):
            ratio, dur = m.per_session.get(idx, (None, None))
            cells += [_fmt(ratio), _fmt(dur)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def parse_measures_csv(text: str) -> list[MeasureSet]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != MEASURES_HEADER:
        raise DataError("not a measures CSV (header mismatch)")

    def num(x):
        return float(x) if x != "" else None

    out = []
    for r in rows[1:]:
        if not r:
            continue
        per = {}
        for k, idx in enumerate((1, 8, 16)):
            ratio, dur = num(r[6 + 2 * k]), num(r[7 + 2 * k])
            if ratio is not None:
                per[idx] = (ratio, dur)
        out.append(MeasureSet(r[0], Activity(r[1]), Group(r[2]), float(r[3]), num(r[4]),
                              float(r[5]), per))
    return out
