"""Domain types and file ingest for therapy-session gaze data.

Four on-disk formats are understood: per-session score CSVs, annotation
interval CSVs, a participant profile CSV and a JSON manifest tying them
together.  Everything parsed here is validated eagerly; the resulting
objects are immutable.
"""
from __future__ import annotations

import csv
import enum
import json
import logging
import math
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_FPS = 25.0
SESSION_INDICES = (1, 8, 16)

SCORE_HEADER = ["frame_index", "subject_id", "partner_id", "score"]
ANNOTATION_HEADER = ["start_s", "end_s"]
PROFILE_HEADER = ["child_id", "age", "gender", "ados_social_affect",
                  "level_of_functioning", "svb_score"]


class DataError(ValueError):
    """Base class for input problems (CLI exit code 2)."""


class ParseError(DataError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ValidationError(DataError):
    pass


class TrainerPairWarning(UserWarning):
    """Rows between two trainers were dropped; ``count`` says how many."""

    def __init__(self, message, count=0):
        super().__init__(message)
        self.count = count


class Group(str, enum.Enum):
    PLAY = "PlayTherapy"
    STANDARD = "StandardTherapy"


class Activity(str, enum.Enum):
    HELLO_SONG = "HelloSong"
    MUSIC_MAKING = "MusicMaking"
    READING = "Reading"

    @property
    def group(self) -> Group:
        return Group.STANDARD if self is Activity.READING else Group.PLAY


class Gender(str, enum.Enum):
    M = "M"
    F = "F"


def _enum(cls, value, what):
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ValidationError(f"unknown {what} {value!r} (expected one of {allowed})") from None


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class ScoreFrame:
    frame_index: int
    subject_id: str
    partner_id: str
    score: float

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError(f"negative frame_index {self.frame_index}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")


class ScoreStream:
    """Per-frame mutual-gaze scores for one (subject, partner) pair.

    Frames are held as two parallel arrays; :attr:`frames` materialises
    :class:`ScoreFrame` objects on demand.
    """

    __slots__ = ("subject_id", "partner_id", "frame_index", "score")

    def __init__(self, subject_id, partner_id, frame_index, score):
        fi = np.array(frame_index, dtype=np.int64)
        sc = np.array(score, dtype=np.float64)
        if fi.ndim != 1 or fi.shape != sc.shape:
            raise ValidationError("frame_index and score must be 1-d and equal length")
        if fi.size:
            if fi[0] < 0:
                raise ValidationError("negative frame_index")
            if np.any(np.diff(fi) <= 0):
                raise ValidationError(
                    f"frames of stream ({subject_id}, {partner_id}) not strictly increasing")
            if not (np.all(sc >= 0.0) and np.all(sc <= 1.0)):
                raise ValidationError("score outside [0, 1]")
        fi.flags.writeable = False
        sc.flags.writeable = False
        self.subject_id = str(subject_id)
        self.partner_id = str(partner_id)
        self.frame_index = fi
        self.score = sc

    @classmethod
    def from_frames(cls, frames: Iterable[ScoreFrame]) -> "ScoreStream":
        frames = list(frames)
        if not frames:
            raise ValidationError("cannot infer pair from an empty frame list")
        pair = (frames[0].subject_id, frames[0].partner_id)
        if any((f.subject_id, f.partner_id) != pair for f in frames):
            raise ValidationError("frames belong to different pairs")
        return cls(pair[0], pair[1], [f.frame_index for f in frames],
                   [f.score for f in frames])

    @property
    def frames(self) -> list[ScoreFrame]:
        return [ScoreFrame(int(i), self.subject_id, self.partner_id, float(s))
                for i, s in zip(self.frame_index, self.score)]

    def __len__(self):
        return int(self.frame_index.size)

    def __eq__(self, other):
        if not isinstance(other, ScoreStream):
            return NotImplemented
        return (self.subject_id == other.subject_id
                and self.partner_id == other.partner_id
                and np.array_equal(self.frame_index, other.frame_index)
                and np.array_equal(self.score, other.score))

    def __hash__(self):
        return hash((self.subject_id, self.partner_id, len(self)))

    def __repr__(self):
        return f"ScoreStream({self.subject_id!r}, {self.partner_id!r}, n={len(self)})"


@dataclass(frozen=True, order=True)
class AnnotationInterval:
    start_s: float
    end_s: float
    label: str = "GazeAtTrainer"

    def __post_init__(self):
        if self.start_s < 0:
            raise ValidationError(f"negative annotation start {self.start_s}")
        if not self.start_s < self.end_s:
            raise ValidationError(f"annotation start {self.start_s} >= end {self.end_s}")
        if self.label != "GazeAtTrainer":
            raise ValidationError(f"unknown annotation label {self.label!r}")

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class SessionRecord:
    child_id: str
    group: Group
    activity: Activity
    session_index: int
    total_frames: int
    streams: tuple[ScoreStream, ...] = ()
    annotations: tuple[AnnotationInterval, ...] = ()
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        object.__setattr__(self, "group", _enum(Group, self.group, "group"))
        object.__setattr__(self, "activity", _enum(Activity, self.activity, "activity"))
        object.__setattr__(self, "streams", tuple(self.streams))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        where = f"child {self.child_id} {self.activity.value} session {self.session_index}"
        if self.activity.group is not self.group:
            raise ValidationError(
                f"{where}: activity {self.activity.value} does not belong to {self.group.value}")
        if self.session_index not in SESSION_INDICES:
            raise ValidationError(f"{where}: session_index must be one of {SESSION_INDICES}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ValidationError(f"{where}: fps must be positive")
        if int(self.total_frames) != self.total_frames or self.total_frames <= 0:
            raise ValidationError(f"{where}: total_frames must be a positive integer")
        pairs = set()
        for s in self.streams:
            if s.subject_id != self.child_id:
                raise ValidationError(
                    f"{where}: stream ({s.subject_id}, {s.partner_id}) does not start at the child")
            if (s.subject_id, s.partner_id) in pairs:
                raise ValidationError(f"{where}: duplicate stream for partner {s.partner_id}")
            pairs.add((s.subject_id, s.partner_id))
            if len(s) and s.frame_index[-1] >= self.total_frames:
                raise ValidationError(
                    f"{where}: frame {s.frame_index[-1]} beyond total_frames {self.total_frames}")
        end = self.duration_s
        prev = -1.0
        for a in self.annotations:
            if a.end_s > end + 1e-9:
                raise ValidationError(f"{where}: annotation ends after the session ({a.end_s} > {end})")
            if a.start_s < prev:
                raise ValidationError(f"{where}: annotations overlap or are unsorted")
            prev = a.end_s

    @property
    def duration_s(self) -> float:
        return self.total_frames / self.fps

    @property
    def observation_key(self) -> tuple[str, Activity]:
        return (self.child_id, self.activity)


@dataclass(frozen=True)
class ChildProfile:
    child_id: str
    age: float
    gender: Gender
    ados_social_affect: int
    level_of_functioning: int
    svb_score: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "gender", _enum(Gender, self.gender, "gender"))
        if not (math.isfinite(self.age) and self.age >= 0):
            raise ValidationError(f"{self.child_id}: invalid age {self.age}")
        if self.ados_social_affect < 0:
            raise ValidationError(f"{self.child_id}: ados_social_affect must be >= 0")
        if self.level_of_functioning not in (1, 2, 3):
            raise ValidationError(f"{self.child_id}: level_of_functioning must be 1, 2 or 3")
        if self.svb_score is not None and not is_svb_grid(self.svb_score):
            raise ValidationError(
                f"{self.child_id}: svb_score {self.svb_score} not in {{1.0, 1.5, ..., 4.0}}")


def is_svb_grid(x: float) -> bool:
    return 1.0 <= x <= 4.0 and float(x) * 2 == round(float(x) * 2)


@dataclass(frozen=True)
class Cohort:
    profiles: dict[str, ChildProfile] = field(default_factory=dict)
    sessions: tuple[SessionRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(sorted(
            self.sessions, key=lambda s: (s.child_id, s.activity.value, s.session_index))))
        seen = set()
        groups: dict[str, Group] = {}
        for s in self.sessions:
            if s.child_id not in self.profiles:
                raise ValidationError(f"session references unknown child_id {s.child_id!r}")
            key = (s.child_id, s.activity, s.session_index)
            if key in seen:
                raise ValidationError(
                    f"duplicate session {s.session_index} for ({s.child_id}, {s.activity.value})")
            seen.add(key)
            g = groups.setdefault(s.child_id, s.group)
            if g is not s.group:
                raise ValidationError(f"child {s.child_id} appears in both therapy groups")

    def observations(self) -> dict[tuple[str, Activity], list[SessionRecord]]:
        """Sessions grouped by observation key, keys and sessions sorted."""
        out: dict[tuple[str, Activity], list[SessionRecord]] = defaultdict(list)
        for s in self.sessions:
            out[s.observation_key].append(s)
        return {k: sorted(out[k], key=lambda s: s.session_index)
                for k in sorted(out, key=lambda k: (k[0], k[1].value))}

    def __iter__(self) -> Iterator[SessionRecord]:
        return iter(self.sessions)


# ---------------------------------------------------------------------------
# parsers


def _open_csv(path, header):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    first = next(reader, None)
    if first is None:
        fh.close()
        raise ParseError(path, 1, "empty file (missing header)")
    if [c.strip() for c in first] != header:
        fh.close()
        raise ParseError(path, 1, f"expected header {','.join(header)}")
    return fh, reader


def _float(text, path, line, what):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, line, f"non-numeric {what} {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"non-finite {what} {text!r}")
    return v


def _int(text, path, line, what):
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line, f"non-integer {what} {text!r}") from None


def parse_scores(path, subject) -> list[ScoreStream]:
    """Read a score CSV and return the subject's streams, one per partner.

    Rows where the subject appears as ``partner_id`` are swapped so the
    subject always comes first.  Rows between two other people (trainer to
    trainer) are dropped and reported with a :class:`TrainerPairWarning`.
    """
    subject = str(subject)
    rows: dict[str, list[tuple[int, float, int]]] = defaultdict(list)
    dropped = 0
    fh, reader = _open_csv(path, SCORE_HEADER)
    with fh:
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise ParseError(path, line, f"expected 4 columns, got {len(rec)}")
            frame = _int(rec[0], path, line, "frame_index")
            if frame < 0:
                raise ParseError(path, line, f"negative frame_index {frame}")
            a, b = rec[1].strip(), rec[2].strip()
            score = _float(rec[3], path, line, "score")
            if not 0.0 <= score <= 1.0:
                raise ParseError(path, line, f"score {score} outside [0, 1]")
            if a == subject:
                partner = b
            elif b == subject:
                partner = a
            else:
                dropped += 1
                continue
            if partner == subject:
                raise ParseError(path, line, "subject paired with itself")
            rows[partner].append((frame, score, line))
    if dropped:
        msg = f"{path}: dropped {dropped} row(s) not involving {subject} (trainer-trainer pairs)"
        log.info(msg)
        warnings.warn(TrainerPairWarning(msg, dropped), stacklevel=2)
    streams = []
    for partner in sorted(rows):
        recs = sorted(rows[partner], key=lambda r: (r[0], r[2]))
        frames = np.array([r[0] for r in recs], dtype=np.int64)
        dup = np.flatnonzero(np.diff(frames) == 0)
        if dup.size:
            r = recs[dup[0] + 1]
            raise ValidationError(
                f"{path}:{r[2]}: duplicate frame {r[0]} for pair ({subject}, {partner})")
        streams.append(ScoreStream(subject, partner, frames, [r[1] for r in recs]))
    return streams


def normalize_intervals(intervals, limit_s):
    """Clip ``(start, end)`` pairs to ``[0, limit_s]``, sort and merge overlaps."""
    clipped = []
    for start, end in intervals:
        start, end = max(0.0, start), min(float(limit_s), end)
        if start < end:
            clipped.append((start, end))
    clipped.sort()
    merged: list[list[float]] = []
    for start, end in clipped:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [AnnotationInterval(s, e) for s, e in merged]


def parse_annotations(path, fps, total_frames) -> list[AnnotationInterval]:
    raw = []
    fh, reader = _open_csv(path, ANNOTATION_HEADER)
    with fh:
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise ParseError(path, line, f"expected 2 columns, got {len(rec)}")
            start = _float(rec[0], path, line, "start_s")
            end = _float(rec[1], path, line, "end_s")
            if start < 0 or end < 0:
                raise ParseError(path, line, "negative time")
            if not start < end:
                raise ParseError(path, line, f"start {start} >= end {end}")
            raw.append((start, end))
    return normalize_intervals(raw, total_frames / fps)


def parse_profiles(path) -> dict[str, ChildProfile]:
    profiles: dict[str, ChildProfile] = {}
    fh, reader = _open_csv(path, PROFILE_HEADER)
    with fh:
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 6:
                raise ParseError(path, line, f"expected 6 columns, got {len(rec)}")
            cid = rec[0].strip()
            if not cid:
                raise ParseError(path, line, "empty child_id")
            if cid in profiles:
                raise ParseError(path, line, f"duplicate child_id {cid!r}")
            svb = rec[5].strip()
            try:
                profiles[cid] = ChildProfile(
                    child_id=cid,
                    age=_float(rec[1], path, line, "age"),
                    gender=rec[2].strip(),
                    ados_social_affect=_int(rec[3], path, line, "ados_social_affect"),
                    level_of_functioning=_int(rec[4], path, line, "level_of_functioning"),
                    svb_score=_float(svb, path, line, "svb_score") if svb else None,
                )
            except ValidationError as exc:
                raise ParseError(path, line, str(exc)) from None
    return profiles


def parse_manifest(path) -> Cohort:
    """Load and validate a whole cohort from its JSON manifest.

    Relative paths inside the manifest resolve against the manifest's
    directory.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "profiles_path" not in doc:
        raise ValidationError(f"{path}: manifest needs 'profiles_path' and 'observations'")
    base = path.parent
    profiles = parse_profiles(base / doc["profiles_path"])
    sessions = []
    for obs in doc.get("observations", []):
        try:
            cid = str(obs["child_id"])
            group = _enum(Group, obs["group"], "group")
            activity = _enum(Activity, obs["activity"], "activity")
            entries = obs["sessions"]
        except KeyError as exc:
            raise ValidationError(f"{path}: observation missing field {exc}") from None
        if cid not in profiles:
            raise ValidationError(f"{path}: unknown child_id {cid!r}")
        for ses in entries:
            try:
                index = int(ses["session_index"])
                fps = float(ses.get("fps", DEFAULT_FPS))
                total = int(ses["total_frames"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: bad session entry for {cid} ({exc})") from None
            if index not in SESSION_INDICES:
                raise ValidationError(
                    f"{path}: {cid} {activity.value}: session_index {index} not in {SESSION_INDICES}")
            streams = parse_scores(base / ses["scores_path"], cid) if ses.get("scores_path") else []
            ann_path = ses.get("annotations_path")
            annotations = parse_annotations(base / ann_path, fps, total) if ann_path else []
            sessions.append(SessionRecord(
                child_id=cid, group=group, activity=activity, session_index=index,
                fps=fps, total_frames=total, streams=tuple(streams),
                annotations=tuple(annotations)))
    return Cohort(profiles=profiles, sessions=tuple(sessions))


# ---------------------------------------------------------------------------
# writers


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def format_scores(streams: Iterable[ScoreStream]) -> str:
    lines = [",".join(SCORE_HEADER)]
    for s in streams:
        prefix = f",{s.subject_id},{s.partner_id},"
        lines.extend(f"{i}{prefix}{v!r}" for i, v in zip(s.frame_index.tolist(), s.score.tolist()))
    return "\n".join(lines) + "\n"


def format_annotations(intervals: Iterable[AnnotationInterval]) -> str:
    lines = [",".join(ANNOTATION_HEADER)]
    lines.extend(f"{a.start_s!r},{a.end_s!r}" for a in intervals)
    return "\n".join(lines) + "\n"


def format_profiles(profiles: dict[str, ChildProfile]) -> str:
    lines = [",".join(PROFILE_HEADER)]
    for p in profiles.values():
        svb = "" if p.svb_score is None else repr(float(p.svb_score))
        lines.append(f"{p.child_id},{float(p.age)!r},{p.gender.value},{p.ados_social_affect},"
                     f"{p.level_of_functioning},{svb}")
    return "\n".join(lines) + "\n"


def write_cohort(cohort: Cohort, directory) -> Path:
    """Serialise a cohort as manifest + CSV files; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    atomic_write_text(directory / "profiles.csv", format_profiles(cohort.profiles))
    observations = []
    for (cid, activity), sessions in cohort.observations().items():
        entries = []
        for s in sessions:
            stem = f"{cid}_{activity.value}_s{s.session_index}"
            scores = f"scores/{stem}.csv"
            notes = f"annotations/{stem}.csv"
            atomic_write_text(directory / scores, format_scores(s.streams))
            atomic_write_text(directory / notes, format_annotations(s.annotations))
            entries.append({"session_index": s.session_index, "fps": s.fps,
                            "total_frames": s.total_frames, "scores_path": scores,
                            "annotations_path": notes})
        observations.append({"child_id": cid, "group": sessions[0].group.value,
                             "activity": activity.value, "sessions": entries})
    manifest = {"observations": observations, "profiles_path": "profiles.csv"}
    out = directory / "manifest.json"
    atomic_write_text(out, json.dumps(manifest, indent=2) + "\n")
    return out
