"""Synthetic therapy sessions with known gaze ground truth.

Each session alternates between gaze and non-gaze spells whose lengths
are geometric in frames (a memoryless two-state chain).  Gaze frames get a
score above the 0.6 cut-off on one of the trainer streams, everything else
sits below it.  Noise can be made "safe" (truncated so no frame crosses the
cut-off) or left Gaussian, with an optional per-session offset that mimics
detector calibration drift between recordings.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data_model import (SESSION_INDICES, Activity, AnnotationInterval, ChildProfile, Cohort,
                         Group, ScoreStream, SessionRecord)
from .kernels import run_lengths

THRESHOLD = 0.6
SCORE_DECIMALS = 4


@dataclass(frozen=True)
class SynthConfig:
    fps: float = 25.0
    duration_s: float = 900.0
    mean_gaze_dwell_s: float = 2.4
    mean_nongaze_dwell_s: float = 9.6
    gaze_weight: float = 1.0
    score_margin: float = 0.2
    noise_sd: float = 0.0
    noise_safe: bool = True
    session_bias_sd: float = 0.0
    trainers: tuple[str, ...] = ("T1", "T2")
    seed: int = 0

    def __post_init__(self):
        if not (self.fps > 0 and self.duration_s > 0):
            raise ValueError("fps and duration_s must be positive")
        if not (self.mean_gaze_dwell_s > 0 and self.mean_nongaze_dwell_s > 0):
            raise ValueError("mean dwell times must be positive")
        if not 0.0 <= self.gaze_weight <= 1.0:
            raise ValueError("gaze_weight must be in [0, 1]")
        if not 10.0 ** -SCORE_DECIMALS < self.score_margin < 0.4:
            raise ValueError("score_margin must lie in (1e-4, 0.4)")
        if self.noise_sd < 0 or self.session_bias_sd < 0:
            raise ValueError("noise levels must be non-negative")
        if not self.trainers:
            raise ValueError("need at least one trainer")

    @property
    def total_frames(self) -> int:
        return max(1, int(round(self.duration_s * self.fps)))

    @property
    def p_exit_gaze(self) -> float:
        return min(1.0, 1.0 / (self.mean_gaze_dwell_s * self.fps))

    @property
    def p_enter_gaze(self) -> float:
        return self.gaze_weight * min(1.0, 1.0 / (self.mean_nongaze_dwell_s * self.fps))

    @property
    def stationary_ratio(self) -> float:
        """Long-run fraction of gaze frames."""
        a, b = self.p_enter_gaze, self.p_exit_gaze
        return a / (a + b) if a + b > 0 else 0.0


# Per-frame noise plus a per-session offset; on 100-observation cohorts this
# gives automated-vs-annotated correlations of roughly 0.5-0.7.
CALIBRATED_NOISE = {"noise_sd": 0.1, "session_bias_sd": 0.12, "noise_safe": False}


@dataclass(frozen=True)
class SynthSession:
    session: SessionRecord
    truth_labels: np.ndarray
    truth_ratio: float
    truth_runs: list[tuple[int, int]]


@dataclass(frozen=True)
class SynthCohort:
    cohort: Cohort
    truth_ratio: dict = field(default_factory=dict)  # observation key -> pooled ratio
    child_truth_ratio: dict = field(default_factory=dict)  # child_id -> pooled ratio


def two_state_labels(n: int, p_enter: float, p_exit: float, rng) -> np.ndarray:
    """Frame labels of a two-state chain started from its stationary law."""
    labels = np.zeros(n, dtype=np.bool_)
    stationary = p_enter / (p_enter + p_exit) if p_enter + p_exit > 0 else 0.0
    state = bool(rng.random() < stationary)
    pos = 0
    while pos < n:
        p = p_exit if state else p_enter
        if p <= 0.0:
            dwell = n - pos
        else:
            # geometric number of frames until leaving, support {1, 2, ...}
            dwell = int(rng.geometric(p))
        end = min(n, pos + dwell)
        if state:
            labels[pos:end] = True
        pos = end
        state = not state
    return labels


def _scores(labels, target, cfg, rng, bias):
    """Score array for one trainer stream; ``target`` marks frames gazed at it."""
    n = labels.size
    noise = rng.normal(0.0, cfg.noise_sd, n) if cfg.noise_sd > 0 else np.zeros(n)
    if cfg.noise_safe:
        lim = cfg.score_margin - 10.0 ** -(SCORE_DECIMALS - 1)
        noise = np.clip(noise + bias, -lim, lim)
    else:
        noise = noise + bias
    base = np.where(target, THRESHOLD + cfg.score_margin, THRESHOLD - cfg.score_margin)
    return np.round(np.clip(base + noise, 0.0, 1.0), SCORE_DECIMALS)


def generate_session(cfg: SynthConfig, child_id="C01", activity=Activity.MUSIC_MAKING,
                     session_index: int = 1) -> SynthSession:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.total_frames
    labels = two_state_labels(n, cfg.p_enter_gaze, cfg.p_exit_gaze, rng)
    starts, lengths = run_lengths(labels)
    # each gaze spell is directed at one trainer
    who = rng.integers(0, len(cfg.trainers), starts.size)
    owner = np.full(n, -1, dtype=np.int64)
    for s, ln, w in zip(starts, lengths, who):
        owner[s:s + ln] = w
    bias = rng.normal(0.0, cfg.session_bias_sd) if cfg.session_bias_sd > 0 else 0.0
    frames = np.arange(n, dtype=np.int64)
    streams = tuple(ScoreStream(child_id, trainer, frames, _scores(labels, owner == k, cfg, rng, bias))
                    for k, trainer in enumerate(cfg.trainers))
    notes = tuple(AnnotationInterval(s / cfg.fps, (s + ln) / cfg.fps)
                  for s, ln in zip(starts.tolist(), lengths.tolist()))
    activity = Activity(activity)
    session = SessionRecord(child_id=child_id, group=activity.group, activity=activity,
                            session_index=session_index, fps=cfg.fps, total_frames=n,
                            streams=streams, annotations=notes)
    runs = list(zip(starts.tolist(), lengths.tolist()))
    return SynthSession(session, labels, int(labels.sum()) / n, runs)


# ---------------------------------------------------------------------------
# cohorts


@dataclass(frozen=True)
class ProfileModel:
    """Demographics drawn per therapy group (defaults match the bundled demographics fixture)."""

    age_mean: dict = field(default_factory=lambda: {Group.PLAY: 7.82, Group.STANDARD: 7.30})
    age_sd: dict = field(default_factory=lambda: {Group.PLAY: 2.52, Group.STANDARD: 2.16})
    ados_mean: dict = field(default_factory=lambda: {Group.PLAY: 17.27, Group.STANDARD: 16.30})
    ados_sd: dict = field(default_factory=lambda: {Group.PLAY: 4.56, Group.STANDARD: 5.64})
    p_female: dict = field(default_factory=lambda: {Group.PLAY: 3 / 11, Group.STANDARD: 0.0})
    lof_probs: tuple = (1 / 3, 1 / 3, 1 / 3)
    svb_noise_sd: float = 0.25

    def draw(self, child_id, group, rng) -> ChildProfile:
        age = float(np.clip(rng.normal(self.age_mean[group], self.age_sd[group]), 5.0, 12.0))
        ados = int(max(0, round(rng.normal(self.ados_mean[group], self.ados_sd[group]))))
        gender = "F" if rng.random() < self.p_female[group] else "M"
        lof = int(rng.choice(3, p=self.lof_probs)) + 1
        return ChildProfile(child_id, round(age, 2), gender, ados, lof)


def snap_svb(x: float) -> float:
    return float(np.clip(np.round(2.0 * x) / 2.0, 1.0, 4.0))


def design_sizes(n_obs: int) -> tuple[int, int, int]:
    """(music, hello, reading) observation counts in an 11:7:10 mix."""
    n_read = max(1, int(round(n_obs * 10 / 28)))
    n_play = n_obs - n_read
    n_hello = int(round(n_play * 7 / 18))
    return n_play - n_hello, n_hello, n_read


def generate_cohort(n_obs: int = 28, profile_model: ProfileModel | None = None,
                    link: str = "GazeInformative", seed: int = 0,
                    session_cfg: SynthConfig | None = None,
                    ratio_range: tuple[float, float] = (0.05, 0.45)) -> SynthCohort:
    """Synthetic cohort with the real cohort's activity layout.

    Play-Therapy children all do Music Making and the first few also do
    Hello Song; Standard-Therapy children do Reading.  Each child gets a gaze
    propensity drawn from ``ratio_range`` that sets their dwell means.  Under
    ``GazeInformative`` the expert score is ``1 + 6 * ratio + noise`` (snapped to
    the 0.5 grid); under ``GazeUninformative`` it depends only on the profile.
    """
    if n_obs < 5:
        raise ValueError("n_obs must be >= 5")
    if link not in ("GazeInformative", "GazeUninformative"):
        raise ValueError(f"unknown link {link!r}")
    pm = profile_model or ProfileModel()
    base = session_cfg or SynthConfig(duration_s=120.0)
    rng = np.random.default_rng(seed)
    n_music, n_hello, n_read = design_sizes(n_obs)
    layout = []
    for i in range(n_music):
        cid = f"P{i + 1:02d}"
        layout.append((cid, Group.PLAY, [Activity.MUSIC_MAKING] + ([Activity.HELLO_SONG] if i < n_hello else [])))
    for i in range(n_read):
        layout.append((f"S{i + 1:02d}", Group.STANDARD, [Activity.READING]))

    profiles, sessions = {}, []
    truth, child_truth = {}, {}
    seeds = rng.integers(0, 2**63 - 1, size=len(layout))
    for (cid, group, activities), child_seed in zip(layout, seeds):
        crng = np.random.default_rng(int(child_seed))
        profile = pm.draw(cid, group, crng)
        propensity = float(crng.uniform(*ratio_range))
        nongaze = base.mean_gaze_dwell_s * (1.0 - propensity) / propensity
        hits = frames = 0
        for activity in activities:
            obs_hits = obs_frames = 0
            for index in SESSION_INDICES:
                cfg = replace(base, mean_nongaze_dwell_s=nongaze,
                              seed=int(crng.integers(0, 2**63 - 1)))
                ss = generate_session(cfg, cid, activity, index)
                sessions.append(ss.session)
                obs_hits += int(ss.truth_labels.sum())
                obs_frames += ss.truth_labels.size
            truth[(cid, activity)] = obs_hits / obs_frames
            hits += obs_hits
            frames += obs_frames
        child_truth[cid] = hits / frames
        eps = crng.normal(0.0, pm.svb_noise_sd)
        if link == "GazeInformative":
            svb = snap_svb(1.0 + 6.0 * child_truth[cid] + eps)
        else:
            svb = snap_svb(1.0 + 0.75 * (profile.level_of_functioning - 1) + eps)
        profiles[cid] = replace(profile, svb_score=svb)
    return SynthCohort(Cohort(profiles, tuple(sessions)), truth, child_truth)


__all__ = ["CALIBRATED_NOISE", "SynthConfig", "SynthSession", "SynthCohort", "ProfileModel", "generate_session",
           "generate_cohort", "two_state_labels", "design_sizes", "snap_svb"]
