import numpy as np
import pytest
from hypothesis import settings

from socialgaze.data_model import (Activity, AnnotationInterval, ChildProfile, Cohort, Group,
                                   ScoreStream, SessionRecord)

# first calls pay numba compilation, so wall-clock deadlines are meaningless
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def make_session(score_arrays, child="C1", activity=Activity.MUSIC_MAKING, index=1,
                 total_frames=None, fps=25.0, annotations=(), frames=None):
    """Session whose k-th trainer stream carries ``score_arrays[k]`` (all frames)."""
    n = total_frames if total_frames is not None else len(score_arrays[0]) if score_arrays else 100
    streams = []
    for k, scores in enumerate(score_arrays):
        idx = np.arange(len(scores)) if frames is None else frames[k]
        streams.append(ScoreStream(child, f"T{k + 1}", idx, scores))
    return SessionRecord(child_id=child, group=Activity(activity).group, activity=activity,
                         session_index=index, total_frames=n, fps=fps, streams=tuple(streams),
                         annotations=tuple(AnnotationInterval(a, b) for a, b in annotations))


def make_profile(child="C1", svb=None, lof=2, ados=15):
    return ChildProfile(child, 8.0, "M", ados, lof, svb)


def brute_binarize(session, threshold):
    out = [False] * session.total_frames
    for stream in session.streams:
        for f in stream.frames:
            if f.score > threshold:
                out[f.frame_index] = True
    return out


def brute_runs(flags):
    runs, start = [], None
    for i, v in enumerate(list(flags) + [False]):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i - start))
            start = None
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cohort():
    sessions = [
        make_session([np.r_[np.full(40, 0.9), np.full(60, 0.1)]], child="C1", index=1,
                     annotations=[(0.0, 1.6)]),
        make_session([np.r_[np.full(30, 0.1), np.full(70, 0.7)]], child="C1", index=16),
        make_session([np.full(100, 0.2)], child="C2", activity=Activity.READING, index=1),
    ]
    profiles = {"C1": make_profile("C1", 3.0), "C2": make_profile("C2", 1.5)}
    return Cohort(profiles, tuple(sessions))


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Collects one summary line per acceptance criterion."""
    return request.config.stash.setdefault(ACCEPTANCE, []).append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


__all__ = ["make_session", "make_profile", "brute_binarize", "brute_runs", "Group"]
