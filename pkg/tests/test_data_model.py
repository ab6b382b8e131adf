import json
import warnings

import numpy as np
import pytest

from socialgaze.data_model import (Activity, AnnotationInterval, ChildProfile, Cohort, DataError,
                                   ParseError, ScoreFrame, ScoreStream, SessionRecord,
                                   TrainerPairWarning, ValidationError, normalize_intervals,
                                   parse_annotations, parse_manifest, parse_profiles, parse_scores,
                                   write_cohort)
from socialgaze.synth import SynthConfig, generate_cohort

from conftest import make_profile, make_session


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


SCORE_HEAD = "frame_index,subject_id,partner_id,score\n"


class TestParseScores:
    def test_minimal(self, tmp_path):
        p = write(tmp_path, "s.csv", SCORE_HEAD + "0,child,tr1,0.2\n1,child,tr1,0.9\n")
        streams = parse_scores(p, "child")
        assert len(streams) == 1
        assert [f.score for f in streams[0].frames] == [0.2, 0.9]
        assert streams[0].partner_id == "tr1"

    def test_trainer_pair_dropped_with_count(self, tmp_path):
        p = write(tmp_path, "s.csv", SCORE_HEAD + "0,child,tr1,0.2\n0,tr1,tr2,0.8\n")
        with pytest.warns(TrainerPairWarning) as rec:
            streams = parse_scores(p, "child")
        assert rec[0].message.count == 1
        assert all(s.subject_id == "child" for s in streams)
        assert sum(len(s) for s in streams) == 1

    def test_out_of_range_score_reports_line(self, tmp_path):
        p = write(tmp_path, "s.csv", SCORE_HEAD + "0,child,tr1,0.2\n1,child,tr1,1.3\n")
        with pytest.raises(ParseError) as exc:
            parse_scores(p, "child")
        assert exc.value.line == 3

    @pytest.mark.parametrize("row", ["0,child,tr1", "0,child,tr1,abc", "x,child,tr1,0.5",
                                     "0,child,tr1,nan", "-1,child,tr1,0.5"])
    def test_malformed_rows(self, tmp_path, row):
        p = write(tmp_path, "s.csv", SCORE_HEAD + row + "\n")
        with pytest.raises(ParseError):
            parse_scores(p, "child")

    def test_duplicate_frame(self, tmp_path):
        p = write(tmp_path, "s.csv", SCORE_HEAD + "3,child,tr1,0.2\n3,child,tr1,0.4\n")
        with pytest.raises(ValidationError):
            parse_scores(p, "child")

    def test_reversed_pair_and_sorting(self, tmp_path):
        p = write(tmp_path, "s.csv", SCORE_HEAD + "5,tr2,child,0.7\n2,child,tr2,0.1\n1,child,tr1,0.3\n")
        streams = parse_scores(p, "child")
        assert [s.partner_id for s in streams] == ["tr1", "tr2"]
        assert streams[1].frame_index.tolist() == [2, 5]

    def test_in_range_triples_preserved(self, tmp_path, rng):
        rows = [(int(f), "child", f"tr{k}", float(np.round(s, 6)))
                for k in (1, 2) for f, s in zip(rng.permutation(200)[:80], rng.random(80))]
        p = write(tmp_path, "s.csv", SCORE_HEAD + "".join(f"{f},{a},{b},{s!r}\n" for f, a, b, s in rows))
        out = {(f.frame_index, f.partner_id, f.score) for s in parse_scores(p, "child") for f in s.frames}
        assert out == {(f, b, s) for f, _, b, s in rows}

    def test_bad_header(self, tmp_path):
        p = write(tmp_path, "s.csv", "frame,subject,partner,score\n")
        with pytest.raises(ParseError):
            parse_scores(p, "child")


class TestParseAnnotations:
    def test_merge_overlap(self, tmp_path):
        p = write(tmp_path, "a.csv", "start_s,end_s\n0,2\n1.5,3\n")
        assert parse_annotations(p, 25, 2500) == [AnnotationInterval(0.0, 3.0)]

    def test_empty(self, tmp_path):
        p = write(tmp_path, "a.csv", "start_s,end_s\n")
        assert parse_annotations(p, 25, 2500) == []

    def test_reversed_row(self, tmp_path):
        p = write(tmp_path, "a.csv", "start_s,end_s\n5,4\n")
        with pytest.raises(ParseError):
            parse_annotations(p, 25, 2500)

    def test_negative(self, tmp_path):
        p = write(tmp_path, "a.csv", "start_s,end_s\n-1,4\n")
        with pytest.raises(ParseError):
            parse_annotations(p, 25, 2500)

    def test_clipped_to_session(self, tmp_path):
        p = write(tmp_path, "a.csv", "start_s,end_s\n95,120\n130,140\n")
        assert parse_annotations(p, 25, 2500) == [AnnotationInterval(95.0, 100.0)]

    def test_union_oracle(self, rng):
        # interval union measured on a fine grid
        raw = [(float(a), float(a + w)) for a, w in zip(rng.uniform(0, 50, 30), rng.uniform(0.1, 5, 30))]
        merged = normalize_intervals(raw, 60.0)
        grid = np.linspace(0, 60, 600001)
        covered = np.zeros_like(grid, dtype=bool)
        for a, b in raw:
            covered |= (grid >= a) & (grid < min(b, 60.0))
        assert sum(i.length_s for i in merged) == pytest.approx(covered.mean() * 60.0, abs=1e-3)
        assert all(x.end_s < y.start_s for x, y in zip(merged, merged[1:]))


PROFILE_HEAD = "child_id,age,gender,ados_social_affect,level_of_functioning,svb_score\n"


class TestParseProfiles:
    def test_21_rows(self, tmp_path):
        body = "".join(f"K{i},{5 + i % 7}.5,{'F' if i < 3 else 'M'},{10 + i},{1 + i % 3},\n" for i in range(21))
        profiles = parse_profiles(write(tmp_path, "p.csv", PROFILE_HEAD + body))
        assert len(profiles) == 21
        assert sum(p.gender.value == "F" for p in profiles.values()) == 3
        assert all(p.svb_score is None for p in profiles.values())

    def test_on_grid(self, tmp_path):
        p = parse_profiles(write(tmp_path, "p.csv", PROFILE_HEAD + "A,7,M,12,2,2.5\n"))
        assert p["A"].svb_score == 2.5

    @pytest.mark.parametrize("row", ["A,7,M,12,2,2.3", "A,7,M,12,4,2.5", "A,7,X,12,2,",
                                     "A,7,M,-1,2,", "A,7,M,12,2,4.5"])
    def test_invalid(self, tmp_path, row):
        with pytest.raises(ParseError):
            parse_profiles(write(tmp_path, "p.csv", PROFILE_HEAD + row + "\n"))


class TestSessionRecord:
    def test_activity_group_mismatch(self):
        with pytest.raises(ValidationError):
            SessionRecord("C1", "StandardTherapy", "HelloSong", 1, 100)

    def test_session_index(self):
        with pytest.raises(ValidationError):
            SessionRecord("C1", "PlayTherapy", "HelloSong", 2, 100)

    def test_stream_subject_must_be_child(self):
        s = ScoreStream("T1", "T2", [0], [0.5])
        with pytest.raises(ValidationError):
            SessionRecord("C1", "PlayTherapy", "HelloSong", 1, 100, streams=(s,))

    def test_frame_beyond_total(self):
        s = ScoreStream("C1", "T1", [0, 100], [0.5, 0.5])
        with pytest.raises(ValidationError):
            SessionRecord("C1", "PlayTherapy", "HelloSong", 1, 100, streams=(s,))

    def test_annotation_beyond_duration(self):
        with pytest.raises(ValidationError):
            SessionRecord("C1", "PlayTherapy", "HelloSong", 1, 100,
                          annotations=(AnnotationInterval(0, 4.5),))

    def test_stream_invariants(self):
        with pytest.raises(ValidationError):
            ScoreStream("C1", "T1", [2, 1], [0.1, 0.2])
        with pytest.raises(ValidationError):
            ScoreFrame(0, "C1", "T1", 1.2)
        frames = [ScoreFrame(0, "C1", "T1", 0.1), ScoreFrame(3, "C1", "T1", 0.7)]
        assert ScoreStream.from_frames(frames).frames == frames

    def test_unknown_child_in_cohort(self):
        with pytest.raises(ValidationError):
            Cohort({}, (make_session([np.zeros(10)]),))


def _manifest(tmp_path, observations):
    write(tmp_path, "profiles.csv", PROFILE_HEAD + "C1,7,M,12,2,2.5\nC2,8,F,14,1,\n")
    write(tmp_path, "s.csv", SCORE_HEAD + "0,C1,T1,0.9\n")
    write(tmp_path, "a.csv", "start_s,end_s\n0,1\n")
    return write(tmp_path, "m.json", json.dumps({"observations": observations,
                                                  "profiles_path": "profiles.csv"}))


def _obs(group="PlayTherapy", activity="HelloSong", index=1, child="C1"):
    return {"child_id": child, "group": group, "activity": activity,
            "sessions": [{"session_index": index, "fps": 25, "total_frames": 100,
                          "scores_path": "s.csv", "annotations_path": "a.csv"}]}


class TestParseManifest:
    def test_empty_sessions(self, tmp_path):
        cohort = parse_manifest(_manifest(tmp_path, []))
        assert cohort.sessions == () and len(cohort.profiles) == 2

    def test_valid(self, tmp_path):
        cohort = parse_manifest(_manifest(tmp_path, [_obs()]))
        (s,) = cohort.sessions
        assert s.activity is Activity.HELLO_SONG and len(s.streams) == 1 and len(s.annotations) == 1

    @pytest.mark.parametrize("obs", [_obs("StandardTherapy", "HelloSong"), _obs(index=4),
                                     _obs(child="nobody"), _obs(activity="Dancing")])
    def test_invalid(self, tmp_path, obs):
        with pytest.raises(DataError):
            parse_manifest(_manifest(tmp_path, [obs]))

    def test_missing_file(self, tmp_path):
        obs = _obs()
        obs["sessions"][0]["scores_path"] = "gone.csv"
        with pytest.raises(DataError):
            parse_manifest(_manifest(tmp_path, [obs]))
        with pytest.raises(DataError):
            parse_manifest(tmp_path / "nope.json")

    def test_full_size_cohort(self, tmp_path):
        synth = generate_cohort(28, seed=3, session_cfg=SynthConfig(duration_s=8.0))
        cohort = parse_manifest(write_cohort(synth.cohort, tmp_path / "c"))
        assert len(cohort.sessions) == 84
        assert len(cohort.observations()) == 28
        assert len(cohort.profiles) == 21


def test_cohort_round_trip(tmp_path):
    synth = generate_cohort(9, seed=11, session_cfg=SynthConfig(duration_s=6.0, noise_sd=0.05))
    again = parse_manifest(write_cohort(synth.cohort, tmp_path))
    assert again == synth.cohort
    # a second trip is byte-stable
    write_cohort(again, tmp_path / "b")
    for f in (tmp_path / "b").rglob("*.csv"):
        assert f.read_bytes() == (tmp_path / f.relative_to(tmp_path / "b")).read_bytes()


def test_trainer_exclusion_is_total(tmp_path):
    write(tmp_path, "profiles.csv", PROFILE_HEAD + "C1,7,M,12,2,\n")
    write(tmp_path, "s.csv", SCORE_HEAD + "0,C1,T1,0.9\n0,T1,T2,0.9\n1,T2,T1,0.3\n2,T2,C1,0.8\n")
    write(tmp_path, "a.csv", "start_s,end_s\n")
    write(tmp_path, "m.json", json.dumps({"observations": [_obs(child="C1")], "profiles_path": "profiles.csv"}))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TrainerPairWarning)
        cohort = parse_manifest(tmp_path / "m.json")
    assert all(st.subject_id == s.child_id for s in cohort.sessions for st in s.streams)
    assert {st.partner_id for st in cohort.sessions[0].streams} == {"T1", "T2"}


def test_profile_dataclass_validation():
    with pytest.raises(ValidationError):
        ChildProfile("A", 7.0, "M", 10, 2, 2.3)
    assert make_profile(svb=4.0).svb_score == 4.0
