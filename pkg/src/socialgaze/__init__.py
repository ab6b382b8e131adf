"""Mutual-gaze measures, statistics and score prediction for therapy sessions."""
from ._accel import backend
from .data_model import (Activity, AnnotationInterval, ChildProfile, Cohort, DataError, Group,
                         ParseError, ScoreFrame, ScoreStream, SessionRecord, ValidationError,
                         parse_annotations, parse_manifest, parse_profiles, parse_scores,
                         write_cohort)
from .measures import (MeasureConfig, MeasureSet, binarize, compute_measures, gaze_runs,
                       human_coded_ratio, mutual_gaze_duration, mutual_gaze_ratio)

__version__ = "0.1.0"

__all__ = [
    "backend", "Activity", "AnnotationInterval", "ChildProfile", "Cohort", "DataError", "Group",
    "ParseError", "ScoreFrame", "ScoreStream", "SessionRecord", "ValidationError",
    "parse_annotations", "parse_manifest", "parse_profiles", "parse_scores", "write_cohort",
    "MeasureConfig", "MeasureSet", "binarize", "compute_measures", "gaze_runs",
    "human_coded_ratio", "mutual_gaze_duration", "mutual_gaze_ratio",
]
