"""Feature assembly and bootstrap out-of-bag evaluation."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..data_model import ChildProfile, DataError
from ..measures import MeasureSet
from .models import KINDS, ModelSpec, fit, predict

log = logging.getLogger(__name__)

GAZE_FEATURES = ("mutual_gaze_ratio", "mutual_gaze_duration")
PROFILE_FEATURES = ("level_of_functioning", "ados_social_affect")
ALL_FEATURES = GAZE_FEATURES + PROFILE_FEATURES
SETTINGS = ("WithGaze", "ProfileOnly")
SCORE_RANGE = (1.0, 4.0)
ABLATION_HEADER = ["model", "setting", "mae", "rmse", "r2", "B", "seed"]


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    keys: tuple = ()
    imputed: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != len(self.feature_names):
            raise DataError("feature matrix shape does not match targets/feature names")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def column(self, name) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        cols = [self.feature_names.index(n) for n in names]
        return replace(self, X=self.X[:, cols], feature_names=tuple(names))

    def drop(self, names: Sequence[str]) -> "FeatureMatrix":
        return self.select([n for n in self.feature_names if n not in names])


@dataclass(frozen=True)
class EvalReport:
    model_name: str
    setting: str
    mae: float
    rmse: float
    r2: float
    n_bootstrap: int
    seed: int
    n_skipped: int = 0
    n_oob: int = 0
    mae_se: float = 0.0


def build_feature_matrix(measures: Sequence[MeasureSet],
                         profiles: dict[str, ChildProfile]) -> FeatureMatrix:
    """Raw (unimputed, unnormalised) features for observations with a target.

    Absent durations become NaN; pass the result through
    :func:`impute_duration` and :func:`normalize` before fitting.
    """
    rows, y, keys = [], [], []
    for m in measures:
        prof = profiles.get(m.child_id)
        if prof is None:
            raise DataError(f"no profile for child {m.child_id!r}")
        if prof.svb_score is None:
            continue
        dur = m.mutual_gaze_duration_frames
        rows.append([m.mutual_gaze_ratio, np.nan if dur is None else dur,
                     prof.level_of_functioning, prof.ados_social_affect])
        y.append(prof.svb_score)
        keys.append(m.observation_key)
    if not rows:
        raise DataError("no observation has an svb_score target")
    return FeatureMatrix(np.array(rows, dtype=np.float64), np.array(y), ALL_FEATURES, tuple(keys))


def impute_duration(data: FeatureMatrix) -> FeatureMatrix:
    """Replace missing durations with the mean of the observed ones."""
    name = "mutual_gaze_duration"
    if name not in data.feature_names:
        return data
    col = data.column(name)
    missing = np.isnan(col)
    if not missing.any():
        return replace(data, imputed=missing)
    if missing.all():
        warnings.warn("every mutual_gaze_duration is absent; dropping the feature", stacklevel=2)
        return replace(data.drop([name]), imputed=missing)
    X = data.X.copy()
    X[missing, data.feature_names.index(name)] = col[~missing].mean()
    return replace(data, X=X, imputed=missing)


def normalize(data: FeatureMatrix) -> FeatureMatrix:
    """Z-score every column (population SD); constant columns become 0."""
    if np.isnan(data.X).any():
        raise DataError("normalize() needs complete features; impute first")
    mu = data.X.mean(axis=0)
    sd = data.X.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    return replace(data, X=(data.X - mu) / safe)


def prepare(data: FeatureMatrix) -> FeatureMatrix:
    return normalize(impute_duration(data))


def _replicate(spec, X, y, seed, b, clip):
    rng = np.random.default_rng([seed, b])
    n = X.shape[0]
    idx = rng.integers(0, n, n)
    oob = np.setdiff1d(np.arange(n), idx)
    if oob.size == 0:
        return None
    model = fit(spec, X[idx], y[idx], seed=int(rng.integers(0, 2**63 - 1)))
    return oob, predict(model, X[oob], clip=clip)


def bootstrap_evaluate(spec: ModelSpec, data: FeatureMatrix, B: int = 1000, seed: int = 0,
                       setting: str | None = None, clip=SCORE_RANGE,
                       n_jobs: int = 1) -> EvalReport:
    """Out-of-bag MAE / RMSE / R^2 pooled over ``B`` bootstrap replicates.

    Replicate ``b`` draws from ``default_rng([seed, b])``, so the result does
    not depend on ``n_jobs`` or execution order.  ``mae_se`` is the spread
    (SD) of the per-replicate OOB MAE.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if data.n < 5:
        raise DataError("bootstrap evaluation needs at least 5 rows")
    if setting is None:
        setting = "WithGaze" if set(GAZE_FEATURES) & set(data.feature_names) else "ProfileOnly"
    X, y = data.X, data.y
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(lambda b: _replicate(spec, X, y, seed, b, clip), range(B)))
    else:
        results = [_replicate(spec, X, y, seed, b, clip) for b in range(B)]
    kept = [r for r in results if r is not None]
    skipped = B - len(kept)
    if skipped:
        log.info("%s/%s: %d replicate(s) with empty OOB set skipped", spec.kind, setting, skipped)
    if not kept:
        raise DataError("every bootstrap replicate had an empty out-of-bag set")
    truth = np.concatenate([y[oob] for oob, _ in kept])
    pred = np.concatenate([p for _, p in kept])
    err = pred - truth
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    dev = truth - truth.mean()
    sst = float(dev @ dev)
    r2 = 1.0 - float(err @ err) / sst if sst > 0 else 0.0
    per = [float(np.mean(np.abs(p - y[oob]))) for oob, p in kept]
    mae_se = float(np.std(per, ddof=1)) if len(per) > 1 else 0.0
    return EvalReport(spec.kind, setting, mae, rmse, r2, B, seed, skipped, truth.size, mae_se)


def ablation(data: FeatureMatrix, B: int = 1000, seed: int = 0,
             specs: dict[str, ModelSpec] | None = None, n_jobs: int = 1) -> list[EvalReport]:
    """Every model with and without the two gaze features (10 reports)."""
    specs = specs or {}
    with_gaze = data
    profile_only = data.drop(GAZE_FEATURES)
    reports = []
    for kind in KINDS:
        spec = specs.get(kind, ModelSpec(kind))
        for setting, d in zip(SETTINGS, (with_gaze, profile_only)):
            reports.append(bootstrap_evaluate(spec, d, B, seed, setting, n_jobs=n_jobs))
    return reports


def format_ablation(reports: Sequence[EvalReport]) -> str:
    lines = [",".join(ABLATION_HEADER)]
    for r in reports:
        lines.append(f"{r.model_name},{r.setting},{r.mae!r},{r.rmse!r},{r.r2!r},"
                     f"{r.n_bootstrap},{r.seed}")
    return "\n".join(lines) + "\n"
