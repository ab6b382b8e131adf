"""Group / activity / session comparisons and table emitters."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .data_model import Activity, ChildProfile, DataError, Gender, Group
from .measures import MeasureSet
from .stats import (StatsError, TTestResult, chi_square_2x2, hedges_g, kde_gaussian, mean_sd,
                    pearson, student_t, student_t_summary, welch_t, welch_t_summary, zscore)

log = logging.getLogger(__name__)

GROUPINGS = ("ByGroup", "ByActivityWithinPlay", "BySession")
MEASURES = ("Ratio", "Duration", "HumanCoded")
TESTS = ("Student", "Welch", "Auto")
ALLOWED = {
    "ByGroup": {"Ratio", "Duration", "HumanCoded"},
    "ByActivityWithinPlay": {"Ratio", "Duration"},
    "BySession": {"Ratio", "Duration"},
}
# (label of sample a, label of sample b); t is signed mean(a) - mean(b)
SIDES = {
    "ByGroup": ("StandardTherapy", "PlayTherapy"),
    "ByActivityWithinPlay": ("MusicMaking", "HelloSong"),
    "BySession": ("session_1", "session_16"),
}


@dataclass(frozen=True)
class Comparison:
    name: str
    grouping: str
    measure: str
    test: str = "Auto"

    def __post_init__(self):
        if self.grouping not in GROUPINGS:
            raise DataError(f"{self.name}: unknown grouping {self.grouping!r}")
        if self.measure not in MEASURES:
            raise DataError(f"{self.name}: unknown measure {self.measure!r}")
        if self.test not in TESTS:
            raise DataError(f"{self.name}: unknown test {self.test!r}")
        if self.measure not in ALLOWED[self.grouping]:
            raise DataError(f"{self.name}: {self.measure} is not compared {self.grouping}")


@dataclass(frozen=True)
class AnalysisPlan:
    comparisons: tuple[Comparison, ...]

    @classmethod
    def default(cls, test: str = "Auto") -> "AnalysisPlan":
        combos = [("ratio_by_group", "ByGroup", "Ratio"),
                  ("duration_by_group", "ByGroup", "Duration"),
                  ("human_coded_by_group", "ByGroup", "HumanCoded"),
                  ("ratio_within_play", "ByActivityWithinPlay", "Ratio"),
                  ("duration_within_play", "ByActivityWithinPlay", "Duration"),
                  ("ratio_by_session", "BySession", "Ratio"),
                  ("duration_by_session", "BySession", "Duration")]
        return cls(tuple(Comparison(n, g, m, test) for n, g, m in combos))

    @classmethod
    def from_json(cls, doc) -> "AnalysisPlan":
        try:
            return cls(tuple(Comparison(**c) for c in doc["comparisons"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"invalid analysis plan: {exc}") from None


def _value(m: MeasureSet, measure: str, session: int | None = None):
    if session is not None:
        ratio, dur = m.per_session.get(session, (None, None))
        return ratio if measure == "Ratio" else dur
    if measure == "Ratio":
        return m.mutual_gaze_ratio
    if measure == "Duration":
        return m.mutual_gaze_duration_frames
    return m.human_coded_ratio


def samples(measures: Sequence[MeasureSet], grouping: str, measure: str):
    """The two raw samples (with ``None`` for absent values) of a comparison."""
    if grouping == "ByGroup":
        a = [_value(m, measure) for m in measures if m.group is Group.STANDARD]
        b = [_value(m, measure) for m in measures if m.group is Group.PLAY]
    elif grouping == "ByActivityWithinPlay":
        a = [_value(m, measure) for m in measures if m.activity is Activity.MUSIC_MAKING]
        b = [_value(m, measure) for m in measures if m.activity is Activity.HELLO_SONG]
    else:
        a = [_value(m, measure, 1) for m in measures if 1 in m.per_session]
        b = [_value(m, measure, 16) for m in measures if 16 in m.per_session]
    return a, b


def run_comparison(comp: Comparison, measures: Sequence[MeasureSet]) -> dict:
    raw_a, raw_b = samples(measures, comp.grouping, comp.measure)
    a = [x for x in raw_a if x is not None]
    b = [x for x in raw_b if x is not None]
    side_a, side_b = SIDES[comp.grouping]
    out = {"name": comp.name, "grouping": comp.grouping, "measure": comp.measure,
           "a": side_a, "b": side_b, "n_a": len(a), "n_b": len(b),
           "n_absent": (len(raw_a) - len(a)) + (len(raw_b) - len(b))}
    if len(a) < 2 or len(b) < 2:
        out["skipped"] = "fewer than two values in a cell"
        log.warning("comparison %s skipped: cell sizes %d/%d", comp.name, len(a), len(b))
        return out
    method = comp.test
    if method == "Auto":
        method = "Student" if out["n_absent"] == 0 else "Welch"
        log.info("comparison %s: %s t-test (%d absent value(s))", comp.name, method, out["n_absent"])
    res = student_t(a, b) if method == "Student" else welch_t(a, b)
    (ma, sa), (mb, sb) = mean_sd(a), mean_sd(b)
    out.update(mean_a=ma, sd_a=sa, mean_b=mb, sd_b=sb, **asdict(res))
    try:
        out["hedges_g"] = hedges_g(ma, sa, len(a), mb, sb, len(b)).hedges_g
    except StatsError:
        out["hedges_g"] = None
    return out


def run_plan(plan: AnalysisPlan, measures: Sequence[MeasureSet]) -> list[dict]:
    return [run_comparison(c, measures) for c in plan.comparisons]


# ---------------------------------------------------------------------------
# tables


def _cell(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return len(vals), None, None
    if len(vals) == 1:
        return 1, float(vals[0]), None
    m, s = mean_sd(vals)
    return len(vals), m, s


GROUP_TABLE_HEADER = ["group", "activity", "n", "duration_n", "duration_mean", "duration_sd",
                 "ratio_mean", "ratio_sd", "human_coded_mean", "human_coded_sd"]
SESSION_TABLE_HEADER = ["activity", "session", "n", "ratio_mean", "ratio_sd",
                 "duration_n", "duration_mean", "duration_sd"]


def group_table_rows(measures: Sequence[MeasureSet]) -> list[list]:
    def row(group, activity, ms):
        dn, dm, ds = _cell([m.mutual_gaze_duration_frames for m in ms])
        _, rm, rs = _cell([m.mutual_gaze_ratio for m in ms])
        _, hm, hs = _cell([m.human_coded_ratio for m in ms])
        return [group, activity, len(ms), dn, dm, ds, rm, rs, hm, hs]

    play = [m for m in measures if m.group is Group.PLAY]
    return [
        row("PlayTherapy", "HelloSong", [m for m in play if m.activity is Activity.HELLO_SONG]),
        row("PlayTherapy", "MusicMaking", [m for m in play if m.activity is Activity.MUSIC_MAKING]),
        row("PlayTherapy", "Combined", play),
        row("StandardTherapy", "Reading", [m for m in measures if m.group is Group.STANDARD]),
        row("Total", "", list(measures)),
    ]


def session_table_rows(measures: Sequence[MeasureSet]) -> list[list]:
    rows = []
    subsets = [(a.value, [m for m in measures if m.activity is a])
               for a in (Activity.MUSIC_MAKING, Activity.HELLO_SONG, Activity.READING)]
    subsets.append(("Total", list(measures)))
    for label, ms in subsets:
        for tag, idx in (("early", 1), ("late", 16)):
            present = [m for m in ms if idx in m.per_session]
            _, rm, rs = _cell([m.per_session[idx][0] for m in present])
            dn, dm, ds = _cell([m.per_session[idx][1] for m in present])
            rows.append([label, tag, len(present), rm, rs, dn, dm, ds])
    return rows


def demographics(profiles: dict[str, ChildProfile], groups: dict[str, Group]) -> dict:
    """Per-group demographics; gender compared with a 2x2 chi-square."""
    out = {}
    by = {g: [profiles[c] for c, gg in groups.items() if gg is g] for g in Group}
    for g, ps in by.items():
        cell = {"n": len(ps), "male": sum(p.gender is Gender.M for p in ps),
                "female": sum(p.gender is Gender.F for p in ps)}
        for attr in ("age", "ados_social_affect", "level_of_functioning"):
            n, m, s = _cell([float(getattr(p, attr)) for p in ps])
            cell[attr] = {"mean": m, "sd": s}
        out[g.value] = cell
    table = [[out[g.value]["male"], out[g.value]["female"]] for g in Group]
    try:
        chi2, df, p = chi_square_2x2(table)
        out["gender_chi_square"] = {"chi2": chi2, "df": df, "p": p, "table": table}
    except StatsError as exc:
        out["gender_chi_square"] = {"skipped": str(exc), "table": table}
    return out


# ---------------------------------------------------------------------------
# evaluation (automated ratio vs human-coded ratio)


def evaluation(measures: Sequence[MeasureSet], grid_points: int = 201) -> dict:
    if len(measures) < 3:
        raise DataError("evaluation needs at least three observations")
    x = np.array([m.mutual_gaze_ratio for m in measures])
    y = np.array([m.human_coded_ratio for m in measures])
    corr = pearson(x, y)
    zx, zy = zscore(x), zscore(y)
    grid = np.linspace(min(zx.min(), zy.min()) - 3.0, max(zx.max(), zy.max()) + 3.0, grid_points)
    kde = []
    for label, sel in (("All", slice(None)),
                       ("PlayTherapy", np.array([m.group is Group.PLAY for m in measures])),
                       ("StandardTherapy", np.array([m.group is Group.STANDARD for m in measures]))):
        for name, z in (("mutual_gaze_ratio", zx), ("human_coded_ratio", zy)):
            vals = z[sel]
            if vals.size < 2 or np.std(vals) == 0:
                continue
            for g, d in zip(grid, kde_gaussian(vals, grid)):
                kde.append([label, name, float(g), float(d)])
    scatter = [[m.child_id, m.activity.value, m.group.value, float(a), float(b), float(c), float(d)]
               for m, a, b, c, d in zip(measures, x, y, zx, zy)]
    summary = {"r": corr.r, "F": corr.f_stat, "df": list(corr.df_pair), "p": corr.p,
               "rmse": corr.rmse, "slope": corr.slope, "intercept": corr.intercept, "n": corr.n}
    return {"summary": summary, "scatter": scatter, "kde": kde}


SCATTER_HEADER = ["child_id", "activity", "group", "mutual_gaze_ratio", "human_coded_ratio",
                  "z_mutual_gaze_ratio", "z_human_coded_ratio"]
KDE_HEADER = ["subset", "measure", "z", "density"]


# ---------------------------------------------------------------------------
# bundled summary-statistic fixtures


def load_fixture(name: str) -> dict:
    text = resources.files("socialgaze").joinpath("fixtures", f"{name}.json").read_text("utf-8")
    return json.loads(text)


def _summary_test(a, b, test="Student"):
    fn = student_t_summary if test == "Student" else welch_t_summary
    res: TTestResult = fn(a["mean"], a["sd"], a["n"], b["mean"], b["sd"], b["n"])
    g = hedges_g(a["mean"], a["sd"], a["n"], b["mean"], b["sd"], b["n"]).hedges_g
    return {**asdict(res), "hedges_g": g}


def fixture_comparisons(test: str = "Student") -> list[dict]:
    """Re-run the group comparisons from the bundled rounded summary tables.

    Duration cells reuse the observation counts because the per-measure N
    behind the reduced duration dfs is not published.
    """
    by_group = load_fixture("group_summary")["rows"]
    by_session = load_fixture("session_summary")["rows"]
    cell = {(r["group"], r["activity"]): r for r in by_group}
    std, play = cell[("StandardTherapy", "Reading")], cell[("PlayTherapy", "Combined")]
    music, hello = cell[("PlayTherapy", "MusicMaking")], cell[("PlayTherapy", "HelloSong")]
    early, late = by_session["Total"]["early"], by_session["Total"]["late"]

    def part(row, key):
        return {"mean": row[key]["mean"], "sd": row[key]["sd"], "n": row["n"]}

    specs = [
        ("ratio_by_group", part(std, "ratio"), part(play, "ratio")),
        ("human_coded_by_group", part(std, "human_coded"), part(play, "human_coded")),
        ("duration_by_group", part(std, "duration"), part(play, "duration")),
        ("ratio_within_play", part(music, "ratio"), part(hello, "ratio")),
        ("duration_within_play", part(music, "duration"), part(hello, "duration")),
        ("ratio_by_session", part(early, "ratio"), part(late, "ratio")),
        ("duration_by_session", part(early, "duration"), part(late, "duration")),
    ]
    reported = load_fixture("reported_tests")["tests"]
    out = []
    for name, a, b in specs:
        row = {"name": name, **_summary_test(a, b, test)}
        if name in reported:
            row["reported"] = reported[name]
        out.append(row)
    return out


def fixture_chi_square() -> dict:
    demo = load_fixture("demographics")
    table = [[demo["gender"]["PlayTherapy"]["M"], demo["gender"]["PlayTherapy"]["F"]],
             [demo["gender"]["StandardTherapy"]["M"], demo["gender"]["StandardTherapy"]["F"]]]
    chi2, df, p = chi_square_2x2(table)
    return {"table": table, "chi2": chi2, "df": df, "p": p, "reported": demo["gender"]["reported"]}


# ---------------------------------------------------------------------------
# serialisation helpers


def round_sig(x, digits: int = 12):
    """Round floats (recursively) to ``digits`` significant digits for output."""
    if isinstance(x, float):
        if not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(f"{x:.{digits}g}")
    if isinstance(x, dict):
        return {k: round_sig(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [round_sig(v, digits) for v in x]
    if isinstance(x, np.generic):
        return round_sig(x.item(), digits)
    return x


def to_csv(header, rows) -> str:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(header)]
    lines.extend(",".join(cell(v) for v in r) for r in rows)
    return "\n".join(lines) + "\n"
