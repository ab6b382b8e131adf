"""``gm`` command line.

Exit codes: 0 success, 2 input/validation error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import report
from .data_model import DataError, atomic_write_text, parse_manifest, write_cohort
from .measures import MeasureConfig, compute_measures, format_measures_csv
from .predict import (ModelSpec, ablation, build_feature_matrix, format_ablation, prepare)
from .stats import StatsError
from .synth import SynthConfig, generate_cohort

log = logging.getLogger("socialgaze")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


def _emit(args, name, text):
    """Write ``text`` to ``--out/name``, or to stdout with ``--stdout``."""
    if args.stdout:
        sys.stdout.write(text)
        return
    path = Path(args.out) / name
    atomic_write_text(path, text)
    log.info("wrote %s", path)


def _json(doc) -> str:
    return json.dumps(report.round_sig(doc), indent=2) + "\n"


def _measure_cfg(args) -> MeasureConfig:
    try:
        return MeasureConfig(args.threshold, args.min_run_seconds)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _load(args):
    if not args.manifest:
        raise DataError("--manifest is required")
    cohort = parse_manifest(args.manifest)
    return cohort, compute_measures(cohort, _measure_cfg(args))


def cmd_measures(args):
    _, measures = _load(args)
    _emit(args, "measures.csv", format_measures_csv(measures))


def cmd_evaluate(args):
    _, measures = _load(args)
    result = report.evaluation(measures)
    if args.stdout:
        sys.stdout.write(_json(result["summary"]))
        return
    _emit(args, "evaluation.json", _json(result["summary"]))
    _emit(args, "scatter.csv", report.to_csv(report.SCATTER_HEADER, result["scatter"]))
    _emit(args, "kde.csv", report.to_csv(report.KDE_HEADER, result["kde"]))


def cmd_analyze(args):
    test = args.test.capitalize()
    if args.fixture:
        doc = {"comparisons": report.fixture_comparisons("Welch" if test == "Welch" else "Student"),
               "gender_chi_square": report.fixture_chi_square()}
        _emit(args, "tests.json", _json(doc))
        return
    cohort, measures = _load(args)
    plan = (report.AnalysisPlan.from_json(_read_json(args.plan)) if args.plan
            else report.AnalysisPlan.default(test))
    groups = {s.child_id: s.group for s in cohort.sessions}
    doc = {"comparisons": report.run_plan(plan, measures),
           "demographics": report.demographics(cohort.profiles, groups)}
    if args.stdout:
        sys.stdout.write(_json(doc))
        return
    _emit(args, "group_summary.csv",
          report.to_csv(report.GROUP_TABLE_HEADER, report.group_table_rows(measures)))
    _emit(args, "session_summary.csv",
          report.to_csv(report.SESSION_TABLE_HEADER, report.session_table_rows(measures)))
    _emit(args, "tests.json", _json(doc))


def _model_specs(path) -> dict:
    if not path:
        return {}
    doc = _read_json(path)
    try:
        return {kind: ModelSpec(kind, hp) for kind, hp in doc.items()}
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_predict(args):
    cohort, measures = _load(args)
    data = prepare(build_feature_matrix(measures, cohort.profiles))
    reports = ablation(data, B=args.B, seed=args.seed, specs=_model_specs(args.config),
                       n_jobs=args.jobs)
    _emit(args, "ablation.csv", format_ablation(reports))


def cmd_synth(args):
    doc = _read_json(args.config) if args.config else {}
    session = dict(doc.get("session", {}))
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(session) - known
    if unknown:
        raise DataError(f"unknown synth session settings: {sorted(unknown)}")
    if "trainers" in session:
        session["trainers"] = tuple(session["trainers"])
    try:
        cfg = SynthConfig(**session)
        synth = generate_cohort(n_obs=int(doc.get("n_obs", 28)),
                                link=doc.get("link", "GazeInformative"),
                                seed=args.seed if args.seed is not None else int(doc.get("seed", 0)),
                                session_cfg=cfg)
    except (ValueError, TypeError) as exc:
        raise DataError(str(exc)) from None
    manifest = write_cohort(synth.cohort, args.out)
    truth = [{"child_id": cid, "activity": act.value, "truth_ratio": r}
             for (cid, act), r in sorted(synth.truth_ratio.items(), key=lambda kv: (kv[0][0], kv[0][1].value))]
    atomic_write_text(Path(args.out) / "truth.json", _json({"observations": truth}))
    log.info("synthetic cohort written to %s", manifest)
    if args.stdout:
        sys.stdout.write(f"{manifest}\n")


COMMANDS = {"measures": cmd_measures, "evaluate": cmd_evaluate, "analyze": cmd_analyze,
            "predict": cmd_predict, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gm", description="Mutual-gaze measures and analyses.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("measures", "per-observation gaze measures CSV"),
                        ("evaluate", "automated vs human-coded ratio agreement"),
                        ("analyze", "group/activity/session t-tests and tables"),
                        ("predict", "bootstrap ablation of the five regressors"),
                        ("synth", "write a synthetic cohort to --out")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--manifest", help="cohort manifest JSON")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threshold", type=float, default=0.6)
        p.add_argument("--min-run-seconds", type=float, default=1.0)
        p.add_argument("--test", choices=["student", "welch", "auto"], default="auto")
        p.add_argument("--B", type=int, default=1000, help="bootstrap replicates")
        p.add_argument("--config", help="JSON config (model overrides or synth settings)")
        p.add_argument("--stdout", action="store_true", help="write data to stdout instead of files")
        if name == "analyze":
            p.add_argument("--plan", help="analysis plan JSON")
            p.add_argument("--fixture", action="store_true",
                           help="re-run the tests from the bundled summary tables")
        if name == "predict":
            p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "predict" and args.seed is None:
        args.seed = 0
    try:
        COMMANDS[args.command](args)
    except DataError as exc:
        print(f"gm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StatsError, FloatingPointError, ArithmeticError) as exc:
        print(f"gm {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
