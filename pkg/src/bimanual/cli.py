"""Command-line entry point: ``bimanual {synth,train,eval,recognize,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import traceback
from pathlib import Path

from . import evaluation, recognizer, synthgen
from .comparison import DISTANCE, PROBABILITY, parse_method
from .features import APPROACHES, parse_approach
from .mixture import FitError
from .preprocess import DesignError, FilterSpec
from .signals import SignalError, load_dataset, load_recording, read_annotations, resample_uniform

log = logging.getLogger("bimanual")

BUNDLE_NAME = "models.json"


class UsageError(Exception):
    pass


class Outputs:
    """Tracks files a command writes so a failed run can remove them."""

    def __init__(self, out_dir: Path, force: bool):
        self.dir = Path(out_dir)
        if self.dir.exists() and not self.dir.is_dir():
            raise UsageError(f"--out {self.dir} exists and is not a directory")
        if self.dir.is_dir() and any(self.dir.iterdir()) and not force:
            raise UsageError(f"--out {self.dir} is not empty; pass --force to overwrite")
        self.created_dir = not self.dir.exists()
        self.files: list[Path] = []

    def prepare(self) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir

    def add(self, *paths: Path) -> None:
        self.files.extend(Path(p) for p in paths)

    def rollback(self) -> None:
        if self.created_dir and self.dir.exists():
            shutil.rmtree(self.dir, ignore_errors=True)
            return
        for p in self.files:
            p.unlink(missing_ok=True)


def _approaches(arg: str | None) -> list[str]:
    return list(APPROACHES) if arg is None else [parse_approach(arg)]


def _methods(arg: str | None) -> list[str]:
    return [PROBABILITY, DISTANCE] if arg is None else [parse_method(arg)]


# --- commands ----------------------------------------------------------------------


def cmd_synth(args, out: Outputs) -> None:
    jitter = synthgen.JitterSpec.none() if args.no_jitter else synthgen.JitterSpec()
    out_dir = out.prepare()
    if args.scenario is not None:
        scenario = synthgen.generate_scenario(synthgen.SCENARIOS[args.scenario], gaps=args.gap,
                                              jitter=jitter, seed=args.seed)
        paths = synthgen.write_scenario(scenario, out_dir, f"scenario{args.scenario}")
        out.add(*paths)
    else:
        dataset = synthgen.generate_dataset(trials_per_gesture=args.trials, jitter=jitter, seed=args.seed)
        out.files.extend(out_dir / f"{tr.trial.name}{sfx}" for v in dataset.values() for tr in v
                         for sfx in ("_left.csv", "_right.csv", ".meta"))
        paths = synthgen.write_dataset(dataset, out_dir)
    for p in paths:
        print(p)


def _filter_spec(args) -> FilterSpec:
    return FilterSpec.from_file(args.filter_spec) if args.filter_spec else FilterSpec()


def _margins(args) -> dict[str, float]:
    return {DISTANCE: args.margin_distance, PROBABILITY: args.margin_prob}


def cmd_train(args, out: Outputs) -> None:
    (approach,) = _approaches(args.approach)
    dataset = load_dataset(args.data)
    bundle = recognizer.train_bundle(dataset, approach, seed=args.seed, filter_spec=_filter_spec(args),
                                     margins=_margins(args), length_mode=args.length_mode)
    path = out.prepare() / BUNDLE_NAME
    out.add(path)
    recognizer.save_models(bundle, path)
    print(f"approach {approach}, seed {args.seed}")
    for m in bundle.models:
        counts = ", ".join(f"{f}={k}" for f, k in m.component_counts.items())
        print(f"{m.gesture_id}: K_m={m.K_m} S_m={m.S_m} components {counts}")
    print(path)


def cmd_eval(args, out: Outputs) -> None:
    if args.all and (args.approach or args.method):
        raise UsageError("--all cannot be combined with --approach or --method")
    dataset = load_dataset(args.data)
    results = []
    for approach in _approaches(args.approach):
        res = evaluation.kfold_evaluate_methods(
            dataset, args.folds, approach, _methods(args.method), seed=args.seed,
            subject_disjoint=args.subject_disjoint, filter_spec=_filter_spec(args), margins=_margins(args),
            length_mode=args.length_mode)
        results.extend(res.values())
    out_dir = out.prepare()
    out.add(*(out_dir / f"confusion_{r.approach.lower()}_{r.method}.csv" for r in results),
            out_dir / "report.txt", out_dir / "summary.json")
    evaluation.write_results(results, out_dir)
    for r in results:
        print(r.report())


def cmd_recognize(args, out: Outputs) -> None:
    bundle = recognizer.load_models(args.bundle)
    if args.approach and parse_approach(args.approach) != bundle.approach:
        raise UsageError(f"--approach {args.approach} does not match the bundle's {bundle.approach}")
    method = parse_method(args.method or PROBABILITY)
    trial = load_recording(args.left, args.right)
    left, right = resample_uniform(trial.left), resample_uniform(trial.right)
    config = bundle.config(method, args.stride)
    timeline = recognizer.recognize_stream(left, right, bundle.models, config, bundle.filter())
    out_dir = out.prepare()
    paths = [out_dir / "timeline.csv", out_dir / "traces.csv"]
    out.add(*paths)
    timeline.write_events(paths[0])
    timeline.write_traces(paths[1])
    for e in timeline.events:
        print(f"{e.t_start:8.3f} {e.t_end:8.3f} {e.label}")
    if args.truth:
        score = evaluation.score_timeline(timeline, read_annotations(args.truth))
        p = out_dir / "score.txt"
        out.add(p)
        p.write_text(score.summary() + "\n", encoding="utf-8")
        print(score.summary())


def cmd_report(args, out: Outputs) -> None:
    if bool(args.summary) == bool(args.confusion):
        raise UsageError("give exactly one of --summary or --confusion")
    items = []
    if args.summary:
        for d in json.loads(Path(args.summary).read_text(encoding="utf-8")):
            cm = evaluation.ConfusionMatrix(**d["confusion"])
            metrics = evaluation.compute_metrics(cm)
            metrics.folds = d.get("metrics", {}).get("folds", [])
            items.append((f"{d['approach']} + {d['method']}", cm, metrics))
    else:
        cm = evaluation.ConfusionMatrix.read_csv(args.confusion)
        items.append((Path(args.confusion).stem, cm, evaluation.compute_metrics(cm)))
    text = "\n".join(evaluation.format_report(*item) for item in items)
    if out is not None:
        p = out.prepare() / "report.txt"
        out.add(p)
        p.write_text(text, encoding="utf-8")
    print(text, end="")


# --- parser ------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_default: str | None = None) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory (CSV recordings + .meta)")
    p.add_argument("--filter-spec", help="key=value file overriding the low-pass filter parameters")
    p.add_argument("--margin-distance", type=float, default=recognizer.DEFAULT_MARGINS[DISTANCE],
                   help="threshold factor on the worst training distance (default 1.5)")
    p.add_argument("--margin-prob", type=float, default=recognizer.DEFAULT_MARGINS[PROBABILITY],
                   help="threshold offset below the worst training log-density (default 2.0)")
    p.add_argument("--length-mode", choices=["resample", "truncate"], default="resample",
                   help="how training trials are brought to a common length")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bimanual", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    approach = dict(choices=["4x4d", "2x7d"], type=str.lower)
    method = dict(choices=["prob", "dist"], type=str.lower)

    p = sub.add_parser("synth", help="generate a synthetic dataset or scenario")
    _common(p, "data")
    p.add_argument("--trials", type=int, default=60, help="recordings per gesture (default 60)")
    p.add_argument("--scenario", type=int, choices=sorted(synthgen.SCENARIOS), help="write a scenario instead")
    p.add_argument("--gap", type=float, default=5.0, help="rest between scenario gestures in seconds")
    p.add_argument("--no-jitter", action="store_true", help="noise-free identical trials")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model bundle")
    _common(p, "model")
    _model_flags(p)
    p.add_argument("--approach", default="4x4d", **approach)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="k-fold cross-validation")
    _common(p, "eval")
    _model_flags(p)
    p.add_argument("--approach", **approach)
    p.add_argument("--method", **method)
    p.add_argument("--all", action="store_true", help="all four approach/method combinations (default)")
    p.add_argument("--folds", type=int, default=6)
    p.add_argument("--subject-disjoint", action="store_true", help="keep each subject inside one fold")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("recognize", help="label a continuous recording")
    _common(p, "timeline")
    p.add_argument("--bundle", required=True)
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--truth", help="ground-truth annotations CSV (t_start,t_end,label)")
    p.add_argument("--approach", **approach)
    p.add_argument("--method", **method)
    p.add_argument("--stride", type=int, default=10, help="window step in samples (default 10)")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("report", help="metrics from saved confusion matrices")
    _common(p)
    p.add_argument("--summary", help="summary.json written by eval")
    p.add_argument("--confusion", help="one confusion CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("BIMANUAL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "stride", 1) < 1:
        parser.error("--stride must be >= 1")
    if getattr(args, "folds", 2) < 2:
        parser.error("--folds must be >= 2")
    if getattr(args, "trials", 1) < 1:
        parser.error("--trials must be >= 1")
    out = None
    try:
        out = Outputs(Path(args.out), args.force) if args.out is not None else None
        args.func(args, out)
    except UsageError as exc:
        if out is not None:
            out.rollback()
        parser.error(str(exc))
    except (SignalError, recognizer.BundleError, FitError, DesignError, ValueError, OSError) as exc:
        if out is not None:
            out.rollback()
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 1
    return 0


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module the exception passed through."""
    pkg = str(Path(__file__).parent)
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if f.filename.startswith(pkg)]
    return Path(frames[-1].filename).stem if frames else "cli"


if __name__ == "__main__":
    sys.exit(main())
