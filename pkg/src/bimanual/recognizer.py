"""Gesture recognition: threshold calibration, whole-recording classification,
sliding-window labelling of continuous streams, and model bundle I/O."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .comparison import DISTANCE, METHODS, PROBABILITY, is_better, parse_method, score_features
from .features import APPROACHES, FeatureSet, parse_approach, trial_features
from .preprocess import FilterSpec, IirFilter, design_cheby1_lowpass
from .regression import GestureModel, build_gesture_model
from .signals import SampleStream, TooShortError, TrainingSet, Trial, normalize_lengths, resample_trial

log = logging.getLogger(__name__)

NA = "N.A."
BUNDLE_FORMAT = "bimanual-model-bundle"
BUNDLE_VERSION = 1
DEFAULT_MARGINS = {DISTANCE: 1.5, PROBABILITY: 2.0}


class BundleError(ValueError):
    pass


class BundleVersionError(BundleError):
    pass


# --- thresholds and whole-recording classification ---------------------------


def features_at(trial: Trial, K_m: int, approach: str, filt: IirFilter, median_window: int = 3) -> FeatureSet:
    """Resample a recording onto K_m points and extract its features."""
    return trial_features(resample_trial(trial, K_m), approach, filt, median_window)


def relax(worst: float, method: str, margins: Mapping[str, float] = DEFAULT_MARGINS) -> float:
    if method == DISTANCE:
        return worst * margins[DISTANCE]
    return worst - margins[PROBABILITY]


def passes(score: float, threshold: float, method: str) -> bool:
    return score <= threshold if method == DISTANCE else score >= threshold


def calibrate_thresholds(models: Sequence[GestureModel], training: Mapping[str, TrainingSet],
                         filt: IirFilter, median_window: int = 3,
                         margins: Mapping[str, float] = DEFAULT_MARGINS,
                         weights: Mapping[str, float] | None = None) -> dict[str, dict[str, float]]:
    """Per-method, per-gesture acceptance thresholds from training self-scores.

    The worst self-score of each gesture is relaxed by the method's margin:
    multiplied for distances, lowered for mean log-densities.
    """
    out: dict[str, dict[str, float]] = {m: {} for m in METHODS}
    for model in models:
        feats = [trial_features(tr, model.approach, filt, median_window)
                 for tr in training[model.gesture_id].trials]
        for method in METHODS:
            scores = [score_features(model, f, method, weights).overall for f in feats]
            worst = max(scores) if method == DISTANCE else min(scores)
            out[method][model.gesture_id] = relax(worst, method, margins)
    return out


@dataclass(frozen=True)
class Decision:
    label: str
    score: float
    scores: dict[str, float]


def decide(scores: Mapping[str, float], thresholds: Mapping[str, float], method: str) -> Decision:
    """Best-scoring gesture among those passing their threshold, else N.A.

    Exact ties go to the lexicographically smallest gesture id.
    """
    best, best_score = NA, math.nan
    for gid in sorted(scores):
        s = scores[gid]
        if not passes(s, thresholds[gid], method):
            continue
        if best == NA or is_better(s, best_score, method):
            best, best_score = gid, s
        elif s == best_score:
            log.info("tie between %s and %s at score %r", best, gid, s)
    return Decision(best, best_score, dict(scores))


def classify_recording(trial: Trial, models: Sequence[GestureModel], thresholds: Mapping[str, float],
                       method: str, filt: IirFilter, median_window: int = 3,
                       weights: Mapping[str, float] | None = None) -> Decision:
    """Score a whole synchronized recording against every model."""
    cache: dict[tuple[int, str], FeatureSet] = {}
    scores = {}
    for model in models:
        key = (model.K_m, model.approach)
        if key not in cache:
            cache[key] = features_at(trial, model.K_m, model.approach, filt, median_window)
        scores[model.gesture_id] = score_features(model, cache[key], method, weights).overall
    return decide(scores, thresholds, method)


# --- continuous streams --------------------------------------------------------


@dataclass(frozen=True)
class RecognizerConfig:
    method: str = PROBABILITY
    approach: str = "4x4D"
    stride: int = 10
    thresholds: Mapping[str, float] = field(default_factory=dict)
    weights: Mapping[str, float] | None = None
    scales: tuple[float, ...] = (0.9, 1.0, 1.1)
    median_window: int = 3

    def __post_init__(self):
        object.__setattr__(self, "method", parse_method(self.method))
        object.__setattr__(self, "approach", parse_approach(self.approach))
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not self.scales or min(self.scales) <= 0:
            raise ValueError("window scales must be positive")


@dataclass(frozen=True)
class Event:
    t_start: float
    t_end: float
    label: str
    score: float


@dataclass
class LabelTimeline:
    events: list[Event]
    trace_times: np.ndarray
    traces: dict[str, np.ndarray]
    method: str = PROBABILITY

    @property
    def gesture_events(self) -> list[Event]:
        return [e for e in self.events if e.label != NA]

    def labels(self) -> list[str]:
        return [e.label for e in self.events]

    def write_events(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t_start,t_end,label,score\n")
            for e in self.events:
                fh.write(f"{float(e.t_start)!r},{float(e.t_end)!r},{e.label},{float(e.score)!r}\n")

    def write_traces(self, path: str | Path) -> None:
        ids = list(self.traces)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(["t"] + [f"score_{g}" for g in ids]) + "\n")
            for i, t in enumerate(self.trace_times):
                fh.write(",".join([repr(float(t))] + [repr(float(self.traces[g][i])) for g in ids]) + "\n")


def _window_lengths(model: GestureModel, scales) -> list[int]:
    return sorted({max(2, int(round(model.K_m * s))) for s in scales})


class _WindowScorer:
    """Memoized scores of one model on (start, length) slices of a stream."""

    def __init__(self, left, right, model, config, filt, lo, hi, n):
        self.left, self.right, self.model, self.config, self.filt = left, right, model, config, filt
        self.lo, self.hi, self.n = lo, hi, n
        self.memo: dict[tuple[int, int], float] = {}

    def __call__(self, start: int, length: int) -> float:
        key = (start, length)
        if key not in self.memo:
            if start < 0 or start + length > self.n:
                self.memo[key] = math.nan
            else:
                w = Trial(self.left.slice(start, start + length), self.right.slice(start, start + length))
                fs = features_at(w, self.model.K_m, self.model.approach, self.filt, self.config.median_window)
                self.memo[key] = score_features(self.model, fs, self.config.method, self.config.weights).overall
        return self.memo[key]

    def best(self, s: int, lengths: Sequence[int]) -> tuple[float, int, int]:
        """Best (score, start, length) for the window start ``s``.

        The coarse lengths are tried first; a pattern search then moves the
        start within half a stride of ``s`` and the length within the scale
        range, halving its step until single samples stop improving.
        """
        method = self.config.method
        cands = [(self(s, ln), s, ln) for ln in lengths]
        cands = [c for c in cands if not math.isnan(c[0])]
        if not cands:
            return math.nan, s, 0
        best = cands[0]
        for c in cands[1:]:
            if is_better(c[0], best[0], method):
                best = c
        half = self.config.stride // 2
        d_lo, d_hi = -half, self.config.stride - 1 - half
        step = max(1, max(self.config.stride, self.hi - self.lo) // 4)
        while step >= 1:
            moved = False
            for dd, dl in ((-1, 0), (1, 0), (0, -1), (0, 1), (1, -1), (-1, 1), (1, 1), (-1, -1)):
                st, ln = best[1] + dd * step, best[2] + dl * step
                if not (d_lo <= st - s <= d_hi and self.lo <= ln <= self.hi):
                    continue
                sc = self(st, ln)
                if not math.isnan(sc) and is_better(sc, best[0], method):
                    best, moved = (sc, st, ln), True
            if not moved:
                step //= 2
        return best


def recognize_stream(left: SampleStream, right: SampleStream, models: Sequence[GestureModel],
                     config: RecognizerConfig, filt: IirFilter | None = None) -> LabelTimeline:
    """Label a continuous synchronized recording.

    At every ``stride``-th sample each model is scored on slices near that
    start whose durations are the model's K_m scaled by ``config.scales``;
    every slice is resampled to K_m points before feature extraction. The
    best slice is then refined locally (start within half a stride, length
    within the scale range). The best model passing its threshold wins the
    window start, otherwise it is N.A. Consecutive equal labels merge into
    one event spanning from the first winning slice's start to the last
    one's end.
    """
    if not models:
        raise ValueError("no models given")
    for m in models:
        if m.approach != config.approach:
            raise ValueError(f"model {m.gesture_id} is {m.approach}, config expects {config.approach}")
    missing = [m.gesture_id for m in models if m.gesture_id not in config.thresholds]
    if missing:
        raise ValueError(f"no thresholds for {missing}")
    filt = filt or design_cheby1_lowpass()
    n = min(len(left), len(right))
    t = left.t[:n]
    lengths = {m.gesture_id: _window_lengths(m, config.scales) for m in models}
    shortest = min(min(v) for v in lengths.values())
    if n < shortest:
        raise TooShortError(f"stream of {n} samples is shorter than the shortest model window ({shortest})")

    scorers = {m.gesture_id: _WindowScorer(left, right, m, config, filt, min(lengths[m.gesture_id]),
                                           max(lengths[m.gesture_id]), n) for m in models}
    starts = np.arange(0, n - shortest + 1, config.stride)
    traces = {m.gesture_id: np.full(len(starts), np.nan) for m in models}
    spans = {m.gesture_id: np.zeros((len(starts), 2), dtype=int) for m in models}
    winners = []
    last_end = 0
    for i, s in enumerate(starts):
        for m in models:
            g = m.gesture_id
            score, st, ln = scorers[g].best(int(s), lengths[g])
            traces[g][i] = score
            spans[g][i] = (st, ln)
            if not math.isnan(score):
                last_end = max(last_end, st + ln)
        # slices entirely behind the current start can no longer be revisited
        for sc in scorers.values():
            sc.memo = {k: v for k, v in sc.memo.items() if k[0] >= s - config.stride}
        available = {g: traces[g][i] for g in traces if not math.isnan(traces[g][i])}
        winners.append(decide(available, config.thresholds, config.method))

    scored_end = float(t[min(n, last_end) - 1])
    events = _assemble(winners, spans, t, n, scored_end, config.method)
    return LabelTimeline(events, t[starts], traces, config.method)


def _assemble(winners: list[Decision], spans, t, n, scored_end, method) -> list[Event]:
    runs = []
    i = 0
    while i < len(winners):
        j = i
        while j + 1 < len(winners) and winners[j + 1].label == winners[i].label:
            j += 1
        label = winners[i].label
        if label != NA:
            first, last = spans[label][i], spans[label][j]
            end_idx = min(n - 1, int(last[0] + last[1]) - 1)
            scores = [w.score for w in winners[i : j + 1]]
            best = min(scores) if method == DISTANCE else max(scores)
            runs.append([float(t[max(0, first[0])]), float(t[end_idx]), label, best])
        i = j + 1
    # a later event cuts the tail of an overlapping earlier one
    for k in range(len(runs) - 1, 0, -1):
        if runs[k - 1][1] > runs[k][0]:
            runs[k - 1][1] = runs[k][0]
    runs = [r for r in runs if r[1] > r[0]]
    events = []
    cursor = float(t[0])
    for r in runs:
        if r[0] > cursor:
            events.append(Event(cursor, r[0], NA, math.nan))
        events.append(Event(*r))
        cursor = r[1]
    if cursor < scored_end:
        events.append(Event(cursor, scored_end, NA, math.nan))
    return events


# --- training and bundles ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelBundle:
    approach: str
    models: tuple[GestureModel, ...]
    thresholds: dict[str, dict[str, float]]
    filter_spec: FilterSpec = FilterSpec()
    median_window: int = 3
    margins: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MARGINS))
    seed: int = 0

    @property
    def gesture_ids(self) -> list[str]:
        return [m.gesture_id for m in self.models]

    def filter(self) -> IirFilter:
        return design_cheby1_lowpass(self.filter_spec)

    def config(self, method: str, stride: int = 10, **kwargs) -> RecognizerConfig:
        method = parse_method(method)
        return RecognizerConfig(method, self.approach, stride, self.thresholds[method],
                                median_window=self.median_window, **kwargs)

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "approach": self.approach,
            "seed": self.seed,
            "median_window": self.median_window,
            "filter_spec": self.filter_spec.to_dict(),
            "margins": self.margins,
            "thresholds": self.thresholds,
            "models": [m.to_dict() for m in self.models],
        }

    def equals(self, other: "ModelBundle") -> bool:
        return json.dumps(self.to_dict()) == json.dumps(other.to_dict())


def train_bundle(dataset: Mapping[str, Sequence[Trial]], approach: str, seed: int = 0,
                 filter_spec: FilterSpec = FilterSpec(), median_window: int = 3,
                 margins: Mapping[str, float] = DEFAULT_MARGINS, length_mode: str = "resample",
                 k_max: int = 8) -> ModelBundle:
    """Normalize each gesture's synchronized trials, fit models and calibrate thresholds."""
    approach = parse_approach(approach)
    filt = design_cheby1_lowpass(filter_spec)
    training, models = {}, []
    for gid in sorted(dataset):
        ts = normalize_lengths(list(dataset[gid]), gid, mode=length_mode)
        training[gid] = ts
        models.append(build_gesture_model(ts, approach, filt, seed, k_max=k_max, median_window=median_window))
    thresholds = calibrate_thresholds(models, training, filt, median_window, margins)
    return ModelBundle(approach, tuple(models), thresholds, filter_spec, median_window, dict(margins), seed)


def save_models(bundle: ModelBundle, path: str | Path) -> None:
    text = json.dumps(bundle.to_dict(), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_models(path: str | Path) -> ModelBundle:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: not a complete model bundle ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"{path}: not a {BUNDLE_FORMAT} document")
    if doc.get("version") != BUNDLE_VERSION:
        raise BundleVersionError(f"{path}: bundle version {doc.get('version')!r}, this reader supports {BUNDLE_VERSION}")
    if doc.get("approach") not in APPROACHES or any(m.get("approach") not in APPROACHES for m in doc["models"]):
        raise BundleVersionError(
            f"{path}: unknown approach tag {doc.get('approach')!r} for bundle version {BUNDLE_VERSION}"
        )
    try:
        models = tuple(GestureModel.from_dict(m) for m in doc["models"])
        return ModelBundle(
            doc["approach"],
            models,
            {m: {g: float(v) for g, v in th.items()} for m, th in doc["thresholds"].items()},
            FilterSpec.from_mapping(doc["filter_spec"]),
            int(doc["median_window"]),
            {k: float(v) for k, v in doc["margins"].items()},
            int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"{path}: malformed bundle ({exc})") from None
