"""k-fold cross-validation, confusion matrices and timeline scoring."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .comparison import METHODS, parse_method
from .features import parse_approach
from .recognizer import NA, Event, LabelTimeline, classify_recording, train_bundle
from .signals import Annotation, TrainingSet, Trial

log = logging.getLogger(__name__)


# --- confusion matrix and metrics ------------------------------------------------


class ConfusionMatrix:
    """Counts with rows = predicted label and columns = true label.

    The last label is always the N.A. class.
    """

    def __init__(self, labels: Sequence[str], counts=None):
        labels = list(labels)
        if NA not in labels:
            labels.append(NA)
        elif labels[-1] != NA:
            labels = [lab for lab in labels if lab != NA] + [NA]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        self.labels = labels
        self._index = {lab: i for i, lab in enumerate(labels)}
        m = len(labels)
        if counts is None:
            counts = np.zeros((m, m), dtype=np.int64)
        counts = np.array(counts, dtype=np.int64)
        if counts.shape != (m, m):
            raise ValueError(f"counts must be {m}x{m}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        self.counts = counts

    @classmethod
    def from_pairs(cls, labels: Sequence[str], pairs: Iterable[tuple[str, str]]) -> "ConfusionMatrix":
        """Build from (true, predicted) pairs."""
        cm = cls(labels)
        for true, pred in pairs:
            cm.add(true, pred)
        return cm

    @property
    def gestures(self) -> list[str]:
        return self.labels[:-1]

    def add(self, true: str, predicted: str, n: int = 1) -> None:
        self.counts[self._index[predicted], self._index[true]] += n

    def cell(self, predicted: str, true: str) -> int:
        return int(self.counts[self._index[predicted], self._index[true]])

    def column_total(self, true: str) -> int:
        return int(self.counts[:, self._index[true]].sum())

    def row_total(self, predicted: str) -> int:
        return int(self.counts[self._index[predicted]].sum())

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.labels != self.labels:
            raise ValueError("label sets differ")
        return ConfusionMatrix(self.labels, self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return (isinstance(other, ConfusionMatrix) and other.labels == self.labels
                and np.array_equal(other.counts, self.counts))

    def to_csv(self) -> str:
        lines = ["predicted\\true," + ",".join(self.labels)]
        for lab, row in zip(self.labels, self.counts):
            lines.append(lab + "," + ",".join(str(int(c)) for c in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def read_csv(cls, path: str | Path) -> "ConfusionMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or len(rows[0]) < 2:
            raise ValueError(f"{path}: empty confusion matrix")
        labels = rows[0][1:]
        if [r[0] for r in rows[1:]] != labels:
            raise ValueError(f"{path}: row labels do not match column labels")
        return cls(labels, [[int(c) for c in r[1:]] for r in rows[1:]])

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    def to_dict(self) -> dict:
        return {"labels": self.labels, "counts": self.counts.tolist()}


@dataclass
class MetricsReport:
    """Per-gesture precision/recall and overall accuracy.

    Precision (recall) is ``None`` when the gesture's row (column) is empty.
    """

    precision: dict[str, float | None]
    recall: dict[str, float | None]
    accuracy: float
    folds: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "accuracy": self.accuracy, "folds": self.folds}


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    precision, recall = {}, {}
    for g in cm.gestures:
        hit = cm.cell(g, g)
        row, col = cm.row_total(g), cm.column_total(g)
        precision[g] = hit / row if row else None
        recall[g] = hit / col if col else None
    total = cm.total
    correct = sum(cm.cell(g, g) for g in cm.gestures)
    accuracy = correct / total if total else 0.0
    return MetricsReport(precision, recall, accuracy)


def _pct(v: float | None) -> str:
    return "n/a" if v is None else f"{100 * v:.1f}%"


def format_report(title: str, cm: ConfusionMatrix, metrics: MetricsReport) -> str:
    width = max(6, *(len(lab) for lab in cm.labels)) + 1
    out = [title, "=" * len(title), "rows: predicted, columns: true", ""]
    out.append("".ljust(width) + "".join(lab.rjust(width) for lab in cm.labels))
    for lab, row in zip(cm.labels, cm.counts):
        out.append(lab.ljust(width) + "".join(str(int(c)).rjust(width) for c in row))
    out.append("")
    out.append("gesture".ljust(width) + "precision".rjust(11) + "recall".rjust(9))
    for g in cm.gestures:
        out.append(g.ljust(width) + _pct(metrics.precision[g]).rjust(11) + _pct(metrics.recall[g]).rjust(9))
    out.append(f"accuracy: {_pct(metrics.accuracy)}")
    if metrics.folds:
        out.append("per fold: " + ", ".join(_pct(f["accuracy"]) for f in metrics.folds))
    return "\n".join(out) + "\n"


# --- folds -------------------------------------------------------------------------


def _trial_lists(dataset: Mapping[str, Sequence[Trial] | TrainingSet]) -> dict[str, list[Trial]]:
    return {g: list(v.trials if isinstance(v, TrainingSet) else v) for g, v in sorted(dataset.items())}


def _canonical_key(trial: Trial) -> tuple[str, str]:
    digest = hashlib.sha1(trial.left.a.tobytes() + trial.right.a.tobytes()).hexdigest()
    return (trial.name or "", digest)


def assign_folds(dataset: Mapping[str, Sequence[Trial]], folds: int = 6, seed: int = 0,
                 subject_disjoint: bool = False) -> dict[str, np.ndarray]:
    """Fold index for every trial of every gesture.

    By default each gesture's trials are shuffled with a seeded permutation
    and cut into ``folds`` equal groups. With ``subject_disjoint`` the
    subjects are shuffled and dealt round-robin to folds, so no subject
    appears in two folds.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    data = _trial_lists(dataset)
    out = {}
    if subject_disjoint:
        subjects = sorted({tr.subject for trials in data.values() for tr in trials} - {None})
        if any(tr.subject is None for trials in data.values() for tr in trials):
            raise ValueError("subject-disjoint folds need a subject id on every trial")
        if len(subjects) < folds:
            raise ValueError(f"{len(subjects)} subjects cannot fill {folds} folds")
        order = np.random.default_rng(seed).permutation(len(subjects))
        fold_of = {subjects[j]: r % folds for r, j in enumerate(order)}
        for g, trials in data.items():
            out[g] = np.array([fold_of[tr.subject] for tr in trials])
        return out
    for gi, (g, trials) in enumerate(data.items()):
        n = len(trials)
        if n % folds:
            raise ValueError(
                f"gesture {g!r} has {n} trials, not divisible into {folds} folds; "
                f"trim to {n - n % folds} trials or change --folds"
            )
        perm = np.random.default_rng(np.random.SeedSequence([seed, gi])).permutation(n)
        idx = np.empty(n, dtype=int)
        idx[perm] = np.arange(n) // (n // folds)
        out[g] = idx
    return out


@dataclass
class EvalResult:
    approach: str
    method: str
    confusion: ConfusionMatrix
    metrics: MetricsReport
    fold_confusions: list[ConfusionMatrix] = field(default_factory=list)

    @property
    def title(self) -> str:
        return f"{self.approach} + {self.method}"

    def report(self) -> str:
        return format_report(self.title, self.confusion, self.metrics)

    def to_dict(self) -> dict:
        return {
            "approach": self.approach,
            "method": self.method,
            "confusion": self.confusion.to_dict(),
            "metrics": self.metrics.to_dict(),
            "fold_confusions": [c.to_dict() for c in self.fold_confusions],
        }


def kfold_evaluate_methods(dataset: Mapping[str, Sequence[Trial] | TrainingSet], folds: int = 6,
                           approach: str = "4x4D", methods: Sequence[str] = METHODS, seed: int = 0,
                           subject_disjoint: bool = False, fold_index: Mapping[str, Sequence[int]] | None = None,
                           **train_kwargs) -> dict[str, EvalResult]:
    """Cross-validate one approach and score every requested method.

    Each fold trains one bundle on the remaining groups and classifies the
    held-out whole recordings with each method, so the methods share models.
    ``fold_index`` overrides the seeded assignment with explicit fold numbers.
    """
    approach = parse_approach(approach)
    methods = [parse_method(m) for m in methods]
    data = _trial_lists(dataset)
    if fold_index is None:
        fold_idx = assign_folds(data, folds, seed, subject_disjoint)
    else:
        fold_idx = {g: np.asarray(fold_index[g]) for g in data}
        if any(len(fold_idx[g]) != len(data[g]) for g in data) or any(
                np.any((v < 0) | (v >= folds)) for v in fold_idx.values()):
            raise ValueError(f"fold_index needs one fold number in [0, {folds}) per trial")
    labels = list(data)
    per_fold = {m: [] for m in methods}
    for f in range(folds):
        # canonical order, so the fold's models do not depend on how trials were listed
        train = {g: sorted((tr for tr, k in zip(data[g], fold_idx[g]) if k != f), key=_canonical_key)
                 for g in labels}
        test = [(g, tr) for g in labels for tr, k in zip(data[g], fold_idx[g]) if k == f]
        bundle = train_bundle(train, approach, seed=seed, **train_kwargs)
        filt = bundle.filter()
        for m in methods:
            cm = ConfusionMatrix(labels)
            for g, tr in test:
                d = classify_recording(tr, bundle.models, bundle.thresholds[m], m, filt, bundle.median_window)
                cm.add(g, d.label)
            per_fold[m].append(cm)
            log.info("fold %d/%d %s+%s: accuracy %.3f", f + 1, folds, approach, m, compute_metrics(cm).accuracy)
    results = {}
    for m in methods:
        total = ConfusionMatrix(labels)
        for cm in per_fold[m]:
            total = total + cm
        metrics = compute_metrics(total)
        metrics.folds = [{"fold": i, "accuracy": compute_metrics(cm).accuracy, "n": cm.total}
                         for i, cm in enumerate(per_fold[m])]
        results[m] = EvalResult(approach, m, total, metrics, per_fold[m])
    return results


def kfold_evaluate(dataset, folds: int = 6, approach: str = "4x4D", method: str = "probability",
                   seed: int = 0, subject_disjoint: bool = False, **train_kwargs) -> EvalResult:
    method = parse_method(method)
    return kfold_evaluate_methods(dataset, folds, approach, [method], seed, subject_disjoint,
                                  **train_kwargs)[method]


def write_results(results: Sequence[EvalResult], out_dir: str | Path) -> list[Path]:
    """Confusion CSV per combination, a text report and a JSON summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for r in results:
        p = out_dir / f"confusion_{r.approach.lower()}_{r.method}.csv"
        r.confusion.write_csv(p)
        written.append(p)
    report = out_dir / "report.txt"
    report.write_text("\n".join(r.report() for r in results), encoding="utf-8")
    summary = out_dir / "summary.json"
    summary.write_text(json.dumps([r.to_dict() for r in results], indent=1) + "\n", encoding="utf-8")
    return written + [report, summary]


# --- timelines ---------------------------------------------------------------------


@dataclass
class TimelineScore:
    tp: int
    fp: int
    fn: int
    matches: list[tuple[Event, Annotation]] = field(default_factory=list)

    def summary(self) -> str:
        return f"TP={self.tp} FP={self.fp} FN={self.fn}"


def overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def score_timeline(predicted: LabelTimeline | Sequence[Event], annotated: Sequence[Annotation],
                   min_overlap: float = 0.5) -> TimelineScore:
    """Count true positives, false positives and missed annotations.

    A predicted gesture event is a true positive when its label matches a
    not yet matched annotation and covers at least ``min_overlap`` of that
    annotation's duration. N.A. events are not predictions.
    """
    events = predicted.events if isinstance(predicted, LabelTimeline) else list(predicted)
    events = [e for e in events if e.label != NA]
    used = [False] * len(annotated)
    matches = []
    fp = 0
    for e in events:
        hit = None
        for j, a in enumerate(annotated):
            if used[j] or a.label != e.label:
                continue
            dur = a.t_end - a.t_start
            if dur > 0 and overlap(e.t_start, e.t_end, a.t_start, a.t_end) >= min_overlap * dur:
                hit = j
                break
        if hit is None:
            fp += 1
        else:
            used[hit] = True
            matches.append((e, annotated[hit]))
    return TimelineScore(len(matches), fp, used.count(False), matches)
