"""Recording types, CSV/meta ingestion, synchronization and length normalization."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

RATE_HZ = 40.0
ACC_LIMIT = 160.0  # m/s^2, sensor range sanity bound
GRAVITY = 9.81
CSV_HEADER = ["t", "ax", "ay", "az"]


class SignalError(ValueError):
    """Base class for ingestion and alignment failures."""


class ParseError(SignalError):
    pass


class IntegrityError(SignalError):
    pass


class EmptyStreamError(SignalError):
    pass


class TooShortError(SignalError):
    pass


class TriaxSample(NamedTuple):
    t: float
    a: np.ndarray


@dataclass(frozen=True, eq=False)
class SampleStream:
    """Timestamped tri-axial acceleration of one wrist.

    ``t`` has shape (K,), ``a`` has shape (K, 3), both read-only.
    """

    side: str
    t: np.ndarray
    a: np.ndarray
    rate_hz: float = RATE_HZ

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        a = np.array(self.a, dtype=float).reshape(-1, 3)
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if t.ndim != 1 or len(t) != len(a):
            raise IntegrityError("timestamps and samples differ in length")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise IntegrityError(f"{self.side} timestamps are not strictly increasing")
        if not np.all(np.isfinite(a)) or np.any(np.abs(a) > ACC_LIMIT):
            raise IntegrityError(f"{self.side} acceleration outside ±{ACC_LIMIT} m/s^2 or non-finite")
        t.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "a", a)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[TriaxSample]:
        for tk, ak in zip(self.t, self.a):
            yield TriaxSample(float(tk), ak)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    def with_values(self, a: np.ndarray, t: np.ndarray | None = None) -> "SampleStream":
        return SampleStream(self.side, self.t if t is None else t, a, self.rate_hz)

    def slice(self, start: int, stop: int) -> "SampleStream":
        return SampleStream(self.side, self.t[start:stop], self.a[start:stop], self.rate_hz)

    def is_uniform(self, tol: float = 1e-9) -> bool:
        if len(self.t) < 2:
            return True
        return bool(np.all(np.abs(np.diff(self.t) - 1.0 / self.rate_hz) <= tol))

    def equals(self, other: "SampleStream") -> bool:
        return (
            self.side == other.side
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.a, other.a)
        )


@dataclass(frozen=True, eq=False)
class Trial:
    left: SampleStream
    right: SampleStream
    gesture_label: str | None = None
    name: str | None = None
    subject: str | None = None

    @property
    def K(self) -> int:
        return len(self.left)

    @property
    def aligned(self) -> bool:
        return len(self.left) == len(self.right) and np.array_equal(self.left.t, self.right.t)

    def equals(self, other: "Trial") -> bool:
        return (
            self.gesture_label == other.gesture_label
            and self.left.equals(other.left)
            and self.right.equals(other.right)
        )


@dataclass(frozen=True, eq=False)
class TrainingSet:
    gesture_id: str
    trials: tuple[Trial, ...] = field(default_factory=tuple)

    def __post_init__(self):
        trials = tuple(self.trials)
        if len(trials) < 2:
            raise ValueError(f"training set for {self.gesture_id!r} needs at least 2 trials")
        lengths = {tr.K for tr in trials}
        if len(lengths) != 1:
            raise IntegrityError(f"trials of {self.gesture_id!r} differ in length: {sorted(lengths)}")
        if not all(tr.aligned for tr in trials):
            raise IntegrityError(f"trials of {self.gesture_id!r} are not left/right aligned")
        object.__setattr__(self, "trials", trials)

    @property
    def K_m(self) -> int:
        return self.trials[0].K

    @property
    def S_m(self) -> int:
        return len(self.trials)

    @property
    def O_m(self) -> int:
        return self.S_m * self.K_m


# --- ingestion -----------------------------------------------------------


def read_stream(path: str | Path, side: str) -> SampleStream:
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise EmptyStreamError(f"{path}: no samples")
    data = np.asarray(rows, dtype=float)
    bad = np.flatnonzero(np.diff(data[:, 0]) <= 0)
    if len(bad):
        raise IntegrityError(f"{path}:{bad[0] + 3}: timestamp not strictly increasing")
    try:
        return SampleStream(side, data[:, 0], data[:, 1:])
    except IntegrityError as exc:
        raise IntegrityError(f"{path}: {exc}") from None


def write_stream(stream: SampleStream, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for tk, (x, y, z) in zip(stream.t, stream.a):
            fh.write(f"{float(tk)!r},{float(x)!r},{float(y)!r},{float(z)!r}\n")


def read_meta(path: str | Path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def write_meta(meta: dict[str, object], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in meta.items():
            fh.write(f"{key}={value}\n")


def load_recording(left_path: str | Path, right_path: str | Path, label: str | None = None) -> Trial:
    """Parse a left/right CSV pair into an unsynchronized Trial."""
    left = read_stream(left_path, "left")
    right = read_stream(right_path, "right")
    name = Path(left_path).name.removesuffix("_left.csv")
    return Trial(left, right, gesture_label=label, name=name)


def load_trial(directory: str | Path, name: str) -> tuple[Trial, tuple[float, float]]:
    """Load ``<name>_left.csv``, ``<name>_right.csv`` and ``<name>.meta``.

    Returns the trial and its (left, right) onset offsets in seconds.
    """
    directory = Path(directory)
    meta_path = directory / f"{name}.meta"
    meta = read_meta(meta_path)
    if "label" not in meta:
        raise ParseError(f"{meta_path}: missing 'label'")
    trial = load_recording(directory / f"{name}_left.csv", directory / f"{name}_right.csv")
    trial = replace(trial, gesture_label=meta["label"], subject=meta.get("subject"))
    offsets = (float(meta.get("offset_left", 0.0)), float(meta.get("offset_right", 0.0)))
    return trial, offsets


def load_dataset(directory: str | Path) -> dict[str, list[Trial]]:
    """Load and synchronize every annotated trial in ``directory``, grouped by label."""
    directory = Path(directory)
    names = sorted(p.name.removesuffix(".meta") for p in directory.glob("*.meta"))
    if not names:
        raise SignalError(f"{directory}: no .meta annotations found")
    grouped: dict[str, list[Trial]] = {}
    for name in names:
        trial, offsets = load_trial(directory, name)
        (trial,) = synchronize_trials([trial], [offsets])
        grouped.setdefault(trial.gesture_label, []).append(trial)
    return dict(sorted(grouped.items()))


@dataclass(frozen=True)
class Annotation:
    """Ground-truth gesture occurrence in a continuous recording."""

    t_start: float
    t_end: float
    label: str


def write_annotations(annotations: Sequence[Annotation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t_start,t_end,label\n")
        for a in annotations:
            fh.write(f"{float(a.t_start)!r},{float(a.t_end)!r},{a.label}\n")


def read_annotations(path: str | Path) -> list[Annotation]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t_start", "t_end", "label"]:
            raise ParseError(f"{path}:1: expected header t_start,t_end,label")
        return [Annotation(float(r["t_start"]), float(r["t_end"]), r["label"]) for r in reader]


# --- alignment -----------------------------------------------------------


def _shift(stream: SampleStream, offset: float) -> SampleStream:
    keep = stream.t >= stream.t[0] + offset - 1e-9
    if not np.any(keep):
        raise EmptyStreamError(
            f"{stream.side} offset {offset} s exceeds recording duration {stream.duration} s"
        )
    t = stream.t[keep]
    return SampleStream(stream.side, t - t[0], stream.a[keep], stream.rate_hz)


def _regrid(stream: SampleStream) -> SampleStream:
    """Put a zero-based stream on the exact grid k / rate_hz."""
    if stream.is_uniform():
        return stream.with_values(stream.a, np.arange(len(stream)) / stream.rate_hz)
    return resample_uniform(stream)


def synchronize_trials(trials: Sequence[Trial], offsets: Sequence[tuple[float, float]]) -> list[Trial]:
    """Drop samples before each side's onset offset and rebase time to zero.

    Both sides are then cut to their common sample count. Offsets are
    relative to each stream's first timestamp.
    """
    if len(trials) != len(offsets):
        raise ValueError("one (left, right) offset pair is required per trial")
    out = []
    for trial, (off_l, off_r) in zip(trials, offsets):
        if off_l == 0 and off_r == 0 and trial.left.t[0] == 0 and trial.aligned:
            out.append(trial)
            continue
        left = _regrid(_shift(trial.left, off_l))
        right = _regrid(_shift(trial.right, off_r))
        n = min(len(left), len(right))
        out.append(replace(trial, left=left.slice(0, n), right=right.slice(0, n)))
    return out


def estimate_offset_raw(a: SampleStream, b: SampleStream, max_lag_s: float = 2.0) -> tuple[float, float]:
    """Lag of ``b`` relative to ``a`` maximizing normalized magnitude cross-correlation."""
    rate = a.rate_hz
    xa = np.linalg.norm(resample_uniform(a).a, axis=1)
    xb = np.linalg.norm(resample_uniform(b).a, axis=1)
    if min(len(xa), len(xb)) < rate:
        raise TooShortError("offset estimation needs streams of at least 1 s")
    if np.ptp(xa) == 0 or np.ptp(xb) == 0:
        raise SignalError("constant stream: correlation undefined")
    max_lag = int(round(max_lag_s * rate))
    best_lag, best_score = 0, -np.inf
    for lag in range(-max_lag, max_lag + 1):
        # b[n + lag] is compared with a[n]
        lo = max(0, -lag)
        hi = min(len(xa), len(xb) - lag)
        if hi - lo < rate // 2:
            continue
        u, v = xa[lo:hi], xb[lo + lag : hi + lag]
        su, sv = u.std(), v.std()
        if su == 0 or sv == 0:
            continue
        score = float(np.mean((u - u.mean()) * (v - v.mean())) / (su * sv))
        if score > best_score:
            best_lag, best_score = lag, score
    return best_lag / rate, best_score


@dataclass(frozen=True)
class OffsetEstimate:
    lag_s: float
    score: float
    reliable: bool


def estimate_offset(a: SampleStream, b: SampleStream, threshold: float = 0.5) -> OffsetEstimate:
    lag, score = estimate_offset_raw(a, b)
    if score < threshold:
        log.warning("offset estimate unreliable: correlation %.3f below %.2f", score, threshold)
    return OffsetEstimate(lag, score, score >= threshold)


def resample_uniform(stream: SampleStream, n: int | None = None) -> SampleStream:
    """Linearly resample onto ``n`` points spanning the stream's own duration.

    The result carries the common grid t_k = k / rate_hz. ``n`` defaults to
    the number of samples the duration holds at the nominal rate.
    """
    if n is None:
        n = int(round(stream.duration * stream.rate_hz)) + 1
    if len(stream) == n and stream.is_uniform() and stream.t[0] == 0:
        return stream
    if len(stream) == 1:
        a = np.repeat(stream.a, n, axis=0)
    else:
        src = stream.t - stream.t[0]
        dst = np.linspace(0.0, src[-1], n)
        a = np.column_stack([np.interp(dst, src, stream.a[:, i]) for i in range(3)])
    return SampleStream(stream.side, np.arange(n) / stream.rate_hz, a, stream.rate_hz)


def normalize_lengths(
    trials: Sequence[Trial],
    gesture_id: str | None = None,
    mode: str = "resample",
    min_duration: float = 0.5,
) -> TrainingSet:
    """Bring synchronized trials to a shared sample count K_m.

    ``mode="resample"`` uses the median length and linear interpolation;
    ``mode="truncate"`` cuts every trial to the shortest one.
    """
    if len(trials) < 2:
        raise ValueError("need at least 2 trials")
    for tr in trials:
        if tr.left.duration < min_duration or tr.right.duration < min_duration:
            raise TooShortError(f"trial {tr.name or ''} shorter than {min_duration} s")
    lengths = [min(len(tr.left), len(tr.right)) for tr in trials]
    if gesture_id is None:
        gesture_id = trials[0].gesture_label or "unknown"
    out = []
    if mode == "resample":
        k_m = int(np.median(lengths))
        for tr in trials:
            out.append(replace(tr, left=resample_uniform(tr.left, k_m), right=resample_uniform(tr.right, k_m)))
    elif mode == "truncate":
        k_m = min(lengths)
        for tr in trials:
            left = resample_uniform(tr.left).slice(0, k_m)
            right = resample_uniform(tr.right).slice(0, k_m)
            out.append(replace(tr, left=left, right=right))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return TrainingSet(gesture_id, tuple(out))


def resample_trial(trial: Trial, n: int) -> Trial:
    return replace(trial, left=resample_uniform(trial.left, n), right=resample_uniform(trial.right, n))
