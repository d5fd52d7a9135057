"""Deterministic synthetic bimanual gesture recordings and scripted scenarios.

Templates are analytic: wrist orientation (hence gravity) follows smooth
raised-cosine pitch/roll excursions from a neutral pose, and body
acceleration is a sum of raised-cosine windowed strokes. Every template
starts and ends at rest in the neutral pose, so gestures and rest
segments can be concatenated without discontinuities.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .signals import (
    GRAVITY,
    RATE_HZ,
    Annotation,
    SampleStream,
    Trial,
    write_annotations,
    write_meta,
    write_stream,
)

LSB = 2.0**-10  # output quantization, m/s^2
REST_NOISE = 0.05


@dataclass(frozen=True)
class Stroke:
    """Body acceleration lobe pair ``amp * sin(pi u) * (1 + cos(pi u)) / 2`` with u = (t - center) / half_width."""

    axis: int
    center: float
    half_width: float
    amp: float
    kind: str = "stroke"

    def __call__(self, t: np.ndarray) -> np.ndarray:
        u = (t - self.center) / self.half_width
        inside = np.abs(u) < 1
        return np.where(inside, self.amp * np.sin(np.pi * u) * 0.5 * (1 + np.cos(np.pi * u)), 0.0)


@dataclass(frozen=True)
class Tilt:
    """Smooth excursion of a wrist angle (radians): raised-cosine ramps around a plateau."""

    angle: str  # "pitch" or "roll"
    start: float
    stop: float
    amp: float
    ramp: float = 0.4

    def __call__(self, t: np.ndarray) -> np.ndarray:
        up = np.clip((t - self.start) / self.ramp, 0, 1)
        down = np.clip((self.stop - t) / self.ramp, 0, 1)
        return self.amp * 0.25 * (1 - np.cos(np.pi * up)) * (1 - np.cos(np.pi * down))


@dataclass(frozen=True)
class WristMotion:
    strokes: tuple[Stroke, ...] = ()
    tilts: tuple[Tilt, ...] = ()

    def angles(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pitch = sum((tl(t) for tl in self.tilts if tl.angle == "pitch"), np.zeros_like(t))
        roll = sum((tl(t) for tl in self.tilts if tl.angle == "roll"), np.zeros_like(t))
        return pitch, roll

    def gravity(self, t: np.ndarray) -> np.ndarray:
        pitch, roll = self.angles(t)
        return GRAVITY * np.column_stack(
            [np.sin(pitch), -np.sin(roll) * np.cos(pitch), np.cos(roll) * np.cos(pitch)]
        )

    def body(self, t: np.ndarray) -> np.ndarray:
        out = np.zeros((len(t), 3))
        for s in self.strokes:
            out[:, s.axis] += s(t)
        return out


@dataclass(frozen=True)
class GestureTemplate:
    name: str
    duration: float
    left: WristMotion
    right: WristMotion
    recursive: bool = False
    concurrent: bool = False
    constrained: bool = False

    def wrist(self, side: str) -> WristMotion:
        return self.left if side == "left" else self.right

    def acceleration(self, side: str, t: np.ndarray, body_gain: float = 1.0) -> np.ndarray:
        t = np.clip(t, 0.0, self.duration)
        w = self.wrist(side)
        return w.gravity(t) + body_gain * w.body(t)


@dataclass(frozen=True)
class JitterSpec:
    noise: float = 0.3
    speed: tuple[float, float] = (0.9, 1.1)
    phase: float = 0.08
    amplitude: float = 0.1
    lead_in: tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        if min(self.speed) <= 0:
            raise ValueError("speed factors must be positive")

    @classmethod
    def none(cls) -> "JitterSpec":
        return cls(noise=0.0, speed=(1.0, 1.0), phase=0.0, amplitude=0.0, lead_in=(1.0, 1.0))


def _strokes(axis, centers, half_width, amp):
    return tuple(Stroke(axis, c, half_width, amp) for c in centers)


def builtin_templates() -> list[GestureTemplate]:
    """Five templates covering the recursive/concurrent/constrained trait matrix."""
    occ = GestureTemplate(
        "OCC", 4.0,
        left=WristMotion(_strokes(2, (0.7, 1.7, 2.7), 0.35, 3.0),
                         (Tilt("pitch", 0.0, 4.0, 1.0, 0.5),)),
        right=WristMotion(_strokes(2, (1.2, 2.2, 3.2), 0.35, 3.0),
                          (Tilt("pitch", 0.0, 4.0, 1.0, 0.5),)),
        recursive=True, concurrent=False, constrained=True,
    )
    swp = GestureTemplate(
        "SWP", 4.5,
        left=WristMotion(_strokes(0, (1.0, 2.25, 3.5), 0.5, 2.5),
                         (Tilt("pitch", 0.0, 4.5, -0.6, 0.6), Tilt("roll", 0.6, 3.9, 0.3, 0.5))),
        right=WristMotion(_strokes(0, (1.0, 2.25, 3.5), 0.5, 3.5),
                          (Tilt("pitch", 0.0, 4.5, -0.9, 0.6), Tilt("roll", 0.6, 3.9, 0.3, 0.5))),
        recursive=True, concurrent=True, constrained=True,
    )
    fcot = GestureTemplate(
        "FCOT", 5.0,
        left=WristMotion((Stroke(1, 1.6, 0.5, 1.5),),
                         (Tilt("pitch", 1.0, 4.0, 0.5, 0.6), Tilt("roll", 1.8, 3.4, 1.0, 0.5))),
        right=WristMotion((Stroke(1, 0.8, 0.6, 2.5), Stroke(1, 4.2, 0.6, -2.5)),
                          (Tilt("pitch", 0.5, 4.5, 0.7, 0.6),)),
        recursive=False, concurrent=False, constrained=False,
    )
    rff = GestureTemplate(
        "RFF", 5.5,
        left=WristMotion((Stroke(1, 2.75, 0.6, 2.5),),
                         (Tilt("pitch", 2.0, 3.6, -0.8, 0.5),)),
        right=WristMotion((Stroke(0, 1.0, 0.6, 3.0), Stroke(0, 4.5, 0.6, -3.0)),
                          (Tilt("roll", 0.4, 1.8, 0.8, 0.4), Tilt("roll", 3.9, 5.3, -0.8, 0.4))),
        recursive=False, concurrent=False, constrained=False,
    )
    wo_right = WristMotion((Stroke(0, 1.5, 0.8, 3.0),),
                           (Tilt("pitch", 0.3, 2.7, 0.6, 0.6), Tilt("roll", 0.5, 2.5, 0.4, 0.5)))
    wo = GestureTemplate("WO", 3.0, left=mirror(wo_right), right=wo_right,
                         recursive=False, concurrent=True, constrained=True)
    return [occ, swp, fcot, rff, wo]


def mirror(w: WristMotion) -> WristMotion:
    """Reflect a wrist motion across the sagittal plane (x axis flips)."""
    strokes = tuple(replace(s, amp=-s.amp) if s.axis == 0 else s for s in w.strokes)
    tilts = tuple(replace(t, amp=-t.amp) if t.angle == "pitch" else t for t in w.tilts)
    return WristMotion(strokes, tilts)


def templates_by_name(templates: Sequence[GestureTemplate] | None = None) -> dict[str, GestureTemplate]:
    return {t.name: t for t in (templates or builtin_templates())}


# --- rendering -------------------------------------------------------------


def _quantize(a: np.ndarray) -> np.ndarray:
    return np.round(a / LSB) * LSB


def _rest(n: int, side_gravity: np.ndarray, rng: np.random.Generator, noise: float) -> np.ndarray:
    return side_gravity + rng.normal(0.0, noise, (n, 3))


def render_instance(template: GestureTemplate, jitter: JitterSpec,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One jittered execution: (left, right) raw acceleration arrays at the nominal rate."""
    speed = rng.uniform(*jitter.speed)
    phase = rng.uniform(-jitter.phase, jitter.phase) if jitter.phase > 0 else 0.0
    gains = 1 + jitter.amplitude * rng.standard_normal(2) if jitter.amplitude > 0 else np.ones(2)
    n = int(round(template.duration / speed * RATE_HZ)) + 1
    tau = np.arange(n) / RATE_HZ * speed
    left = template.acceleration("left", tau, gains[0])
    right = template.acceleration("right", tau - phase, gains[1])
    if jitter.noise > 0:
        left = left + rng.normal(0.0, jitter.noise, left.shape)
        right = right + rng.normal(0.0, jitter.noise, right.shape)
    return left, right


def _stream_pair(left: np.ndarray, right: np.ndarray) -> tuple[SampleStream, SampleStream]:
    t = np.arange(len(left)) / RATE_HZ
    return SampleStream("left", t, _quantize(left)), SampleStream("right", t, _quantize(right))


def generate_trial(template: GestureTemplate, jitter: JitterSpec, rng: np.random.Generator,
                   name: str | None = None, subject: str | None = None) -> tuple[Trial, float]:
    """A recording with a rest lead-in; returns it with its onset offset in seconds."""
    left, right = render_instance(template, jitter, rng)
    n_lead = int(round(rng.uniform(*jitter.lead_in) * RATE_HZ))
    rest_noise = min(REST_NOISE, jitter.noise) if jitter.noise > 0 else 0.0
    lead_l = _rest(n_lead, template.left.gravity(np.zeros(1)), rng, rest_noise)
    lead_r = _rest(n_lead, template.right.gravity(np.zeros(1)), rng, rest_noise)
    sl, sr = _stream_pair(np.vstack([lead_l, left]), np.vstack([lead_r, right]))
    return Trial(sl, sr, template.name, name, subject), n_lead / RATE_HZ


@dataclass
class SyntheticTrial:
    trial: Trial
    offsets: tuple[float, float]


def generate_dataset(templates: Sequence[GestureTemplate] | None = None, trials_per_gesture: int = 60,
                     jitter: JitterSpec = JitterSpec(), seed: int = 0, out_dir: str | Path | None = None,
                     n_subjects: int = 10) -> dict[str, list[SyntheticTrial]]:
    """Generate (and optionally write) ``trials_per_gesture`` recordings per template.

    Files follow the recording layout: ``<name>_left.csv``,
    ``<name>_right.csv`` and a ``<name>.meta`` annotation with the label and
    the onset offsets.
    """
    templates = list(templates or builtin_templates())
    out: dict[str, list[SyntheticTrial]] = {}
    for g, template in enumerate(templates):
        trials = []
        for i in range(trials_per_gesture):
            rng = np.random.default_rng(np.random.SeedSequence([seed, g, i]))
            name = f"{template.name}_{i:03d}"
            subject = f"S{i % n_subjects:02d}"
            trial, offset = generate_trial(template, jitter, rng, name, subject)
            trials.append(SyntheticTrial(trial, (offset, offset)))
        out[template.name] = trials
    if out_dir is not None:
        write_dataset(out, out_dir)
    return out


def write_dataset(dataset: dict[str, list[SyntheticTrial]], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for items in dataset.values():
        for item in items:
            tr = item.trial
            paths = [out_dir / f"{tr.name}_left.csv", out_dir / f"{tr.name}_right.csv", out_dir / f"{tr.name}.meta"]
            write_stream(tr.left, paths[0])
            write_stream(tr.right, paths[1])
            write_meta({"label": tr.gesture_label, "offset_left": repr(float(item.offsets[0])),
                        "offset_right": repr(float(item.offsets[1])), "subject": tr.subject}, paths[2])
            written.extend(paths)
    return written


# --- scenarios ---------------------------------------------------------------

SCENARIOS = {
    1: ["SWP", "SWP"],
    2: ["WO", "RFF", "FCOT", "OCC"],
}


@dataclass
class Scenario:
    recording: Trial
    annotations: list[Annotation] = field(default_factory=list)


def generate_scenario(script: Sequence[str], gaps: float | Sequence[float] = 5.0,
                      jitter: JitterSpec = JitterSpec(), seed: int = 0,
                      templates: Sequence[GestureTemplate] | None = None) -> Scenario:
    """Rest, gesture, rest, ..., gesture, rest as one continuous recording.

    ``gaps`` gives the rest durations (seconds) before each gesture and after
    the last one: a scalar applies everywhere, a sequence needs
    ``len(script) + 1`` entries.
    """
    if not script:
        raise ValueError("scenario script is empty")
    lookup = templates_by_name(templates)
    if np.isscalar(gaps):
        gaps = [float(gaps)] * (len(script) + 1)
    if len(gaps) != len(script) + 1:
        raise ValueError("need one gap before each gesture plus a trailing gap")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    rest_noise = REST_NOISE if jitter.noise > 0 else 0.0
    neutral = WristMotion().gravity(np.zeros(1))
    parts_l, parts_r, annotations = [], [], []
    n = 0
    for i, label in enumerate(list(script) + [None]):
        n_gap = int(round(gaps[i] * RATE_HZ))
        if n_gap:
            parts_l.append(_rest(n_gap, neutral, rng, rest_noise))
            parts_r.append(_rest(n_gap, neutral, rng, rest_noise))
            n += n_gap
        if label is None:
            break
        left, right = render_instance(lookup[label], jitter, rng)
        parts_l.append(left)
        parts_r.append(right)
        annotations.append(Annotation(n / RATE_HZ, (n + len(left) - 1) / RATE_HZ, label))
        n += len(left)
    sl, sr = _stream_pair(np.vstack(parts_l), np.vstack(parts_r))
    return Scenario(Trial(sl, sr, None, "scenario"), annotations)


def write_scenario(scenario: Scenario, out_dir: str | Path, name: str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / f"{name}_left.csv", out_dir / f"{name}_right.csv", out_dir / f"{name}_truth.csv"]
    write_stream(scenario.recording.left, paths[0])
    write_stream(scenario.recording.right, paths[1])
    write_annotations(scenario.annotations, paths[2])
    return paths
