"""Feature layouts: implicit (4 x 4D) and explicit (2 x 7D) inter-hand correlation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .preprocess import IirFilter, preprocess
from .signals import IntegrityError, SampleStream, Trial

IMPLICIT = "4x4D"
EXPLICIT = "2x7D"
APPROACHES = (IMPLICIT, EXPLICIT)
FEATURE_IDS = {IMPLICIT: ("g_l", "b_l", "g_r", "b_r"), EXPLICIT: ("G", "B")}


def parse_approach(name: str) -> str:
    for approach in APPROACHES:
        if name.lower() == approach.lower():
            return approach
    raise ValueError(f"unknown approach {name!r}; expected one of {APPROACHES}")


@dataclass(frozen=True, eq=False)
class FeatureSeries:
    """One feature over time: ``t`` (K,) in seconds and ``values`` (K, n-1)."""

    feature_id: str
    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.t) != len(self.values):
            raise IntegrityError(f"{self.feature_id}: time and value counts differ")

    @property
    def n(self) -> int:
        """Point dimension including time."""
        return self.values.shape[1] + 1

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.t, self.values])

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    approach: str
    series: tuple[FeatureSeries, ...]

    def __post_init__(self):
        expected = FEATURE_IDS[self.approach]
        if tuple(s.feature_id for s in self.series) != expected:
            raise ValueError(f"{self.approach} needs features {expected}")

    def __getitem__(self, feature_id: str) -> FeatureSeries:
        for s in self.series:
            if s.feature_id == feature_id:
                return s
        raise KeyError(feature_id)

    @property
    def feature_ids(self) -> tuple[str, ...]:
        return tuple(s.feature_id for s in self.series)


def _check_grid(*streams: SampleStream) -> np.ndarray:
    t = streams[0].t
    for s in streams[1:]:
        if len(s.t) != len(t) or not np.array_equal(s.t, t):
            raise IntegrityError("feature streams do not share one time grid")
    return t


def build_4x4d(gravity_l, body_l, gravity_r, body_r) -> FeatureSet:
    t = _check_grid(gravity_l, body_l, gravity_r, body_r)
    return FeatureSet(
        IMPLICIT,
        (
            FeatureSeries("g_l", t, gravity_l.a),
            FeatureSeries("b_l", t, body_l.a),
            FeatureSeries("g_r", t, gravity_r.a),
            FeatureSeries("b_r", t, body_r.a),
        ),
    )


def build_2x7d(gravity_l, body_l, gravity_r, body_r) -> FeatureSet:
    t = _check_grid(gravity_l, body_l, gravity_r, body_r)
    return FeatureSet(
        EXPLICIT,
        (
            FeatureSeries("G", t, np.hstack([gravity_l.a, gravity_r.a])),
            FeatureSeries("B", t, np.hstack([body_l.a, body_r.a])),
        ),
    )


def split_2x7d(features: FeatureSet) -> FeatureSet:
    """Project an explicit feature set back onto per-wrist 4D series."""
    G, B = features["G"], features["B"]
    return FeatureSet(
        IMPLICIT,
        (
            FeatureSeries("g_l", G.t, G.values[:, :3]),
            FeatureSeries("b_l", B.t, B.values[:, :3]),
            FeatureSeries("g_r", G.t, G.values[:, 3:]),
            FeatureSeries("b_r", B.t, B.values[:, 3:]),
        ),
    )


def build_features(approach: str, gravity_l, body_l, gravity_r, body_r) -> FeatureSet:
    build = build_4x4d if parse_approach(approach) == IMPLICIT else build_2x7d
    return build(gravity_l, body_l, gravity_r, body_r)


def trial_features(trial: Trial, approach: str, filt: IirFilter, median_window: int = 3,
                   zero_phase: bool = True) -> FeatureSet:
    """Median filter, gravity/body separation and feature assembly for one trial."""
    g_l, b_l = preprocess(trial.left, filt, median_window, zero_phase)
    g_r, b_r = preprocess(trial.right, filt, median_window, zero_phase)
    return build_features(approach, g_l, b_l, g_r, b_r)
