import warnings

import numpy as np
import pytest

from bimanual.features import (
    EXPLICIT, IMPLICIT, build_2x7d, build_4x4d, build_features, parse_approach, split_2x7d, trial_features,
)
from bimanual.preprocess import design_cheby1_lowpass
from bimanual.signals import IntegrityError, SampleStream, Trial


def streams(k, seed=0, side="left"):
    rng = np.random.default_rng(seed)
    t = np.arange(k) / 40
    return [SampleStream(side, t, rng.normal(size=(k, 3))) for _ in range(4)]


def test_parse_approach():
    assert parse_approach("4x4d") == IMPLICIT
    assert parse_approach("2X7D") == EXPLICIT
    with pytest.raises(ValueError):
        parse_approach("3x5d")


def test_4x4d_structure():
    fs = build_4x4d(*streams(2))
    assert fs.feature_ids == ("g_l", "b_l", "g_r", "b_r")
    for s in fs.series:
        assert s.points.shape == (2, 4) and s.n == 4


def test_zero_body_passes_through():
    g_l, _, g_r, _ = streams(5)
    zero = g_l.with_values(np.zeros((5, 3)))
    fs = build_4x4d(g_l, zero, g_r, zero)
    assert not fs["b_l"].values.any() and not fs["b_r"].values.any()


def test_grid_mismatch_is_alignment_error():
    a, b, c, _ = streams(10)
    d = SampleStream("left", np.arange(9) / 40, np.zeros((9, 3)))
    with pytest.raises(IntegrityError):
        build_4x4d(a, b, c, d)
    with pytest.raises(IntegrityError):
        build_2x7d(a, b, c, d)


def test_2x7d_concatenates_and_round_trips():
    parts = streams(100, seed=3)
    implicit = build_4x4d(*parts)
    explicit = build_2x7d(*parts)
    assert [s.points.shape for s in explicit.series] == [(100, 7), (100, 7)]
    np.testing.assert_array_equal(explicit["G"].values,
                                  np.hstack([implicit["g_l"].values, implicit["g_r"].values]))
    back = split_2x7d(explicit)
    for f in implicit.feature_ids:
        np.testing.assert_array_equal(back[f].points, implicit[f].points)


def test_left_only_motion_keeps_right_half_constant():
    g_l, b_l, g_r, b_r = streams(20)
    still = b_r.with_values(np.tile([0.1, 0.2, 0.3], (20, 1)))
    fs = build_features("2x7d", g_l, b_l, g_r, still)
    assert np.ptp(fs["B"].values[:, 3:], axis=0).max() == 0


def test_trial_features_never_alters_values():
    rng = np.random.default_rng(1)
    t = np.arange(120) / 40
    tr = Trial(SampleStream("left", t, rng.normal(size=(120, 3)) + [0, 0, 9.81]),
               SampleStream("right", t, rng.normal(size=(120, 3)) + [0, 0, 9.81]))
    filt = design_cheby1_lowpass()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = trial_features(tr, IMPLICIT, filt)
        b = trial_features(tr, EXPLICIT, filt)
    np.testing.assert_array_equal(split_2x7d(b)["b_r"].values, a["b_r"].values)
    np.testing.assert_array_equal(a["g_l"].t, t)


def test_feature_set_requires_all_series():
    fs = build_4x4d(*streams(3))
    with pytest.raises(ValueError):
        type(fs)(IMPLICIT, fs.series[:3])
    with pytest.raises(KeyError):
        fs["G"]
