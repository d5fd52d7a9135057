"""Scoring a window's features against a gesture model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .features import FeatureSeries, FeatureSet
from .regression import FeatureModel, GestureModel
from .signals import IntegrityError

DISTANCE = "distance"
PROBABILITY = "probability"
METHODS = (DISTANCE, PROBABILITY)
_LOG_2PI = np.log(2 * np.pi)


def parse_method(name: str) -> str:
    aliases = {"dist": DISTANCE, "distance": DISTANCE, "prob": PROBABILITY, "probability": PROBABILITY}
    try:
        return aliases[name.lower()]
    except KeyError:
        raise ValueError(f"unknown comparison method {name!r}") from None


def is_better(a: float, b: float, method: str) -> bool:
    """True if score ``a`` beats ``b``: smaller distance, larger log-density."""
    return a < b if method == DISTANCE else a > b


@dataclass(frozen=True)
class ComparisonScore:
    gesture_id: str
    method: str
    per_feature: dict[str, float]
    overall: float
    window_start: float = 0.0


def mahalanobis_point(mean, cov, observed) -> float:
    diff = np.asarray(observed, dtype=float) - np.asarray(mean, dtype=float)
    factor = cho_factor(np.atleast_2d(cov), lower=True)
    return float(np.sqrt(max(diff @ cho_solve(factor, diff), 0.0)))


def _whitened(model: FeatureModel, window: FeatureSeries) -> np.ndarray:
    if len(window) != model.K_m or window.values.shape[1] != model.dim:
        raise IntegrityError(
            f"{model.feature_id}: window has {len(window)} points of dim {window.values.shape[1]}, "
            f"model expects {model.K_m} of dim {model.dim}"
        )
    diff = window.values - model.means
    return np.einsum("kij,kj->ki", model.whiteners, diff)


def pointwise_distances(model: FeatureModel, window: FeatureSeries) -> np.ndarray:
    return np.sqrt(np.sum(_whitened(model, window) ** 2, axis=1))


def pointwise_log_densities(model: FeatureModel, window: FeatureSeries) -> np.ndarray:
    z = _whitened(model, window)
    return -0.5 * (np.sum(z**2, axis=1) + model.log_dets + model.dim * _LOG_2PI)


def accumulated_distance(model: FeatureModel, window: FeatureSeries) -> float:
    """Mahalanobis distance summed along the curve, divided by K_m."""
    return float(np.mean(pointwise_distances(model, window)))


def likelihood_score(model: FeatureModel, window: FeatureSeries) -> float:
    """Mean over the curve of the log normal density of each window point."""
    return float(np.mean(pointwise_log_densities(model, window)))


def _weights(feature_ids, weights: Mapping[str, float] | None) -> np.ndarray:
    if weights is None:
        return np.ones(len(feature_ids))
    missing = [f for f in feature_ids if f not in weights]
    if missing:
        raise ValueError(f"weights missing for features {missing}")
    w = np.array([float(weights[f]) for f in feature_ids])
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("feature weights must be non-negative with a positive sum")
    return w


def aggregate(scores: Mapping[str, float], method: str = DISTANCE,
              weights: Mapping[str, float] | None = None,
              feature_ids=None) -> float:
    """Weighted mean of per-feature scores (equal weights by default)."""
    if feature_ids is not None:
        missing = [f for f in feature_ids if f not in scores]
        if missing:
            raise ValueError(f"scores missing for features {missing}")
    else:
        feature_ids = list(scores)
    if not feature_ids:
        raise ValueError("nothing to aggregate")
    w = _weights(feature_ids, weights)
    values = np.array([scores[f] for f in feature_ids], dtype=float)
    return float(np.dot(w, values) / w.sum())


def score_features(model: GestureModel, features: FeatureSet, method: str,
                   weights: Mapping[str, float] | None = None,
                   probability_mode: str = "mean",
                   window_start: float = 0.0) -> ComparisonScore:
    """Compare a feature set with a gesture model.

    ``probability_mode="mixture"`` aggregates the probability method as
    a per-sample weighted mixture of feature densities instead of averaging
    per-feature mean log-densities.
    """
    if features.approach != model.approach:
        raise ValueError(f"features are {features.approach}, model is {model.approach}")
    fids = [f.feature_id for f in model.features]
    if method == DISTANCE:
        per = {f: accumulated_distance(model[f], features[f]) for f in fids}
        overall = aggregate(per, method, weights, fids)
    elif method == PROBABILITY:
        dens = {f: pointwise_log_densities(model[f], features[f]) for f in fids}
        per = {f: float(np.mean(v)) for f, v in dens.items()}
        if probability_mode == "mean":
            overall = aggregate(per, method, weights, fids)
        elif probability_mode == "mixture":
            w = _weights(fids, weights)
            stacked = np.vstack([dens[f] for f in fids])
            overall = float(np.mean(logsumexp(stacked, axis=0, b=(w / w.sum())[:, None])))
        else:
            raise ValueError(f"unknown probability mode {probability_mode!r}")
    else:
        raise ValueError(f"unknown method {method!r}")
    return ComparisonScore(model.gesture_id, method, per, overall, window_start)
