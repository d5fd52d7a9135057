"""Gaussian mixture regression on time: expected curves and covariance envelopes."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .features import FEATURE_IDS, parse_approach, trial_features
from .mixture import FitError, GmmModel, em_fit
from .preprocess import IirFilter
from .signals import TrainingSet

log = logging.getLogger(__name__)

PD_FLOOR = 1e-9
_LOG_TINY = np.log(np.finfo(float).tiny)


class ExtrapolationWarning(UserWarning):
    pass


def responsibilities(gmm: GmmModel, t) -> tuple[np.ndarray, np.ndarray]:
    """Per-component weights h_i(t) given time, shape (T, k), and an underflow mask (T,)."""
    z = (np.atleast_1d(np.asarray(t, dtype=float)) - gmm.shift[0]) / gmm.scale[0]
    mu = gmm.means[:, 0]
    var = gmm.covariances[:, 0, 0]
    logh = np.log(gmm.weights) - 0.5 * ((z[:, None] - mu) ** 2 / var + np.log(2 * np.pi * var))
    underflow = logh.max(axis=1) < _LOG_TINY
    h = np.exp(logh - logsumexp(logh, axis=1, keepdims=True))
    if np.any(underflow):
        warnings.warn(
            f"{int(underflow.sum())} query time(s) lie outside the model's time support; "
            "using the nearest component",
            ExtrapolationWarning,
            stacklevel=3,
        )
        nearest = np.argmax(logh[underflow], axis=1)
        h[underflow] = np.eye(gmm.k)[nearest]
    return h, underflow


def gmr(gmm: GmmModel, t, include_spread: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Condition ``gmm`` on its first (time) dimension.

    Returns conditional means (T, n-1) and covariances (T, n-1, n-1) in
    original units. The between-component spread of the means is left out
    of the covariance unless ``include_spread`` is set.
    """
    if gmm.n < 2:
        raise ValueError("regression needs a time dimension plus at least one output")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    h, _ = responsibilities(gmm, t)
    z = (t - gmm.shift[0]) / gmm.scale[0]

    mu_t = gmm.means[:, 0]
    mu_a = gmm.means[:, 1:]
    s_tt = gmm.covariances[:, 0, 0]
    s_at = gmm.covariances[:, 1:, 0]
    s_aa = gmm.covariances[:, 1:, 1:]
    slope = s_at / s_tt[:, None]  # (k, d)
    # (T, k, d): per-component conditional means
    cond = mu_a[None] + slope[None] * (z[:, None] - mu_t[None])[:, :, None]
    mean = np.einsum("tk,tkd->td", h, cond)
    cond_cov = s_aa - np.einsum("kd,ke->kde", s_at, s_at) / s_tt[:, None, None]
    cov = np.einsum("tk,kde->tde", h, cond_cov)
    if include_spread:
        dev = cond - mean[:, None]
        cov = cov + np.einsum("tk,tkd,tke->tde", h, dev, dev)

    scale_a = gmm.scale[1:]
    mean = gmm.shift[1:] + mean * scale_a
    cov = cov * scale_a[None, :, None] * scale_a[None, None, :]
    cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
    return mean, _floor_pd(cov)


def _floor_pd(cov: np.ndarray) -> np.ndarray:
    eye = np.eye(cov.shape[-1])
    for _ in range(60):
        bad = np.linalg.eigvalsh(cov)[:, 0] <= 0
        if not bad.any():
            return cov
        cov[bad] += PD_FLOOR * eye
    raise FitError("conditional covariance could not be made positive definite")


def gmr_condition(gmm: GmmModel, t: float, include_spread: bool = False):
    """Conditional mean vector and covariance matrix at a single time."""
    mean, cov = gmr(gmm, [t], include_spread)
    return mean[0], cov[0]


@dataclass(frozen=True, eq=False)
class FeatureModel:
    """Expected curve of one feature with its conditional covariances."""

    feature_id: str
    t: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    n_components: int = 0

    @property
    def K_m(self) -> int:
        return len(self.t)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def whiteners(self) -> np.ndarray:
        """Inverse Cholesky factors L^-1 with Sigma = L L^T, shape (K, d, d)."""
        chol = np.linalg.cholesky(self.covariances)
        return np.linalg.inv(chol)

    @cached_property
    def log_dets(self) -> np.ndarray:
        return -2 * np.sum(np.log(np.diagonal(self.whiteners, axis1=1, axis2=2)), axis=1)

    def to_dict(self) -> dict:
        return {
            "feature_id": self.feature_id,
            "n_components": self.n_components,
            "t": self.t.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureModel":
        return cls(
            d["feature_id"],
            np.asarray(d["t"], dtype=float),
            np.asarray(d["means"], dtype=float),
            np.asarray(d["covariances"], dtype=float),
            int(d["n_components"]),
        )

    def equals(self, other: "FeatureModel") -> bool:
        return (
            self.feature_id == other.feature_id
            and self.n_components == other.n_components
            and all(np.array_equal(getattr(self, a), getattr(other, a))
                    for a in ("t", "means", "covariances"))
        )


@dataclass(frozen=True, eq=False)
class GestureModel:
    gesture_id: str
    approach: str
    features: tuple[FeatureModel, ...]
    S_m: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = tuple(f.feature_id for f in self.features)
        if ids != FEATURE_IDS[self.approach]:
            raise ValueError(f"{self.approach} model needs features {FEATURE_IDS[self.approach]}, got {ids}")
        if len({f.K_m for f in self.features}) != 1:
            raise ValueError("feature models do not share K_m")

    @property
    def K_m(self) -> int:
        return self.features[0].K_m

    @property
    def component_counts(self) -> dict[str, int]:
        return {f.feature_id: f.n_components for f in self.features}

    def __getitem__(self, feature_id: str) -> FeatureModel:
        for f in self.features:
            if f.feature_id == feature_id:
                return f
        raise KeyError(feature_id)

    def to_dict(self) -> dict:
        return {
            "gesture_id": self.gesture_id,
            "approach": self.approach,
            "K_m": self.K_m,
            "S_m": self.S_m,
            "seed": self.seed,
            "meta": self.meta,
            "features": [f.to_dict() for f in self.features],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GestureModel":
        return cls(
            d["gesture_id"],
            d["approach"],
            tuple(FeatureModel.from_dict(f) for f in d["features"]),
            int(d["S_m"]),
            int(d["seed"]),
            dict(d.get("meta", {})),
        )

    def equals(self, other: "GestureModel") -> bool:
        return (
            self.gesture_id == other.gesture_id
            and self.approach == other.approach
            and self.S_m == other.S_m
            and self.seed == other.seed
            and self.meta == other.meta
            and len(self.features) == len(other.features)
            and all(a.equals(b) for a, b in zip(self.features, other.features))
        )


def fit_feature(feature_id: str, points: np.ndarray, t_grid: np.ndarray, seed: int,
                k: int | str = "auto", k_max: int = 8,
                include_spread: bool = False) -> FeatureModel:
    try:
        gmm = em_fit(points, k=k, seed=seed, k_max=k_max)
    except (FitError, ValueError) as exc:
        raise FitError(f"feature {feature_id}: {exc}") from exc
    mean, cov = gmr(gmm, t_grid, include_spread)
    return FeatureModel(feature_id, np.array(t_grid, dtype=float), mean, cov, gmm.k)


def build_gesture_model(training: TrainingSet, approach: str, filt: IirFilter, seed: int = 0,
                        k: int | str = "auto", k_max: int = 8, median_window: int = 3,
                        include_spread: bool = False) -> GestureModel:
    """Fit one GMM per feature on the pooled S_m * K_m points and regress on the training grid."""
    approach = parse_approach(approach)
    feature_sets = [trial_features(tr, approach, filt, median_window) for tr in training.trials]
    t_grid = feature_sets[0].series[0].t
    models = []
    for fid in FEATURE_IDS[approach]:
        pooled = np.vstack([fs[fid].points for fs in feature_sets])
        models.append(fit_feature(fid, pooled, t_grid, seed, k, k_max, include_spread))
        log.debug("%s/%s: %d components", training.gesture_id, fid, models[-1].n_components)
    return GestureModel(training.gesture_id, approach, tuple(models), training.S_m, seed)
