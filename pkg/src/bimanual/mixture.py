"""Gaussian mixtures fitted by EM, with k-means initialisation and a
silhouette sweep for choosing the number of components.

All fitting happens on per-dimension standardized data; the fitted model
keeps the shift/scale so densities and regressions can be queried in the
original units.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

log = logging.getLogger(__name__)

REG = 1e-6
TOL = 1e-7
MAX_ITER = 500
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-4
N_RESTARTS = 5
SILHOUETTE_FLOOR = 0.25
SILHOUETTE_MAX_POINTS = 2000


class FitError(RuntimeError):
    pass


# --- k-means ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Clustering:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0

    @property
    def k(self) -> int:
        return len(self.centroids)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = [points[rng.integers(n)]]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centroids)


def kmeans(points, k: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER,
           tol: float = KMEANS_TOL) -> Clustering:
    """Lloyd iterations from k-means++ seeding.

    Stops at an assignment fixpoint, when the squared centroid shift drops
    below ``tol`` times the mean per-dimension variance, or after
    ``max_iter`` rounds. A cluster
    that empties is re-seeded at the point farthest from its centroid.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    labels = np.full(n, -1)
    xx = np.sum(x**2, axis=1)[:, None]
    shift_tol = tol * float(np.mean(np.var(x, axis=0)))
    it = 0
    for it in range(1, max_iter + 1):
        d2 = np.maximum(xx - 2 * x @ centroids.T + np.sum(centroids**2, axis=1), 0.0)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2[np.arange(n), new]))
            new[far] = j
            d2[far] = np.inf
            d2[far, j] = 0.0
            counts = np.bincount(new, minlength=k)
        if np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        old = centroids.copy()
        for d in range(x.shape[1]):
            centroids[:, d] = np.bincount(labels, weights=x[:, d], minlength=k) / counts
        if np.sum((centroids - old) ** 2) <= shift_tol:
            labels = np.argmin(xx - 2 * x @ centroids.T + np.sum(centroids**2, axis=1), axis=1)
            break
    inertia = float(np.sum((x - centroids[labels]) ** 2))
    return Clustering(labels, centroids, inertia, it)


def best_kmeans(points, k: int, seed: int = 0, restarts: int = N_RESTARTS) -> Clustering:
    seeds = np.random.SeedSequence(seed).generate_state(restarts)
    runs = [kmeans(points, k, int(s)) for s in seeds]
    return min(runs, key=lambda c: c.inertia)


def silhouette(points, clustering) -> float:
    """Mean silhouette coefficient; singleton clusters contribute 0."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(getattr(clustering, "labels", clustering))
    uniq, labels = np.unique(labels, return_inverse=True)
    k = len(uniq)
    if k < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    sizes = np.bincount(labels, minlength=k)
    n = len(x)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    sums = np.zeros((n, k))
    for start in range(0, n, 1024):
        sums[start : start + 1024] = cdist(x[start : start + 1024], x) @ onehot
    own = sizes[labels]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = sums[np.arange(n), labels] / (own - 1)
        means = sums / sizes
    means[np.arange(n), labels] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1), 0.0)
    return float(np.mean(s))


def component_sweep(points, k_max: int = 8, seed: int = 0,
                    max_points: int = SILHOUETTE_MAX_POINTS) -> dict[int, tuple[float, Clustering]]:
    """Silhouette score and best-inertia clustering for k = 2..k_max.

    Silhouette is evaluated on a seeded subsample of at most ``max_points``
    points; clustering always uses every point.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2 * k_max:
        raise ValueError(f"need at least {2 * k_max} points for k_max={k_max}")
    rng = np.random.default_rng(seed)
    sub = np.sort(rng.choice(len(x), max_points, replace=False)) if len(x) > max_points else None
    out = {}
    for k in range(2, k_max + 1):
        clus = best_kmeans(x, k, seed=seed + k)
        if sub is None:
            score = silhouette(x, clus.labels)
        elif len(np.unique(clus.labels[sub])) < 2:
            score = 0.0
        else:
            score = silhouette(x[sub], clus.labels[sub])
        out[k] = (score, clus)
    return out


def _pick(sweep: dict[int, tuple[float, Clustering]]) -> int:
    best_k, best = 1, -np.inf
    for k, (score, _) in sorted(sweep.items()):
        if score > best:
            best_k, best = k, score
    return best_k if best >= SILHOUETTE_FLOOR else 1


def select_num_components(points, k_max: int = 8, seed: int = 0) -> int:
    """Highest-silhouette k in 2..k_max, or 1 if no split reaches the floor.

    Ties go to the smaller k.
    """
    return _pick(component_sweep(points, k_max, seed))


# --- Gaussian mixture ------------------------------------------------------


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Mixture in standardized coordinates ``z = (x - shift) / scale``."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    shift: np.ndarray
    scale: np.ndarray
    log_likelihoods: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) < 1:
            raise ValueError("mixture needs at least one component")
        if abs(w.sum() - 1) > 1e-9 or np.any(w <= 0):
            raise ValueError("weights must be positive and sum to 1")

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def n(self) -> int:
        return self.means.shape[1]

    @classmethod
    def from_components(cls, weights, means, covariances) -> "GmmModel":
        """Model with identity standardization, parameters given in data units."""
        means = np.atleast_2d(np.asarray(means, dtype=float))
        n = means.shape[1]
        return cls(np.asarray(weights, dtype=float), means,
                   np.asarray(covariances, dtype=float).reshape(-1, n, n),
                   np.zeros(n), np.ones(n))

    @property
    def components(self) -> list[GaussianComponent]:
        """Components expressed in original data units."""
        d = np.diag(self.scale)
        return [
            GaussianComponent(float(w), self.shift + self.scale * m, d @ c @ d)
            for w, m, c in zip(self.weights, self.means, self.covariances)
        ]

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def component_logpdf_std(self, z) -> np.ndarray:
        """(N, k) log N(z; mu_i, Sigma_i) in standardized space."""
        return _component_logpdf(np.atleast_2d(z), self.means, self.covariances)

    def logpdf_std(self, z) -> np.ndarray:
        return logsumexp(self.component_logpdf_std(z) + np.log(self.weights), axis=1)

    def logpdf(self, x) -> np.ndarray:
        """Log density in original units (includes the standardization Jacobian)."""
        return self.logpdf_std(self.standardize(np.atleast_2d(x))) - np.sum(np.log(self.scale))

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        return cls(*(np.asarray(d[key], dtype=float)
                     for key in ("weights", "means", "covariances", "shift", "scale")))


def _component_logpdf(z: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    n, dim = z.shape
    out = np.empty((n, len(means)))
    for i, (mu, cov) in enumerate(zip(means, covs)):
        try:
            chol, _ = cho_factor(cov, lower=True)
        except LinAlgError:
            raise FitError(f"component {i}: covariance is not positive definite") from None
        sol = solve_triangular(chol, (z - mu).T, lower=True)
        out[:, i] = (-0.5 * np.sum(sol**2, axis=0)
                     - np.sum(np.log(np.diag(chol)))
                     - 0.5 * dim * np.log(2 * np.pi))
    return out


def standardization(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shift = points.mean(axis=0)
    scale = points.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


def em_fit(points, k: int | str = "auto", seed: int = 0, k_max: int = 8,
           tol: float = TOL, max_iter: int = MAX_ITER, reg: float = REG) -> GmmModel:
    """Fit a Gaussian mixture by EM.

    Points are standardized per dimension; the mixture is initialized from
    the best of several k-means runs (weights = cluster fractions, means =
    centroids, covariances = cluster covariances + reg*I). Iterates until
    the mean log-likelihood gains less than ``tol`` (relative) or
    ``max_iter`` is hit. The recorded log-likelihood is the regularized one
    that EM with the +reg*I covariance update provably increases.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    shift, scale = standardization(x)
    z = (x - shift) / scale
    n_pts, dim = z.shape
    clus = None
    if k == "auto":
        sweep = component_sweep(z, k_max=k_max, seed=seed)
        k = _pick(sweep)
        clus = sweep.get(k, (None, None))[1]
    k = int(k)
    if n_pts <= dim * k:
        raise ValueError(f"{n_pts} points are too few for {k} components in {dim} dimensions")
    if k == 1:
        clus = Clustering(np.zeros(n_pts, int), z.mean(0)[None], 0.0)
    elif clus is None:
        clus = best_kmeans(z, k, seed=seed + k)
    eye = reg * np.eye(dim)
    weights = np.bincount(clus.labels, minlength=k) / n_pts
    means = np.array([z[clus.labels == j].mean(axis=0) for j in range(k)])
    covs = np.array([_ml_cov(z[clus.labels == j], means[j]) + eye for j in range(k)])

    history = []
    for it in range(max_iter + 1):
        # Adding reg*I in the M-step exactly maximizes the expected log-density of
        # points jittered by N(0, reg*I), i.e. log N - tr(reg * inv(cov)) / 2. The
        # E-step and the tracked objective use the same tilt, which keeps EM monotone.
        tilt = -0.5 * reg * np.trace(np.linalg.inv(covs), axis1=1, axis2=2)
        logp = _component_logpdf(z, means, covs) + np.log(weights) + tilt
        norm = logsumexp(logp, axis=1)
        ll = float(norm.mean())
        history.append(ll)
        if it > 0 and ll - history[-2] < tol * max(1.0, abs(history[-2])):
            break
        if it == max_iter:
            break
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        for j in np.flatnonzero(nk < 1e-10):
            raise FitError(f"component {j} collapsed (no responsibility left)")
        weights = nk / n_pts
        means = (resp.T @ z) / nk[:, None]
        for j in range(k):
            d = z - means[j]
            covs[j] = (resp[:, j, None] * d).T @ d / nk[j] + eye
        covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    weights = weights / weights.sum()
    return GmmModel(weights, means, covs, shift, scale, tuple(history))


def _ml_cov(pts: np.ndarray, mean: np.ndarray) -> np.ndarray:
    d = pts - mean
    return d.T @ d / len(pts)
