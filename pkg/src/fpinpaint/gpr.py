"""Per-AP Gaussian process regression from 2-D location to RSS.

All APs share one RBF kernel, so a single Cholesky factor serves every AP and
the dual weights form an (m, n_aps) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist, pdist

from .core import DataError, FingerprintMap

JITTER_START = 1e-8
JITTER_MAX = 1e-2


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelHyper:
    signal_var: float
    length_scale: float
    noise_var: float

    def __post_init__(self):
        if not (self.signal_var > 0 and self.length_scale > 0 and self.noise_var > 0):
            raise ValueError(f"kernel hyperparameters must be positive: {self}")


def rbf_kernel(p, q, h: KernelHyper) -> float:
    d2 = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
    return float(h.signal_var * np.exp(-d2 / (2.0 * h.length_scale**2)))


def rbf_matrix(a: np.ndarray, b: np.ndarray, h: KernelHyper) -> np.ndarray:
    d2 = cdist(a, b, "sqeuclidean")
    return h.signal_var * np.exp(-d2 / (2.0 * h.length_scale**2))


def select_hyper(fmap: FingerprintMap) -> KernelHyper:
    """Median-heuristic length scale, data-driven signal and noise variances."""
    pts = fmap.distinct_points
    if len(pts) < 2:
        raise DataError("need at least two distinct points to pick kernel hyperparameters")
    length_scale = float(np.median(pdist(pts)))
    targets = fmap.mean_fingerprints()
    signal_var = float(np.mean(np.var(targets, axis=0)))
    if not signal_var > 0:
        signal_var = 1.0

    counts = fmap.sample_counts
    multi = np.flatnonzero(counts >= 2)
    if len(multi) == 0:
        noise_var = 1.0
    else:
        noise_var = float(np.mean([np.var(fmap.samples_at(i), axis=0, ddof=1).mean() for i in multi]))
        if not noise_var > 0:
            noise_var = 1.0
    return KernelHyper(signal_var, length_scale, noise_var)


@dataclass(frozen=True)
class GprModel:
    train_xy: np.ndarray  # (m, 2) deduplicated points
    train_y: np.ndarray  # (m, n_aps) per-point mean targets
    y_mean: np.ndarray  # (n_aps,) per-AP target mean
    hyper: KernelHyper
    chol: np.ndarray  # lower Cholesky factor of K + (noise + jitter) I
    alpha: np.ndarray  # (m, n_aps) dual weights
    jitter: float = 0.0
    rss_floor: float = -100.0
    rss_ceiling: float = 0.0

    @property
    def n_aps(self) -> int:
        return len(self.y_mean)


def _cholesky_with_jitter(k: np.ndarray, signal_var: float):
    try:
        return np.linalg.cholesky(k), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(len(k))
    jitter = JITTER_START * signal_var
    while jitter <= JITTER_MAX * signal_var * (1 + 1e-12):
        try:
            return np.linalg.cholesky(k + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise FactorizationError("kernel matrix not positive definite even with maximum jitter")


def fit_gpr_targets(
    xy: np.ndarray,
    y: np.ndarray,
    h: KernelHyper,
    rss_floor: float = -100.0,
    rss_ceiling: float = 0.0,
    jitter: float | None = None,
) -> GprModel:
    """Fit on deduplicated points ``xy`` with per-point targets ``y``.

    ``jitter=None`` runs the jitter ladder; a number reuses that exact jitter.
    """
    xy = np.asarray(xy, dtype=float)
    y = np.asarray(y, dtype=float)
    y_mean = y.mean(axis=0)
    k = rbf_matrix(xy, xy, h) + h.noise_var * np.eye(len(xy))
    if jitter is None:
        chol, jitter = _cholesky_with_jitter(k, h.signal_var)
    else:
        chol = np.linalg.cholesky(k + jitter * np.eye(len(xy)) if jitter else k)
    tmp = solve_triangular(chol, y - y_mean, lower=True)
    alpha = solve_triangular(chol.T, tmp, lower=False)
    return GprModel(xy.copy(), y.copy(), y_mean, h, chol, alpha, jitter, rss_floor, rss_ceiling)


def fit_gpr(fmap: FingerprintMap, h: KernelHyper | None = None) -> GprModel:
    """One GP per AP sharing a kernel; repeated samples at a point are averaged."""
    if len(fmap) == 0:
        raise DataError("cannot fit GPR on an empty map")
    if h is None:
        h = select_hyper(fmap)
    return fit_gpr_targets(fmap.distinct_points, fmap.mean_fingerprints(), h, fmap.rss_floor, fmap.rss_ceiling)


def gpr_predict_many(model: GprModel, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means (q, n_aps) clipped to the RSS range, and latent variances (q,)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    ks = rbf_matrix(pts, model.train_xy, model.hyper)
    mean = ks @ model.alpha + model.y_mean
    v = solve_triangular(model.chol, ks.T, lower=True)
    var = model.hyper.signal_var - np.sum(v * v, axis=0)
    return np.clip(mean, model.rss_floor, model.rss_ceiling), np.maximum(var, 0.0)


def gpr_predict(model: GprModel, p) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean fingerprint at ``p`` and per-AP posterior variance."""
    mean, var = gpr_predict_many(model, np.asarray(p, dtype=float)[None, :])
    return mean[0], np.full(model.n_aps, var[0])
