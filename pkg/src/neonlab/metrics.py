"""Toy-scale sample-quality metrics.

The "FID" here is the Gaussian Frechet distance computed directly on raw
2D coordinates (no feature network): fit a Gaussian to each sample set by
MLE and return the squared Frechet distance between the fits.  Not
comparable to Inception-FID numbers; same convention (squared distance).

Precision/recall follows the improved k-NN manifold definition: a fake
point counts as precise if it falls inside any real point's k-NN ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import fit_mle, w2


@dataclass(frozen=True)
class PrConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


def frechet_2d(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Frechet distance between MLE Gaussian fits of two 2D sets."""
    ga = fit_mle(a)
    gb = fit_mle(b)
    d = w2(ga, gb)
    return d * d


def _knn_radii_sq(points: np.ndarray, k: int) -> np.ndarray:
    """Squared distance from each point to its k-th nearest neighbor in the
    same set, excluding the point itself.  Squared distances throughout so
    the membership test is an exact comparison (ties resolve by <=)."""
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    d2.sort(axis=1)
    return d2[:, k - 1]


def _fraction_covered(centers: np.ndarray, radii_sq: np.ndarray, queries: np.ndarray) -> float:
    d2 = np.sum((queries[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    covered = np.any(d2 <= radii_sq[None, :], axis=1)
    return float(np.mean(covered))


def precision_recall(
    real: np.ndarray, fake: np.ndarray, cfg: PrConfig = PrConfig()
) -> tuple[float, float]:
    """Improved k-NN precision/recall.

    precision: fraction of fake points inside the union of real k-NN balls
    (ball radius = distance to the k-th nearest real neighbor, self
    excluded, membership by <=).  recall: same with roles swapped.
    """
    r = np.asarray(real, dtype=np.float64)
    f = np.asarray(fake, dtype=np.float64)
    if r.ndim != 2 or f.ndim != 2 or r.shape[1] != f.shape[1]:
        raise ValueError("sample sets must be 2-D arrays with matching width")
    if cfg.k >= min(r.shape[0], f.shape[0]):
        raise ValueError(
            f"k={cfg.k} too large for set sizes {r.shape[0]}/{f.shape[0]}"
        )
    precision = _fraction_covered(r, _knn_radii_sq(r, cfg.k), f)
    recall = _fraction_covered(f, _knn_radii_sq(f, cfg.k), r)
    return precision, recall
