"""Online context division over experienced states.

Two centroid sets live side by side: the live set C absorbs one sequential
k-means update per observed state, while the frozen set C_hat answers every
assignment query. C_hat only catches up to C when sync_targets() is called,
on the same cadence as the value-network target copy, which keeps context
labels stable between target syncs.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import UsageError

log = logging.getLogger(__name__)


class ContextModel:
    """Sequential k-means state with frozen assignment centroids."""

    def __init__(self, k: int, dim: int):
        if k < 1:
            raise UsageError(f"context count must be at least 1, got {k}")
        if dim < 1:
            raise UsageError(f"space dim must be at least 1, got {dim}")
        self.k = k
        self.dim = dim
        self.centroids = None          # live set, shape (k, dim)
        self.target_centroids = None   # frozen assignment set
        self.counts = np.zeros(k, dtype=np.int64)
        self.distance_evals = 0        # distance computations, for complexity checks

    @property
    def initialized(self) -> bool:
        return self.centroids is not None

    def init_from(self, centroids, counts=None):
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.shape != (self.k, self.dim):
            raise UsageError(
                f"centroid array must be {(self.k, self.dim)}, got {centroids.shape}")
        self.centroids = centroids.copy()
        self.target_centroids = centroids.copy()
        if counts is not None:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (self.k,) or (counts < 0).any():
                raise UsageError("counts must be k non-negative integers")
            self.counts = counts.copy()

    def _require_init(self):
        if not self.initialized:
            raise UsageError("context model not initialized")

    def _nearest(self, centroids, x) -> int:
        diff = centroids - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        self.distance_evals += self.k
        return int(np.argmin(d2))  # argmin takes the lowest index on ties

    def assign(self, x) -> int:
        """Context id of x under the frozen centroid set."""
        self._require_init()
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise UsageError(f"state must have shape ({self.dim},), got {x.shape}")
        return self._nearest(self.target_centroids, x)

    def assign_batch(self, xs) -> np.ndarray:
        self._require_init()
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise UsageError(f"batch must have shape (n, {self.dim}), got {xs.shape}")
        d2 = _pairwise_d2(xs, self.target_centroids)
        self.distance_evals += self.k * len(xs)
        return d2.argmin(axis=1)

    def skm_update(self, x):
        """Absorb one state into the live centroid nearest to it.

        With n_i the post-increment count, c_i moves by (x - c_i)/n_i, which
        keeps c_i the exact running mean of everything assigned to it.
        """
        self._require_init()
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise UsageError(f"state must have shape ({self.dim},), got {x.shape}")
        i = self._nearest(self.centroids, x)
        self.counts[i] += 1
        self.centroids[i] += (x - self.centroids[i]) / self.counts[i]

    def sync_targets(self):
        self._require_init()
        self.target_centroids = self.centroids.copy()


def _pairwise_d2(xs, centers) -> np.ndarray:
    """Squared distances (n, k), chunked so n*k*dim never materializes."""
    n, dim = xs.shape
    k = len(centers)
    out = np.empty((n, k))
    rows = max(1, int(2 ** 22 // max(k * dim, 1)))
    for lo in range(0, n, rows):
        block = xs[lo:lo + rows]
        out[lo:lo + rows] = (
            (block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return out


def _kmeans_pp_seeds(points, k, rng):
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def lloyd_kmeans(points, k, rng, max_iter: int = 100, tol: float = 1e-8):
    """Batch k-means with k-means++ seeding.

    Returns (centroids, labels). Empty clusters keep their previous centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise UsageError("lloyd_kmeans needs a non-empty (n, dim) array")
    centers = _kmeans_pp_seeds(points, k, rng)
    for _ in range(max_iter):
        labels = _pairwise_d2(points, centers).argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centers[j] = points[mask].mean(axis=0)
        shift = np.abs(new_centers - centers).max()
        centers = new_centers
        if shift < tol:
            break
    labels = _pairwise_d2(points, centers).argmin(axis=1)
    return centers, labels


def warm_start(states, k: int, rng):
    """Batch-cluster an initial pool of states into k centroids.

    Returns (centroids, counts, jittered). When the pool holds fewer than k
    distinct states the distinct ones are recycled with a tiny jitter and the
    jittered flag is set so the run log can record the degenerate start.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or len(states) == 0:
        raise UsageError("warm start needs a non-empty (n, dim) array")
    distinct = np.unique(states, axis=0)
    jittered = len(distinct) < k
    if jittered:
        log.warning(
            "warm start: only %d distinct states for k=%d, jittering duplicates",
            len(distinct), k)
        reps = [distinct[i % len(distinct)] for i in range(k)]
        centers = np.asarray(reps) + 1e-6 * rng.standard_normal((k, states.shape[1]))
        labels = _pairwise_d2(states, centers).argmin(axis=1)
    else:
        centers, labels = lloyd_kmeans(states, k, rng)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return centers, counts, jittered


def score_bin_edges(return_range, k: int) -> np.ndarray:
    """Interior edges of k equal-width bins over an episode-return range."""
    lo, hi = return_range
    if not hi > lo:
        raise UsageError(f"degenerate return range {return_range}")
    return np.linspace(lo, hi, k + 1)[1:-1]


def contextualize_gs(score: float, edges) -> int:
    """Bin index of a cumulative score: the count of edges at or below it."""
    edges = np.asarray(edges, dtype=np.float64)
    return int(np.searchsorted(edges, score, side="right"))


def random_partition(states, k: int, rng):
    """Freeze k randomly drawn pool states as the anchors of a partition.

    The nearest-anchor cells form a fixed random division of the visited
    state region, with none of the adaptivity of clustering. Returns
    (anchors, counts, jittered) like warm_start; counts are the cell sizes
    over the pool, and fewer than k distinct states fall back to the same
    jitter path.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or len(states) == 0:
        raise UsageError("random partition needs a non-empty (n, dim) array")
    distinct = np.unique(states, axis=0)
    jittered = len(distinct) < k
    if jittered:
        log.warning(
            "random partition: only %d distinct states for k=%d, "
            "jittering duplicates", len(distinct), k)
        reps = [distinct[i % len(distinct)] for i in range(k)]
        anchors = (np.asarray(reps)
                   + 1e-6 * rng.standard_normal((k, states.shape[1])))
    else:
        anchors = distinct[rng.choice(len(distinct), size=k, replace=False)]
    labels = _pairwise_d2(states, anchors).argmin(axis=1)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return anchors, counts, jittered
