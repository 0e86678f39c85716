"""Context division: sequential k-means invariants and the fallback schemes."""

import numpy as np
import pytest

from contextrl.context import (
    ContextModel,
    contextualize_gs,
    lloyd_kmeans,
    random_partition,
    score_bin_edges,
    warm_start,
)
from contextrl.errors import UsageError


def test_skm_centroids_are_exact_running_means():
    """The incremental update must reproduce per-cluster batch means.

    Assignments are replayed against the live set with a brute-force
    nearest-centroid search, then each centroid is compared with the plain
    mean of everything routed to it.
    """
    rng = np.random.default_rng(0)
    for trial in range(20):
        k = int(rng.integers(1, 6))
        dim = int(rng.integers(1, 5))
        model = ContextModel(k, dim)
        init = rng.normal(size=(k, dim))
        model.init_from(init)

        # counts start at zero, so the first assignment replaces the seed
        # centroid and the cluster mean covers assigned states only
        assigned = [[] for _ in range(k)]
        mirror = init.copy()
        for _ in range(300):
            x = rng.normal(size=dim)
            d2 = ((mirror - x) ** 2).sum(axis=1)
            i = int(d2.argmin())
            assigned[i].append(x)
            model.skm_update(x)
            mirror[i] = np.mean(assigned[i], axis=0)

        for i in range(k):
            want = np.mean(assigned[i], axis=0) if assigned[i] else init[i]
            np.testing.assert_allclose(model.centroids[i], want, rtol=1e-10)
            assert model.counts[i] == len(assigned[i])


def test_skm_counts_continue_from_init():
    model = ContextModel(2, 1)
    model.init_from([[0.0], [10.0]], counts=[3, 1])
    model.skm_update([2.0])
    # centroid 0 held 3 states averaging 0.0; the new state is its 4th
    assert model.counts[0] == 4
    np.testing.assert_allclose(model.centroids[0], [0.5])
    np.testing.assert_allclose(model.centroids[1], [10.0])


def test_assignment_uses_frozen_set_until_sync():
    model = ContextModel(2, 1)
    model.init_from([[0.0], [1.0]])
    # drag live centroid 0 to 0.4; the frozen set must not notice
    for _ in range(5):
        model.skm_update([0.4])
    assert model.centroids[0] == 0.4
    assert model.assign([0.6]) == 1   # frozen midpoint is still 0.5
    model.sync_targets()
    assert model.assign([0.6]) == 0   # midpoint moved to 0.7
    np.testing.assert_array_equal(model.target_centroids, model.centroids)


def test_assignment_flip_after_sync():
    model = ContextModel(2, 1)
    model.init_from([[0.0], [1.0]])
    for _ in range(50):
        model.skm_update([0.9])  # live centroid 0 stays, 1 barely moves
    # push live centroid 0 toward 0.8 by feeding points nearer to it
    for _ in range(200):
        model.skm_update([0.45])
    before = model.assign([0.6])
    model.sync_targets()
    after = model.assign([0.6])
    assert before == 1
    assert after == 0  # live centroid 0 moved to ~0.45, closer to 0.6 than 0.9ish


def test_distance_evals_count_is_k_per_query():
    model = ContextModel(4, 3)
    model.init_from(np.arange(12, dtype=float).reshape(4, 3))
    model.assign(np.zeros(3))
    assert model.distance_evals == 4
    model.skm_update(np.zeros(3))
    assert model.distance_evals == 8
    model.assign_batch(np.zeros((10, 3)))
    assert model.distance_evals == 8 + 40


def test_tie_breaks_to_lowest_index():
    model = ContextModel(3, 1)
    model.init_from([[1.0], [-1.0], [1.0]])
    assert model.assign([0.0]) == 0
    assert model.assign([1.0]) == 0


def test_assign_batch_matches_scalar_assign():
    rng = np.random.default_rng(1)
    model = ContextModel(5, 4)
    model.init_from(rng.normal(size=(5, 4)))
    xs = rng.normal(size=(64, 4))
    batch = model.assign_batch(xs)
    scalar = np.array([model.assign(x) for x in xs])
    np.testing.assert_array_equal(batch, scalar)


def test_context_model_validation():
    with pytest.raises(UsageError):
        ContextModel(0, 3)
    with pytest.raises(UsageError):
        ContextModel(2, 0)
    model = ContextModel(2, 3)
    with pytest.raises(UsageError):
        model.assign(np.zeros(3))  # not initialized
    with pytest.raises(UsageError):
        model.init_from(np.zeros((3, 3)))
    model.init_from(np.zeros((2, 3)))
    with pytest.raises(UsageError):
        model.assign(np.zeros(4))
    with pytest.raises(UsageError):
        model.init_from(np.zeros((2, 3)), counts=[-1, 2])


def test_lloyd_k1_is_the_mean():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(100, 3))
    centers, labels = lloyd_kmeans(pts, 1, rng)
    np.testing.assert_allclose(centers[0], pts.mean(axis=0), rtol=1e-12)
    assert np.all(labels == 0)


def test_lloyd_separated_blobs():
    rng = np.random.default_rng(3)
    blobs = np.concatenate([
        rng.normal(loc, 0.05, size=(40, 2))
        for loc in ((0.0, 0.0), (5.0, 5.0), (-5.0, 5.0))
    ])
    centers, labels = lloyd_kmeans(blobs, 3, rng)
    # each blob maps to exactly one label and centers sit on blob means
    for lo in range(0, 120, 40):
        blob_labels = set(labels[lo:lo + 40])
        assert len(blob_labels) == 1
        j = blob_labels.pop()
        np.testing.assert_allclose(
            centers[j], blobs[lo:lo + 40].mean(axis=0), atol=1e-6)
    assert len(set(labels)) == 3


def test_lloyd_labels_are_nearest_center():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(200, 3))
    centers, labels = lloyd_kmeans(pts, 4, rng)
    d2 = ((pts[:, None, :] - centers[None]) ** 2).sum(axis=2)
    np.testing.assert_array_equal(labels, d2.argmin(axis=1))
    with pytest.raises(UsageError):
        lloyd_kmeans(np.zeros((0, 3)), 2, rng)


def test_warm_start_counts_cover_pool():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(150, 4))
    centers, counts, jittered = warm_start(pts, 3, rng)
    assert centers.shape == (3, 4)
    assert counts.sum() == 150
    assert not jittered


def test_warm_start_jitters_degenerate_pool(caplog):
    rng = np.random.default_rng(6)
    pts = np.tile([[1.0, 2.0]], (30, 1))
    with caplog.at_level("WARNING"):
        centers, counts, jittered = warm_start(pts, 3, rng)
    assert jittered
    assert counts.sum() == 30
    assert len(np.unique(centers, axis=0)) == 3
    np.testing.assert_allclose(centers, np.tile([[1.0, 2.0]], (3, 1)), atol=1e-4)
    assert any("distinct" in r.message for r in caplog.records)


def test_score_bin_edges_and_binning():
    edges = score_bin_edges((0.0, 200.0), 4)
    np.testing.assert_allclose(edges, [50.0, 100.0, 150.0])
    assert contextualize_gs(0.0, edges) == 0
    assert contextualize_gs(49.9, edges) == 0
    assert contextualize_gs(50.0, edges) == 1   # boundary goes to the upper bin
    assert contextualize_gs(149.0, edges) == 2
    assert contextualize_gs(500.0, edges) == 3  # scores past the range clamp
    assert contextualize_gs(-10.0, edges) == 0

    assert score_bin_edges((0.0, 100.0), 1).size == 0
    with pytest.raises(UsageError):
        score_bin_edges((5.0, 5.0), 3)


def test_gs_bins_roughly_uniform_over_range():
    edges = score_bin_edges((-2000.0, 0.0), 4)
    scores = np.linspace(-2000.0, -0.001, 4000)
    bins = np.bincount([contextualize_gs(s, edges) for s in scores], minlength=4)
    assert np.all(bins == 1000)


def test_random_partition_anchors_come_from_the_pool():
    rng = np.random.default_rng(7)
    pool = rng.normal(size=(200, 3))
    anchors, counts, jittered = random_partition(pool, 4, np.random.default_rng(1))
    assert not jittered
    pool_rows = {row.tobytes() for row in pool}
    assert all(a.tobytes() in pool_rows for a in anchors)
    assert len({a.tobytes() for a in anchors}) == 4
    # counts are the nearest-anchor cell sizes over the pool
    d2 = ((pool[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)
    np.testing.assert_array_equal(
        counts, np.bincount(d2.argmin(axis=1), minlength=4))
    assert counts.sum() == len(pool)


def test_random_partition_seed_behaviour():
    pool = np.random.default_rng(3).normal(size=(50, 2))
    a1, c1, _ = random_partition(pool, 3, np.random.default_rng(5))
    a2, c2, _ = random_partition(pool, 3, np.random.default_rng(5))
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(c1, c2)
    b, _, _ = random_partition(pool, 3, np.random.default_rng(6))
    assert not np.array_equal(a1, b)


def test_random_partition_degenerate_pool_jitters(caplog):
    pool = np.tile(np.array([[1.0, 2.0]]), (10, 1))
    with caplog.at_level("WARNING"):
        anchors, counts, jittered = random_partition(
            pool, 3, np.random.default_rng(0))
    assert jittered
    assert "jittering" in caplog.text
    assert len({a.tobytes() for a in anchors}) == 3
    assert counts.sum() == 10
    with pytest.raises(UsageError):
        random_partition(np.empty((0, 2)), 2, np.random.default_rng(0))
