from __future__ import annotations

import math

import numpy as np
import pytest

from chatmap.errors import (
    DimensionMismatch,
    InvalidArg,
    LanguageMismatch,
    NotFound,
    TooManyPoints,
)
from chatmap.projection import (
    LayoutParams,
    NeighborGraph,
    ProjectorRegistry,
    attraction_grad,
    attraction_loss,
    fit_projector,
    kmeans_labels,
    knn_graph,
    mlp_forward,
    mlp_loss_and_grad,
    model_fingerprint,
    optimize_layout,
    pca_init,
    project_for_language,
    read_model_bytes,
    repulsion_grad,
    repulsion_loss,
    silhouette_score,
    smooth_weights,
    write_model_bytes,
)
from oracles import brute_force_knn


def blob_data(rng, n_per=60, centers=5, dim=16, spread=0.5):
    C = rng.normal(0, 5, (centers, dim))
    X = np.vstack([c + rng.normal(0, spread, (n_per, dim)) for c in C])
    labels = np.repeat(np.arange(centers), n_per)
    return X, labels


class TestKnnGraph:
    def test_three_equidistant_points_complete_symmetric(self):
        # equilateral triangle: everyone is everyone's neighbor
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        g = knn_graph(X, 2)
        pairs = set(zip(g.heads.tolist(), g.tails.tolist()))
        assert pairs == {(a, b) for a in range(3) for b in range(3) if a != b}
        w = {(h, t): wt for h, t, wt in zip(g.heads.tolist(), g.tails.tolist(), g.weights.tolist())}
        for (a, b), wt in w.items():
            assert wt == pytest.approx(w[(b, a)])

    def test_matches_brute_force_on_500_random_points(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(500, 8))
        k = 10
        want_idx, want_dist = brute_force_knn(X.tolist(), k)

        # reach into the chunked scan via a tiny graph run: recompute via the
        # module's internals by asking for the graph and checking edge sets
        # won't identify per-point neighbors, so recompute neighbor lists the
        # same way knn_graph does
        from chatmap.projection import _pairwise_block

        x2 = np.einsum("ij,ij->i", X, X)
        d = _pairwise_block(X, X, x2, x2)
        np.fill_diagonal(d, np.inf)
        got_idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        for i in range(500):
            assert got_idx[i].tolist() == want_idx[i]
            got_d = d[i, got_idx[i]]
            assert np.allclose(got_d, want_dist[i], atol=1e-9)

    def test_sigma_calibration_example(self):
        dists = np.array([1.0, 2.0, 3.0, 4.0])
        w, rho, sigma = smooth_weights(dists, 4)
        assert rho == 1.0
        # evaluate the monotone sum at the returned sigma
        total = float(np.exp(-(dists - rho) / sigma).sum())
        assert abs(total - math.log2(4)) <= 1e-3

    def test_duplicate_fallback(self):
        dists = np.zeros(4)
        w, rho, sigma = smooth_weights(dists, 4)
        assert rho == 0.0 and sigma == 1.0
        assert np.allclose(w, 1.0)

    def test_weight_sums_hit_log2k(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 6))
        k = 8
        x2 = np.einsum("ij,ij->i", X, X)
        from chatmap.projection import _pairwise_block

        d = _pairwise_block(X, X, x2, x2)
        np.fill_diagonal(d, np.inf)
        for i in range(0, 100, 17):
            nd = np.sort(d[i])[:k]
            w, rho, sigma = smooth_weights(nd, k)
            assert abs(w.sum() - math.log2(k)) <= 1e-3

    def test_limits(self):
        rng = np.random.default_rng(0)
        with pytest.raises(InvalidArg):
            knn_graph(rng.normal(size=(5, 3)), 5)
        with pytest.raises(TooManyPoints):
            knn_graph(np.zeros((20_001, 2)), 5)

    def test_symmetrized_weight_formula(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(30, 4))
        g = knn_graph(X, 5)
        w = {(h, t): wt for h, t, wt in zip(g.heads.tolist(), g.tails.tolist(), g.weights.tolist())}
        # recompute directed weights and apply the fuzzy union independently
        x2 = np.einsum("ij,ij->i", X, X)
        from chatmap.projection import _pairwise_block

        d = _pairwise_block(X, X, x2, x2)
        np.fill_diagonal(d, np.inf)
        directed = {}
        for i in range(30):
            order = np.argsort(d[i], kind="stable")[:5]
            ws, _, _ = smooth_weights(d[i, order], 5)
            for pos, j in enumerate(order.tolist()):
                directed[(i, j)] = float(ws[pos])
        for (a, b), wt in w.items():
            wa = directed.get((a, b), 0.0)
            wb = directed.get((b, a), 0.0)
            assert wt == pytest.approx(wa + wb - wa * wb, rel=1e-12)


class TestLossTerms:
    def test_attraction_pulls_together(self):
        # two points, one edge, no negatives: distance must shrink
        X = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [5.0, 5.0, 5.0]])
        g = knn_graph(X, 2)
        # keep only the (0, 1) edge, drop repulsion
        keep = (g.heads == 0) & (g.tails == 1) | (g.heads == 1) & (g.tails == 0)
        g2 = NeighborGraph(g.n_points, g.heads[keep], g.tails[keep], g.weights[keep], g.X)
        init = pca_init(g2.X)
        d0 = float(np.linalg.norm(init[0] - init[1]))
        layout = optimize_layout(g2, LayoutParams(k_neighbors=2, epochs=30, negatives_per_edge=0, rng_seed=0))
        d1 = float(np.linalg.norm(layout.Y[0] - layout.Y[1]))
        assert d1 < d0

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        eps = 1e-6
        for _ in range(50):
            yi = rng.uniform(-3, 3, 2)
            yj = rng.uniform(-3, 3, 2)
            if np.linalg.norm(yi - yj) < 0.3:
                yj = yj + 1.0
            w = rng.uniform(0.1, 1.0)
            gamma = rng.uniform(0.5, 2.0)
            for loss, grad, arg in (
                (lambda a, b: attraction_loss(a, b, w), lambda a, b: attraction_grad(a, b, w), "att"),
                (lambda a, b: repulsion_loss(a, b, gamma), lambda a, b: repulsion_grad(a, b, gamma), "rep"),
            ):
                gi, gj = grad(yi, yj)
                fd = np.zeros(4)
                theta = np.concatenate([yi, yj])
                for d in range(4):
                    up = theta.copy()
                    dn = theta.copy()
                    up[d] += eps
                    dn[d] -= eps
                    fd[d] = (loss(up[:2], up[2:]) - loss(dn[:2], dn[2:])) / (2 * eps)
                ana = np.concatenate([gi, gj])
                rel = np.linalg.norm(ana - fd) / max(np.linalg.norm(ana), np.linalg.norm(fd), 1e-12)
                assert rel <= 1e-4, arg


class TestOptimizeLayout:
    def test_seed_determinism_bit_identical(self):
        rng = np.random.default_rng(2)
        X, _ = blob_data(rng, n_per=40, centers=3)
        g = knn_graph(X, 8)
        p = LayoutParams(k_neighbors=8, epochs=40, rng_seed=77)
        a = optimize_layout(g, p)
        b = optimize_layout(g, p)
        assert np.array_equal(a.Y, b.Y)
        assert a.loss_trace == b.loss_trace

    def test_loss_decreases_and_trace_settles(self):
        rng = np.random.default_rng(4)
        X, _ = blob_data(rng)
        g = knn_graph(X, 10)
        layout = optimize_layout(g, LayoutParams(k_neighbors=10, epochs=80, rng_seed=5))
        assert layout.loss_trace[-1] < layout.loss_trace[0]
        layout.validate()

    def test_finite_coordinates(self):
        rng = np.random.default_rng(6)
        X, _ = blob_data(rng, n_per=30, centers=2)
        layout = optimize_layout(knn_graph(X, 6), LayoutParams(k_neighbors=6, epochs=25, rng_seed=1))
        assert np.all(np.isfinite(layout.Y))

    def test_point_ids_len_checked(self):
        rng = np.random.default_rng(6)
        X, _ = blob_data(rng, n_per=20, centers=2)
        with pytest.raises(InvalidArg):
            optimize_layout(knn_graph(X, 5), LayoutParams(k_neighbors=5, epochs=5), point_ids=["just-one"])

    def test_param_validation(self):
        with pytest.raises(InvalidArg):
            LayoutParams(k_neighbors=1)
        with pytest.raises(InvalidArg):
            LayoutParams(epochs=0)


class TestProjector:
    def test_affine_target_fits_tightly(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(400, 12))
        M = rng.normal(size=(12, 2))
        Y = X @ M + np.array([1.5, -2.0])
        layout = _layout_from(Y)
        model = fit_projector(X, layout, "English", hidden=32, epochs=800, seed=3)
        diag = _bbox_diagonal(Y)
        assert model.train_rmse <= 1e-3 * diag

    def test_blob_layout_rmse_within_5pct(self):
        rng = np.random.default_rng(10)
        X, _ = blob_data(rng, n_per=60, centers=4, dim=24)
        g = knn_graph(X, 10)
        layout = optimize_layout(g, LayoutParams(k_neighbors=10, epochs=80, rng_seed=2))
        model = fit_projector(X, layout, "English", seed=2)
        assert model.train_rmse <= 0.05 * _bbox_diagonal(layout.Y)

    def test_train_rmse_is_reproducible_from_model(self):
        rng = np.random.default_rng(12)
        X, _ = blob_data(rng, n_per=30, centers=3, dim=8)
        layout = optimize_layout(knn_graph(X, 6), LayoutParams(k_neighbors=6, epochs=30, rng_seed=4))
        model = fit_projector(X, layout, "English", epochs=150, seed=4)
        pred = model.project_many(X)
        rmse = float(np.sqrt(np.mean(np.sum((pred - layout.Y) ** 2, axis=1))))
        assert rmse == pytest.approx(model.train_rmse, abs=0.0)

    def test_serialization_round_trip_projects_identically(self):
        rng = np.random.default_rng(13)
        X, _ = blob_data(rng, n_per=25, centers=3, dim=8)
        layout = optimize_layout(knn_graph(X, 5), LayoutParams(k_neighbors=5, epochs=20, rng_seed=1))
        model = fit_projector(X, layout, "Spanish", epochs=100, seed=1)
        data = write_model_bytes(model)
        model2 = read_model_bytes(data)
        probe = rng.normal(size=(50, 8))
        a = model.project_many(probe)
        b = model2.project_many(probe)
        assert np.array_equal(a, b)
        assert write_model_bytes(model2) == data
        assert model2.language == "Spanish"

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(14)
        X, _ = blob_data(rng, n_per=20, centers=2, dim=8)
        layout = optimize_layout(knn_graph(X, 5), LayoutParams(k_neighbors=5, epochs=10, rng_seed=1))
        model = fit_projector(X, layout, "English", epochs=50, seed=1)
        with pytest.raises(DimensionMismatch):
            model.project(np.zeros(9))

    def test_language_guard_and_registry(self):
        rng = np.random.default_rng(15)
        X, _ = blob_data(rng, n_per=20, centers=2, dim=8)
        layout = optimize_layout(knn_graph(X, 5), LayoutParams(k_neighbors=5, epochs=10, rng_seed=1))
        model = fit_projector(X, layout, "English", epochs=50, seed=1)
        with pytest.raises(LanguageMismatch):
            project_for_language(model, X[0], "Spanish")
        x, y = project_for_language(model, X[0], "english")
        assert math.isfinite(x) and math.isfinite(y)

        reg = ProjectorRegistry()
        reg.register(model)
        assert reg.get("ENGLISH") is model
        with pytest.raises(NotFound):
            reg.get("Spanish")
        assert reg.languages() == ["English"]

    def test_fingerprint_changes_with_model(self):
        rng = np.random.default_rng(16)
        X, _ = blob_data(rng, n_per=20, centers=2, dim=8)
        layout = optimize_layout(knn_graph(X, 5), LayoutParams(k_neighbors=5, epochs=10, rng_seed=1))
        m1 = fit_projector(X, layout, "English", epochs=50, seed=1)
        m2 = fit_projector(X, layout, "English", epochs=50, seed=2)
        assert model_fingerprint(write_model_bytes(m1)) != model_fingerprint(write_model_bytes(m2))


class TestMlpGradient:
    def test_backprop_matches_forward(self):
        rng = np.random.default_rng(17)
        params = {
            "W1": rng.normal(size=(5, 6)),
            "b1": rng.normal(size=5),
            "W2": rng.normal(size=(2, 5)),
            "b2": rng.normal(size=2),
        }
        X = rng.normal(size=(8, 6))
        Y = rng.normal(size=(8, 2))
        loss, _ = mlp_loss_and_grad(params, X, Y)
        pred = mlp_forward(params, X)
        assert loss == pytest.approx(float(np.mean((pred - Y) ** 2)))


class TestClusterMetrics:
    def test_silhouette_separates_blobs_from_noise(self):
        rng = np.random.default_rng(18)
        X, labels = blob_data(rng, n_per=40, centers=3, dim=2, spread=0.3)
        good = silhouette_score(X, labels)
        shuffled = labels.copy()
        rng.shuffle(shuffled)
        bad = silhouette_score(X, shuffled)
        assert good > 0.6 > bad

    def test_kmeans_recovers_blobs(self):
        rng = np.random.default_rng(19)
        X, labels = blob_data(rng, n_per=50, centers=4, dim=6, spread=0.2)
        got = kmeans_labels(X, 4, seed=1)
        # same-cluster pairs should mostly agree (label permutation invariant)
        from itertools import combinations

        agree = sum(
            1 for i, j in combinations(range(0, len(X), 7), 2)
            if (labels[i] == labels[j]) == (got[i] == got[j]))
        total = sum(1 for _ in combinations(range(0, len(X), 7), 2))
        assert agree / total > 0.95


def _layout_from(Y: np.ndarray):
    from chatmap.projection import ReferenceLayout

    return ReferenceLayout(point_ids=[str(i) for i in range(len(Y))],
                           Y=np.asarray(Y, dtype=np.float64), loss_trace=[1.0, 0.5])


def _bbox_diagonal(Y: np.ndarray) -> float:
    span = Y.max(axis=0) - Y.min(axis=0)
    return float(np.sqrt(np.sum(span ** 2)))
