import numpy as np
import pytest

from mlsvm.data import Dataset
from mlsvm.knn import KnnConfig, build_knn_graph, knn_recall
from oracles import brute_knn


def points_dataset(x):
    x = np.asarray(x, dtype=float)
    return Dataset(x, np.zeros_like(x, dtype=bool),
                   np.ones(x.shape[0], dtype=int), (1,))


class TestExact:
    def test_three_points_on_a_line(self):
        ds = points_dataset([[0.0], [1.0], [10.0]])
        g = build_knn_graph(ds, np.arange(3), KnnConfig(k=1, mode="exact"))
        assert g.neighbor_ids[:, 0].tolist() == [1, 0, 1]
        edges = {tuple(sorted((i, int(j)))) for i in range(3)
                 for j in g.undirected_neighbors(i)}
        assert edges == {(0, 1), (1, 2)}

    def test_k_equal_n_minus_one_is_complete(self):
        ds = points_dataset(np.random.default_rng(0).normal(size=(6, 2)))
        g = build_knn_graph(ds, np.arange(6), KnnConfig(k=5, mode="exact"))
        for i in range(6):
            assert len(g.undirected_neighbors(i)) == 5

    def test_duplicates_no_self_loop(self):
        ds = points_dataset([[0.0], [0.0], [5.0]])
        g = build_knn_graph(ds, np.arange(3), KnnConfig(k=1, mode="exact"))
        assert g.neighbor_ids[0, 0] == 1
        assert g.neighbor_ids[1, 0] == 0
        assert g.neighbor_dists[0, 0] == 0.0
        for i in range(3):
            assert i not in g.undirected_neighbors(i)

    def test_matches_brute_force_oracle(self):
        x = np.random.default_rng(5).normal(size=(120, 4))
        ds = points_dataset(x)
        g = build_knn_graph(ds, np.arange(120), KnnConfig(k=7, mode="exact"))
        assert np.array_equal(g.neighbor_ids, brute_knn(x, 7))

    def test_row_order_invariance_up_to_tiebreak(self):
        x = np.random.default_rng(6).normal(size=(40, 3))
        ds = points_dataset(x)
        g1 = build_knn_graph(ds, np.arange(40), KnnConfig(k=4, mode="exact"))
        perm = np.random.default_rng(7).permutation(40)
        xp = x[perm]
        dsp = points_dataset(xp)
        g2 = build_knn_graph(dsp, np.arange(40), KnnConfig(k=4, mode="exact"))
        # map no-tie rows back: neighbor sets must agree through the permutation
        inv = np.empty(40, dtype=int)
        inv[perm] = np.arange(40)
        for new_pos in range(40):
            orig = perm[new_pos]
            assert set(perm[g2.neighbor_ids[new_pos]]) == set(g1.neighbor_ids[orig])

    def test_stored_distances_recompute(self):
        x = np.random.default_rng(8).normal(size=(50, 3))
        ds = points_dataset(x)
        g = build_knn_graph(ds, np.arange(50), KnnConfig(k=5, mode="exact"))
        for i in range(50):
            for j, d in zip(g.neighbor_ids[i], g.neighbor_dists[i]):
                true = np.sqrt(((x[i] - x[j]) ** 2).sum())
                assert abs(d - true) <= 1e-12 * max(true, 1.0)

    def test_neighbor_lists_sorted_by_distance(self):
        x = np.random.default_rng(9).normal(size=(30, 2))
        ds = points_dataset(x)
        g = build_knn_graph(ds, np.arange(30), KnnConfig(k=6, mode="exact"))
        assert (np.diff(g.neighbor_dists, axis=1) >= 0).all()

    def test_degree_at_least_one(self):
        x = np.random.default_rng(10).normal(size=(15, 2))
        ds = points_dataset(x)
        g = build_knn_graph(ds, np.arange(15), KnnConfig(k=3, mode="exact"))
        assert (np.diff(g.und_indptr) >= 1).all()


class TestClampAndErrors:
    def test_k_clamped_with_warning(self):
        ds = points_dataset([[0.0], [1.0], [2.0]])
        with pytest.warns(UserWarning, match="clamping"):
            g = build_knn_graph(ds, np.arange(3), KnnConfig(k=10, mode="exact"))
        assert g.k == 2

    def test_empty_rows_error(self):
        ds = points_dataset([[0.0]])
        with pytest.raises(ValueError, match="nonempty"):
            build_knn_graph(ds, [], KnnConfig(k=1))

    def test_missing_cells_rejected(self):
        x = np.array([[1.0], [2.0]])
        ds = Dataset(x, np.array([[True], [False]]), np.ones(2, dtype=int), (1,))
        with pytest.raises(ValueError, match="missing"):
            build_knn_graph(ds, np.arange(2), KnnConfig(k=1))


class TestRecall:
    def test_identity_recall_is_one(self):
        ds = points_dataset(np.random.default_rng(1).normal(size=(60, 3)))
        g = build_knn_graph(ds, np.arange(60), KnnConfig(k=5, mode="exact"))
        assert knn_recall(g, g) == 1.0

    def test_disjoint_lists_recall_zero(self):
        ds = points_dataset(np.arange(8.0)[:, None])
        g1 = build_knn_graph(ds, np.arange(8), KnnConfig(k=1, mode="exact"))
        g2 = build_knn_graph(ds, np.arange(8), KnnConfig(k=1, mode="exact"))
        g2 = type(g2)(g2.node_ids, (g2.neighbor_ids + 4) % 8, g2.neighbor_dists,
                      g2.k, g2.und_indptr, g2.und_indices)
        overlap = (g1.neighbor_ids == g2.neighbor_ids).mean()
        assert knn_recall(g2, g1) == pytest.approx(overlap)

    def test_gaussian_cloud_recall_at_least_090(self):
        x = np.random.default_rng(42).normal(size=(1000, 10))
        ds = points_dataset(x)
        approx = build_knn_graph(ds, np.arange(1000),
                                 KnnConfig(k=10, mode="approximate"), seed=0)
        exact = build_knn_graph(ds, np.arange(1000), KnnConfig(k=10, mode="exact"))
        assert knn_recall(approx, exact) >= 0.9

    def test_node_set_mismatch(self):
        ds = points_dataset(np.random.default_rng(2).normal(size=(10, 2)))
        g1 = build_knn_graph(ds, np.arange(10), KnnConfig(k=2, mode="exact"))
        g2 = build_knn_graph(ds, np.arange(8), KnnConfig(k=2, mode="exact"))
        with pytest.raises(ValueError):
            knn_recall(g1, g2)


def test_positions_of_maps_rows_to_nodes():
    ds = points_dataset(np.random.default_rng(3).normal(size=(10, 2)))
    rows = np.array([7, 3, 9, 1])
    g = build_knn_graph(ds, rows, KnnConfig(k=2, mode="exact"))
    pos = g.positions_of([9, 7])
    assert g.node_ids[pos].tolist() == [9, 7]
    with pytest.raises(ValueError):
        g.positions_of([4])


def test_dump_format(tmp_path):
    ds = points_dataset([[0.0], [1.0], [3.0]])
    g = build_knn_graph(ds, np.arange(3), KnnConfig(k=1, mode="exact"))
    out = tmp_path / "g.txt"
    with open(out, "w") as fh:
        g.dump(fh)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("0: (1,")
