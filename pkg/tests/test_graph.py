import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import path3, random_graph
from tifa_gcl.graph import (
    COLUMN,
    SYMMETRIC,
    GraphError,
    bfs_hops,
    from_edges,
    induced_subgraph,
    load_graph,
    normalize,
    row_normalize_features,
    save_graph,
    synth_sbm,
)


def write_dataset(path, n, h, k, edges, feats, labels, split):
    path.mkdir(exist_ok=True)
    (path / "meta.json").write_text(json.dumps({"n": n, "h": h, "k": k}))
    (path / "edges.tsv").write_text("".join(f"{a}\t{b}\n" for a, b in edges))
    (path / "features.tsv").write_text("".join("\t".join(map(str, r)) + "\n" for r in feats))
    (path / "labels.tsv").write_text("".join(f"{i}\t{c}\n" for i, c in labels))
    (path / "split.json").write_text(json.dumps(split))
    return path


@pytest.fixture
def p3_dir(tmp_path):
    return write_dataset(tmp_path / "p3", 3, 2, 2, [(0, 1), (1, 2)],
                         [[1, 0], [0.5, 0.5], [0, 1]], [(0, 0), (2, 1)],
                         {"train": [0, 2], "val": [], "test": [1]})


class TestLoad:
    def test_path_dataset(self, p3_dir):
        g = load_graph(str(p3_dir))
        assert g.n == 3 and g.num_edges == 2
        assert g.y.tolist() == [0, -1, 1]
        assert g.train_mask.tolist() == [True, False, True]

    def test_reverse_duplicate_collapses(self, tmp_path):
        d = write_dataset(tmp_path / "d", 3, 1, 2, [(1, 2), (2, 1), (0, 0)],
                          [[0], [1], [2]], [(0, 0)], {"train": [0]})
        g = load_graph(str(d))
        assert g.num_edges == 1
        assert g.neighbors(1).tolist() == [2] and g.neighbors(0).tolist() == []

    def test_label_out_of_range(self, tmp_path):
        d = write_dataset(tmp_path / "d", 2, 1, 7, [(0, 1)], [[0], [1]], [(0, 7)], {"train": []})
        with pytest.raises(GraphError, match="label out of range"):
            load_graph(str(d))

    def test_missing_file(self, p3_dir):
        (p3_dir / "split.json").unlink()
        with pytest.raises(GraphError, match="missing file"):
            load_graph(str(p3_dir))

    def test_inconsistent_counts(self, tmp_path):
        d = write_dataset(tmp_path / "d", 2, 1, 2, [(0, 5)], [[0], [1]], [], {})
        with pytest.raises(GraphError, match="inconsistent"):
            load_graph(str(d))
        d = write_dataset(tmp_path / "e", 3, 1, 2, [(0, 1)], [[0], [1]], [], {})
        with pytest.raises(GraphError, match="features.tsv"):
            load_graph(str(d))

    def test_overlapping_masks(self, tmp_path):
        d = write_dataset(tmp_path / "d", 2, 1, 2, [(0, 1)], [[0], [1]], [(0, 0)],
                          {"train": [0], "test": [0, 1]})
        with pytest.raises(GraphError, match="overlapping"):
            load_graph(str(d))

    def test_round_trip(self, tmp_path, sbm_strong):
        save_graph(sbm_strong, str(tmp_path / "a"))
        g1 = load_graph(str(tmp_path / "a"))
        assert g1.same_as(sbm_strong)
        save_graph(g1, str(tmp_path / "b"))
        assert load_graph(str(tmp_path / "b")).same_as(g1)


class TestValidation:
    def test_invariants(self, sbm_strong):
        A = sbm_strong.adjacency()
        assert (A != A.T).nnz == 0
        assert A.diagonal().sum() == 0
        assert A.max() == 1
        for i in range(sbm_strong.n):
            nb = sbm_strong.neighbors(i)
            assert np.all(np.diff(nb) > 0)

    def test_train_must_be_labeled(self):
        with pytest.raises(GraphError, match="unlabeled"):
            path3(y=[0, -1, 1], k=2, train=[1])

    def test_feature_rows(self):
        with pytest.raises(GraphError, match="rows"):
            path3(X=np.zeros((2, 1)))

    def test_immutable(self, p3):
        with pytest.raises(ValueError):
            p3.X[0, 0] = 3.0

    def test_row_normalize(self, p3):
        g = row_normalize_features(p3.with_features(np.array([[2.0, 2.0], [0, 0], [1, -3]])))
        np.testing.assert_allclose(g.X, [[0.5, 0.5], [0, 0], [0.25, -0.75]])


class TestNormalize:
    def test_column_path(self):
        A = normalize(path3(), COLUMN).values.toarray()
        np.testing.assert_allclose(A.sum(axis=0), [1, 1, 1], atol=1e-12)

    def test_isolated_zero_column(self):
        g = from_edges(3, [(0, 1)])
        A = normalize(g, COLUMN).values.toarray()
        assert np.all(A[:, 2] == 0)

    def test_symmetric_single_edge(self):
        A = normalize(from_edges(2, [(0, 1)]), SYMMETRIC).values.toarray()
        np.testing.assert_allclose(A, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 30), st.floats(0.0, 0.6), st.integers(0, 10_000))
    def test_properties(self, n, p, seed):
        g = random_graph(np.random.default_rng(seed), n, p)
        col = normalize(g, COLUMN).values.toarray()
        deg = g.degree()
        np.testing.assert_allclose(col.sum(axis=0)[deg > 0], 1.0, atol=1e-12)
        sym = normalize(g, SYMMETRIC).values.toarray()
        np.testing.assert_allclose(sym, sym.T, atol=1e-15)
        assert np.abs(np.linalg.eigvalsh(sym)).max() <= 1 + 1e-10


class TestBfs:
    def test_path(self):
        assert bfs_hops(path3(), 0, 2).tolist() == [0, 1, 2]

    def test_cap(self):
        assert bfs_hops(path3(), 0, 1).tolist() == [0, 1, 2]  # 2 == max_hop + 1 sentinel

    def test_components(self):
        g = from_edges(4, [(0, 1), (2, 3)])
        assert bfs_hops(g, 0, 5).tolist() == [0, 1, 6, 6]

    def test_bad_source(self):
        with pytest.raises(IndexError):
            bfs_hops(path3(), 3, 1)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 40), st.floats(0.02, 0.3), st.integers(0, 10_000))
    def test_edge_step_and_reference(self, n, p, seed):
        import scipy.sparse.csgraph as csg

        g = random_graph(np.random.default_rng(seed), n, p)
        hops = bfs_hops(g, 0, n)
        ref = csg.shortest_path(g.adjacency(), unweighted=True, indices=0)
        reach = np.isfinite(ref)
        np.testing.assert_array_equal(hops[reach], ref[reach].astype(int))
        assert np.all(hops[~reach] == n + 1)
        for a, b in g.edge_list():
            if reach[a]:
                assert abs(hops[a] - hops[b]) <= 1


class TestInducedSubgraph:
    def test_nonadjacent(self):
        sub, m = induced_subgraph(path3(), [0, 2])
        assert sub.n == 2 and sub.num_edges == 0
        assert m == {0: 0, 2: 1}

    def test_adjacent(self):
        sub, _ = induced_subgraph(path3(), [0, 1])
        assert sub.n == 2 and sub.num_edges == 1

    def test_full(self, sbm_strong):
        sub, m = induced_subgraph(sbm_strong, range(sbm_strong.n))
        assert sub.same_as(sbm_strong)
        assert sorted(m.values()) == list(range(sbm_strong.n))

    def test_empty(self):
        with pytest.raises(GraphError):
            induced_subgraph(path3(), [])

    def test_restricts_attributes(self, sbm_strong):
        nodes = [5, 1, 150]
        sub, m = induced_subgraph(sbm_strong, nodes)
        for old, new in m.items():
            np.testing.assert_array_equal(sub.X[new], sbm_strong.X[old])
            assert sub.y[new] == sbm_strong.y[old]
            assert sub.train_mask[new] == sbm_strong.train_mask[old]


class TestSbm:
    def test_determinism(self):
        a = synth_sbm(2, 50, 0.1, 0.01, 0.5, 20, seed=1)
        b = synth_sbm(2, 50, 0.1, 0.01, 0.5, 20, seed=1)
        assert a.n == 100 and a.k == 2
        assert a.same_as(b)

    def test_no_inter_edges(self):
        g = synth_sbm(3, 30, 0.2, 0.0, 0.1, 5, seed=2)
        e = g.edge_list()
        assert np.all(g.y[e[:, 0]] == g.y[e[:, 1]])

    def test_split(self):
        g = synth_sbm(3, 60, 0.1, 0.01, 0.1, 5, seed=4)
        for c in range(3):
            assert (g.train_mask & (g.y == c)).sum() == 5
            assert (g.val_mask & (g.y == c)).sum() == 30
        assert np.all(g.train_mask | g.val_mask | g.test_mask)

    def test_intra_edge_count_binomial(self):
        # oracle: intra-class pairs ~ Binomial(C(m,2), p_in) per class
        per, p_in = 80, 0.1
        g = synth_sbm(2, per, p_in, 0.01, 0.5, 5, seed=11)
        e = g.edge_list()
        trials = math.comb(per, 2)
        mu, sd = trials * p_in, math.sqrt(trials * p_in * (1 - p_in))
        for c in range(2):
            count = int(((g.y[e[:, 0]] == c) & (g.y[e[:, 1]] == c)).sum())
            assert abs(count - mu) <= 3 * sd

    @pytest.mark.parametrize("args", [
        (2, 50, 0.01, 0.1, 0.5, 5),
        (2, 50, 0.1, 0.01, 0.5, 60),
        (0, 50, 0.1, 0.01, 0.5, 5),
        (2, 50, 0.1, 0.01, -1.0, 5),
    ])
    def test_bad_params(self, args):
        with pytest.raises(ValueError):
            synth_sbm(*args, seed=0)
