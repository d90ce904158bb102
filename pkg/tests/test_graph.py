import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphex.graph import (
    BipartiteGraph,
    EmptyGraphError,
    GraphFormatError,
    SamplingRecord,
    edge_density,
    load_edge_list,
    pq_sample,
    pq_sample_graph,
    write_edge_list,
)


def _write(tmp_path, text, name="g.tsv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def random_graph(n_users, n_items, n_edges, seed):
    rng = np.random.default_rng(seed)
    u = rng.integers(0, n_users, n_edges)
    i = rng.integers(0, n_items, n_edges)
    return BipartiteGraph.from_index_edges([f"u{k}" for k in range(n_users)],
                                           [f"i{k}" for k in range(n_items)], u, i)


edge_lists = st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)), min_size=1, max_size=80)


class TestLoad:
    def test_duplicates_collapse(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "u1\ti1\nu1\ti2\nu1\ti1\n"))
        assert (g.n_users, g.n_items, g.n_edges) == (1, 2, 2)

    def test_weights_binarized(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "u1\ti1\t5\nu2\ti1\t1\n"))
        assert g.n_edges == 2
        np.testing.assert_array_equal(g.item_degrees, [2])

    def test_nonpositive_weight_skipped(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "u1\ti1\t0\nu2\ti1\t1\n"))
        assert g.user_ids == ("u2",)

    def test_missing_item_reports_line(self, tmp_path):
        with pytest.raises(GraphFormatError, match=":2:"):
            load_edge_list(_write(tmp_path, "u1\ti1\nu1\n"))

    def test_bad_weight(self, tmp_path):
        with pytest.raises(GraphFormatError, match=":1:"):
            load_edge_list(_write(tmp_path, "u1\ti1\tlots\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(GraphFormatError, match="empty graph"):
            load_edge_list(_write(tmp_path, "\n\n"))

    def test_first_appearance_order(self, tmp_path):
        g = load_edge_list(_write(tmp_path, "b\tz\na\ty\nb\tx\n"))
        assert g.user_ids == ("b", "a")
        assert g.item_ids == ("z", "y", "x")

    def test_unknown_policy(self, tmp_path):
        with pytest.raises(ValueError):
            load_edge_list(_write(tmp_path, "u\ti\n"), weighted_policy="count")

    @settings(max_examples=40, deadline=None)
    @given(edge_lists)
    def test_round_trip(self, tmp_path_factory, pairs):
        g = BipartiteGraph.from_pairs([(f"u{a}", f"i{b}") for a, b in pairs])
        path = tmp_path_factory.mktemp("rt") / "g.tsv"
        write_edge_list(g, path)
        g2 = load_edge_list(path)
        assert g2 == g
        write_edge_list(g2, path)
        assert load_edge_list(path) == g


class TestGraph:
    @settings(max_examples=60, deadline=None)
    @given(edge_lists)
    def test_invariants(self, pairs):
        g = BipartiteGraph.from_pairs([(f"u{a}", f"i{b}") for a, b in pairs])
        assert g.n_edges == len(set(pairs))
        assert g.user_degrees.sum() == g.n_edges == g.item_degrees.sum()
        assert g.user_degrees.min() >= 1 and g.item_degrees.min() >= 1
        keys = g.edge_users * g.n_items + g.edge_items
        assert np.all(np.diff(keys) > 0)
        for u in range(g.n_users):
            assert len(g.user_items(u)) == g.user_degrees[u]

    def test_isolated_rejected(self):
        with pytest.raises(ValueError, match="isolated"):
            BipartiteGraph(["a", "b"], ["x"], np.array([0]), np.array([0]))

    def test_immutable(self):
        g = BipartiteGraph.from_pairs([("a", "x")])
        with pytest.raises(ValueError):
            g.edge_users[0] = 3

    def test_from_index_edges_compacts(self):
        g = BipartiteGraph.from_index_edges(["a", "b", "c"], ["x", "y"], [2, 2], [1, 1])
        assert g.user_ids == ("c",) and g.item_ids == ("y",) and g.n_edges == 1


class TestDensity:
    def test_complete(self):
        g = BipartiteGraph.from_pairs([(u, i) for u in "ab" for i in "xyz"])
        assert edge_density(g) == 1.0

    def test_half(self):
        g = BipartiteGraph.from_pairs([("a", "x"), ("b", "y")])
        assert edge_density(g) == 0.5

    def test_large_scale_arithmetic(self):
        # the count arithmetic alone; no graph of that size is built
        np.testing.assert_allclose(9.7e6 / (40565 * 40768), 5.866e-3, rtol=1e-3)

    def test_empty(self):
        with pytest.raises(EmptyGraphError):
            edge_density(BipartiteGraph.empty())


class TestPQSample:
    g = random_graph(60, 80, 600, seed=3)

    def test_identity(self):
        sub, rec = pq_sample(self.g, 1.0, 1.0, seed=5)
        assert sub == self.g and not rec.empty

    def test_p_zero(self):
        sub, rec = pq_sample(self.g, 0.0, 1.0, seed=5)
        assert sub.is_empty and rec.empty

    def test_bad_prob(self):
        with pytest.raises(ValueError):
            pq_sample(self.g, 1.2, 0.5, seed=0)

    def test_deterministic(self):
        a, ra = pq_sample(self.g, 0.4, 0.7, seed=11)
        b, rb = pq_sample(self.g, 0.4, 0.7, seed=11)
        assert a == b and ra == rb
        assert pq_sample_graph(self.g, 0.4, 0.7, seed=11) == a

    def test_induced_and_no_isolated(self):
        sub, rec = pq_sample(self.g, 0.5, 0.5, seed=2)
        assert rec.kept_users <= set(self.g.user_ids)
        expected = {(u, i) for u, i in self.g.edge_id_set()
                    if u in rec.kept_users and i in rec.kept_items}
        assert sub.edge_id_set() == expected
        assert sub.user_degrees.min() >= 1 and sub.item_degrees.min() >= 1

    def test_edge_fraction_mean(self):
        frac = np.array([pq_sample_graph(self.g, 0.5, 0.5, seed=s).n_edges
                         for s in range(1000)]) / self.g.n_edges
        se = frac.std(ddof=1) / np.sqrt(frac.size)
        assert abs(frac.mean() - 0.25) < 3 * se

    def test_record_round_trip(self, tmp_path):
        _, rec = pq_sample(self.g, 0.3, 0.6, seed=9)
        rec.write(tmp_path, prefix="s")
        assert SamplingRecord.read(tmp_path, prefix="s") == rec
        assert (tmp_path / "s.kept_users.txt").exists()
