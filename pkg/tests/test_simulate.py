import numpy as np
import pytest

from graphex.rng import make_rng
from graphex.simulate import (
    ModelHyperparams,
    SimulationTooLarge,
    edge_count_estimate,
    sample_edges,
    simulate_graph,
)


def summary_se(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / np.sqrt(x.size)


class TestHyperparams:
    @pytest.mark.parametrize("kw", [dict(a=0.0), dict(d=-1.0), dict(K=0), dict(K=2.5),
                                    dict(s=-1.0), dict(sigma_U=1.0), dict(tau_I=0.0)])
    def test_rejected(self, kw):
        with pytest.raises(ValueError):
            ModelHyperparams(**kw)

    def test_defaults(self):
        h = ModelHyperparams()
        assert (h.sigma_U, h.tau_U, h.a, h.b, h.c, h.d, h.K) == (0.2, 1.0, 0.1, 0.1, 0.1, 0.1, 30)


class TestEdgeCountEstimate:
    def test_unit(self):
        h = ModelHyperparams(K=1, a=1, b=1, c=1, d=1, s=1, alpha=1)
        assert edge_count_estimate(h) == 1.0

    @pytest.mark.parametrize("sigma", [-0.5, 0.0, 0.2, 0.7])
    def test_desk_scale(self, sigma):
        h = ModelHyperparams(sigma_U=sigma, sigma_I=sigma)
        np.testing.assert_allclose(edge_count_estimate(h), 120 * 120 * 30)

    def test_zero_size(self):
        assert edge_count_estimate(ModelHyperparams(s=0.0)) == 0.0


class TestSampleEdges:
    A = np.array([[0.3, 0.0], [1.2, 0.4]])
    B = np.array([[0.5, 0.1], [0.05, 2.0], [0.0, 0.7]])

    def test_pair_probabilities(self):
        reps = 4000
        hits = np.zeros((2, 3))
        for r in range(reps):
            eu, ei = sample_edges(self.A, self.B, make_rng(r, "pairs"))
            hits[eu, ei] += 1
            assert len(set(zip(eu.tolist(), ei.tolist()))) == eu.size
        p = 1 - np.exp(-self.A @ self.B.T)
        se = np.sqrt(p * (1 - p) / reps) + 1e-12
        assert np.all(np.abs(hits / reps - p) < 4 * se + 1e-9)

    def test_zero_mass_factor_never_fires(self):
        A = np.array([[1.0, 0.0]])
        B = np.array([[0.0, 5.0]])
        for r in range(20):
            eu, _ = sample_edges(A, B, make_rng(r))
            assert eu.size == 0

    def test_empty_side(self):
        eu, ei = sample_edges(np.empty((0, 3)), np.ones((4, 3)), make_rng(0))
        assert eu.size == 0 and ei.size == 0

    def test_exchangeable_over_atom_order(self):
        rng = np.random.default_rng(5)
        A = rng.gamma(0.3, 1.0, size=(40, 3))
        B = rng.gamma(0.3, 1.0, size=(50, 3))
        perm = rng.permutation(40)
        e0, e1, d0, d1 = [], [], [], []
        for r in range(300):
            eu, _ = sample_edges(A, B, make_rng(r, "a"))
            pu, _ = sample_edges(A[perm], B, make_rng(r, "b"))
            e0.append(eu.size)
            e1.append(pu.size)
            d0.append(np.bincount(eu, minlength=40).max())
            d1.append(np.bincount(pu, minlength=40).max())
        for x, y in ((e0, e1), (d0, d1)):
            (mx, sx), (my, sy) = summary_se(x), summary_se(y)
            assert abs(mx - my) < 3 * np.hypot(sx, sy)


class TestSimulateGraph:
    small = ModelHyperparams(s=30.0, alpha=30.0, K=5)

    def test_truth_consistent(self):
        g, truth = simulate_graph(self.small, seed=2)
        assert truth.user_ids == g.user_ids and truth.item_ids == g.item_ids
        assert truth.theta.shape == (g.n_users, 5) and truth.beta.shape == (g.n_items, 5)
        for arr in (truth.gamma, truth.theta, truth.omega, truth.beta):
            assert np.all(arr > 0)
        assert g.user_degrees.min() >= 1 and g.item_degrees.min() >= 1

    def test_deterministic(self):
        a, ta = simulate_graph(self.small, seed=4)
        b, tb = simulate_graph(self.small, seed=4)
        assert a == b
        np.testing.assert_array_equal(ta.theta, tb.theta)

    def test_guard(self):
        with pytest.raises(SimulationTooLarge, match="exceeds cap"):
            simulate_graph(ModelHyperparams(s=1e4, alpha=1e4), seed=0)

    def test_doubling_s_doubles_edges(self):
        h = ModelHyperparams(s=40.0, alpha=40.0, K=10)
        e1 = [simulate_graph(h, seed=s)[0].n_edges for s in range(20)]
        e2 = [simulate_graph(h.replace(s=80.0), seed=100 + s)[0].n_edges for s in range(20)]
        (m1, s1), (m2, s2) = summary_se(e1), summary_se(e2)
        assert abs(m2 - 2 * m1) < 2 * np.hypot(s2, 2 * s1)

    def test_truth_files(self, tmp_path):
        g, truth = simulate_graph(self.small, seed=3)
        truth.write(tmp_path)
        rows = (tmp_path / "truth_users.tsv").read_text().splitlines()
        assert len(rows) == g.n_users
        cells = rows[0].split("\t")
        assert cells[0] == g.user_ids[0] and len(cells) == 2 + 5
        assert float(cells[1]) == truth.gamma[0]
