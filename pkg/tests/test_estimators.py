import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphex.estimators import (
    calibrate_C,
    clamp_sigma,
    estimate_graph,
    estimate_sigma,
    estimate_size,
    sigma_hats,
)
from graphex.rng import derive_seed
from graphex.simulate import ModelHyperparams, simulate_graph

degree_lists = st.lists(st.integers(1, 60), min_size=1, max_size=40)


def oracle_sigma(degrees):
    # straight arithmetic, one term at a time
    total = 0.0
    for d in degrees:
        total += 1.0 - 0.5 ** d
    return (math.log(len(degrees)) - math.log(total)) / math.log(2.0)


class TestEstimateSigma:
    def test_small_list(self):
        # sum of (1 - 2^-d) over [1, 2, 3] is 2.125 = 2 * 1.0625
        val = estimate_sigma([1, 2, 3])
        np.testing.assert_allclose(val, math.log2(3 / 2.125), rtol=1e-14)
        # the quoted 0.4976 is log2(3 / 2.125) = 0.49750 rounded up
        np.testing.assert_allclose(val, 0.4976, atol=2e-4)
        np.testing.assert_allclose(val + 1.0, (math.log(3) - math.log(1.0625)) / math.log(2))

    def test_all_ones(self):
        assert estimate_sigma([1] * 17) == pytest.approx(1.0, abs=1e-15)

    def test_large_degree_limit(self):
        assert abs(estimate_sigma([200] * 5)) < 1e-12

    @settings(max_examples=80, deadline=None)
    @given(degree_lists)
    def test_matches_oracle(self, degrees):
        np.testing.assert_allclose(estimate_sigma(degrees), oracle_sigma(degrees),
                                   rtol=1e-12, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(degree_lists, st.randoms())
    def test_permutation_invariant(self, degrees, rnd):
        shuffled = list(degrees)
        rnd.shuffle(shuffled)
        assert estimate_sigma(shuffled) == pytest.approx(estimate_sigma(degrees), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(degree_lists)
    def test_duplication_invariant(self, degrees):
        assert estimate_sigma(degrees * 2) == pytest.approx(estimate_sigma(degrees), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(degree_lists)
    def test_range(self, degrees):
        assert -1e-12 <= estimate_sigma(degrees) <= 1 + 1e-12

    @pytest.mark.parametrize("bad", [[], [0, 1], [-2]])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            estimate_sigma(bad)

    def test_graph_sides(self, desk_sim):
        g, _ = desk_sim
        assert sigma_hats(g) == (estimate_sigma(g.user_degrees), estimate_sigma(g.item_degrees))


class TestClamp:
    def test_inside(self):
        assert clamp_sigma(0.3) == 0.3

    def test_outside_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="graphex.estimators"):
            assert clamp_sigma(1.0) == 0.99
            assert clamp_sigma(-3.0) == -0.99
        assert "clamped" in caplog.text


class TestCalibrate:
    h = ModelHyperparams()

    def test_single_replicate(self):
        cal = calibrate_C(self.h, 0.25, n_sims=1, seed=3)
        g, _ = simulate_graph(self.h.replace(sigma_U=0.25), derive_seed(3, "calibrate", "user", 0))
        expect = math.log(g.n_users) - 0.25 * math.log(g.n_edges) - 0.75 * math.log(120.0)
        assert cal.C_hat == pytest.approx(expect, abs=1e-12)
        assert cal.per_sim_C == [cal.C_hat]

    def test_item_side_and_mean(self):
        cal = calibrate_C(self.h, 0.2, n_sims=3, seed=4, side="item")
        assert cal.side == "item" and cal.C_hat == pytest.approx(np.mean(cal.per_sim_C))

    def test_spread_small(self):
        cal = calibrate_C(self.h, 0.2, n_sims=20, seed=1)
        assert cal.n_sims == 20 and not cal.dropped
        assert cal.spread < 0.2

    def test_doubling_s_shifts_intercept(self):
        sig = 0.2
        a = calibrate_C(self.h, sig, n_sims=20, seed=1)
        b = calibrate_C(self.h.replace(s=240.0), sig, n_sims=20, seed=2)
        x = np.array(a.per_sim_C) + (1 - sig) * math.log(120.0)
        y = np.array(b.per_sim_C) + (1 - sig) * math.log(240.0)
        se = np.hypot(x.std(ddof=1) / np.sqrt(x.size), y.std(ddof=1) / np.sqrt(y.size))
        assert abs((y.mean() - x.mean()) - (1 - sig) * math.log(2)) < 2 * se

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            calibrate_C(self.h, 0.2, n_sims=0)
        with pytest.raises(ValueError):
            calibrate_C(self.h.replace(s=0.0), 0.2, n_sims=1)
        with pytest.raises(ValueError):
            calibrate_C(self.h, 0.2, n_sims=1, side="edge")


class TestEstimateSize:
    def test_collapse(self):
        assert estimate_size(321, 5000, 0.0, 0.0) == pytest.approx(321.0)

    def test_intercept_shift(self):
        base = estimate_size(500, 9000, 0.5, 0.3)
        shifted = estimate_size(500, 9000, 0.5, 0.3 + math.log(2))
        assert shifted / base == pytest.approx(0.25)

    def test_monotone(self):
        assert estimate_size(600, 9000, 0.3, 0.1) > estimate_size(500, 9000, 0.3, 0.1)
        assert estimate_size(500, 9000, 0.3, 0.2) < estimate_size(500, 9000, 0.3, 0.1)

    @pytest.mark.parametrize("args", [(10, 100, 1.0, 0.0), (10, 100, 1.3, 0.0), (0, 5, 0.2, 0.0)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            estimate_size(*args)


def test_estimate_graph_structure(desk_sim):
    g, _ = desk_sim
    sub = g.induced(np.arange(g.n_users) % 5 == 0, np.ones(g.n_items, dtype=bool))
    est = estimate_graph(sub, ModelHyperparams(K=5), n_sims=3, seed=0, rounds=2)
    assert len(est.history) == 2
    h = est.hyperparams(ModelHyperparams())
    assert (h.s, h.alpha) == (est.s, est.alpha) and h.K == 30
    assert 0 < est.s < 120 and est.alpha > 0
