import csv

import numpy as np
import pytest

from graphex.graph import BipartiteGraph, edge_density
from graphex.sparsity import (
    DENSE,
    INCONCLUSIVE,
    SPARSE,
    DensityCurve,
    classify,
    density_profile,
    write_profile_csv,
)


def curve(means, sds=None, n_valid=None, levels=None):
    means = np.asarray(means, dtype=float)
    n = means.size
    levels = np.linspace(1.0 / n, 1.0, n) if levels is None else np.asarray(levels)
    sds = np.zeros(n) if sds is None else np.asarray(sds, dtype=float)
    n_valid = np.full(n, 10) if n_valid is None else np.asarray(n_valid)
    return DensityCurve("user", levels, means, sds, 10, 0, n_valid)


class TestProfile:
    def test_full_level_is_exact(self, desk_sim):
        g, _ = desk_sim
        c = density_profile(g, "item", levels=[0.5, 1.0], reps=3, seed=1)
        assert c.mean_density[-1] == edge_density(g)
        assert c.sd_density[-1] == 0.0

    def test_level_one_appended(self):
        g = BipartiteGraph.from_pairs([("a", "x"), ("b", "y")])
        c = density_profile(g, "user", levels=[0.5], reps=2, seed=0)
        np.testing.assert_array_equal(c.levels, [0.5, 1.0])

    def test_complete_graph_flat(self):
        g = BipartiteGraph.from_pairs([(f"u{a}", f"i{b}") for a in range(12) for b in range(9)])
        for side in ("user", "item"):
            c = density_profile(g, side, reps=5, seed=3)
            np.testing.assert_allclose(c.mean_density, 1.0)
            assert classify(c) == DENSE

    def test_sparse_sim_densifies(self, desk_sim):
        g, _ = desk_sim
        for side in ("user", "item"):
            c = density_profile(g, side, reps=10, seed=2)
            assert c.mean_density[0] > 1.5 * c.mean_density[-1]

    def test_deterministic(self, desk_sim):
        g, _ = desk_sim
        a = density_profile(g, "user", levels=[0.2, 0.6, 1.0], reps=3, seed=5)
        b = density_profile(g, "user", levels=[0.2, 0.6, 1.0], reps=3, seed=5)
        np.testing.assert_array_equal(a.raw, b.raw)

    def test_empty_samples_excluded(self):
        g = BipartiteGraph.from_pairs([("a", "x")])
        c = density_profile(g, "user", levels=[0.01, 1.0], reps=5, seed=0)
        assert c.n_valid[0] < 5
        assert np.isnan(c.raw[0]).sum() == 5 - c.n_valid[0]
        if c.n_valid[0] == 0:
            assert c.flagged_levels == [0.01]

    @pytest.mark.parametrize("kw", [dict(side="both"), dict(reps=0), dict(levels=[0.0, 1.0]),
                                    dict(levels=[0.5, 0.5, 1.0])])
    def test_bad_arguments(self, kw):
        g = BipartiteGraph.from_pairs([("a", "x")])
        args = dict(side="user", levels=[0.5, 1.0], reps=2)
        args.update(kw)
        with pytest.raises(ValueError):
            density_profile(g, **args)

    def test_verdict_stable_across_seeds(self, desk_sim):
        g, _ = desk_sim
        verdicts = [classify(density_profile(g, "user", reps=10, seed=s)) for s in range(10)]
        assert verdicts.count(SPARSE) >= 9


class TestClassify:
    def test_flat(self):
        assert classify(curve([0.3] * 10)) == DENSE

    def test_halving(self):
        assert classify(curve([2.0 ** -k for k in range(10)])) == SPARSE

    def test_noisy_drop_is_inconclusive(self):
        means = np.linspace(2.0, 1.0, 10)
        assert classify(curve(means, sds=np.full(10, 5.0))) == INCONCLUSIVE

    def test_non_monotone(self):
        assert classify(curve([3, 2, 2.5, 1.5, 1.0])) == INCONCLUSIVE

    def test_flagged_level(self):
        c = curve([np.nan, 2.0, 1.5, 1.0], n_valid=[0, 10, 10, 10])
        assert c.flagged_levels == [0.25]
        assert classify(c) == INCONCLUSIVE

    def test_needs_four_levels(self):
        with pytest.raises(ValueError):
            classify(curve([1.0, 1.0, 1.0]))

    def test_tolerance_boundary(self):
        assert classify(curve([1.09, 1.05, 1.0, 1.0]), flat_tol=0.1) == DENSE
        assert classify(curve([1.2, 1.05, 1.0, 1.0]), flat_tol=0.1) != DENSE


def test_profile_csv(tmp_path):
    g = BipartiteGraph.from_pairs([(f"u{a}", f"i{b}") for a in range(4) for b in range(3)])
    curves = [density_profile(g, s, levels=[0.5, 1.0], reps=2, seed=0) for s in ("user", "item")]
    path = tmp_path / "p.csv"
    write_profile_csv(curves, {"user": DENSE, "item": DENSE}, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["side", "level", "rep", "density"]
    assert len(rows) == 1 + 2 * 2 * 2 + 2
    assert rows[-1] == ["item", "summary", "verdict", DENSE]
