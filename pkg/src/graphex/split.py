"""Test-train splitting by successive user and item subsampling.

``train`` keeps a p-fraction of users with all their edges and ``holdout``
is its complement. ``test`` keeps a q-fraction of the holdout's items and
``holdoutfit`` is the rest; the holdoutfit edges are used to learn the
test users' features with the trained item side frozen.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from graphex.graph import BipartiteGraph, write_edge_list
from graphex.rng import make_rng


class EmptySplitError(ValueError):
    pass


@dataclass
class SplitBundle:
    train: BipartiteGraph
    holdout: BipartiteGraph
    test: BipartiteGraph
    holdoutfit: BipartiteGraph
    p: float
    q: float
    seed: int
    # kept-vertex sets recorded before isolated vertices are dropped
    train_users: frozenset = field(repr=False)
    holdout_users: frozenset = field(repr=False)
    test_items: frozenset = field(repr=False)
    holdoutfit_items: frozenset = field(repr=False)
    size_map: dict | None = None

    def parts(self) -> dict[str, BipartiteGraph]:
        return dict(train=self.train, holdout=self.holdout, test=self.test,
                    holdoutfit=self.holdoutfit)

    def manifest(self) -> dict:
        out = dict(p=self.p, q=self.q, seed=self.seed,
                   counts={k: dict(U=g.n_users, I=g.n_items, E=g.n_edges)
                           for k, g in self.parts().items()})
        if self.size_map is not None:
            out["sizes"] = self.size_map
            out["size_convention"] = ("s_test = (1-p)/p * s_train; the alternative "
                                      "p/(1-p) * s_train is reported as s_test_alt")
        return out

    def write(self, directory: str | os.PathLike) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, g in self.parts().items():
            write_edge_list(g, os.path.join(directory, f"{name}.tsv"))
        for name, ids in (("train_users", self.train_users), ("test_items", self.test_items)):
            with open(os.path.join(directory, f"kept_{name}.txt"), "w") as fh:
                fh.writelines(f"{x}\n" for x in sorted(ids))
        with open(os.path.join(directory, "split_manifest.json"), "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def split(g: BipartiteGraph, p: float, q: float, seed: int,
          s: float | None = None, alpha: float | None = None) -> SplitBundle:
    """Partition ``g`` into train / holdout and holdout into test / holdoutfit.

    A single Bernoulli(p) draw per user decides train versus holdout, and a
    single Bernoulli(q) draw per holdout item decides test versus
    holdoutfit, so every edge lands in exactly one part at each step. When
    the source sizes ``s`` and ``alpha`` are given, the part sizes are
    recorded in ``size_map``.
    """
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError(f"p and q must lie strictly between 0 and 1, got p={p}, q={q}")
    rng = make_rng(seed, "split")
    in_train = rng.random(g.n_users) < p
    all_items = np.ones(g.n_items, dtype=bool)
    train = g.induced(in_train, all_items)
    holdout = g.induced(~in_train, all_items)
    in_test = rng.random(holdout.n_items) < q
    all_h_users = np.ones(holdout.n_users, dtype=bool)
    test = holdout.induced(all_h_users, in_test)
    holdoutfit = holdout.induced(all_h_users, ~in_test)
    for name, part in (("train", train), ("holdout", holdout), ("test", test),
                       ("holdoutfit", holdoutfit)):
        if part.is_empty:
            raise EmptySplitError(f"{name} part is empty; adjust p={p} / q={q}")
    size_map = None
    if s is not None and alpha is not None:
        s_test, a_test = test_sizes(p * s, alpha, p, q)
        size_map = dict(s_train=p * s, alpha_train=alpha, s_test=s_test, alpha_test=a_test,
                        s_test_alt=p / (1 - p) * p * s)
    uid, iid = g.user_ids, holdout.item_ids
    return SplitBundle(
        train, holdout, test, holdoutfit, p, q, seed,
        train_users=frozenset(uid[k] for k in np.flatnonzero(in_train)),
        holdout_users=frozenset(uid[k] for k in np.flatnonzero(~in_train)),
        test_items=frozenset(iid[k] for k in np.flatnonzero(in_test)),
        holdoutfit_items=frozenset(iid[k] for k in np.flatnonzero(~in_test)),
        size_map=size_map)


def test_sizes(s_train: float, alpha_train: float, p: float, q: float) -> tuple[float, float]:
    """Sizes at which the test part is distributed, given the train sizes.

    Train has user size ``p s`` and the holdout (hence the test part)
    ``(1 - p) s``, so ``s_test = (1 - p) / p * s_train``; the item size is
    thinned by ``q``.
    """
    if not (s_train >= 0 and alpha_train >= 0 and 0 < p < 1 and 0 < q <= 1):
        raise ValueError("invalid sizes or probabilities")
    return (1.0 - p) / p * s_train, q * alpha_train


test_sizes.__test__ = False  # keep pytest from collecting it
