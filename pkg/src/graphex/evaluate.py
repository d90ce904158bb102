"""Posterior-predictive draws, graph summaries and ranking metrics."""

from __future__ import annotations

import csv
import math
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from graphex.estimators import estimate_sigma
from graphex.ggp import GGPParams, sample_ggp
from graphex.graph import BipartiteGraph
from graphex.inference import VariationalState
from graphex.rng import make_rng
from graphex.simulate import sample_edges


# ---------------------------------------------------------------------------
# predictive draws


def _fresh_atoms(sigma, tau, size, shape, rate, exposure, rng):
    """Prior atoms of one side that would have connected to nothing observed.

    Thinning a prior draw by ``exp(-w * theta . exposure)`` is the same as
    drawing from the tilted GGP with rate ``tau + theta . exposure``.
    """
    atoms = sample_ggp(GGPParams(sigma, tau, size), rng=rng)
    aff = rng.gamma(shape, 1.0 / rate, size=(len(atoms), exposure.size))
    keep = rng.random(len(atoms)) < np.exp(-atoms.weights * (aff @ exposure))
    return atoms.weights[keep], aff[keep]


def predictive_sample(state: VariationalState, s_out: float, alpha_out: float, seed: int,
                      item_keep=None) -> BipartiteGraph:
    """One draw of a graph from the approximate posterior predictive.

    Users are the state's users plus, when ``s_out > 0``, fresh user atoms
    at size ``s_out`` that failed to connect to the items the state was fit
    against. Items are the state's items, each retained with probability
    ``item_keep`` (default ``alpha_out / alpha`` of the state, 1 when the
    state has no item size), plus fresh item atoms at size ``alpha_out``.
    ``item_keep`` may also be a collection of item ids, which retains
    exactly those known items; a test split knows which items its item draw
    kept, so conditioning on them removes the split's own noise.
    Weights of known atoms come from their Gamma factors; fresh atoms take
    prior affinities.
    """
    if s_out < 0 or alpha_out < 0:
        raise ValueError("predictive sizes must be non-negative")
    h = state.hyper
    if item_keep is None:
        item_keep = min(1.0, alpha_out / h.alpha) if h.alpha > 0 else 1.0
    rng = make_rng(seed, "predictive")
    K = state.K
    if np.isscalar(item_keep):
        if not 0 <= item_keep <= 1:
            raise ValueError("item_keep must lie in [0, 1]")
        kept = rng.random(state.n_items) < item_keep
    else:
        keep_ids = set(item_keep)
        kept = np.array([i in keep_ids for i in state.item_ids], dtype=bool)

    gam = rng.gamma(state.kg, 1.0 / state.lg)
    th = rng.gamma(state.kt, 1.0 / state.lt)
    om = rng.gamma(state.kw, 1.0 / state.lw)
    be = rng.gamma(state.kb, 1.0 / state.lb)
    user_mass = [gam[:, None] * th]
    item_mass = [om[kept, None] * be[kept]]
    user_ids = list(state.user_ids)
    item_ids = [i for i, k in zip(state.item_ids, kept) if k]

    if s_out > 0:
        w, aff = _fresh_atoms(h.sigma_U, h.tau_U, s_out, h.a, h.b, state.user_exposure(), rng)
        user_mass.append(w[:, None] * aff)
        user_ids += [f"new_u{k}" for k in range(w.size)]
    if alpha_out > 0:
        w, aff = _fresh_atoms(h.sigma_I, h.tau_I, alpha_out, h.c, h.d, state.items_exposure(), rng)
        item_mass.append(w[:, None] * aff)
        item_ids += [f"new_i{k}" for k in range(w.size)]

    A = np.concatenate(user_mass) if user_mass else np.empty((0, K))
    B = np.concatenate(item_mass) if item_mass else np.empty((0, K))
    eu, ei = sample_edges(A, B, rng)
    return BipartiteGraph.from_index_edges(user_ids, item_ids, eu, ei)


@dataclass
class PredictiveSummary:
    U: int
    I: int
    E: int
    sigma_hat_U: float
    sigma_hat_I: float
    user_degree_hist: dict = field(repr=False)
    item_degree_hist: dict = field(repr=False)

    def row(self) -> dict:
        return dict(U=self.U, I=self.I, E=self.E, sigma_U=self.sigma_hat_U,
                    sigma_I=self.sigma_hat_I)


def summarize(g: BipartiteGraph) -> PredictiveSummary:
    if g.is_empty:
        raise ValueError("cannot summarize an empty graph")
    return PredictiveSummary(
        g.n_users, g.n_items, g.n_edges,
        estimate_sigma(g.user_degrees), estimate_sigma(g.item_degrees),
        dict(sorted(Counter(g.user_degrees.tolist()).items())),
        dict(sorted(Counter(g.item_degrees.tolist()).items())))


def write_summary_table(columns: dict[str, PredictiveSummary], path: str | os.PathLike) -> None:
    """Rows U, I, E, sigma_U, sigma_I; one column per labelled summary."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic"] + names)
        for stat in ("U", "I", "E", "sigma_U", "sigma_I"):
            w.writerow([stat] + [_fmt(columns[n].row()[stat]) for n in names])


def _fmt(x):
    return str(x) if isinstance(x, (int, np.integer)) else f"{x:.6g}"


# ---------------------------------------------------------------------------
# ranking


def score_pairs(state: VariationalState, user: str, items) -> np.ndarray:
    """Expected edge counts ``E[gamma_i] sum_k E[theta_ik] E[beta_jk] E[omega_j]``."""
    uidx = {u: k for k, u in enumerate(state.user_ids)}
    iidx = {i: k for k, i in enumerate(state.item_ids)}
    if user not in uidx:
        raise KeyError(f"unknown user {user!r}")
    missing = [i for i in items if i not in iidx]
    if missing:
        raise KeyError(f"unknown item(s): {missing[:10]}")
    u = uidx[user]
    j = np.array([iidx[i] for i in items], dtype=np.int64)
    user_vec = state.E_gamma()[u] * state.E_theta()[u]
    item_mat = state.E_omega()[j, None] * state.E_beta()[j]
    return item_mat @ user_vec


def recall_at_m(recommended, relevant, m: int) -> float:
    """``|top-m ∩ relevant| / min(m, |relevant|)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rel = set(relevant)
    if not rel:
        raise ValueError("relevant set is empty")
    hits = sum(1 for x in list(recommended)[:m] if x in rel)
    return hits / min(m, len(rel))


def _idcg(n: int) -> float:
    return float(np.sum(1.0 / np.log2(np.arange(2, n + 2))))


def ndcg(recommended, relevant) -> float:
    """Binary-gain nDCG with a ``1 / log2(rank + 1)`` discount over the full list."""
    rel = set(relevant)
    if not rel:
        raise ValueError("relevant set is empty")
    dcg = sum(1.0 / math.log2(r + 2) for r, x in enumerate(recommended) if x in rel)
    return dcg / _idcg(len(rel))


@dataclass
class RankingScores:
    recall_at_m: float
    recall_at_m_unpopular: float
    ndcg: float
    ndcg_unpopular: float
    m: int
    unpopular_pct: float
    n_users: int = 0
    n_users_unpopular: int = 0
    per_user: list = field(default_factory=list, repr=False)


def popular_items(test: BipartiteGraph, pct: float) -> set[str]:
    """The ``ceil(pct * I)`` highest-degree test items; ties go to the smaller id."""
    n_drop = int(math.ceil(pct * test.n_items - 1e-9))
    order = sorted(range(test.n_items), key=lambda k: (-test.item_degrees[k], test.item_ids[k]))
    return {test.item_ids[k] for k in order[:n_drop]}


def _rank_metrics(scores: np.ndarray, rel_mask: np.ndarray, m: int) -> tuple[float, float]:
    order = np.argsort(-scores, kind="stable")
    hits = rel_mask[order]
    n_rel = int(rel_mask.sum())
    recall = hits[:m].sum() / min(m, n_rel)
    disc = 1.0 / np.log2(np.arange(2, hits.size + 2))
    return float(recall), float(disc[hits].sum() / _idcg(n_rel))


def evaluate_recommendations(state: VariationalState, test: BipartiteGraph,
                             train: BipartiteGraph | None = None, m: int = 20,
                             unpopular_pct: float = 0.05, scorer=None) -> RankingScores:
    """Recall@m and nDCG of ranking test items for each test user.

    Candidates are the test items the model has factors for, minus items the
    user already has in ``train``. Only test users known to the state are
    scored, and users with no relevant candidate are skipped. ``scorer``
    overrides the model scores: it maps (user ids, item ids) to a score
    matrix.
    """
    u_pos = {u: k for k, u in enumerate(state.user_ids)}
    i_pos = {i: k for k, i in enumerate(state.item_ids)}
    cand_ids = [i for i in test.item_ids if i in i_pos]
    if not cand_ids:
        raise ValueError("no test item is known to the model")
    cand_test_idx = {i: k for k, i in enumerate(cand_ids)}
    users = [u for u in test.user_ids if u in u_pos]
    popular = popular_items(test, unpopular_pct)
    unpop_mask = np.array([i not in popular for i in cand_ids], dtype=bool)

    if scorer is None:
        U = state.E_gamma()[:, None] * state.E_theta()
        B = state.E_omega()[:, None] * state.E_beta()
        B_c = B[np.array([i_pos[i] for i in cand_ids], dtype=np.int64)].T

        def scorer(batch_users, _items):
            return U[[u_pos[u] for u in batch_users]] @ B_c

    train_items = {}
    if train is not None:
        for u, i in zip(train.edge_users.tolist(), train.edge_items.tolist()):
            train_items.setdefault(train.user_ids[u], set()).add(train.item_ids[i])

    per_user = []
    chunk = 1024
    for start in range(0, len(users), chunk):
        batch = users[start:start + chunk]
        S = np.asarray(scorer(batch, cand_ids), dtype=float)
        for r, user in enumerate(batch):
            tu = test.user_index[user]
            rel = np.zeros(len(cand_ids), dtype=bool)
            for j in test.user_items(tu):
                k = cand_test_idx.get(test.item_ids[j])
                if k is not None:
                    rel[k] = True
            allowed = np.ones(len(cand_ids), dtype=bool)
            for i in train_items.get(user, ()):
                k = cand_test_idx.get(i)
                if k is not None:
                    allowed[k] = False
            rel &= allowed
            row = dict(user=user, n_relevant=int(rel.sum()))
            if rel.any():
                row["recall"], row["ndcg"] = _rank_metrics(S[r][allowed], rel[allowed], m)
            keep = allowed & unpop_mask
            rel_u = rel & keep
            row["n_relevant_unpopular"] = int(rel_u.sum())
            if rel_u.any():
                row["recall_unpopular"], row["ndcg_unpopular"] = _rank_metrics(
                    S[r][keep], rel_u[keep], m)
            per_user.append(row)

    def avg(key):
        vals = [row[key] for row in per_user if key in row]
        return (float(np.mean(vals)) if vals else math.nan), len(vals)

    rec, n = avg("recall")
    nd, _ = avg("ndcg")
    rec_u, n_u = avg("recall_unpopular")
    nd_u, _ = avg("ndcg_unpopular")
    return RankingScores(rec, rec_u, nd, nd_u, m, unpopular_pct, n, n_u, per_user)


def write_per_user_csv(scores: RankingScores, path: str | os.PathLike) -> None:
    cols = ["user", "n_relevant", "recall", "ndcg", "n_relevant_unpopular",
            "recall_unpopular", "ndcg_unpopular"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in scores.per_user:
            w.writerow([_cell(row.get(c, "")) for c in cols])
        w.writerow(["SUMMARY", scores.n_users, _cell(scores.recall_at_m), _cell(scores.ndcg),
                    scores.n_users_unpopular, _cell(scores.recall_at_m_unpopular),
                    _cell(scores.ndcg_unpopular)])


def _cell(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x
