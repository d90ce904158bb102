"""Bipartite graph container, edge-list I/O and (p, q)-vertex subsampling."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from graphex.rng import make_rng


class GraphFormatError(ValueError):
    """Raised for malformed or empty edge-list input."""


class EmptyGraphError(ValueError):
    pass


def _compact(index: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map the used subset of ``range(n)`` onto ``0..m-1`` keeping order."""
    used = np.zeros(n, dtype=bool)
    used[index] = True
    kept = np.flatnonzero(used)
    remap = np.full(n, -1, dtype=np.int64)
    remap[kept] = np.arange(kept.size)
    return remap[index], kept


class BipartiteGraph:
    """Immutable simple bipartite graph with no isolated vertices.

    Vertices carry opaque string ids which are mapped to dense indices.
    Edges are kept sorted by ``(user_index, item_index)`` and a CSR-style
    ``user_indptr`` gives the per-user slice of the edge arrays.
    """

    __slots__ = (
        "user_ids", "item_ids", "edge_users", "edge_items",
        "user_degrees", "item_degrees", "user_indptr", "_user_index", "_item_index",
    )

    def __init__(self, user_ids: Sequence[str], item_ids: Sequence[str],
                 edge_users: np.ndarray, edge_items: np.ndarray, *, _allow_isolated: bool = False):
        edge_users = np.asarray(edge_users, dtype=np.int64)
        edge_items = np.asarray(edge_items, dtype=np.int64)
        n_u, n_i = len(user_ids), len(item_ids)
        if edge_users.shape != edge_items.shape:
            raise ValueError("edge endpoint arrays differ in length")
        if edge_users.size:
            key = edge_users * n_i + edge_items
            key = np.unique(key)
            edge_users, edge_items = np.divmod(key, n_i)
        udeg = np.bincount(edge_users, minlength=n_u)
        ideg = np.bincount(edge_items, minlength=n_i)
        if not _allow_isolated and (n_u and udeg.min() == 0 or n_i and ideg.min() == 0):
            raise ValueError("graph has isolated vertices")
        self.user_ids = tuple(user_ids)
        self.item_ids = tuple(item_ids)
        self.edge_users = edge_users
        self.edge_items = edge_items
        self.user_degrees = udeg
        self.item_degrees = ideg
        self.user_indptr = np.concatenate([[0], np.cumsum(udeg)])
        for arr in (self.edge_users, self.edge_items, self.user_degrees,
                    self.item_degrees, self.user_indptr):
            arr.setflags(write=False)
        self._user_index = None
        self._item_index = None

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "BipartiteGraph":
        """Build from ``(user_id, item_id)`` pairs; ids ordered by first appearance."""
        users: dict[str, int] = {}
        items: dict[str, int] = {}
        eu, ei = [], []
        for u, i in pairs:
            eu.append(users.setdefault(u, len(users)))
            ei.append(items.setdefault(i, len(items)))
        return cls(list(users), list(items), np.array(eu, dtype=np.int64),
                   np.array(ei, dtype=np.int64))

    @classmethod
    def from_index_edges(cls, user_ids: Sequence[str], item_ids: Sequence[str],
                         edge_users: np.ndarray, edge_items: np.ndarray) -> "BipartiteGraph":
        """Build from index edges over larger id spaces, dropping unused ids."""
        edge_users = np.asarray(edge_users, dtype=np.int64)
        edge_items = np.asarray(edge_items, dtype=np.int64)
        eu, ku = _compact(edge_users, len(user_ids))
        ei, ki = _compact(edge_items, len(item_ids))
        return cls([user_ids[k] for k in ku], [item_ids[k] for k in ki], eu, ei)

    @classmethod
    def empty(cls) -> "BipartiteGraph":
        return cls([], [], np.empty(0, np.int64), np.empty(0, np.int64))

    # sizes -----------------------------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_edges(self) -> int:
        return int(self.edge_users.size)

    def __len__(self) -> int:
        return self.n_edges

    @property
    def is_empty(self) -> bool:
        return self.n_edges == 0

    # lookup ----------------------------------------------------------------
    @property
    def user_index(self) -> dict[str, int]:
        if self._user_index is None:
            self._user_index = {u: k for k, u in enumerate(self.user_ids)}
        return self._user_index

    @property
    def item_index(self) -> dict[str, int]:
        if self._item_index is None:
            self._item_index = {i: k for k, i in enumerate(self.item_ids)}
        return self._item_index

    def user_items(self, u: int) -> np.ndarray:
        """Item indices adjacent to user index ``u``."""
        return self.edge_items[self.user_indptr[u]:self.user_indptr[u + 1]]

    def edge_id_set(self) -> set[tuple[str, str]]:
        return {(self.user_ids[u], self.item_ids[i])
                for u, i in zip(self.edge_users.tolist(), self.edge_items.tolist())}

    def __eq__(self, other) -> bool:
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (set(self.user_ids) == set(other.user_ids)
                and set(self.item_ids) == set(other.item_ids)
                and self.edge_id_set() == other.edge_id_set())

    __hash__ = None

    def __repr__(self) -> str:
        return f"BipartiteGraph(U={self.n_users}, I={self.n_items}, E={self.n_edges})"

    # derived graphs ----------------------------------------------------------
    def induced(self, keep_users: np.ndarray, keep_items: np.ndarray) -> "BipartiteGraph":
        """Subgraph induced by boolean vertex masks, isolated vertices removed."""
        m = keep_users[self.edge_users] & keep_items[self.edge_items]
        return BipartiteGraph.from_index_edges(
            self.user_ids, self.item_ids, self.edge_users[m], self.edge_items[m])

    def restrict_items(self, item_ids: Iterable[str]) -> "BipartiteGraph":
        keep = set(item_ids)
        mask = np.array([i in keep for i in self.item_ids], dtype=bool)
        return self.induced(np.ones(self.n_users, dtype=bool), mask)


def edge_density(g: BipartiteGraph) -> float:
    """Fraction of the ``U * I`` possible edges that are present."""
    if g.is_empty:
        raise EmptyGraphError("edge density of an empty graph is undefined")
    return g.n_edges / (g.n_users * g.n_items)


# ---------------------------------------------------------------------------
# edge-list TSV


def load_edge_list(path: str | os.PathLike, weighted_policy: str = "binarize") -> BipartiteGraph:
    """Read a ``user<TAB>item[<TAB>weight]`` file.

    Duplicate lines collapse to a single edge and any positive weight marks
    presence. Lines with non-positive weight are skipped.
    """
    if weighted_policy != "binarize":
        raise ValueError(f"unsupported weighted_policy {weighted_policy!r}")
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
                raise GraphFormatError(f"{path}:{lineno}: expected user<TAB>item[<TAB>weight]")
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise GraphFormatError(f"{path}:{lineno}: bad weight {parts[2]!r}") from None
                if not w > 0:
                    continue
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise GraphFormatError(f"{path}: empty graph")
    return BipartiteGraph.from_pairs(pairs)


def write_edge_list(g: BipartiteGraph, path: str | os.PathLike) -> None:
    uid, iid = g.user_ids, g.item_ids
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in zip(g.edge_users.tolist(), g.edge_items.tolist()):
            fh.write(f"{uid[u]}\t{iid[i]}\n")


# ---------------------------------------------------------------------------
# (p, q)-sampling


@dataclass(frozen=True)
class SamplingRecord:
    p: float
    q: float
    kept_users: frozenset = field(repr=False)
    kept_items: frozenset = field(repr=False)
    seed: int
    empty: bool = False

    def write(self, directory: str | os.PathLike, prefix: str = "sample") -> None:
        """Write ``<prefix>.manifest`` plus one-id-per-line kept lists."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, f"{prefix}.manifest"), "w") as fh:
            fh.write(f"p={self.p!r}\nq={self.q!r}\nseed={self.seed}\n")
            fh.write(f"empty={str(self.empty).lower()}\n")
            fh.write(f"n_kept_users={len(self.kept_users)}\nn_kept_items={len(self.kept_items)}\n")
        for side, ids in (("users", self.kept_users), ("items", self.kept_items)):
            with open(os.path.join(directory, f"{prefix}.kept_{side}.txt"), "w") as fh:
                for x in sorted(ids):
                    fh.write(f"{x}\n")

    @classmethod
    def read(cls, directory: str | os.PathLike, prefix: str = "sample") -> "SamplingRecord":
        from graphex.config import read_kv
        kv = read_kv(os.path.join(directory, f"{prefix}.manifest"))
        kept = {}
        for side in ("users", "items"):
            with open(os.path.join(directory, f"{prefix}.kept_{side}.txt")) as fh:
                kept[side] = frozenset(line.rstrip("\n") for line in fh if line.strip())
        return cls(float(kv["p"]), float(kv["q"]), kept["users"], kept["items"],
                   int(kv["seed"]), kv["empty"] == "true")


def bernoulli_masks(g: BipartiteGraph, p: float, q: float, seed: int):
    """One uniform per vertex, users then items, in index order."""
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"sampling probabilities must lie in [0, 1], got p={p}, q={q}")
    rng = make_rng(seed)
    keep_u = rng.random(g.n_users) < p
    keep_i = rng.random(g.n_items) < q
    return keep_u, keep_i


def pq_sample(g: BipartiteGraph, p: float, q: float, seed: int) -> tuple[BipartiteGraph, SamplingRecord]:
    """Keep each user w.p. ``p`` and each item w.p. ``q``; return the induced subgraph."""
    keep_u, keep_i = bernoulli_masks(g, p, q, seed)
    sub = g.induced(keep_u, keep_i)
    rec = SamplingRecord(
        p=p, q=q,
        kept_users=frozenset(g.user_ids[k] for k in np.flatnonzero(keep_u)),
        kept_items=frozenset(g.item_ids[k] for k in np.flatnonzero(keep_i)),
        seed=seed, empty=sub.is_empty)
    return sub, rec


def pq_sample_graph(g: BipartiteGraph, p: float, q: float, seed: int) -> BipartiteGraph:
    """Like :func:`pq_sample` without building the id-level record."""
    keep_u, keep_i = bernoulli_masks(g, p, q, seed)
    return g.induced(keep_u, keep_i)
