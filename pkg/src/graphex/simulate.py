"""Forward simulation of sparse exchangeable Poisson matrix factorization."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from graphex.ggp import GGPParams, check_admissible, sample_ggp
from graphex.graph import BipartiteGraph
from graphex.rng import make_rng


class SimulationTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelHyperparams:
    """GGP parameters per side, Gamma affinity priors, rank and sizes.

    ``s`` is the user size and ``alpha`` the item size. Both may be zero,
    which is how the dense baseline switches off the leftover masses.
    """

    sigma_U: float = 0.2
    tau_U: float = 1.0
    sigma_I: float = 0.2
    tau_I: float = 1.0
    a: float = 0.1
    b: float = 0.1
    c: float = 0.1
    d: float = 0.1
    K: int = 30
    s: float = 120.0
    alpha: float = 120.0

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))
        if not (self.s >= 0 and self.alpha >= 0):
            raise ValueError("sizes must be non-negative")
        check_admissible(self.sigma_U, self.tau_U)
        check_admissible(self.sigma_I, self.tau_I)

    def user_ggp(self) -> GGPParams:
        return GGPParams(self.sigma_U, self.tau_U, self.s)

    def item_ggp(self) -> GGPParams:
        return GGPParams(self.sigma_I, self.tau_I, self.alpha)

    def replace(self, **kw) -> "ModelHyperparams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LatentTruth:
    user_ids: tuple
    gamma: np.ndarray
    theta: np.ndarray
    item_ids: tuple
    omega: np.ndarray
    beta: np.ndarray

    def write(self, directory: str | os.PathLike) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, ids, w, aff in (("users", self.user_ids, self.gamma, self.theta),
                                  ("items", self.item_ids, self.omega, self.beta)):
            with open(os.path.join(directory, f"truth_{name}.tsv"), "w") as fh:
                for k, ident in enumerate(ids):
                    cells = [ident, f"{w[k]:.17g}"] + [f"{x:.17g}" for x in aff[k]]
                    fh.write("\t".join(cells) + "\n")


def edge_count_estimate(h: ModelHyperparams) -> float:
    """Poisson-mean upper bound on the expected number of edges."""
    return (h.s * h.alpha * h.tau_U ** (h.sigma_U - 1) * h.tau_I ** (h.sigma_I - 1)
            * h.K * (h.a / h.b) * (h.c / h.d))


def sample_edges(user_mass: np.ndarray, item_mass: np.ndarray,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw the simple graph with ``P(i~j) = 1 - exp(-sum_k A_ik B_jk)``.

    The per-factor Poisson counts ``e_ij^k ~ Poi(A_ik B_jk)`` are generated
    in aggregate: ``N_k ~ Poi(sum_i A_ik * sum_j B_jk)`` endpoints allocated
    independently in proportion to mass. An edge is present iff some count
    is positive, so only the distinct pairs are kept.
    """
    n_u, K = user_mass.shape
    n_i = item_mass.shape[0]
    if n_u == 0 or n_i == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    keys = []
    for k in range(K):
        cu = np.cumsum(user_mass[:, k])
        ci = np.cumsum(item_mass[:, k])
        tu, ti = cu[-1], ci[-1]
        if not (tu > 0 and ti > 0):
            continue
        n = rng.poisson(tu * ti)
        if n == 0:
            continue
        ui = np.minimum(np.searchsorted(cu, rng.random(n) * tu, side="right"), n_u - 1)
        ii = np.minimum(np.searchsorted(ci, rng.random(n) * ti, side="right"), n_i - 1)
        keys.append(np.unique(ui * n_i + ii))
    if not keys:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    key = np.unique(np.concatenate(keys))
    return np.divmod(key, n_i)


def simulate_graph(h: ModelHyperparams, seed: int, max_expected_edges: float = 5e7,
                   trunc_tol: float | None = None) -> tuple[BipartiteGraph, LatentTruth]:
    """Sample a graph and the latent variables of its non-isolated atoms."""
    est = edge_count_estimate(h)
    if est > max_expected_edges:
        raise SimulationTooLarge(
            f"expected edge count bound {est:.3g} exceeds cap {max_expected_edges:.3g}")
    xi = sample_ggp(h.user_ggp(), trunc_tol, rng=make_rng(seed, "sim", "users"))
    zeta = sample_ggp(h.item_ggp(), trunc_tol, rng=make_rng(seed, "sim", "items"))
    rng_aff = make_rng(seed, "sim", "affinities")
    theta = rng_aff.gamma(h.a, 1.0 / h.b, size=(len(xi), h.K))
    beta = rng_aff.gamma(h.c, 1.0 / h.d, size=(len(zeta), h.K))
    eu, ei = sample_edges(xi.weights[:, None] * theta, zeta.weights[:, None] * beta,
                          make_rng(seed, "sim", "edges"))
    user_ids = [f"u{k}" for k in range(len(xi))]
    item_ids = [f"i{k}" for k in range(len(zeta))]
    g = BipartiteGraph.from_index_edges(user_ids, item_ids, eu, ei)
    ku = np.unique(eu)
    ki = np.unique(ei)
    truth = LatentTruth(g.user_ids, xi.weights[ku], theta[ku], g.item_ids,
                        zeta.weights[ki], beta[ki])
    return g, truth
