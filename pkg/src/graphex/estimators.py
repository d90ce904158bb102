"""Plug-in estimates of the sparsity exponents and the sizes of a graph."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from graphex.graph import BipartiteGraph
from graphex.rng import derive_seed
from graphex.simulate import ModelHyperparams, simulate_graph

log = logging.getLogger(__name__)

SIGMA_CLAMP = 0.99


def estimate_sigma(degrees) -> float:
    """Degree-based estimate of the GGP exponent of one side.

    ``sum_i (1 - 2**-d_i)`` is the expected number of these ``n`` vertices
    that keep an edge when the other side is halved, so

        sigma_hat = (log n - log sum_i (1 - 2**-d_i)) / log 2

    is the log2 growth rate of the vertex count. It lies in ``[0, 1]``; an
    all-degree-one list gives exactly 1, which is returned unclamped.
    """
    d = np.asarray(degrees, dtype=float)
    if d.size == 0:
        raise ValueError("estimate_sigma needs at least one degree")
    if np.any(d < 1):
        raise ValueError("degrees must be >= 1")
    survivors = np.sum(-np.expm1(-d * math.log(2.0)))
    return (math.log(d.size) - math.log(survivors)) / math.log(2.0)


def sigma_hats(g: BipartiteGraph) -> tuple[float, float]:
    return estimate_sigma(g.user_degrees), estimate_sigma(g.item_degrees)


def clamp_sigma(sigma: float, bound: float = SIGMA_CLAMP) -> float:
    """Clip a raw estimate into the range the model can use, with a warning."""
    if sigma > bound or sigma < -bound:
        clipped = min(max(sigma, -bound), bound)
        log.warning("sigma estimate %.4f clamped to %.4f", sigma, clipped)
        return clipped
    return sigma


@dataclass
class SizeCalibration:
    C_hat: float
    n_sims: int
    sim_params: ModelHyperparams
    per_sim_C: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    side: str = "user"
    # sigma estimates of the simulated graphs themselves
    per_sim_sigma: list = field(default_factory=list)

    @property
    def spread(self) -> float:
        """``sd / |mean|`` of the per-simulation constants."""
        if len(self.per_sim_C) < 2:
            return 0.0
        return float(np.std(self.per_sim_C, ddof=1) / abs(self.C_hat))


def _sim_stats(h: ModelHyperparams, n_sims: int, seed: int, tag: str):
    """log U, log I, log e and both sigma estimates for ``n_sims`` simulations."""
    rows, dropped = [], []
    for r in range(n_sims):
        g, _ = simulate_graph(h, derive_seed(seed, "calibrate", tag, r))
        if g.is_empty:
            dropped.append(r)
            continue
        su, si = sigma_hats(g)
        rows.append((math.log(g.n_users), math.log(g.n_items), math.log(g.n_edges), su, si))
    if not rows:
        raise RuntimeError("every calibration simulation was empty")
    if dropped:
        log.warning("calibration dropped %d empty replicate(s): %s", len(dropped), dropped)
    return np.array(rows), dropped


def _intercepts(stats: np.ndarray, side: str, sigma_hat: float, size: float) -> np.ndarray:
    log_n = stats[:, 0] if side == "user" else stats[:, 1]
    return log_n - sigma_hat * stats[:, 2] - (1.0 - sigma_hat) * math.log(size)


def calibrate_C(h: ModelHyperparams, sigma_hat: float, n_sims: int = 20, seed: int = 0,
                side: str = "user", sim_sigma: float | None = None) -> SizeCalibration:
    """Estimate the intercept ``C`` of ``log U - sigma log e = C + (1 - sigma) log s``.

    Simulates ``n_sims`` graphs from ``h`` with the side's exponent replaced
    by ``sim_sigma`` (default: the clamped ``sigma_hat``) at the known size
    recorded in ``h``. Replicates with no edges are dropped and listed.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    sig = clamp_sigma(sigma_hat if sim_sigma is None else sim_sigma)
    if side == "user":
        sim_h, size = h.replace(sigma_U=sig), h.s
    elif side == "item":
        sim_h, size = h.replace(sigma_I=sig), h.alpha
    else:
        raise ValueError(f"side must be 'user' or 'item', got {side!r}")
    if not size > 0:
        raise ValueError("calibration needs a positive known size")
    stats, dropped = _sim_stats(sim_h, n_sims, seed, side)
    per = _intercepts(stats, side, sigma_hat, size)
    col = 3 if side == "user" else 4
    return SizeCalibration(float(per.mean()), n_sims, sim_h, per.tolist(), dropped, side,
                           stats[:, col].tolist())


def estimate_size(U: int, E: int, sigma_hat: float, C_hat: float) -> float:
    """Solve the log-linear size relation for the size: ``exp((log U - s log E - C) / (1 - s))``."""
    if U < 1 or E < 1:
        raise ValueError("U and E must be >= 1")
    if sigma_hat >= 1:
        raise ValueError(f"sigma_hat must be < 1 to solve for the size, got {sigma_hat}")
    return math.exp((math.log(U) - sigma_hat * math.log(E) - C_hat) / (1.0 - sigma_hat))


@dataclass
class GraphEstimate:
    sigma_U: float
    sigma_I: float
    s: float
    alpha: float
    calib_user: SizeCalibration
    calib_item: SizeCalibration
    sim_sigma_U: float = math.nan
    sim_sigma_I: float = math.nan
    history: list = field(default_factory=list)

    def hyperparams(self, base: ModelHyperparams) -> ModelHyperparams:
        """``base`` with the estimated exponents and sizes substituted."""
        return base.replace(sigma_U=clamp_sigma(self.sigma_U), sigma_I=clamp_sigma(self.sigma_I),
                            s=self.s, alpha=self.alpha)


def estimate_graph(g: BipartiteGraph, base: ModelHyperparams, n_sims: int = 20,
                   seed: int = 0, rounds: int = 3, debias: bool = True) -> GraphEstimate:
    """Estimate both exponents and both sizes of ``g``.

    Each round simulates ``n_sims`` graphs at the current sizes (initially
    those of ``base``), computes both intercepts and solves for the sizes.
    The degree-based exponent estimate is biased upward at small sizes, so
    with ``debias`` the exponents used to *simulate* are shifted each round
    until the simulated graphs' own estimates match the observed ones. The
    observed estimates are what enter the size relation.
    """
    raw_u, raw_i = sigma_hats(g)
    su, si = clamp_sigma(raw_u), clamp_sigma(raw_i)
    sim_u, sim_i = su, si
    h = base
    history = []
    for r in range(rounds):
        sim_h = h.replace(sigma_U=sim_u, sigma_I=sim_i)
        stats, dropped = _sim_stats(sim_h, n_sims, derive_seed(seed, "round", r), "both")
        cu = SizeCalibration(float(_intercepts(stats, "user", su, h.s).mean()), n_sims, sim_h,
                             _intercepts(stats, "user", su, h.s).tolist(), dropped, "user",
                             stats[:, 3].tolist())
        ci = SizeCalibration(float(_intercepts(stats, "item", si, h.alpha).mean()), n_sims, sim_h,
                             _intercepts(stats, "item", si, h.alpha).tolist(), dropped, "item",
                             stats[:, 4].tolist())
        s_hat = estimate_size(g.n_users, g.n_edges, su, cu.C_hat)
        a_hat = estimate_size(g.n_items, g.n_edges, si, ci.C_hat)
        history.append(dict(round=r, sim_sigma_U=sim_u, sim_sigma_I=sim_i, s_calib=h.s,
                            alpha_calib=h.alpha, s=s_hat, alpha=a_hat))
        if r + 1 < rounds:
            if debias:
                sim_u = clamp_sigma(sim_u - (stats[:, 3].mean() - su))
                sim_i = clamp_sigma(sim_i - (stats[:, 4].mean() - si))
            h = h.replace(s=s_hat, alpha=a_hat)
    return GraphEstimate(raw_u, raw_i, s_hat, a_hat, cu, ci, sim_u, sim_i, history)
