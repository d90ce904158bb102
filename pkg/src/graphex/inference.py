"""Coordinate-ascent variational inference for sparse Poisson factorization.

Every latent variable gets a Gamma mean-field factor (shape ``k*``, rate
``l*``). The binary edges are augmented with truncated-Poisson counts
split over the K factors; those counts are integrated out analytically in
each sweep and only their expectations are used. The total mass of atoms
that carry no edges (the leftover masses ``mu`` for users and ``rho`` for
items) is replaced by its conditional expectation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from graphex.graph import BipartiteGraph
from graphex.rng import make_rng
from graphex.simulate import ModelHyperparams

log = logging.getLogger(__name__)

SPARSE, DENSE = "sparse", "dense"


class NonFiniteError(FloatingPointError):
    pass


class UnknownItemsError(KeyError):
    def __init__(self, ids):
        self.ids = list(ids)
        shown = ", ".join(self.ids[:10]) + (" ..." if len(self.ids) > 10 else "")
        super().__init__(f"{len(self.ids)} item(s) unknown to the trained model: {shown}")


@dataclass(frozen=True)
class FitConfig:
    K: int = 30
    max_iters: int = 200
    conv_tol: float = 1e-4
    mc_samples: int = 64
    seed: int = 0
    mode: str = SPARSE
    dense_sigma: float = -0.1
    # use the 1/(tau + c) leftover-mass integrand instead of (tau + c)**(sigma - 1)
    literal_leftover: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.conv_tol > 0:
            raise ValueError("conv_tol must be > 0")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.mode not in (SPARSE, DENSE):
            raise ValueError(f"mode must be 'sparse' or 'dense', got {self.mode!r}")


@dataclass
class VariationalState:
    """Gamma factor parameters for every user and item plus leftover masses.

    Arrays: ``kg, lg`` (U,) user weights; ``kt, lt`` (U, K) user affinities;
    ``kw, lw`` (I,) item weights; ``kb, lb`` (I, K) item affinities;
    ``mu`` (K,) user leftover mass; ``rho`` (K,) item leftover mass.
    """

    user_ids: tuple
    item_ids: tuple
    kg: np.ndarray
    lg: np.ndarray
    kt: np.ndarray
    lt: np.ndarray
    kw: np.ndarray
    lw: np.ndarray
    kb: np.ndarray
    lb: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    hyper: ModelHyperparams
    mode: str = SPARSE
    iteration: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    mu_var: np.ndarray | None = None
    rho_var: np.ndarray | None = None
    # fraction of the item mass visible to the users; < 1 after a test-user refit
    exposure_scale: float = 1.0
    # user mass the item factors were fit against, kept when users are swapped out
    item_exposure: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.kt.shape[1]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def copy(self) -> "VariationalState":
        arrays = {k: getattr(self, k).copy() for k in _ARRAYS}
        return replace(self, history=list(self.history), **arrays)

    def user_exposure(self) -> np.ndarray:
        """Type-k item mass a user atom is exposed to, leftovers included."""
        return self.exposure_scale * (self.E_omega() @ self.E_beta() + self.rho)

    def items_exposure(self) -> np.ndarray:
        """Type-k user mass an item atom is exposed to, leftovers included."""
        if self.item_exposure is not None:
            return self.item_exposure
        return self.E_gamma() @ self.E_theta() + self.mu

    # expectations ----------------------------------------------------------
    def E_gamma(self):
        return self.kg / self.lg

    def E_theta(self):
        return self.kt / self.lt

    def E_omega(self):
        return self.kw / self.lw

    def E_beta(self):
        return self.kb / self.lb

    def validate(self) -> None:
        U, I, K = self.n_users, self.n_items, self.K
        shapes = dict(kg=(U,), lg=(U,), kt=(U, K), lt=(U, K), kw=(I,), lw=(I,),
                      kb=(I, K), lb=(I, K), mu=(K,), rho=(K,))
        for name, shp in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shp:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shp}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{name} has non-finite entries")
        for name in ("kg", "lg", "kt", "lt", "kw", "lw", "kb", "lb"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be strictly positive")
        if np.any(self.mu < 0) or np.any(self.rho < 0):
            raise ValueError("leftover masses must be non-negative")


_ARRAYS = ("kg", "lg", "kt", "lt", "kw", "lw", "kb", "lb", "mu", "rho")


def gamma_elog(k, l):
    return special.digamma(k) - np.log(l)


# ---------------------------------------------------------------------------
# truncated Poisson


def tpoi_expected_total(Lam) -> np.ndarray:
    """``E[N | N > 0]`` for ``N ~ Poi(Lam)``, elementwise."""
    Lam = np.asarray(Lam, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = Lam / -np.expm1(-Lam)
    return np.where(Lam < 1e-12, 1.0, out)


def tpoi_moments(lambdas) -> tuple[float, np.ndarray]:
    """Mean total and split proportions of a K-dimensional truncated Poisson.

    The total is Poisson(sum) conditioned positive and is split
    multinomially, so the per-component means are ``total * proportions``.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("rates must be finite and non-negative")
    Lam = float(lam.sum())
    if Lam == 0:
        raise ValueError("truncated Poisson needs a positive total rate")
    return float(tpoi_expected_total(Lam)), lam / Lam


# ---------------------------------------------------------------------------
# leftover mass


def _prior_draws(state: VariationalState, side: str, mc_samples: int, seed: int) -> np.ndarray:
    h = state.hyper
    shape, rate = (h.a, h.b) if side == "user" else (h.c, h.d)
    return make_rng(seed, "leftover", side).gamma(shape, 1.0 / rate, size=(mc_samples, state.K))


def _exposures(state: VariationalState):
    return state.user_exposure(), state.E_gamma() @ state.E_theta() + state.mu


def leftover_moments(draws: np.ndarray, exposure: np.ndarray, sigma: float, tau: float,
                     size: float, literal: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Campbell mean and variance of the leftover mass for prior draws of affinities.

    The weight integral is done in closed form,
    ``int w exp(-w c) g(dw) = (tau + c)**(sigma - 1)`` and
    ``int w**2 exp(-w c) g(dw) = (1 - sigma) (tau + c)**(sigma - 2)``, so the
    Monte Carlo average runs over the affinity draws only.
    """
    if size == 0:
        z = np.zeros(draws.shape[1])
        return z, z.copy()
    base = tau + draws @ exposure
    if literal:
        m1, m2 = 1.0 / base, 1.0 / base ** 2
    else:
        m1 = base ** (sigma - 1.0)
        m2 = (1.0 - sigma) * base ** (sigma - 2.0)
    mean = size * np.mean(draws * m1[:, None], axis=0)
    var = size * np.mean(draws ** 2 * m2[:, None], axis=0)
    return mean, var


def leftover_mass(side: str, state: VariationalState, mc_samples: int = 64, seed: int = 0,
                  literal: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Expected leftover mass (and its variance) of one side given the other."""
    h = state.hyper
    to_users, to_items = _exposures(state)
    draws = _prior_draws(state, side, mc_samples, seed)
    if side == "user":
        return leftover_moments(draws, to_users, h.sigma_U, h.tau_U, h.s, literal)
    if side == "item":
        return leftover_moments(draws, to_items, h.sigma_I, h.tau_I, h.alpha, literal)
    raise ValueError(f"side must be 'user' or 'item', got {side!r}")


# ---------------------------------------------------------------------------
# sweeps


class _EdgeIndex:
    """Edge arrays plus item-major ordering for segment sums."""

    def __init__(self, g: BipartiteGraph):
        self.u = g.edge_users
        self.i = g.edge_items
        self.user_starts = g.user_indptr[:-1]
        self.item_order = np.argsort(g.edge_items, kind="stable")
        self.item_starts = np.concatenate([[0], np.cumsum(g.item_degrees)[:-1]])

    def user_sums(self, x):
        return np.add.reduceat(x, self.user_starts, axis=0)

    def item_sums(self, x):
        return np.add.reduceat(x[self.item_order], self.item_starts, axis=0)


def expected_allocations(state: VariationalState, idx: _EdgeIndex) -> np.ndarray:
    """``E[e_ij^k]`` for every observed edge, shape (E, K).

    The optimal mean-field factor of each edge's counts is a truncated
    Poisson with rates ``exp(E log gamma_i + E log theta_ik + E log beta_jk
    + E log omega_j)``.
    """
    log_rate = (gamma_elog(state.kt, state.lt)[idx.u]
                + gamma_elog(state.kb, state.lb)[idx.i]
                + (gamma_elog(state.kg, state.lg)[idx.u]
                   + gamma_elog(state.kw, state.lw)[idx.i])[:, None])
    lam = np.exp(log_rate)
    Lam = lam.sum(axis=1)
    scale = tpoi_expected_total(Lam) / np.where(Lam > 0, Lam, 1.0)
    return lam * scale[:, None]


def _check(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite values in {name} update")


def cavi_iteration(g: BipartiteGraph, state: VariationalState, mc_samples: int = 64,
                   seed: int = 0, freeze_items: bool = False, literal_leftover: bool = False,
                   _idx: _EdgeIndex | None = None) -> VariationalState:
    """One sweep: leftover masses, edge allocations, then theta, gamma, beta, omega.

    Each Gamma update uses the freshest expectations of the factors before
    it in that order. With ``freeze_items`` the item factors and ``rho`` are
    left untouched.
    """
    if (g.n_users, g.n_items) != (state.n_users, state.n_items):
        raise ValueError("state dimensions do not match the graph")
    h = state.hyper
    idx = _EdgeIndex(g) if _idx is None else _idx
    new = state.copy()

    # (1) leftover masses from the start-of-sweep state
    mu, mu_var = leftover_mass("user", state, mc_samples, seed, literal_leftover)
    new.mu, new.mu_var = mu, mu_var
    if not freeze_items:
        rho, rho_var = leftover_mass("item", state, mc_samples, seed, literal_leftover)
        new.rho, new.rho_var = rho, rho_var
    _check("leftover mass", new.mu, new.rho)

    # (2) expected allocations
    alloc = expected_allocations(state, idx)
    _check("allocation", alloc)
    S_u = idx.user_sums(alloc)

    # (3) user side
    Eg = state.E_gamma()
    to_users = new.exposure_scale * (state.E_omega() @ state.E_beta() + new.rho)
    new.kt = h.a + S_u
    new.lt = h.b + Eg[:, None] * to_users[None, :]
    _check("theta", new.kt, new.lt)
    Et = new.E_theta()
    new.kg = -h.sigma_U + S_u.sum(axis=1)
    new.lg = h.tau_U + Et @ to_users
    _check("gamma", new.kg, new.lg)

    if not freeze_items:
        S_i = idx.item_sums(alloc)
        to_items = new.E_gamma() @ Et + new.mu
        Ew = state.E_omega()
        new.kb = h.c + S_i
        new.lb = h.d + Ew[:, None] * to_items[None, :]
        _check("beta", new.kb, new.lb)
        new.kw = -h.sigma_I + S_i.sum(axis=1)
        new.lw = h.tau_I + new.E_beta() @ to_items
        _check("omega", new.kw, new.lw)

    new.iteration = state.iteration + 1
    return new


def convergence_metric(old: VariationalState, new: VariationalState, items: bool = True) -> float:
    """Mean absolute relative change of E[theta] (and E[beta])."""
    parts = [np.abs(new.E_theta() / old.E_theta() - 1.0).ravel()]
    if items:
        parts.append(np.abs(new.E_beta() / old.E_beta() - 1.0).ravel())
    return float(np.mean(np.concatenate(parts)))


# ---------------------------------------------------------------------------
# fitting


def effective_hyper(hyper: ModelHyperparams, cfg: FitConfig) -> ModelHyperparams:
    h = hyper.replace(K=cfg.K)
    if cfg.mode == DENSE:
        h = h.replace(sigma_U=cfg.dense_sigma, sigma_I=cfg.dense_sigma, s=0.0, alpha=0.0)
    return h


def init_state(g: BipartiteGraph, hyper: ModelHyperparams, seed: int,
               mode: str = SPARSE) -> VariationalState:
    """Prior shapes plus Uniform(0, 0.1) jitter and prior rates.

    The weight factors start at shape ``1 - sigma`` (one observed count),
    which is positive for every admissible sigma.
    """
    h = hyper
    U, I, K = g.n_users, g.n_items, h.K
    rng = make_rng(seed, "init")
    jit = lambda *shape: rng.uniform(0.0, 0.1, size=shape)
    state = VariationalState(
        user_ids=g.user_ids, item_ids=g.item_ids,
        kg=1.0 - h.sigma_U + jit(U), lg=np.full(U, h.tau_U),
        kt=h.a + jit(U, K), lt=np.full((U, K), h.b),
        kw=1.0 - h.sigma_I + jit(I), lw=np.full(I, h.tau_I),
        kb=h.c + jit(I, K), lb=np.full((I, K), h.d),
        mu=np.full(K, h.s * (h.a / h.b) * h.tau_U ** (h.sigma_U - 1.0)),
        rho=np.full(K, h.alpha * (h.c / h.d) * h.tau_I ** (h.sigma_I - 1.0)),
        hyper=h, mode=mode)
    state.validate()
    return state


def _run(g, state, cfg, freeze_items, on_sweep=None):
    idx = _EdgeIndex(g)
    for _ in range(cfg.max_iters):
        new = cavi_iteration(g, state, cfg.mc_samples, cfg.seed, freeze_items,
                             cfg.literal_leftover, _idx=idx)
        metric = convergence_metric(state, new, items=not freeze_items)
        new.history.append(metric)
        state = new
        if on_sweep is not None:
            on_sweep(state)
        if metric < cfg.conv_tol:
            state.converged = True
            break
    if not state.converged:
        log.warning("CAVI stopped at max_iters=%d without reaching conv_tol=%g (last %g)",
                    cfg.max_iters, cfg.conv_tol, state.history[-1])
    return state


def fit(g: BipartiteGraph, cfg: FitConfig, hyper: ModelHyperparams, on_sweep=None) -> VariationalState:
    """Run sweeps until the convergence metric drops below ``cfg.conv_tol``.

    Dense mode replaces both exponents by ``cfg.dense_sigma`` and both sizes
    by zero, which switches the leftover masses off.
    """
    if g.is_empty:
        raise ValueError("cannot fit an empty graph")
    h = effective_hyper(hyper, cfg)
    state = init_state(g, h, cfg.seed, cfg.mode)
    return _run(g, state, cfg, freeze_items=False, on_sweep=on_sweep)


def fit_test_users(holdoutfit: BipartiteGraph, trained: VariationalState, cfg: FitConfig,
                   s_holdout: float | None = None, exposure_scale: float = 1.0,
                   drop_unknown: bool = False) -> VariationalState:
    """Fit user factors for new users with everything item-side frozen.

    ``s_holdout`` is the user size the new users are drawn at (defaults to
    the trained size) and ``exposure_scale`` the fraction of the trained
    item mass those users could have connected to, e.g. ``1 - q`` for the
    item part kept out of a test set. Items unknown to ``trained`` raise
    :class:`UnknownItemsError` unless ``drop_unknown``, in which case their
    edges are discarded.
    """
    known = trained.item_ids
    pos = {i: k for k, i in enumerate(known)}
    unknown = [i for i in holdoutfit.item_ids if i not in pos]
    g = holdoutfit
    if unknown:
        if not drop_unknown:
            raise UnknownItemsError(unknown)
        g = holdoutfit.restrict_items(pos)
        log.info("dropped %d unknown item(s) and %d edge(s) before the user refit",
                 len(unknown), holdoutfit.n_edges - g.n_edges)
        if g.is_empty:
            raise ValueError("no holdoutfit edges touch a known item")
    # re-express the edges against the trained item index
    remap = np.array([pos[i] for i in g.item_ids], dtype=np.int64)
    users, items = g.user_ids, known
    eu, ei = g.edge_users, remap[g.edge_items]
    # item index space is the trained one, so most items carry no edge here
    full = BipartiteGraph(users, items, eu, ei, _allow_isolated=True)

    h = trained.hyper
    if s_holdout is not None:
        h = h.replace(s=s_holdout)
    fresh = init_state(g, h.replace(K=trained.K), cfg.seed, trained.mode)
    state = VariationalState(
        user_ids=users, item_ids=items,
        kg=fresh.kg, lg=fresh.lg, kt=fresh.kt, lt=fresh.lt,
        kw=trained.kw.copy(), lw=trained.lw.copy(), kb=trained.kb.copy(), lb=trained.lb.copy(),
        mu=fresh.mu, rho=trained.rho.copy(), hyper=h, mode=trained.mode,
        exposure_scale=exposure_scale, rho_var=trained.rho_var,
        item_exposure=trained.items_exposure().copy())
    return _run(full, state, cfg, freeze_items=True)
