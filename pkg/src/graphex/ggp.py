"""Sampling atoms of a generalized gamma process on a label interval.

The process has Levy intensity

    g(du) = u^{-(1 + sigma)} exp(-tau u) / Gamma(1 - sigma) du

and labels uniform on ``[0, size)``. For ``sigma < 0`` the intensity has
finite mass and the weights are i.i.d. Gamma(-sigma, rate=tau). For
``sigma in [0, 1)`` there are infinitely many small atoms and only those
above a truncation level are drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from graphex.rng import make_rng


class InadmissibleParams(ValueError):
    pass


class TooManyAtoms(RuntimeError):
    pass


@dataclass(frozen=True)
class GGPParams:
    sigma: float
    tau: float
    size: float

    def __post_init__(self):
        check_admissible(self.sigma, self.tau)
        if not self.size >= 0:
            raise InadmissibleParams(f"size must be non-negative, got {self.size}")


@dataclass(frozen=True)
class WeightedAtoms:
    weights: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.weights.size)


def check_admissible(sigma: float, tau: float) -> None:
    if not (math.isfinite(sigma) and sigma < 1):
        raise InadmissibleParams(f"sigma must be < 1, got {sigma}")
    # tau = 0 is admissible for sigma <= 0 in principle but gives infinite
    # first moments, which the simulator and inference cannot use.
    if not (math.isfinite(tau) and tau > 0):
        raise InadmissibleParams(f"tau must be > 0, got {tau}")


def expected_total_mass(params: GGPParams) -> float:
    """``size * int u g(du) = size * tau**(sigma - 1)``."""
    return params.size * params.tau ** (params.sigma - 1.0)


def expected_atom_count(params: GGPParams) -> float:
    """Finite only for ``sigma < 0``: ``size * tau**sigma / (-sigma)``."""
    if params.sigma >= 0:
        return math.inf
    return params.size * params.tau ** params.sigma / (-params.sigma)


def truncated_mass(params: GGPParams, eps: float) -> float:
    """Expected total weight of atoms below ``eps``.

    The integrand ``u g(du)`` is ``tau**(sigma-1)`` times a Gamma(1-sigma, tau)
    density, so this is a regularized lower incomplete gamma function.
    """
    return expected_total_mass(params) * special.gammainc(1.0 - params.sigma, params.tau * eps)


def truncation_level(params: GGPParams, trunc_tol: float) -> float:
    """Largest ``eps`` whose dropped expected mass is at most ``trunc_tol``."""
    if not trunc_tol > 0:
        raise ValueError("trunc_tol must be positive")
    total = expected_total_mass(params)
    if total <= trunc_tol:
        return math.inf
    # exact inverse, then nudged down until the bound holds in floating point
    eps = special.gammaincinv(1.0 - params.sigma, trunc_tol / total) / params.tau
    while truncated_mass(params, eps) > trunc_tol:
        eps *= 1.0 - 1e-9
    return eps


def default_trunc_tol(params: GGPParams) -> float:
    return 1e-6 * expected_total_mass(params)


def sample_ggp(params: GGPParams, trunc_tol: float | None = None, seed: int = 0,
               rng: np.random.Generator | None = None, max_atoms: float = 5e7) -> WeightedAtoms:
    """Draw the atoms of the process restricted to labels in ``[0, size)``.

    For ``sigma >= 0`` atoms with weight at least ``truncation_level`` are
    sampled exactly by thinning a dominating Poisson process: on
    ``[eps, 1)`` the dominating intensity drops the exponential factor
    (accept with ``exp(-tau u)``), on ``[1, inf)`` it drops the power factor
    (accept with ``u**-(1+sigma)``). Both envelopes have closed-form
    inverse CDFs.
    """
    if rng is None:
        rng = make_rng(seed, "ggp")
    sigma, tau, size = params.sigma, params.tau, params.size
    if size == 0:
        return WeightedAtoms(np.empty(0), np.empty(0))

    if sigma < 0:
        n = rng.poisson(expected_atom_count(params))
        w = rng.gamma(-sigma, 1.0 / tau, size=n)
    else:
        if trunc_tol is None:
            trunc_tol = default_trunc_tol(params)
        eps = truncation_level(params, trunc_tol)
        norm = size / special.gamma(1.0 - sigma)
        if eps == 0.0:
            raise TooManyAtoms("truncation level underflows; raise trunc_tol")
        dominating = norm * (math.log(1.0 / eps) if sigma == 0 else (eps ** -sigma - 1.0) / sigma)
        if dominating > max_atoms:
            raise TooManyAtoms(f"about {dominating:.3g} candidate atoms above eps={eps:.3g}; "
                               f"raise trunc_tol or max_atoms")
        parts = []
        if eps < 1.0:
            if sigma == 0:
                mass = norm * -math.log(eps)
            else:
                mass = norm * (eps ** -sigma - 1.0) / sigma
            n = rng.poisson(mass)
            v = rng.random(n)
            if sigma == 0:
                u = eps ** (1.0 - v)
            else:
                u = (eps ** -sigma - v * (eps ** -sigma - 1.0)) ** (-1.0 / sigma)
            parts.append(u[rng.random(n) < np.exp(-tau * u)])
        lo = max(eps, 1.0)
        n = rng.poisson(norm * math.exp(-tau * lo) / tau)
        u = lo + rng.exponential(1.0 / tau, size=n)
        parts.append(u[rng.random(n) < u ** -(1.0 + sigma)])
        w = np.concatenate(parts)
    labels = rng.uniform(0.0, size, size=w.size)
    order = np.argsort(labels, kind="stable")
    return WeightedAtoms(w[order], labels[order])
