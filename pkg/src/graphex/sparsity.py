"""Edge density of vertex subsamples versus sampling level.

A graph drawn from a dense (graphon) model keeps roughly the same edge
density under (p, 1)- or (1, q)-sampling; a sparsely generated graph gets
denser as it is subsampled.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from graphex.graph import BipartiteGraph, edge_density, pq_sample_graph
from graphex.rng import derive_seed

DEFAULT_LEVELS = tuple(round(0.1 * k, 10) for k in range(1, 11))

DENSE, SPARSE, INCONCLUSIVE = "dense", "sparse", "inconclusive"


@dataclass
class DensityCurve:
    side: str
    levels: np.ndarray
    mean_density: np.ndarray
    sd_density: np.ndarray
    reps: int
    seed: int
    n_valid: np.ndarray = field(default=None)
    # raw[level_index][rep]; NaN marks an empty subsample
    raw: np.ndarray = field(default=None, repr=False)

    @property
    def flagged_levels(self) -> list[float]:
        """Levels at which every replicate came out empty."""
        return [float(l) for l, n in zip(self.levels, self.n_valid) if n == 0]

    def se(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.sd_density / np.sqrt(self.n_valid)


def _check_levels(levels) -> np.ndarray:
    lv = np.asarray(sorted(levels), dtype=float)
    if lv.size == 0 or np.any(lv <= 0) or np.any(lv > 1):
        raise ValueError("levels must lie in (0, 1]")
    if np.any(np.diff(lv) <= 0):
        raise ValueError("levels must be distinct")
    if lv[-1] != 1.0:
        lv = np.append(lv, 1.0)
    return lv


def density_profile(g: BipartiteGraph, side: str, levels=DEFAULT_LEVELS,
                    reps: int = 10, seed: int = 0) -> DensityCurve:
    """Mean and sd of ``edge_density`` of subsamples at each level.

    ``side="user"`` samples users at the level and keeps all items; ``"item"``
    does the reverse. Empty subsamples are excluded from the statistics.
    """
    if side not in ("user", "item"):
        raise ValueError(f"side must be 'user' or 'item', got {side!r}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    lv = _check_levels(levels)
    raw = np.full((lv.size, reps), np.nan)
    for a, level in enumerate(lv):
        for r in range(reps):
            if level == 1.0:
                raw[a, r] = edge_density(g)
                continue
            p, q = (level, 1.0) if side == "user" else (1.0, level)
            sub = pq_sample_graph(g, p, q, derive_seed(seed, "density", side, a, r))
            if not sub.is_empty:
                raw[a, r] = edge_density(sub)
    n_valid = np.sum(~np.isnan(raw), axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(raw, axis=1)
        sd = np.where(n_valid > 1, np.nanstd(raw, axis=1, ddof=1), 0.0)
    return DensityCurve(side, lv, mean, sd, reps, seed, n_valid, raw)


def classify(curve: DensityCurve, flat_tol: float = 0.15) -> str:
    """Dense / sparse / inconclusive verdict for one density curve.

    Dense when every level's mean stays within ``flat_tol`` (relative) of the
    full-graph density. Sparse when the mean decreases at every step up in
    level by more than twice the pooled standard error and the total
    relative drop exceeds ``flat_tol``.
    """
    if curve.levels.size < 4:
        raise ValueError("classification needs at least 4 levels")
    if curve.flagged_levels:
        return INCONCLUSIVE
    m = curve.mean_density
    ref = m[-1]
    rel = np.abs(m / ref - 1.0)
    if rel.max() <= flat_tol:
        return DENSE
    se = curve.se()
    pooled = np.sqrt(se[:-1] ** 2 + se[1:] ** 2)
    drops = m[:-1] - m[1:]
    if np.all(drops > 2.0 * pooled) and np.all(drops > 0) and m[0] / ref - 1.0 > flat_tol:
        return SPARSE
    return INCONCLUSIVE


def write_profile_csv(curves: list[DensityCurve], verdicts: dict[str, str],
                      path: str | os.PathLike) -> None:
    """Long-format ``side,level,rep,density`` rows plus one summary row per side."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["side", "level", "rep", "density"])
        for c in curves:
            for a, level in enumerate(c.levels):
                for r in range(c.reps):
                    x = c.raw[a, r]
                    w.writerow([c.side, repr(float(level)), r, "" if math.isnan(x) else repr(float(x))])
        for c in curves:
            w.writerow([c.side, "summary", "verdict", verdicts[c.side]])
