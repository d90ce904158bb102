"""Directory checkpoints for a fitted :class:`VariationalState`.

Layout::

    gamma.tsv  omega.tsv   id, kappa, lambda
    theta.tsv  beta.tsv    id, kappa_1..kappa_K, lambda_1..lambda_K
    leftover.tsv           k, mu, rho [, mu_var, rho_var, item_exposure]
    manifest.json          hyperparameters, mode, iteration, history, extras

Reals are written with 17 significant digits, which round-trips float64.
"""

from __future__ import annotations

import json
import os

import numpy as np

from graphex.inference import VariationalState
from graphex.simulate import ModelHyperparams

FORMAT_VERSION = 1


def _g(x) -> str:
    return "%.17g" % x


def _write_family(path, ids, k, l):
    with open(path, "w", encoding="utf-8") as fh:
        if k.ndim == 1:
            fh.write("id\tkappa\tlambda\n")
            for i, a, b in zip(ids, k.tolist(), l.tolist()):
                fh.write(f"{i}\t{_g(a)}\t{_g(b)}\n")
        else:
            K = k.shape[1]
            head = [f"kappa_{j + 1}" for j in range(K)] + [f"lambda_{j + 1}" for j in range(K)]
            fh.write("id\t" + "\t".join(head) + "\n")
            for i, a, b in zip(ids, k.tolist(), l.tolist()):
                fh.write(i + "\t" + "\t".join(map(_g, a + b)) + "\n")


def _read_family(path, matrix: bool):
    ids, rows = [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    arr = np.array(rows, dtype=float).reshape(len(rows), -1)
    if matrix:
        K = arr.shape[1] // 2
        return tuple(ids), arr[:, :K].copy(), arr[:, K:].copy()
    return tuple(ids), arr[:, 0].copy(), arr[:, 1].copy()


def save_state(state: VariationalState, directory: str | os.PathLike, extra: dict | None = None) -> None:
    """Write ``state`` to ``directory``; ``extra`` is merged into the manifest."""
    os.makedirs(directory, exist_ok=True)
    d = os.fspath(directory)
    _write_family(os.path.join(d, "gamma.tsv"), state.user_ids, state.kg, state.lg)
    _write_family(os.path.join(d, "theta.tsv"), state.user_ids, state.kt, state.lt)
    _write_family(os.path.join(d, "omega.tsv"), state.item_ids, state.kw, state.lw)
    _write_family(os.path.join(d, "beta.tsv"), state.item_ids, state.kb, state.lb)

    cols = {"mu": state.mu, "rho": state.rho}
    for name in ("mu_var", "rho_var", "item_exposure"):
        if getattr(state, name) is not None:
            cols[name] = getattr(state, name)
    with open(os.path.join(d, "leftover.tsv"), "w") as fh:
        fh.write("k\t" + "\t".join(cols) + "\n")
        for k in range(state.K):
            fh.write(f"{k + 1}\t" + "\t".join(_g(v[k]) for v in cols.values()) + "\n")

    manifest = dict(
        format_version=FORMAT_VERSION,
        hyper=state.hyper.to_dict(), mode=state.mode, iteration=state.iteration,
        converged=state.converged, history=[float(x) for x in state.history],
        exposure_scale=float(state.exposure_scale),
        n_users=state.n_users, n_items=state.n_items, K=state.K)
    if extra:
        manifest.update(extra)
    write_json(os.path.join(d, "manifest.json"), manifest)


def load_state(directory: str | os.PathLike) -> tuple[VariationalState, dict]:
    """Inverse of :func:`save_state`; returns the state and the raw manifest."""
    d = os.fspath(directory)
    with open(os.path.join(d, "manifest.json")) as fh:
        manifest = json.load(fh)
    users, kg, lg = _read_family(os.path.join(d, "gamma.tsv"), False)
    users_t, kt, lt = _read_family(os.path.join(d, "theta.tsv"), True)
    items, kw, lw = _read_family(os.path.join(d, "omega.tsv"), False)
    items_b, kb, lb = _read_family(os.path.join(d, "beta.tsv"), True)
    if users != users_t or items != items_b:
        raise ValueError(f"{d}: id columns disagree between factor files")
    with open(os.path.join(d, "leftover.tsv")) as fh:
        head = fh.readline().rstrip("\n").split("\t")[1:]
        rows = [[float(x) for x in line.rstrip("\n").split("\t")[1:]] for line in fh if line.strip()]
    cols = dict(zip(head, np.array(rows, dtype=float).reshape(len(rows), -1).T.copy()))
    state = VariationalState(
        user_ids=users, item_ids=items, kg=kg, lg=lg, kt=kt, lt=lt,
        kw=kw, lw=lw, kb=kb, lb=lb, mu=cols["mu"], rho=cols["rho"],
        hyper=ModelHyperparams(**manifest["hyper"]), mode=manifest["mode"],
        iteration=int(manifest["iteration"]), history=list(manifest["history"]),
        converged=bool(manifest["converged"]),
        mu_var=cols.get("mu_var"), rho_var=cols.get("rho_var"),
        exposure_scale=float(manifest["exposure_scale"]),
        item_exposure=cols.get("item_exposure"))
    state.validate()
    return state, manifest


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
