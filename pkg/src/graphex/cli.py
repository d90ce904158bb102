"""Command-line pipeline: ``graphex <subcommand> ... --seed N``.

Every subcommand writes into ``--out`` a ``manifest.json`` (command line,
seed, resolved settings, sha256 digests of the inputs, counts) and a
``resolved.cfg`` holding the full key=value configuration, which can be fed
back through ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from graphex import __version__
from graphex.checkpoint import load_state, save_state, write_json
from graphex.config import RunConfig, write_kv
from graphex.graph import load_edge_list, write_edge_list

log = logging.getLogger("graphex")

MODEL_KEYS = ("sigma_U", "tau_U", "sigma_I", "tau_I", "a", "b", "c", "d", "K", "s", "alpha")
FIT_KEYS = ("max_iters", "conv_tol", "mc_samples", "dense_sigma", "literal_leftover")


class CLIError(Exception):
    """Usage problems found after argument parsing."""


# ---------------------------------------------------------------------------
# helpers


def sha256_path(path) -> str:
    """Digest of a file, or of a directory's regular files in name order."""
    h = hashlib.sha256()
    if os.path.isdir(path):
        for name in sorted(os.listdir(path)):
            full = os.path.join(path, name)
            if os.path.isfile(full):
                h.update(name.encode() + b"\0")
                h.update(bytes.fromhex(sha256_path(full)))
        return h.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(path, what):
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _finish(args, cfg: RunConfig, out: str, inputs: dict, **extra) -> None:
    os.makedirs(out, exist_ok=True)
    cfg.write(os.path.join(out, "resolved.cfg"))
    manifest = dict(command=args.command, argv=args.argv, version=__version__,
                    seed=cfg.seed, threads=cfg.threads, config=cfg.to_dict(),
                    inputs={k: dict(path=os.path.abspath(v), sha256=sha256_path(v))
                            for k, v in inputs.items()})
    manifest.update(extra)
    write_json(os.path.join(out, "manifest.json"), manifest)


def _limit_threads(n: int):
    return threadpool_limits(limits=max(1, n))


def _counts(g) -> dict:
    return dict(U=g.n_users, I=g.n_items, E=g.n_edges)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, cfg):
    from graphex.simulate import simulate_graph

    g, truth = simulate_graph(cfg.hyperparams(), cfg.seed, cfg.max_expected_edges)
    os.makedirs(args.out, exist_ok=True)
    write_edge_list(g, os.path.join(args.out, "graph.tsv"))
    truth.write(args.out)
    _finish(args, cfg, args.out, {}, hyper=cfg.hyperparams().to_dict(), counts=_counts(g))
    print(f"U={g.n_users}\nI={g.n_items}\nE={g.n_edges}")


def cmd_check_sparsity(args, cfg):
    from graphex.sparsity import DEFAULT_LEVELS, classify, density_profile, write_profile_csv

    g = load_edge_list(_require(args.graph, "graph"))
    levels = DEFAULT_LEVELS if args.levels is None else [float(x) for x in args.levels.split(",")]
    curves, verdicts = [], {}
    for side in ("user", "item"):
        c = density_profile(g, side, levels, reps=cfg.reps, seed=cfg.seed)
        curves.append(c)
        verdicts[side] = classify(c, flat_tol=args.flat_tol)
    os.makedirs(args.out, exist_ok=True)
    write_profile_csv(curves, verdicts, os.path.join(args.out, "density_profile.csv"))
    _finish(args, cfg, args.out, dict(graph=args.graph), verdicts=verdicts, flat_tol=args.flat_tol,
            counts=_counts(g),
            mean_density={c.side: [None if np.isnan(x) else float(x) for x in c.mean_density]
                          for c in curves})
    for side, v in verdicts.items():
        print(f"{side}={v}")


def cmd_estimate(args, cfg):
    from graphex.estimators import estimate_graph

    g = load_edge_list(_require(args.graph, "graph"))
    est = estimate_graph(g, cfg.hyperparams(), n_sims=cfg.n_sims, seed=cfg.seed, rounds=cfg.rounds)
    fitted = est.hyperparams(cfg.hyperparams())
    lines = dict(sigma_hat_U=float(est.sigma_U), sigma_hat_I=float(est.sigma_I),
                 s_hat=float(est.s), alpha_hat=float(est.alpha),
                 C_hat_U=float(est.calib_user.C_hat), C_hat_I=float(est.calib_item.C_hat))
    os.makedirs(args.out, exist_ok=True)
    # the model keys of this file form a config that `fit --config` accepts
    write_kv(os.path.join(args.out, "estimate.cfg"),
             {k: getattr(fitted, k) for k in MODEL_KEYS})
    _finish(args, cfg, args.out, dict(graph=args.graph), estimate=lines,
            calibration=dict(spread_U=est.calib_user.spread, spread_I=est.calib_item.spread,
                             sim_sigma_U=float(est.sim_sigma_U),
                             sim_sigma_I=float(est.sim_sigma_I),
                             rounds=[{k: float(v) for k, v in r.items()} for r in est.history]),
            counts=_counts(g))
    for k, v in lines.items():
        print(f"{k}={v!r}")


def cmd_split(args, cfg):
    from graphex.split import split

    g = load_edge_list(_require(args.graph, "graph"))
    sizes = {}
    if {"s", "alpha"} <= cfg.explicit:
        sizes = dict(s=cfg.s, alpha=cfg.alpha)
    bundle = split(g, cfg.p, cfg.q, cfg.seed, **sizes)
    bundle.write(args.out)
    _finish(args, cfg, args.out, dict(graph=args.graph), split=bundle.manifest())
    for name, part in bundle.parts().items():
        print(f"{name}_E={part.n_edges}")


def cmd_fit(args, cfg):
    from graphex.inference import fit

    g = load_edge_list(_require(args.graph, "graph"))
    state = fit(g, cfg.fit_config(), cfg.hyperparams())
    save_state(state, args.out)
    _finish_checkpoint(args, cfg, args.out, dict(graph=args.graph), state)
    print(f"iterations={state.iteration}\nconverged={str(state.converged).lower()}")


def _finish_checkpoint(args, cfg, out, inputs, state, **extra):
    # the checkpoint manifest keeps the state fields and gains the run record
    with open(os.path.join(out, "manifest.json")) as fh:
        ckpt = json.load(fh)
    _finish(args, cfg, out, inputs, **extra)
    with open(os.path.join(out, "manifest.json")) as fh:
        run = json.load(fh)
    ckpt.update(run)
    write_json(os.path.join(out, "manifest.json"), ckpt)


def cmd_fit_users(args, cfg):
    from graphex.inference import fit_test_users
    from graphex.split import test_sizes

    split_dir = _require(args.split, "split directory")
    with open(os.path.join(split_dir, "split_manifest.json")) as fh:
        smeta = json.load(fh)
    p = cfg.p if "p" in cfg.explicit else smeta["p"]
    q = cfg.q if "q" in cfg.explicit else smeta["q"]
    hf_path = os.path.join(split_dir, "holdoutfit.tsv")
    holdoutfit = load_edge_list(_require(hf_path, "holdoutfit"))
    trained, _ = load_state(_require(args.checkpoint, "checkpoint"))
    h = trained.hyper
    s_test, alpha_test = test_sizes(h.s, h.alpha, p, q)
    state = fit_test_users(holdoutfit, trained, cfg.fit_config(), s_holdout=s_test,
                           exposure_scale=1.0 - q, drop_unknown=True)
    os.makedirs(args.out, exist_ok=True)
    predictive = dict(s_out=s_test, alpha_out=alpha_test, item_keep=q)
    kept = os.path.join(split_dir, "kept_test_items.txt")
    if os.path.exists(kept):
        with open(kept) as fh, open(os.path.join(args.out, "keep_items.txt"), "w") as dst:
            dst.write(fh.read())
        predictive["item_keep"] = "keep_items.txt"
    save_state(state, args.out, extra=dict(predictive=predictive))
    _finish_checkpoint(args, cfg, args.out, dict(holdoutfit=hf_path, checkpoint=args.checkpoint),
                       state, p=p, q=q)
    print(f"iterations={state.iteration}\ns_test={s_test!r}\nalpha_test={alpha_test!r}")


def _predictive_args(directory, manifest):
    pred = manifest.get("predictive")
    h = manifest["hyper"]
    if pred is None:
        return h["s"], h["alpha"], None
    keep = pred["item_keep"]
    if isinstance(keep, str):
        with open(os.path.join(directory, keep)) as fh:
            keep = [line.rstrip("\n") for line in fh if line.strip()]
    return pred["s_out"], pred["alpha_out"], keep


def cmd_predict(args, cfg):
    from graphex.evaluate import PredictiveSummary, predictive_sample, summarize, write_summary_table

    columns = {}
    inputs = {}
    if args.test is not None:
        test = load_edge_list(_require(args.test, "test graph"))
        columns["test"] = summarize(test)
        inputs["test"] = args.test
    per_draw = {}
    for n, ckpt in enumerate(args.checkpoint):
        state, manifest = load_state(_require(ckpt, "checkpoint"))
        label = state.mode if state.mode not in columns else f"{state.mode}_{n}"
        s_out, a_out, keep = _predictive_args(ckpt, manifest)
        if state.mode == "dense":
            s_out = a_out = 0.0
        out_dir = os.path.join(args.out, label)
        os.makedirs(out_dir, exist_ok=True)
        sums = []
        for r in range(cfg.draws):
            draw = predictive_sample(state, s_out, a_out, seed=derive(cfg.seed, label, r),
                                     item_keep=keep)
            write_edge_list(draw, os.path.join(out_dir, f"draw_{r}.tsv"))
            sums.append(summarize(draw))
        per_draw[label] = [s.row() for s in sums]
        columns[label] = PredictiveSummary(
            *[float(np.mean([getattr(s, f) for s in sums]))
              for f in ("U", "I", "E", "sigma_hat_U", "sigma_hat_I")], {}, {})
        inputs[f"checkpoint_{label}"] = ckpt
    os.makedirs(args.out, exist_ok=True)
    write_summary_table(columns, os.path.join(args.out, "summary.csv"))
    _finish(args, cfg, args.out, inputs, draws=per_draw)
    for label, summ in columns.items():
        print(f"{label}_E={summ.E!r}")


def derive(seed, *tags):
    from graphex.rng import derive_seed
    return derive_seed(seed, *tags)


def cmd_evaluate(args, cfg):
    from graphex.evaluate import evaluate_recommendations, write_per_user_csv

    state, _ = load_state(_require(args.checkpoint, "checkpoint"))
    test = load_edge_list(_require(args.test, "test graph"))
    train = load_edge_list(_require(args.train, "train graph")) if args.train else None
    scores = evaluate_recommendations(state, test, train, m=cfg.m, unpopular_pct=cfg.unpopular_pct)
    os.makedirs(args.out, exist_ok=True)
    write_per_user_csv(scores, os.path.join(args.out, "scores.csv"))
    summary = dict(recall_at_m=scores.recall_at_m, recall_at_m_unpopular=scores.recall_at_m_unpopular,
                   ndcg=scores.ndcg, ndcg_unpopular=scores.ndcg_unpopular,
                   n_users=scores.n_users, n_users_unpopular=scores.n_users_unpopular)
    inputs = dict(checkpoint=args.checkpoint, test=args.test)
    if args.train:
        inputs["train"] = args.train
    _finish(args, cfg, args.out, inputs, scores=summary)
    for k, v in summary.items():
        print(f"{k}={v!r}")


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, keys=()):
    p.add_argument("--seed", type=int, required=True, help="master seed for every random draw")
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--threads", type=int, default=None, help="cap on native worker threads")
    p.add_argument("--out", required=True, help="output directory")
    for key in keys:
        default = getattr(RunConfig, key)
        kind = type(default) if default is not None else str
        if kind is bool:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           choices=["true", "false"])
        else:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphex", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a graph from the generative model")
    _add_common(p, MODEL_KEYS + ("max_expected_edges",))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-sparsity", help="edge density of vertex subsamples")
    p.add_argument("--graph", required=True)
    p.add_argument("--levels", help="comma-separated sampling levels in (0, 1]")
    p.add_argument("--flat-tol", type=float, default=0.15)
    _add_common(p, ("reps",))
    p.set_defaults(func=cmd_check_sparsity)

    p = sub.add_parser("estimate", help="estimate sigma and sizes of both sides")
    p.add_argument("--graph", required=True)
    _add_common(p, MODEL_KEYS + ("n_sims", "rounds"))
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("split", help="test-train split by user then item subsampling")
    p.add_argument("--graph", required=True)
    _add_common(p, ("p", "q", "s", "alpha"))
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit", help="variational fit of the factorization")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=["sparse", "dense"], default=None)
    _add_common(p, MODEL_KEYS + FIT_KEYS)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-users", help="fit test users against a frozen item side")
    p.add_argument("--split", required=True, help="directory written by `split`")
    p.add_argument("--checkpoint", required=True, help="checkpoint written by `fit`")
    _add_common(p, ("p", "q") + FIT_KEYS)
    p.set_defaults(func=cmd_fit_users)

    p = sub.add_parser("predict", help="posterior-predictive draws and summary table")
    p.add_argument("--checkpoint", required=True, action="append",
                   help="checkpoint directory; repeat for several models")
    p.add_argument("--test", help="held-out graph for the reference column")
    _add_common(p, ("draws",))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="recall@M and nDCG on a test graph")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--train", help="graph whose edges are excluded from each user's candidates")
    _add_common(p, ("m", "unpopular_pct"))
    p.set_defaults(func=cmd_evaluate)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    flags = {k: getattr(args, k) for k in RunConfig.keys() if getattr(args, k, None) is not None}
    cfg.update(flags, source="flags")
    if cfg.threads < 1:
        raise CLIError("--threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        with _limit_threads(cfg.threads):
            args.func(args, cfg)
    except Exception as exc:  # one machine-parseable line, nonzero exit
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
