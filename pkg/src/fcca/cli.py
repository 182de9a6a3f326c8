"""Command-line interface.

Stage subcommands (fit-target, counterfactuals, thresholds, discretize,
train-tree) share one working directory given by --out: each stage reads the
artifacts its predecessor wrote there. `run`, `sweep-q` and `gtre` execute
the full cross-validated pipeline in one go.

Exit codes: 0 success, 2 bad configuration, 3 bad data, 4 infeasible
pipeline state (empty M set, no thresholds).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, build_config, with_updates
from .counterfactual import CESolution, export_batch_csv
from .dataset import DataError, compute_feature_eps, load_csv, scale_minmax
from .discretize import binarize, export_binarized_csv, metrics_to_json
from .models import accuracy, load_model, save_model
from .pipeline import (
    InfeasibleError,
    _ce_problems,
    fit_target,
    gtre_baseline,
    run_fcca,
    select_m,
    sweep_q,
)
from .surrogate import evaluate, train_cart, train_optimal, tree_to_json
from .thresholds import ThresholdBag, extract_thresholds, heatmap_export, select_quantile, thresholds_to_json


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI-style config file; flags override it")
    p.add_argument("--dataset", help="CSV dataset path")
    p.add_argument("--q", help="quantile level(s), comma-separated for sweeps")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default fcca_out)")
    p.add_argument("--target", choices=["gb", "rf", "linear"])
    p.add_argument("--p0", type=float)
    p.add_argument("--p1", type=float)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--fold-limit", dest="fold_limit", type=int)
    p.add_argument("--n-estimators", dest="n_estimators", type=int)
    p.add_argument("--target-depth", dest="target_depth", type=int)
    p.add_argument("--lambda-reg", dest="lambda_reg", type=float)
    p.add_argument("--cap", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--gtre-prune", dest="gtre_prune", action="store_const", const=True)
    p.add_argument("--gtre-compare-fcca", dest="gtre_compare_fcca", action="store_const", const=True)


_OVERRIDE_KEYS = (
    "dataset", "q", "seed", "out", "target", "p0", "p1",
    "lambda0", "lambda1", "lambda2", "depth", "folds", "label_column",
    "fold_limit", "n_estimators", "target_depth", "lambda_reg", "cap",
    "margin", "gtre_prune", "gtre_compare_fcca",
)


def _config_from(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    return build_config(args.config, overrides)


def _need_dataset(cfg):
    if not cfg.dataset:
        raise ConfigError("a dataset path is required (--dataset or config file)")
    return scale_minmax(load_csv(cfg.dataset, cfg.label_column))


def _state_path(cfg) -> str:
    return os.path.join(cfg.out, "ce_state.json")


def cmd_fit_target(args) -> int:
    cfg = _config_from(args)
    ds = _need_dataset(cfg)
    model = fit_target(cfg, ds)
    os.makedirs(cfg.out, exist_ok=True)
    save_model(model, os.path.join(cfg.out, "model.json"))
    print(f"fitted {cfg.target} target on {ds.n} rows; training accuracy {accuracy(model, ds.X, ds.y):.4f}")
    print(f"wrote {os.path.join(cfg.out, 'model.json')}")
    return 0


def cmd_counterfactuals(args) -> int:
    cfg = _config_from(args)
    ds = _need_dataset(cfg)
    model = load_model(os.path.join(cfg.out, "model.json"))
    eps = compute_feature_eps(ds)
    picked = select_m(ds, model, cfg.p0, cfg.p1)
    problems = _ce_problems(cfg, ds, picked, eps)
    from .counterfactual import solve_batch

    solutions = solve_batch(model, problems)
    n_opt = sum(1 for s in solutions if s.is_optimal)
    export_batch_csv(os.path.join(cfg.out, "ce.csv"), solutions, problems, ds.feature_names, scaler=ds.scaler)
    state = {
        "eps": eps.tolist(),
        "x0": ds.X[picked].tolist(),
        "solutions": [
            {
                "status": s.status,
                "cost": s.cost,
                "x_ce": None if s.x_ce is None else [float(v) for v in s.x_ce],
                "changed": list(s.changed),
            }
            for s in solutions
        ],
    }
    with open(_state_path(cfg), "w", encoding="utf-8") as fh:
        json.dump(state, fh)
    print(f"|M| = {picked.size}; optimal {n_opt}, infeasible {len(solutions) - n_opt}")
    print(f"wrote {os.path.join(cfg.out, 'ce.csv')}")
    return 0


def cmd_thresholds(args) -> int:
    cfg = _config_from(args)
    ds = _need_dataset(cfg)
    try:
        with open(_state_path(cfg), encoding="utf-8") as fh:
            state = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"missing counterfactual stage output: {exc}") from exc
    solutions = [
        CESolution(
            status=s["status"],
            x_ce=None if s["x_ce"] is None else np.asarray(s["x_ce"]),
            cost=s["cost"],
            changed=tuple(s["changed"]),
        )
        for s in state["solutions"]
    ]
    bag = extract_thresholds(np.asarray(state["x0"]), solutions, np.asarray(state["eps"]))
    q = cfg.q[0]
    try:
        tau = select_quantile(bag, q)
    except ValueError as exc:
        raise InfeasibleError(str(exc)) from exc
    if not tau:
        raise InfeasibleError(f"quantile filter Q={q} kept no thresholds")
    thresholds_to_json(bag, tau, ds.feature_names, os.path.join(cfg.out, "thresholds.json"), scaler=ds.scaler)
    heatmap_export(bag, os.path.join(cfg.out, "heatmap.csv"))
    n_sel = sum(len(v) for v in tau.values())
    print(f"extracted {bag.n_distinct()} distinct thresholds from {bag.n_couples} couples; kept {n_sel} at Q={q:g}")
    print(f"wrote {os.path.join(cfg.out, 'thresholds.json')}")
    return 0


def _load_tau(cfg, ds) -> dict[int, list[float]]:
    path = os.path.join(cfg.out, "thresholds.json")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"missing thresholds stage output: {exc}") from exc
    name_to_idx = {name: j for j, name in enumerate(ds.feature_names)}
    tau: dict[int, list[float]] = {}
    for name, entries in doc.items():
        j = name_to_idx.get(name)
        if j is None:
            raise DataError(f"thresholds.json names unknown feature {name!r}")
        tau[j] = sorted(e["t_scaled"] for e in entries)
    return tau


def cmd_discretize(args) -> int:
    cfg = _config_from(args)
    ds = _need_dataset(cfg)
    tau = _load_tau(cfg, ds)
    try:
        bds = binarize(ds.X, ds.y, tau)
    except ValueError as exc:
        raise InfeasibleError(str(exc)) from exc
    export_binarized_csv(bds, os.path.join(cfg.out, "binarized.csv"), ds.feature_names)
    metrics_to_json(bds, os.path.join(cfg.out, "metrics.json"))
    from .discretize import metrics as _metrics

    met = _metrics(bds)
    print(f"binarized {bds.n} rows into {bds.k} columns; eta={met.eta:.4f} delta={met.delta:.4f}")
    print(f"wrote {os.path.join(cfg.out, 'binarized.csv')}")
    return 0


def cmd_train_tree(args) -> int:
    cfg = _config_from(args)
    ds = _need_dataset(cfg)
    tau = _load_tau(cfg, ds)
    try:
        bds = binarize(ds.X, ds.y, tau)
    except ValueError as exc:
        raise InfeasibleError(str(exc)) from exc
    lam = cfg.lambda_reg if cfg.lambda_reg is not None else 10.0 / bds.n
    cart = train_cart(bds.B, bds.y, max_depth=cfg.depth, columns=bds.columns, kind="binary")
    opt = train_optimal(bds.B, bds.y, max_depth=cfg.depth, lambda_reg=lam, columns=bds.columns, max_columns=cfg.max_columns)
    tree_to_json(cart, os.path.join(cfg.out, "tree_cart.json"), ds.feature_names)
    tree_to_json(opt, os.path.join(cfg.out, "tree_optimal.json"), ds.feature_names)
    for name, tree in (("greedy", cart), ("optimal", opt)):
        ev = evaluate(tree, bds.B, bds.y)
        print(
            f"{name}: accuracy {ev['accuracy']:.4f}, leaves {ev['n_leaves']}, "
            f"depth {ev['depth']}, features {ev['n_distinct_features_used']}"
        )
    print(f"wrote {os.path.join(cfg.out, 'tree_cart.json')} and tree_optimal.json")
    return 0


def cmd_run(args) -> int:
    cfg = _config_from(args)
    if not cfg.dataset:
        raise ConfigError("a dataset path is required (--dataset or config file)")
    report = run_fcca(cfg)
    for q, agg in report["aggregates"].items():
        line = f"{q}: eta={agg['eta']['mean']:.4f} delta={agg['delta']['mean']:.4f}"
        if "opt_test_acc" in agg:
            line += f" opt_test_acc={agg['opt_test_acc']['mean']:.4f}"
        print(line)
    print(f"wrote {os.path.join(cfg.out, 'report.json')}")
    return 0


def cmd_sweep_q(args) -> int:
    cfg = _config_from(args)
    if not cfg.dataset:
        raise ConfigError("a dataset path is required (--dataset or config file)")
    if args.q is None and cfg.q == (0.0,):
        # no explicit grid anywhere: default to the standard ten levels
        cfg = with_updates(cfg, q=tuple(i / 10 for i in range(10)))
    table = sweep_q(cfg)
    for row in table:
        print(
            f"Q={row['q']:g}: eta={row['eta']:.4f} delta={row['delta']:.4f} "
            f"opt_train={row['opt_train_acc']:.4f}"
        )
    print(f"wrote {os.path.join(cfg.out, 'sweep.csv')}")
    return 0


def cmd_gtre(args) -> int:
    cfg = _config_from(args)
    if not cfg.dataset:
        raise ConfigError("a dataset path is required (--dataset or config file)")
    report = gtre_baseline(cfg)
    agg = report["aggregates"]["gtre"]
    print(
        f"gtre: thresholds={agg['n_thresholds']['mean']:.1f} eta={agg['eta']['mean']:.4f} "
        f"delta={agg['delta']['mean']:.4f}"
    )
    print(f"wrote {os.path.join(cfg.out, 'report.json')}")
    return 0


_COMMANDS = {
    "fit-target": cmd_fit_target,
    "counterfactuals": cmd_counterfactuals,
    "thresholds": cmd_thresholds,
    "discretize": cmd_discretize,
    "train-tree": cmd_train_tree,
    "run": cmd_run,
    "sweep-q": cmd_sweep_q,
    "gtre": cmd_gtre,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcca",
        description="Counterfactual-guided binarization and compact surrogate trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit-target": "fit the target model and save it",
        "counterfactuals": "solve counterfactuals for the confident training points",
        "thresholds": "pool thresholds and apply the quantile filter",
        "discretize": "binarize the dataset against selected thresholds",
        "train-tree": "fit greedy and optimal surrogate trees",
        "run": "full cross-validated pipeline",
        "sweep-q": "granularity sweep over a Q grid",
        "gtre": "threshold-guessing baseline from the ensemble's own splits",
    }
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=helps[name])
        _add_common(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
