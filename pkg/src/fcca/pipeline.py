"""End-to-end orchestration: fit the target model per fold, explain the
confident training points with exact counterfactuals, pool the induced
thresholds, then for each quantile level binarize train/test and fit the
surrogate trees, reporting accuracy and granularity metrics throughout.

Hygiene: feature resolutions, thresholds and quantile selections derive from
training rows only; fold-test and external rows are binarized with the
training-derived selection. report.json carries no timings so identical
config+seed reproduce it byte for byte; wall-clock numbers go to
timings.json next to it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time

import numpy as np

from .config import RunConfig, config_to_dict
from .counterfactual import CEProblem, export_batch_csv, solve_batch
from .dataset import Dataset, compute_feature_eps, load_csv, make_folds, scale_minmax
from .discretize import binarize, export_binarized_csv, majority_accuracy, metrics, metrics_to_json
from .models import accuracy, predict_batch, save_model, split_thresholds, train_gb, train_linear, train_rf
from .surrogate import evaluate, objective_of, render_text, train_cart, train_optimal, tree_to_json
from .thresholds import (
    ThresholdBag,
    extract_thresholds,
    heatmap_export,
    overlap_fraction,
    select_quantile,
    thresholds_to_json,
)

REPORT_SCHEMA = "fcca-report-v1"


class InfeasibleError(RuntimeError):
    """The pipeline cannot proceed (e.g. empty M set); CLI exit code 4."""


def fit_target(cfg: RunConfig, ds: Dataset):
    if cfg.target == "gb":
        return train_gb(ds, n_estimators=cfg.n_estimators, depth=cfg.target_depth, lr=cfg.learning_rate, seed=cfg.seed)
    if cfg.target == "rf":
        return train_rf(ds, n_trees=cfg.n_estimators, max_depth=cfg.target_depth, seed=cfg.seed, max_features=cfg.rf_max_features)
    return train_linear(ds, epochs=cfg.linear_epochs, reg=cfg.linear_reg, step=cfg.linear_step, seed=cfg.seed)


def class_confidence(model, X) -> tuple[np.ndarray, np.ndarray]:
    """(labels, confidence of the predicted class)."""
    labels, probs, _ = predict_batch(model, X)
    if getattr(model, "kind", "linear") == "rf":
        return labels, probs
    return labels, np.where(labels == 1, probs, 1.0 - probs)


def select_m(ds: Dataset, model, p0: float, p1: float) -> np.ndarray:
    """Indices of correctly classified points whose predicted-class
    probability lies in [p0, p1]."""
    labels, conf = class_confidence(model, ds.X)
    picked = np.flatnonzero((labels == ds.y) & (conf >= p0) & (conf <= p1))
    if picked.size == 0:
        counts, edges = np.histogram(conf, bins=10, range=(0.0, 1.0))
        hist = ", ".join(
            f"[{edges[i]:.1f},{edges[i + 1]:.1f}): {int(c)}" for i, c in enumerate(counts)
        )
        raise InfeasibleError(
            f"no training points fall in the probability band [{p0}, {p1}]; "
            f"confidence histogram: {hist}"
        )
    return picked


def _ce_problems(cfg: RunConfig, ds: Dataset, picked: np.ndarray, eps: np.ndarray) -> list[CEProblem]:
    return [
        CEProblem(
            x0=ds.X[i],
            y0=int(ds.y[i]),
            y_ce=1 - int(ds.y[i]),
            lambda0=cfg.lambda0,
            lambda1=cfg.lambda1,
            lambda2=cfg.lambda2,
            eps=eps,
            margin=cfg.margin,
        )
        for i in picked
    ]


def _ce_batch_hash(solutions) -> str:
    h = hashlib.sha256()
    for sol in solutions:
        h.update(sol.status.encode())
        if sol.is_optimal:
            h.update(np.asarray(sol.cost, dtype=np.float64).tobytes())
            h.update(np.asarray(sol.x_ce, dtype=np.float64).tobytes())
    return h.hexdigest()


def _lambda_reg(cfg: RunConfig, n_train: int) -> float:
    return cfg.lambda_reg if cfg.lambda_reg is not None else 10.0 / n_train


def _eval_block(tree, prefix: str, train, test, external) -> dict:
    """Accuracy/shape numbers for one surrogate on the three row groups."""
    out = {}
    ev_train = evaluate(tree, *train)
    out[f"{prefix}_train_acc"] = ev_train["accuracy"]
    out[f"{prefix}_test_acc"] = evaluate(tree, *test)["accuracy"] if test[1].size else None
    out[f"{prefix}_external_acc"] = (
        evaluate(tree, *external)["accuracy"] if external is not None and external[1].size else None
    )
    out[f"{prefix}_leaves"] = ev_train["n_leaves"]
    out[f"{prefix}_depth"] = ev_train["depth"]
    out[f"{prefix}_features_used"] = ev_train["n_distinct_features_used"]
    return out


def _q_dir(q: float) -> str:
    return f"q{q:g}"


def _fold_q_row(cfg: RunConfig, ds, fold_dir, bag, q, train_idx, test_idx, external_idx, y_tr) -> dict:
    """Binarize at level q, fit surrogates, evaluate, write artifacts."""
    try:
        tau = select_quantile(bag, q)
    except ValueError as exc:  # empty threshold bag
        raise InfeasibleError(str(exc)) from exc
    if not tau:
        raise InfeasibleError(f"quantile filter Q={q} kept no thresholds")
    X_tr = ds.X[train_idx]
    X_te = ds.X[test_idx]
    y_te = ds.y[test_idx]

    bds_tr = binarize(X_tr, y_tr, tau)
    bds_te = binarize(X_te, y_te, tau) if test_idx.size else None
    bds_ext = binarize(ds.X[external_idx], ds.y[external_idx], tau) if external_idx.size else None

    met = metrics(bds_tr)
    lam = _lambda_reg(cfg, train_idx.size)
    cart = train_cart(bds_tr.B, y_tr, max_depth=cfg.depth, columns=bds_tr.columns, kind="binary")
    opt = train_optimal(
        bds_tr.B, y_tr, max_depth=cfg.depth, lambda_reg=lam,
        columns=bds_tr.columns, max_columns=cfg.max_columns,
    )

    cart_obj = objective_of(cart, bds_tr.B, y_tr, lam)
    if opt.objective > cart_obj + 1e-12:
        raise AssertionError("optimal tree objective exceeds the greedy tree's")
    ceiling = majority_accuracy(bds_tr)
    for tree in (cart, opt):
        acc = float((tree.predict(bds_tr.B) == y_tr).mean())
        if acc > ceiling + 1e-12:
            raise AssertionError("surrogate training accuracy exceeds the 1 - delta ceiling")

    row = {
        "q": q,
        "n_thresholds": sum(len(v) for v in tau.values()),
        "thresholds_per_feature": {ds.feature_names[j]: len(tau[j]) for j in sorted(tau)},
        "eta": met.eta,
        "delta": met.delta,
        "majority_ceiling": ceiling,
        "cart_objective": cart_obj,
        "opt_objective": opt.objective,
    }
    row.update(
        _eval_block(
            cart, "cart", (bds_tr.B, y_tr),
            (bds_te.B if bds_te else np.empty((0, bds_tr.k)), y_te),
            None if bds_ext is None else (bds_ext.B, ds.y[external_idx]),
        )
    )
    row.update(
        _eval_block(
            opt, "opt", (bds_tr.B, y_tr),
            (bds_te.B if bds_te else np.empty((0, bds_tr.k)), y_te),
            None if bds_ext is None else (bds_ext.B, ds.y[external_idx]),
        )
    )

    qdir = os.path.join(fold_dir, _q_dir(q))
    os.makedirs(qdir, exist_ok=True)
    thresholds_to_json(bag, tau, ds.feature_names, os.path.join(qdir, "thresholds.json"), scaler=ds.scaler)
    export_binarized_csv(bds_tr, os.path.join(qdir, "binarized_train.csv"), ds.feature_names)
    if bds_te is not None:
        export_binarized_csv(bds_te, os.path.join(qdir, "binarized_test.csv"), ds.feature_names)
    metrics_to_json(bds_tr, os.path.join(qdir, "metrics.json"))
    tree_to_json(cart, os.path.join(qdir, "tree_cart.json"), ds.feature_names)
    tree_to_json(opt, os.path.join(qdir, "tree_optimal.json"), ds.feature_names)
    with open(os.path.join(qdir, "trees.txt"), "w", encoding="utf-8") as fh:
        fh.write("greedy tree\n")
        fh.write(render_text(cart, ds.feature_names) + "\n\n")
        fh.write("optimal tree\n")
        fh.write(render_text(opt, ds.feature_names) + "\n")
    return row


_AGG_SKIP = {"thresholds_per_feature", "ce_hash", "q", "fold"}


def _aggregate(rows: list[dict]) -> dict:
    """Mean and sample std of every numeric field over folds (None entries skipped)."""
    out = {}
    keys = [k for k in rows[0] if k not in _AGG_SKIP]
    for key in keys:
        vals = [r[key] for r in rows if r.get(key) is not None]
        if not vals or not all(isinstance(v, (int, float)) for v in vals):
            continue
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1) if len(vals) > 1 else 0.0
        out[key] = {"mean": mean, "std": var ** 0.5, "n": len(vals)}
    return out


def run_fcca(cfg: RunConfig, ds: Dataset | None = None) -> dict:
    """Full cross-validated pipeline; returns the report dict and writes
    report.json / report.csv / timings.json plus per-fold artifacts."""
    t_start = time.perf_counter()
    if ds is None:
        ds = scale_minmax(load_csv(cfg.dataset, cfg.label_column))
    plan = make_folds(ds, cfg.folds, cap=cfg.cap, seed=cfg.seed)
    n_folds = cfg.folds if cfg.fold_limit is None else min(cfg.fold_limit, cfg.folds)
    os.makedirs(cfg.out, exist_ok=True)

    rows: list[dict] = []
    timings: dict = {"folds": {}}
    external_idx = plan.external_test

    for f in range(n_folds):
        fold_dir = os.path.join(cfg.out, f"fold{f}")
        os.makedirs(fold_dir, exist_ok=True)
        train_idx = plan.train_idx(f)
        test_idx = plan.test_idx(f)
        ds_tr = ds.subset(train_idx)
        tm: dict = {}

        t0 = time.perf_counter()
        eps_rows = None if cfg.eps_scope == "train" else plan.pool_idx()
        eps = compute_feature_eps(ds if eps_rows is not None else ds_tr, eps_rows)
        model = fit_target(cfg, ds_tr)
        save_model(model, os.path.join(fold_dir, "model.json"))
        tm["fit_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        picked = select_m(ds_tr, model, cfg.p0, cfg.p1)
        problems = _ce_problems(cfg, ds_tr, picked, eps)
        solutions = solve_batch(model, problems)
        n_opt = sum(1 for s in solutions if s.is_optimal)
        export_batch_csv(
            os.path.join(fold_dir, "ce.csv"), solutions, problems, ds.feature_names,
            scaler=ds.scaler,
        )
        tm["ce_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        bag = extract_thresholds(ds_tr.X[picked], solutions, eps)
        heatmap_export(bag, os.path.join(fold_dir, "heatmap.csv"))
        tm["thresholds_s"] = time.perf_counter() - t0

        base = {
            "fold": f,
            "n_train": int(train_idx.size),
            "n_test": int(test_idx.size),
            "n_external": int(external_idx.size),
            "target_train_acc": accuracy(model, ds_tr.X, ds_tr.y),
            "target_test_acc": accuracy(model, ds.X[test_idx], ds.y[test_idx]) if test_idx.size else None,
            "m_size": int(picked.size),
            "ce_optimal": n_opt,
            "ce_infeasible": int(picked.size) - n_opt,
            "ce_hash": _ce_batch_hash(solutions),
        }
        raw_cart = train_cart(ds_tr.X, ds_tr.y, max_depth=cfg.depth, kind="continuous")
        base["rawcart_train_acc"] = float((raw_cart.predict(ds_tr.X) == ds_tr.y).mean())
        base["rawcart_test_acc"] = (
            float((raw_cart.predict(ds.X[test_idx]) == ds.y[test_idx]).mean()) if test_idx.size else None
        )

        tm["q"] = {}
        for q in cfg.q:
            t0 = time.perf_counter()
            row = dict(base)
            row.update(
                _fold_q_row(cfg, ds, fold_dir, bag, q, train_idx, test_idx, external_idx, ds_tr.y)
            )
            rows.append(row)
            tm["q"][_q_dir(q)] = time.perf_counter() - t0
        timings["folds"][f"fold{f}"] = tm

    aggregates = {}
    for q in cfg.q:
        q_rows = [r for r in rows if r["q"] == q]
        aggregates[_q_dir(q)] = _aggregate(q_rows)

    cfg_echo = config_to_dict(cfg)
    cfg_echo.pop("out", None)  # report identical wherever artifacts land
    report = {
        "schema": REPORT_SCHEMA,
        "config": cfg_echo,
        "n_rows_used": int(plan.pool_idx().size),
        "n_external": int(external_idx.size),
        "folds_run": n_folds,
        "rows": rows,
        "aggregates": aggregates,
    }
    _write_report(cfg.out, report)
    timings["total_s"] = time.perf_counter() - t_start
    with open(os.path.join(cfg.out, "timings.json"), "w", encoding="utf-8") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _write_report(out_dir, report: dict) -> None:
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows = report["rows"]
    if not rows:
        return
    cols = sorted({k for r in rows for k in r} - {"thresholds_per_feature"})
    with open(os.path.join(out_dir, "report.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r.get(c) is None else r.get(c) for c in cols])


def sweep_q(cfg: RunConfig, ds: Dataset | None = None) -> list[dict]:
    """Granularity sweep: one pipeline pass, thresholds pooled once per fold
    and re-filtered per Q. Emits sweep.csv rows (q, eta, delta, accuracies).
    """
    report = run_fcca(cfg, ds)
    by_fold: dict[int, set[str]] = {}
    for row in report["rows"]:
        by_fold.setdefault(row["fold"], set()).add(row["ce_hash"])
    for f, hashes in by_fold.items():
        if len(hashes) != 1:
            raise AssertionError(f"fold {f}: counterfactual batch differed across Q values")
    table = []
    for q in cfg.q:
        agg = report["aggregates"][_q_dir(q)]
        table.append(
            {
                "q": q,
                "eta": agg["eta"]["mean"],
                "delta": agg["delta"]["mean"],
                "cart_train_acc": agg["cart_train_acc"]["mean"],
                "cart_test_acc": agg.get("cart_test_acc", {}).get("mean"),
                "opt_train_acc": agg["opt_train_acc"]["mean"],
                "opt_test_acc": agg.get("opt_test_acc", {}).get("mean"),
            }
        )
    path = os.path.join(cfg.out, "sweep.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        cols = ["q", "eta", "delta", "cart_train_acc", "cart_test_acc", "opt_train_acc", "opt_test_acc"]
        w.writerow(cols)
        for row in table:
            w.writerow(["" if row[c] is None else row[c] for c in cols])
    return table


def _gtre_thresholds(model, prune: bool, tol: float, B_builder) -> dict[int, list[float]]:
    """All distinct split thresholds of the fitted ensemble; optionally prune
    lowest-gain thresholds while surrogate training accuracy holds up."""
    splits = split_thresholds(model)
    entries = [(g, j, t) for j, pairs in splits.items() for t, g in pairs]
    if not entries:
        raise InfeasibleError("target model has no splits to guess thresholds from")

    def as_tau(active) -> dict[int, list[float]]:
        tau: dict[int, list[float]] = {}
        for _g, j, t in active:
            tau.setdefault(j, []).append(t)
        return {j: sorted(v) for j, v in tau.items()}

    entries.sort(key=lambda e: (e[0], e[1], e[2]))  # lowest gain first
    active = list(entries)
    if not prune:
        return as_tau(active)
    base_acc = B_builder(as_tau(active))
    while len(active) > 1:
        candidate = active[1:]
        acc = B_builder(as_tau(candidate))
        if base_acc - acc > tol:
            break
        active = candidate
    return as_tau(active)


def gtre_baseline(cfg: RunConfig, ds: Dataset | None = None) -> dict:
    """Threshold-guessing baseline: take the target ensemble's own split
    thresholds instead of counterfactual-derived ones, then binarize and fit
    the same surrogates. Reports the same row schema (q is null)."""
    t_start = time.perf_counter()
    if ds is None:
        ds = scale_minmax(load_csv(cfg.dataset, cfg.label_column))
    plan = make_folds(ds, cfg.folds, cap=cfg.cap, seed=cfg.seed)
    n_folds = cfg.folds if cfg.fold_limit is None else min(cfg.fold_limit, cfg.folds)
    os.makedirs(cfg.out, exist_ok=True)
    external_idx = plan.external_test

    rows = []
    timings: dict = {"folds": {}}
    for f in range(n_folds):
        fold_dir = os.path.join(cfg.out, f"fold{f}")
        os.makedirs(fold_dir, exist_ok=True)
        train_idx = plan.train_idx(f)
        test_idx = plan.test_idx(f)
        ds_tr = ds.subset(train_idx)
        t0 = time.perf_counter()
        model = fit_target(cfg, ds_tr)
        save_model(model, os.path.join(fold_dir, "model.json"))

        def cart_train_acc(tau) -> float:
            bds = binarize(ds_tr.X, ds_tr.y, tau)
            tree = train_cart(bds.B, ds_tr.y, max_depth=cfg.depth, columns=bds.columns, kind="binary")
            return float((tree.predict(bds.B) == ds_tr.y).mean())

        tau = _gtre_thresholds(model, cfg.gtre_prune, cfg.gtre_prune_tol, cart_train_acc)

        bds_tr = binarize(ds_tr.X, ds_tr.y, tau)
        bds_te = binarize(ds.X[test_idx], ds.y[test_idx], tau) if test_idx.size else None
        bds_ext = binarize(ds.X[external_idx], ds.y[external_idx], tau) if external_idx.size else None
        met = metrics(bds_tr)
        lam = _lambda_reg(cfg, train_idx.size)
        cart = train_cart(bds_tr.B, ds_tr.y, max_depth=cfg.depth, columns=bds_tr.columns, kind="binary")
        opt = train_optimal(
            bds_tr.B, ds_tr.y, max_depth=cfg.depth, lambda_reg=lam,
            columns=bds_tr.columns, max_columns=cfg.max_columns,
        )
        row = {
            "fold": f,
            "q": None,
            "n_train": int(train_idx.size),
            "n_test": int(test_idx.size),
            "n_external": int(external_idx.size),
            "target_train_acc": accuracy(model, ds_tr.X, ds_tr.y),
            "target_test_acc": accuracy(model, ds.X[test_idx], ds.y[test_idx]) if test_idx.size else None,
            "n_thresholds": sum(len(v) for v in tau.values()),
            "thresholds_per_feature": {ds.feature_names[j]: len(tau[j]) for j in sorted(tau)},
            "eta": met.eta,
            "delta": met.delta,
            "majority_ceiling": majority_accuracy(bds_tr),
            "cart_objective": objective_of(cart, bds_tr.B, ds_tr.y, lam),
            "opt_objective": opt.objective,
        }
        row.update(
            _eval_block(
                cart, "cart", (bds_tr.B, ds_tr.y),
                (bds_te.B if bds_te else np.empty((0, bds_tr.k)), ds.y[test_idx]),
                None if bds_ext is None else (bds_ext.B, ds.y[external_idx]),
            )
        )
        row.update(
            _eval_block(
                opt, "opt", (bds_tr.B, ds_tr.y),
                (bds_te.B if bds_te else np.empty((0, bds_tr.k)), ds.y[test_idx]),
                None if bds_ext is None else (bds_ext.B, ds.y[external_idx]),
            )
        )

        if cfg.gtre_compare_fcca:
            eps = compute_feature_eps(ds_tr)
            picked = select_m(ds_tr, model, cfg.p0, cfg.p1)
            solutions = solve_batch(model, _ce_problems(cfg, ds_tr, picked, eps))
            bag = extract_thresholds(ds_tr.X[picked], solutions, eps)
            fcca_tau = select_quantile(bag, 0.0)
            row["overlap_with_fcca_q0"] = overlap_fraction(tau, fcca_tau)

        gdir = os.path.join(fold_dir, "gtre")
        os.makedirs(gdir, exist_ok=True)
        bag_like = ThresholdBag(m=ds.m)
        for j, ts in tau.items():
            for t in ts:
                bag_like.add(j, t)
        thresholds_to_json(bag_like, tau, ds.feature_names, os.path.join(gdir, "thresholds.json"), scaler=ds.scaler)
        export_binarized_csv(bds_tr, os.path.join(gdir, "binarized_train.csv"), ds.feature_names)
        metrics_to_json(bds_tr, os.path.join(gdir, "metrics.json"))
        tree_to_json(cart, os.path.join(gdir, "tree_cart.json"), ds.feature_names)
        tree_to_json(opt, os.path.join(gdir, "tree_optimal.json"), ds.feature_names)
        rows.append(row)
        timings["folds"][f"fold{f}"] = {"total_s": time.perf_counter() - t0}

    cfg_echo = config_to_dict(cfg)
    cfg_echo.pop("out", None)
    report = {
        "schema": REPORT_SCHEMA,
        "config": cfg_echo,
        "baseline": "gtre",
        "n_rows_used": int(plan.pool_idx().size),
        "n_external": int(external_idx.size),
        "folds_run": n_folds,
        "rows": rows,
        "aggregates": {"gtre": _aggregate(rows)},
    }
    _write_report(cfg.out, report)
    timings["total_s"] = time.perf_counter() - t_start
    with open(os.path.join(cfg.out, "timings.json"), "w", encoding="utf-8") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
