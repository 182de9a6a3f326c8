import json
from pathlib import Path

import numpy as np
import pytest

import helpers
from fcca.config import RunConfig
from fcca.models import predict_batch, train_gb, train_rf
from fcca.pipeline import (
    InfeasibleError,
    class_confidence,
    fit_target,
    gtre_baseline,
    run_fcca,
    select_m,
    sweep_q,
)


def blobs_cfg(csv_path, out, **kw):
    kw.setdefault("dataset", str(csv_path))
    kw.setdefault("out", str(out))
    kw.setdefault("folds", 3)
    kw.setdefault("fold_limit", 2)
    kw.setdefault("n_estimators", 30)
    kw.setdefault("q", (0.0, 0.5))
    return RunConfig(**kw)


class TestSelectM:
    def test_band_and_correctness(self):
        ds = helpers.make_blobs(n=150, m=4, seed=0)
        model = train_gb(ds, n_estimators=40)
        picked = select_m(ds, model, 0.6, 0.95)
        labels, conf = class_confidence(model, ds.X)
        assert picked.size > 0
        mask = np.zeros(ds.n, dtype=bool)
        mask[picked] = True
        assert np.all(labels[picked] == ds.y[picked])
        assert np.all((conf[picked] >= 0.6) & (conf[picked] <= 0.95))
        # everything not picked violates the predicate
        out = ~mask
        bad = (labels != ds.y) | (conf < 0.6) | (conf > 0.95)
        assert np.all(bad[out])

    def test_rf_confidence_is_predicted_class_weight(self):
        ds = helpers.make_blobs(n=100, m=3, seed=1)
        model = train_rf(ds, n_trees=10, max_depth=2, seed=0)
        labels, conf = class_confidence(model, ds.X)
        _, probs, _ = predict_batch(model, ds.X)
        assert np.array_equal(conf, probs)
        assert np.all(conf >= 0.5)  # weight of the majority class

    def test_empty_band_raises_with_histogram(self):
        ds = helpers.make_blobs(n=100, m=3, seed=2)
        model = train_gb(ds, n_estimators=40)
        with pytest.raises(InfeasibleError, match="confidence histogram"):
            select_m(ds, model, 1.0, 1.0)


class TestFitTarget:
    @pytest.mark.parametrize("target,kind", [("gb", "gb"), ("rf", "rf"), ("linear", "linear")])
    def test_dispatch(self, target, kind):
        ds = helpers.make_blobs(n=80, m=3, seed=3)
        cfg = RunConfig(target=target, n_estimators=5, linear_epochs=20)
        model = fit_target(cfg, ds)
        assert getattr(model, "kind") == kind


@pytest.fixture(scope="module")
def run(blobs_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = blobs_cfg(blobs_csv, out)
    return cfg, run_fcca(cfg), out


class TestRunReport:
    def test_report_shape(self, run):
        cfg, report, _ = run
        assert report["schema"] == "fcca-report-v1"
        assert report["folds_run"] == 2
        assert len(report["rows"]) == 4  # 2 folds x 2 Q levels
        assert "out" not in report["config"]
        assert report["config"]["dataset"] == cfg.dataset
        assert set(report["aggregates"]) == {"q0", "q0.5"}

    def test_row_fields_and_inline_guarantees(self, run):
        _, report, _ = run
        for row in report["rows"]:
            assert row["ce_optimal"] + row["ce_infeasible"] == row["m_size"]
            assert row["opt_objective"] <= row["cart_objective"] + 1e-12
            assert row["cart_train_acc"] <= row["majority_ceiling"] + 1e-12
            assert row["opt_train_acc"] <= row["majority_ceiling"] + 1e-12
            assert 0.0 <= row["eta"] < 1.0
            assert 0.0 <= row["delta"] <= 0.5
            assert row["n_thresholds"] >= 1
            assert len(row["ce_hash"]) == 64

    def test_artifact_layout(self, run):
        _, _, out = run
        out = Path(out)
        for name in ("report.json", "report.csv", "timings.json"):
            assert (out / name).is_file()
        for fold in ("fold0", "fold1"):
            for name in ("model.json", "ce.csv", "heatmap.csv"):
                assert (out / fold / name).is_file()
            for qdir in ("q0", "q0.5"):
                for name in (
                    "thresholds.json",
                    "binarized_train.csv",
                    "binarized_test.csv",
                    "metrics.json",
                    "tree_cart.json",
                    "tree_optimal.json",
                    "trees.txt",
                ):
                    assert (out / fold / qdir / name).is_file(), f"{fold}/{qdir}/{name}"
        assert not (out / "fold2").exists()  # fold_limit honored

    def test_timings_separated_from_report(self, run):
        _, _, out = run
        report = json.loads((Path(out) / "report.json").read_text())
        assert "timings" not in report
        timings = json.loads((Path(out) / "timings.json").read_text())
        assert timings["total_s"] > 0
        assert set(timings["folds"]) == {"fold0", "fold1"}

    def test_aggregates_recompute(self, run):
        _, report, _ = run
        rows = [r for r in report["rows"] if r["q"] == 0.0]
        agg = report["aggregates"]["q0"]
        for key in ("eta", "delta", "opt_train_acc", "target_train_acc"):
            mean = sum(r[key] for r in rows) / len(rows)
            assert agg[key]["mean"] == pytest.approx(mean, abs=1e-12)
            assert agg[key]["n"] == len(rows)

    def test_test_binarized_with_train_thresholds(self, run):
        _, _, out = run
        tr = (Path(out) / "fold0" / "q0" / "binarized_train.csv").read_text().splitlines()
        te = (Path(out) / "fold0" / "q0" / "binarized_test.csv").read_text().splitlines()
        assert tr[0] == te[0]  # identical column provenance

    def test_determinism_across_out_dirs(self, blobs_csv, tmp_path):
        cfg1 = blobs_cfg(blobs_csv, tmp_path / "a", fold_limit=1, q=(0.0,))
        cfg2 = blobs_cfg(blobs_csv, tmp_path / "b", fold_limit=1, q=(0.0,))
        run_fcca(cfg1)
        run_fcca(cfg2)
        a = (tmp_path / "a" / "report.json").read_bytes()
        b = (tmp_path / "b" / "report.json").read_bytes()
        assert a == b


class TestEpsScope:
    def test_pool_scope_runs_and_is_reported(self, blobs_csv, tmp_path):
        cfg = blobs_cfg(blobs_csv, tmp_path / "o", fold_limit=1, q=(0.0,), eps_scope="pool")
        report = run_fcca(cfg)
        assert report["config"]["eps_scope"] == "pool"
        assert report["rows"][0]["ce_optimal"] > 0


class TestSweep:
    def test_monotone_table_and_csv(self, blobs_csv, tmp_path):
        cfg = blobs_cfg(blobs_csv, tmp_path / "s", fold_limit=2, q=(0.0, 0.3, 0.6, 0.9))
        table = sweep_q(cfg)
        assert [row["q"] for row in table] == [0.0, 0.3, 0.6, 0.9]
        for a, b in zip(table, table[1:]):
            assert b["eta"] >= a["eta"] - 1e-12
            assert b["delta"] >= a["delta"] - 1e-12
        csv_lines = (tmp_path / "s" / "sweep.csv").read_text().strip().splitlines()
        assert csv_lines[0].startswith("q,eta,delta,cart_train_acc")
        assert len(csv_lines) == 5


class TestGtre:
    def test_baseline_report(self, blobs_csv, tmp_path):
        cfg = blobs_cfg(blobs_csv, tmp_path / "g", fold_limit=1, q=(0.0,))
        report = gtre_baseline(cfg)
        assert report["baseline"] == "gtre"
        row = report["rows"][0]
        assert row["q"] is None
        assert row["n_thresholds"] >= 1
        assert row["opt_objective"] <= row["cart_objective"] + 1e-12
        gdir = tmp_path / "g" / "fold0" / "gtre"
        for name in ("thresholds.json", "binarized_train.csv", "metrics.json", "tree_cart.json", "tree_optimal.json"):
            assert (gdir / name).is_file()

    def test_pruning_reduces_threshold_count(self, blobs_csv, tmp_path):
        base = gtre_baseline(blobs_cfg(blobs_csv, tmp_path / "g1", fold_limit=1, q=(0.0,)))
        pruned = gtre_baseline(
            blobs_cfg(blobs_csv, tmp_path / "g2", fold_limit=1, q=(0.0,), gtre_prune=True, gtre_prune_tol=0.02)
        )
        n0 = base["rows"][0]["n_thresholds"]
        n1 = pruned["rows"][0]["n_thresholds"]
        assert 1 <= n1 <= n0
        # accuracy cannot collapse past the allowed tolerance at train time
        assert pruned["rows"][0]["cart_train_acc"] >= base["rows"][0]["cart_train_acc"] - 0.02 - 1e-9

    def test_overlap_metric_when_requested(self, blobs_csv, tmp_path):
        cfg = blobs_cfg(
            blobs_csv, tmp_path / "g3", fold_limit=1, q=(0.0,), gtre_compare_fcca=True
        )
        report = gtre_baseline(cfg)
        overlap = report["rows"][0]["overlap_with_fcca_q0"]
        assert 0.0 <= overlap <= 1.0


class TestInfeasiblePropagation:
    def test_impossible_band_raises(self, blobs_csv, tmp_path):
        cfg = blobs_cfg(blobs_csv, tmp_path / "x", fold_limit=1, q=(0.0,), p0=1.0, p1=1.0)
        with pytest.raises(InfeasibleError):
            run_fcca(cfg)
