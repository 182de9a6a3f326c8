import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from fcca.counterfactual import (
    CEProblem,
    brute_force_oracle,
    build_candidates,
    ensemble_margin,
    export_batch_csv,
    solve_batch,
    solve_ce,
    solve_ensemble_ce,
    solve_linear_ce,
)
from fcca.models import Ensemble, LinearModel, Tree, predict


def one_stump_model():
    """F0=0, lr=1, single stump at 0.5 with leaves -2 / +2."""
    t = Tree()
    root = t.add_split(0, 0.5, 1.0)
    t.left[root] = t.add_leaf(-2.0)
    t.right[root] = t.add_leaf(2.0)
    return Ensemble(kind="gb", trees=[t], lr=1.0, init_raw=0.0, n_features=1)


def problem(x0, y0, eps=0.01, **kw):
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    kw.setdefault("lambda0", 0.1)
    kw.setdefault("lambda1", 1.0)
    kw.setdefault("lambda2", 0.0)
    return CEProblem(x0=x0, y0=y0, y_ce=1 - y0, eps=np.full(x0.size, eps), **kw)


class TestProblemValidation:
    def test_eps_is_required(self):
        with pytest.raises(ValueError, match="eps"):
            CEProblem(x0=np.array([0.5]), y0=0, y_ce=1)

    def test_target_label_must_differ(self):
        with pytest.raises(ValueError, match="differ"):
            CEProblem(x0=np.array([0.5]), y0=1, y_ce=1, eps=np.array([0.01]))

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            problem(0.5, 0, lambda1=-1.0)

    def test_margin_must_be_positive(self):
        with pytest.raises(ValueError, match="margin"):
            problem(0.5, 0, margin=0.0)

    def test_x0_must_lie_in_box(self):
        with pytest.raises(ValueError, match="box"):
            problem(1.5, 0)

    def test_default_box_is_unit_cube(self):
        p = problem(0.5, 0)
        assert np.array_equal(p.box, np.array([[0.0, 1.0]]))


class TestPinnedStumpExample:
    def test_candidate_grid(self):
        model = one_stump_model()
        grid = build_candidates(model, problem(0.3, 0))
        assert np.allclose(grid.values[0], [0.3, 0.49, 0.51])
        assert grid.costs[0][grid.x0_index[0]] == 0.0
        assert list(grid.changed[0]) == [False, True, True]

    def test_flip_up(self):
        sol = solve_ensemble_ce(one_stump_model(), problem(0.3, 0))
        assert sol.is_optimal
        assert sol.x_ce[0] == pytest.approx(0.51, abs=1e-12)
        assert sol.cost == pytest.approx(0.31, abs=1e-12)
        assert sol.changed == (0,)

    def test_flip_down_by_symmetry(self):
        sol = solve_ensemble_ce(one_stump_model(), problem(0.7, 1))
        assert sol.x_ce[0] == pytest.approx(0.49, abs=1e-12)
        assert sol.cost == pytest.approx(0.31, abs=1e-12)

    def test_oracle_agrees_on_example(self):
        model = one_stump_model()
        prob = problem(0.3, 0)
        assert brute_force_oracle(model, prob).cost == pytest.approx(0.31, abs=1e-12)

    def test_unreachable_margin_is_infeasible(self):
        t = Tree()
        root = t.add_split(0, 0.5, 1.0)
        t.left[root] = t.add_leaf(-1.0)
        t.right[root] = t.add_leaf(-3.0)  # every leaf keeps class 0
        model = Ensemble(kind="gb", trees=[t], lr=1.0, init_raw=0.0, n_features=1)
        prob = problem(0.3, 0)
        assert solve_ensemble_ce(model, prob).status == "infeasible"
        assert brute_force_oracle(model, prob).status == "infeasible"

    def test_y0_mismatch_is_an_error(self):
        with pytest.raises(ValueError, match="prediction"):
            solve_ensemble_ce(one_stump_model(), problem(0.3, 1))


class TestPinnedLinearExample:
    def test_flip_to_positive(self):
        model = LinearModel(w=np.array([2.0, 0.0]), b=-1.0, n_features=2)
        sol = solve_linear_ce(model, problem([0.1, 0.9], 0))
        assert sol.is_optimal
        assert np.allclose(sol.x_ce, [1.0, 0.9], atol=1e-12)
        assert sol.cost == pytest.approx(1.0, abs=1e-9)

    def test_box_makes_flip_infeasible(self):
        model = LinearModel(w=np.array([2.0, 0.0]), b=0.0, n_features=2)
        sol = solve_linear_ce(model, problem([0.1, 0.9], 1))
        assert sol.status == "infeasible"

    def test_immutable_weight_carrier_is_infeasible(self):
        model = LinearModel(w=np.array([2.0, 0.0]), b=-1.0, n_features=2)
        sol = solve_linear_ce(model, problem([0.1, 0.9], 0, immutable={0}))
        assert sol.status == "infeasible"

    def test_quadratic_term_spreads_the_move(self):
        # with lambda2 >> lambda1 and two equal weights, splitting the move
        # halves the quadratic cost versus pushing one feature alone
        model = LinearModel(w=np.array([1.0, 1.0]), b=-1.0, n_features=2)
        prob = problem([0.2, 0.2], 0, lambda0=0.0, lambda1=0.0, lambda2=1.0)
        sol = solve_linear_ce(model, prob)
        assert sol.is_optimal
        need = 1.6  # x1 + x2 must reach 2.0 from 0.4
        assert sol.x_ce.sum() == pytest.approx(0.4 + need, abs=1e-9)
        d = sol.x_ce - prob.x0
        assert d[0] == pytest.approx(d[1], abs=1e-6)
        oracle = brute_force_oracle(model, prob, grid_resolution=1e-3)
        assert sol.cost <= oracle.cost + 1e-6


class TestCandidateGrid:
    def test_out_of_box_shifts_are_dropped(self):
        t = Tree()
        root = t.add_split(0, 0.005, 1.0)
        t.left[root] = t.add_leaf(-1.0)
        t.right[root] = t.add_leaf(1.0)
        model = Ensemble(kind="gb", trees=[t], lr=1.0, init_raw=0.0, n_features=1)
        grid = build_candidates(model, problem(0.4, 1))
        assert np.allclose(grid.values[0], [0.015, 0.4])  # 0.005 - 0.01 < 0 dropped

    def test_immutable_feature_keeps_only_x0(self):
        model = one_stump_model()
        grid = build_candidates(model, problem(0.3, 0, immutable={0}))
        assert np.allclose(grid.values[0], [0.3])

    def test_duplicate_thresholds_collapse(self):
        trees = []
        for _ in range(3):  # same split three times
            t = Tree()
            root = t.add_split(0, 0.5, 1.0)
            t.left[root] = t.add_leaf(-1.0)
            t.right[root] = t.add_leaf(1.0)
            trees.append(t)
        model = Ensemble(kind="gb", trees=trees, lr=0.5, init_raw=0.0, n_features=1)
        grid = build_candidates(model, problem(0.3, 0))
        assert grid.values[0].size == 3


def solve_and_check(model, prob):
    sol = solve_ce(model, prob)
    oracle = brute_force_oracle(model, prob)
    assert sol.status == oracle.status
    if sol.is_optimal:
        helpers.assert_valid_ce(model, prob, sol)
        assert sol.cost == pytest.approx(oracle.cost, abs=1e-9)
        assert np.any(sol.x_ce != prob.x0)  # x0 itself is never returned
        assert not (set(sol.changed) & prob.immutable)
    return sol


class TestOracleAgreement:
    def test_random_stump_ensembles(self):
        statuses = set()
        for seed in range(60):
            rng = np.random.default_rng(1000 + seed)
            model = helpers.random_stump_gb(rng, m=int(rng.integers(2, 4)), n_trees=int(rng.integers(2, 11)))
            sol = solve_and_check(model, helpers.random_ce_problem(model, rng))
            statuses.add(sol.status)
        assert statuses == {"optimal", "infeasible"}

    def test_random_deep_gb(self):
        for seed in range(20):
            rng = np.random.default_rng(2000 + seed)
            model = helpers.random_deep_gb(rng, m=3, n_trees=3, depth=2)
            solve_and_check(model, helpers.random_ce_problem(model, rng))

    def test_random_rf(self):
        for seed in range(15):
            rng = np.random.default_rng(3000 + seed)
            model = helpers.random_rf(rng, m=3, n_trees=3, depth=2)
            solve_and_check(model, helpers.random_ce_problem(model, rng))

    def test_immutable_features_respected(self):
        for seed in range(12):
            rng = np.random.default_rng(4000 + seed)
            model = helpers.random_stump_gb(rng, m=3, n_trees=6)
            prob = helpers.random_ce_problem(model, rng, n_immutable=1)
            solve_and_check(model, prob)

    def test_quadratic_cost_ensembles(self):
        for seed in range(15):
            rng = np.random.default_rng(5000 + seed)
            model = helpers.random_stump_gb(rng, m=3, n_trees=8)
            prob = helpers.random_ce_problem(
                model, rng, lambda1=(0.2, 0.6), lambda2=(0.05, 0.15)
            )
            solve_and_check(model, prob)


class TestDeterminism:
    def test_repeat_solves_are_bit_identical(self):
        rng = np.random.default_rng(42)
        model = helpers.random_stump_gb(rng, m=3, n_trees=8)
        prob = helpers.random_ce_problem(model, rng)
        a = solve_ce(model, prob)
        b = solve_ce(model, prob)
        assert a.status == b.status
        if a.is_optimal:
            assert np.array_equal(a.x_ce, b.x_ce)
            assert a.cost == b.cost

    def test_tree_order_does_not_matter(self):
        rng = np.random.default_rng(43)
        model = helpers.random_stump_gb(rng, m=3, n_trees=8)
        prob = helpers.random_ce_problem(model, rng)
        shuffled = Ensemble(
            kind="gb",
            trees=list(reversed(model.trees)),
            lr=model.lr,
            init_raw=model.init_raw,
            n_features=model.n_features,
        )
        a, b = solve_ce(model, prob), solve_ce(shuffled, prob)
        assert a.status == b.status
        if a.is_optimal:
            assert np.array_equal(a.x_ce, b.x_ce)


class TestLambda0Monotonicity:
    def lattice_stumps(self, rng, m, n_trees):
        """Stumps whose thresholds sit on a 0.1 lattice: pairwise gaps far
        exceed 2*eps, so every useful move is a significant one and the
        changed-count exchange argument applies exactly."""
        trees = []
        for _ in range(n_trees):
            t = Tree()
            root = t.add_split(int(rng.integers(m)), float(rng.integers(1, 10)) / 10.0, 1.0)
            t.left[root] = t.add_leaf(float(rng.normal(0.0, 1.0)))
            t.right[root] = t.add_leaf(float(rng.normal(0.0, 1.0)))
            trees.append(t)
        return Ensemble(kind="gb", trees=trees, lr=0.3, init_raw=0.0, n_features=m)

    def test_changed_count_never_grows_with_lambda0(self):
        checked = 0
        for seed in range(25):
            rng = np.random.default_rng(6000 + seed)
            model = self.lattice_stumps(rng, m=4, n_trees=10)
            x0 = rng.random(4)
            y0 = predict(model, x0).label
            eps = np.full(4, 0.01)
            prev_changed, prev_cost = None, None
            for lam0 in (0.01, 0.05, 0.1, 0.3, 0.6):
                prob = CEProblem(x0=x0, y0=y0, y_ce=1 - y0, lambda0=lam0, lambda1=1.0, lambda2=0.0, eps=eps)
                sol = solve_ensemble_ce(model, prob)
                if not sol.is_optimal:
                    break
                if prev_changed is not None:
                    assert len(sol.changed) <= prev_changed
                    assert sol.cost >= prev_cost - 1e-12
                prev_changed, prev_cost = len(sol.changed), sol.cost
                checked += 1
        assert checked >= 40  # the instances must mostly be feasible


class TestBatch:
    def test_batch_preserves_order_and_exports_csv(self, tmp_path):
        rng = np.random.default_rng(7)
        model = helpers.random_stump_gb(rng, m=3, n_trees=6)
        probs = [helpers.random_ce_problem(model, rng) for _ in range(8)]
        sols = solve_batch(model, probs)
        assert len(sols) == 8
        for p, s in zip(probs, sols):
            again = solve_ce(model, p)
            assert again.status == s.status
        path = tmp_path / "ce.csv"
        export_batch_csv(path, sols, probs, feature_names=("a", "b", "c"))
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 9
        header = lines[0].split(",")
        assert header[:3] == ["index", "status", "cost"]
        for p, s, line in zip(probs, sols, lines[1:]):
            cells = line.split(",")
            if s.is_optimal:
                # repr round-trip keeps the exact float
                assert float(cells[2]) == s.cost

    def test_margin_slack_holds_on_fold0_batch(self, iono_fold0, iono_ce):
        assert len(iono_ce.solutions) > 200
        for prob, sol in zip(iono_ce.problems, iono_ce.solutions):
            if sol.is_optimal:
                assert ensemble_margin(iono_fold0.model, prob.y_ce, sol.x_ce) >= prob.margin - 1e-9


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_property_solver_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    model = helpers.random_stump_gb(rng, m=int(rng.integers(1, 4)), n_trees=int(rng.integers(1, 9)))
    prob = helpers.random_ce_problem(model, rng)
    solve_and_check(model, prob)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_property_deep_solver_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    model = helpers.random_deep_gb(rng, m=int(rng.integers(2, 4)), n_trees=2, depth=3)
    prob = helpers.random_ce_problem(model, rng)
    solve_and_check(model, prob)
