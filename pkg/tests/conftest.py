from __future__ import annotations

from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from fcca.counterfactual import CEProblem, solve_batch
from fcca.dataset import compute_feature_eps, load_csv, make_folds, scale_minmax
from fcca.models import train_gb
from fcca.pipeline import select_m

DATA_CSV = Path(__file__).resolve().parent.parent / "data" / "ionosphere.csv"


@pytest.fixture(scope="session")
def ionosphere():
    return scale_minmax(load_csv(DATA_CSV))


@pytest.fixture(scope="session")
def iono_fold0(ionosphere):
    """Fold 0 of the 5-fold protocol with a depth-1 GB target, seed 0."""
    plan = make_folds(ionosphere, 5, cap=5000, seed=0)
    train_idx = plan.train_idx(0)
    train = ionosphere.subset(train_idx)
    test = ionosphere.subset(plan.test_idx(0))
    eps = compute_feature_eps(ionosphere, train_idx)
    model = train_gb(train, n_estimators=100, depth=1, lr=0.1)
    return SimpleNamespace(plan=plan, train=train, test=test, eps=eps, model=model)


@pytest.fixture(scope="session")
def iono_ce(iono_fold0):
    """Counterfactuals for every confident correct train row of fold 0."""
    f = iono_fold0
    picked = select_m(f.train, f.model, 0.5, 1.0)
    problems = [
        CEProblem(
            x0=f.train.X[i],
            y0=int(f.train.y[i]),
            y_ce=1 - int(f.train.y[i]),
            lambda0=0.1,
            lambda1=1.0,
            lambda2=0.0,
            eps=f.eps,
        )
        for i in picked
    ]
    solutions = solve_batch(f.model, problems)
    return SimpleNamespace(picked=picked, problems=problems, solutions=solutions)


@pytest.fixture(scope="session")
def blobs_csv(tmp_path_factory):
    import helpers

    path = tmp_path_factory.mktemp("data") / "blobs.csv"
    helpers.write_blobs_csv(path, n=160, m=6, seed=7)
    return path
