import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorfp import (LINEAR, Dataset, Grid, HyperParams, RunMeta, build_projection, cv_objectives, kfold_groups,
                      pareto_mask, preprocess, select_weighted_l2, subag)
from anchorfp.anchor import anchor_ridge
from anchorfp.dataset import GroupSplit
from anchorfp.errors import DatasetError
from anchorfp.selection import ObjectiveTable, is_pareto_efficient, select_index, weighted_l2_scores

from conftest import make_runs


def table(rows, weights=(0.5, 0.5)):
    rows = np.asarray(rows, dtype=float)
    return ObjectiveTable(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], None, weights)


def synthetic(n_models=6, runs=2, u=30, p=6, seed=0):
    rng = np.random.default_rng(seed)
    load = rng.normal(size=p)
    aload = rng.normal(size=p)
    parts = []
    for m in range(n_models):
        for r in range(runs):
            y = np.linspace(0, 1, u) + 0.3 * rng.normal(size=u)
            a = rng.normal(size=u)
            X = np.outer(y, load) + np.outer(a, aload) + rng.normal(size=(u, p))
            parts.append((RunMeta(f"m{m}", f"r{r}", "forced", u), X, y, a[:, None]))
    return Dataset.from_runs(parts, "y", ["a"])


class TestGrid:
    def test_defaults(self):
        g = Grid()
        assert g.gammas == (1.0, 2.0, 5.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6)
        assert len(g.lambdas) == 50 and g.lambdas[0] == pytest.approx(1) and g.lambdas[-1] == pytest.approx(1e9)

    @pytest.mark.parametrize("gammas, lambdas", [((), (1.0,)), ((2.0, 1.0), (1.0,)), ((1.0,), (0.0,)),
                                                 ((1.0,), (2.0, 2.0))])
    def test_invalid(self, gammas, lambdas):
        with pytest.raises(ValueError):
            Grid(gammas, lambdas)


class TestKfold:
    def test_six_models(self):
        assert sorted(len(f) for f in kfold_groups([f"m{i}" for i in range(6)], 3, 0)) == [2, 2, 2]

    def test_seven_models(self):
        assert sorted(len(f) for f in kfold_groups([f"m{i}" for i in range(7)], 3, 0)) == [2, 2, 3]

    def test_too_many_folds(self):
        with pytest.raises(DatasetError):
            kfold_groups(["a", "b"], 3, 0)

    def test_deterministic_and_partition(self):
        ids = {f"m{i}" for i in range(11)}
        a, b = kfold_groups(ids, 4, 9), kfold_groups(ids, 4, 9)
        assert a == b
        assert sorted(sum(a, [])) == sorted(ids)

    def test_run_variants_share_a_fold(self):
        d = make_runs(n_models=6, runs_per_model=4)
        folds = kfold_groups(d.model_ids, 3, 1)
        for f in folds:
            mask = d.model_mask(f)
            for r in {d.runs[i].model_id for i in np.unique(d.run_index[mask])}:
                assert r in f


class TestCvObjectives:
    def test_single_point_matches_direct_computation(self):
        d = preprocess(synthetic(), None)
        folds = kfold_groups(d.model_ids, 3, 0)
        t = cv_objectives(d, folds, Grid((10.0,), (3.0,)))
        rm, sp, betas = [], [], []
        for f in folds:
            val = d.model_mask(f)
            b = anchor_ridge(d.X[~val], d.Y[~val], build_projection(d.A[~val]), 10.0, 3.0)
            r = d.Y[val] - d.X[val] @ b
            rm.append(np.sqrt(np.mean(r ** 2)))
            sp.append(np.sqrt(np.mean(build_projection(d.A[val]).project(r) ** 2)))
            betas.append(b)
        assert t.rmse[0] == pytest.approx(np.mean(rm), rel=1e-9)
        assert t.rmse_anchor_span[0] == pytest.approx(np.mean(sp), rel=1e-9)
        np.testing.assert_allclose(t.betas[0], np.mean(betas, axis=0), rtol=1e-8, atol=1e-12)

    def test_gamma_one_row_is_ridge_cv(self):
        d = preprocess(synthetic(seed=1), None)
        folds = kfold_groups(d.model_ids, 3, 0)
        lam = (1.0, 10.0, 100.0)
        full = cv_objectives(d, folds, Grid((1.0, 5.0), lam))
        ridge = cv_objectives(d.with_(A=np.zeros((d.n, 0)), anchor_names=()), folds, Grid((1.0,), lam))
        np.testing.assert_allclose(full.rmse[:3], ridge.rmse, rtol=1e-9)

    def test_empty_fold(self):
        d = preprocess(synthetic(), None)
        with pytest.raises(DatasetError):
            cv_objectives(d, [["m0", "m1"], ["nope"]], Grid((1.0,), (1.0,)))


class TestWeightedL2:
    HAND = [[1, 1, 1.0, 3.0],
            [10, 1, 2.0, 1.0],
            [100, 1, 4.0, 0.5]]

    def test_hand_table(self):
        # ideal (1, .5); nadir (4, 3); scores^2/0.5: (0,1)->1, (1/3, .2)^2 -> .1511, (1, 0) -> 1
        assert select_weighted_l2(table(self.HAND)) == (10.0, 1.0)
        s = weighted_l2_scores(table(self.HAND))
        np.testing.assert_allclose(s, np.sqrt(0.5 * np.array([1.0, 1 / 9 + 0.04, 1.0])))

    def test_one_point(self):
        assert select_weighted_l2(table([[5, 2, 1.0, 1.0]])) == (5.0, 2.0)

    def test_rmse_only(self):
        assert select_weighted_l2(table(self.HAND), (1.0, 0.0)) == (1.0, 1.0)

    def test_ties_prefer_larger_gamma_then_lambda(self):
        rows = [[1, 1, 1.0, 2.0], [1, 5, 2.0, 1.0], [10, 1, 2.0, 1.0], [10, 5, 1.0, 2.0]]
        assert select_weighted_l2(table(rows)) == (10.0, 5.0)

    def test_degenerate_objective_warns(self):
        # two tied front points with a constant second objective
        rows = [[1, 1, 1.0, 0.0], [2, 1, 1.0, 0.0], [5, 1, 3.0, 0.0]]
        with pytest.warns(RuntimeWarning):
            assert select_weighted_l2(table(rows)) == (2.0, 1.0)

    def test_clean_winner_does_not_warn(self):
        rows = [[1, 1, 1.0, 0.0], [2, 1, 2.0, 0.0]]
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert select_weighted_l2(table(rows)) == (1.0, 1.0)

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            weighted_l2_scores(table(self.HAND), (0.7, 0.4))

    @given(st.lists(st.tuples(st.floats(0.01, 10), st.floats(0.01, 10)), min_size=1, max_size=30),
           st.floats(0, 1))
    @settings(max_examples=100, deadline=None)
    def test_selection_is_pareto_efficient_and_bounds_hold(self, pts, w):
        rows = [[i + 1, 1, a, b] for i, (a, b) in enumerate(pts)]
        t = table(rows, (w, 1 - w))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            i = select_index(t)
        assert is_pareto_efficient(t, i)
        front = t.phi[t.pareto_mask()]
        assert np.all(t.ideal <= t.phi)
        assert np.all(t.nadir >= front)

    @given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0.1, 10)), min_size=2, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_adding_dominated_point_keeps_selection(self, pts):
        rows = [[i + 1, 1, a, b] for i, (a, b) in enumerate(pts)]
        t = table(rows)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            before = select_weighted_l2(t)
            worst = t.phi.max(axis=0) + 1.0
            after = select_weighted_l2(table(rows + [[0.5, 1, worst[0], worst[1]]]))
        assert before == after

    def test_pareto_mask(self):
        phi = np.array([[1, 3], [2, 2], [3, 1], [3, 3], [2, 2]])
        assert pareto_mask(phi).tolist() == [True, True, True, False, True]


class TestSubag:
    GRID = Grid((1.0, 10.0), (1.0, 10.0, 100.0))

    def test_aggregate_is_mean(self):
        ens = subag(synthetic(8), B=4, seed=0, grid=self.GRID, window=None)
        np.testing.assert_allclose(ens.aggregate_beta, np.mean([m.fingerprint.beta for m in ens.members], 0),
                                   atol=1e-12)
        assert ens.B == 4

    def test_b_one(self):
        ens = subag(synthetic(8), B=1, seed=3, grid=self.GRID, window=None)
        np.testing.assert_array_equal(ens.aggregate_beta, ens.members[0].fingerprint.beta)

    def test_identical_splits_average(self):
        d = synthetic(8)
        s = GroupSplit(frozenset(d.model_ids[:4]), frozenset(d.model_ids[4:]))
        ens = subag(d, B=2, seed=0, grid=self.GRID, window=None, splits=[s, s])
        b0, b1 = (m.fingerprint.beta for m in ens.members)
        np.testing.assert_allclose(ens.aggregate_beta, (b0 + b1) / 2, atol=1e-15)

    def test_deterministic_and_jobs_independent(self):
        d = synthetic(8)
        a = subag(d, B=3, seed=11, grid=self.GRID, window=None)
        b = subag(d, B=3, seed=11, grid=self.GRID, window=None, jobs=3)
        np.testing.assert_array_equal(a.aggregate_beta, b.aggregate_beta)

    def test_half_splits(self):
        ens = subag(synthetic(7), B=3, seed=0, grid=self.GRID, window=None)
        assert all(len(m.split.train_models) == 4 for m in ens.members)

    def test_members_are_pareto_efficient(self):
        ens = subag(synthetic(8), B=3, seed=0, grid=self.GRID, window=None)
        for m in ens.members:
            i = int(np.flatnonzero((m.table.gamma == m.hyper.gamma) & (m.table.lam == m.hyper.lam))[0])
            assert is_pareto_efficient(m.table, i)

    def test_full_refit(self):
        ens = subag(synthetic(8), B=1, seed=0, grid=self.GRID, window=None, refit="full")
        m = ens.members[0]
        assert m.fingerprint.hyper == HyperParams(m.hyper.gamma, m.hyper.lam)

    def test_member_error_names_index(self):
        d = synthetic(4)
        with pytest.raises(DatasetError, match="member 0"):
            subag(d, B=1, seed=0, grid=self.GRID, window=None, K=3)
