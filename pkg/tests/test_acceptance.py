"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line (see ``conftest.record_criterion``);
the lines are repeated in the pytest terminal summary.
"""
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import Ridge

from anchorfp import (LINEAR, QUADRATIC, AnchorBasis, Dataset, Grid, HyperParams, apply_preprocessing,
                      build_projection, correlation_ratio, fit, fit_iv_limit, predict, preprocess, rmse)
from anchorfp.anchor import anchor_ridge
from anchorfp.dataset import center_columns, center_targets
from anchorfp.diagnostics import spearman
from anchorfp.hyptest import TestConfig, estimate_null, full_test, threshold
from anchorfp.scm import ScmSpec, ensemble, make_loadings, motivating_scenario, quadratic_scenario
from anchorfp.selection import (ObjectiveTable, cv_objectives, is_pareto_efficient, kfold_groups, select_index,
                                select_weighted_l2)

from conftest import centered_problem, record_criterion

# Pareto checks of criterion 10 on the cross-validation runs of criteria 5 to 8
CV_TABLES: dict[str, list] = {"5": [], "6": [], "7": [], "8": []}


def check(number, ok, detail):
    record_criterion(number, bool(ok), detail)
    assert ok, detail


# 1 --------------------------------------------------------------------------

def test_c01_gamma_one_is_ridge():
    rng = np.random.default_rng(1)
    problems = [centered_problem(rng, 40, 10, 2) for _ in range(100)]
    lams = rng.uniform(0.01, 10.0, size=100)
    t0 = time.perf_counter()
    ours = [anchor_ridge(X, Y, build_projection(A), 1.0, lam) for (X, Y, A), lam in zip(problems, lams)]
    elapsed = time.perf_counter() - t0
    worst = max(np.max(np.abs(b - Ridge(alpha=lam, fit_intercept=False, solver="cholesky").fit(X, Y).coef_))
                for b, (X, Y, A), lam in zip(ours, problems, lams))
    check(1, worst <= 1e-10 and elapsed < 1.0, f"max |dbeta| = {worst:.2e} (<= 1e-10), runtime {elapsed:.3f}s (< 1s)")


# 2 --------------------------------------------------------------------------

def dense_oracle(X, Y, A, gamma, lam):
    """Normal equations with the explicit n x n projection onto the centered anchors."""
    Ac = A - A.mean(axis=0)
    Pi = Ac @ np.linalg.pinv(Ac.T @ Ac) @ Ac.T
    W = np.eye(len(Y)) + (gamma - 1.0) * Pi
    return np.linalg.solve(X.T @ W @ X + lam * np.eye(X.shape[1]), X.T @ W @ Y)


def test_c02_closed_form_matches_dense_oracle():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        X, Y, A = centered_problem(rng, 60, 8, 3)
        gamma, lam = 10 ** rng.uniform(-1, 3), 10 ** rng.uniform(-2, 2)
        b = anchor_ridge(X, Y, build_projection(A), gamma, lam)
        ref = dense_oracle(X, Y, A, gamma, lam)
        worst = max(worst, np.linalg.norm(b - ref) / np.linalg.norm(ref))
    check(2, worst <= 1e-8, f"max relative error {worst:.2e} (<= 1e-8) over 50 instances")


# 3 --------------------------------------------------------------------------

def test_c03_iv_limit():
    basis = AnchorBasis(("identity", "square", "cube", "pow4", "pow5"))
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=200)
        X = np.column_stack([a ** k for k in range(1, 6)]) + rng.normal(size=(200, 5))
        Y = X @ rng.normal(size=5) + rng.normal(size=200)
        d = Dataset.from_arrays(X, Y, a, center=True)
        P = build_projection(d.A, basis)
        b_iv = fit_iv_limit(d, P, 1e-6).beta
        b_g = fit(d, P, HyperParams(1e8, 1e-6)).beta
        worst = max(worst, np.linalg.norm(b_g - b_iv) / np.linalg.norm(b_iv))
    check(3, worst <= 1e-3, f"max relative distance {worst:.2e} (<= 1e-3) over 20 toys")


# 4 --------------------------------------------------------------------------

def scm_dataset(seed):
    u, p = 80, 20
    t = np.linspace(0, 1, u)
    rng = np.random.default_rng(seed)
    ld = make_loadings(p, ["y", "a1", "a2"], seed, 0.6)
    spec = ScmSpec(p, {"y": t ** 2, "a1": np.sin(9 * t), "a2": rng.normal(size=u)}, ld, "y", ("a1", "a2"), 1.0, 2.0)
    return preprocess(ensemble(spec, 6, 2, 1, seed=seed), None)


def test_c04_anchor_span_residual_monotone():
    gammas = [10.0 ** k for k in range(7)]
    worst = -np.inf
    for seed in range(20):
        d = scm_dataset(seed)
        P = build_projection(d.A)
        for lam in (0.1, 10.0, 1000.0):
            norms = [np.linalg.norm(P.project(d.Y - d.X @ anchor_ridge(d.X, d.Y, P, g, lam))) for g in gammas]
            worst = max(worst, max(np.diff(norms)))
    check(4, worst <= 1e-9, f"largest increase of ||Pi R|| along the gamma grid {worst:.2e} (<= 1e-9), 20 datasets")


# 5 --------------------------------------------------------------------------

def motivating_metrics(seed, lam=1e5):
    tr, te = motivating_scenario(seed)
    trp = center_targets(center_columns(tr))
    tep = apply_preprocessing(te, trp.preprocessing)
    proj = build_projection(trp.A)
    a = tep.A[:, 0]
    none = np.abs(a) < 1e-9
    out = {}
    for g in (1.0, 100.0):
        r = tep.Y - predict(fit(trp, proj, HyperParams(g, lam)), tep.X)
        out[g] = (rmse(r[none], 0 * r[none]), rmse(r[~none], 0 * r[~none]), np.corrcoef(r, a)[0, 1])
    folds = kfold_groups(trp.model_ids, 3, seed)
    CV_TABLES["5"].append(cv_objectives(trp, folds, Grid((1.0, 10.0, 100.0, 1e3), np.logspace(3, 7, 9))))
    return out


def test_c05_motivating_robustness():
    t0 = time.perf_counter()
    res = [motivating_metrics(s) for s in range(5)]
    elapsed = time.perf_counter() - t0
    ridge_ratio = min(m[1.0][1] / m[1.0][0] for m in res)
    anchor_ratio = max(m[100.0][1] / m[100.0][0] for m in res)
    reduction = min(1 - abs(m[100.0][2]) / abs(m[1.0][2]) for m in res)
    ok = ridge_ratio >= 2 and anchor_ratio <= 1.5 and reduction >= 0.5 and elapsed < 30
    check(5, ok, f"ridge shift/none RMSE >= {ridge_ratio:.2f} (>= 2), anchor <= {anchor_ratio:.2f} (<= 1.5), "
                 f"|rho| reduction >= {reduction:.0%} (>= 50%), 5 seeds in {elapsed:.1f}s (< 30s)")


# 6 and 7 --------------------------------------------------------------------

def detection_spec(seed, target_gain, p=50, u=165):
    t = np.arange(u)
    f = np.exp(t / 60.0)
    f = 2 * (f - f[0]) / (f[-1] - f[0])
    other = np.sin(2 * np.pi * t / 11.0)
    L = make_loadings(p, ["target", "other"], seed, 0.5)
    return ScmSpec(p, {"target": f, "other": other}, {"target": target_gain * L["target"], "other": L["other"]},
                   "target", ("other",), 1.0, 3.0, seed)


def calibration_run(seed, gain):
    d = ensemble(detection_spec(seed, gain), 20, 5, 5, seed=1000 + seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = full_test(d, TestConfig(B=20, seed=seed, alpha_star=0.05, tails="two_tailed"))
    return d, rep


def test_c06_type_one_error_calibration():
    t0 = time.perf_counter()
    alphas = []
    for seed in range(10):
        _, rep = calibration_run(seed, 0.0)
        alphas.append(rep.alpha_bar)
        CV_TABLES["6"] += [m.table for m in rep.ensemble.members]
    elapsed = time.perf_counter() - t0
    ok = all(0.02 <= a <= 0.08 for a in alphas) and elapsed < 120
    check(6, ok, f"alpha_hat in [{min(alphas):.3f}, {max(alphas):.3f}] (within [0.02, 0.08]) over 10 seeds, "
                 f"{elapsed:.0f}s (< 120s)")


def oracle_exceedance(seed, gain):
    """Fraction of forced runs whose statistic under the true target pattern leaves the null band."""
    spec = detection_spec(seed, gain)
    d = ensemble(spec, 20, 5, 5, seed=1000 + seed)
    b, F = spec.loadings["target"], spec.forcings["target"]
    null, alt = {}, []
    for i, r in enumerate(d.runs):
        t = spearman(F, d.X[d.run_rows(i)] @ b)
        (null.setdefault(r.model_id, []) if r.kind == "control" else alt).append(t)
    lo, hi = threshold(estimate_null(null), 0.05)
    alt = np.asarray(alt)
    return float(np.mean((alt < lo) | (alt > hi)))


def test_c07_power():
    gain = 0.4
    oracle = [oracle_exceedance(s, gain) for s in range(10)]
    kappas = []
    for seed in range(10):
        _, rep = calibration_run(seed, gain)
        kappas.append(rep.kappa_bar)
        CV_TABLES["7"] += [m.table for m in rep.ensemble.members]
    ok = min(oracle) >= 0.99 and min(kappas) >= 0.95
    check(7, ok, f"oracle exceedance >= {min(oracle):.3f} (>= 0.99), kappa_hat >= {min(kappas):.3f} (>= 0.95) "
                 f"over 10 seeds")


# 8 --------------------------------------------------------------------------

def quadratic_metrics(seed):
    tr, te = quadratic_scenario(seed)
    trp = preprocess(tr, None, True)
    tep = apply_preprocessing(te, trp.preprocessing)
    projq = build_projection(tep.A, QUADRATIC)
    folds = kfold_groups(trp.model_ids, 3, seed)
    grid = Grid((100.0,), np.logspace(-2, 6, 30))
    out = []
    for basis in (LINEAR, QUADRATIC):
        table = cv_objectives(trp, folds, grid, basis, (1.0, 0.0))
        CV_TABLES["8"].append(table)
        i = select_index(table)
        f = fit(trp, build_projection(trp.A, basis), HyperParams(table.gamma[i], table.lam[i]))
        r = tep.Y - predict(f, tep.X)
        out.append((rmse(r, 0 * r), correlation_ratio(r, projq)))
    return out


def test_c08_nonlinear_anchor_basis():
    res = [quadratic_metrics(s) for s in range(10)]
    reduction = min(1 - q[1] / lin[1] for lin, q in res)
    rmse_ratio = max(q[0] / lin[0] for lin, q in res)
    ok = reduction >= 0.4 and rmse_ratio <= 1.1
    check(8, ok, f"correlation-ratio reduction >= {reduction:.0%} (>= 40%), RMSE ratio <= {rmse_ratio:.2f} "
                 f"(<= 1.10) over 10 seeds")


# 9 --------------------------------------------------------------------------

@given(st.lists(st.lists(st.floats(-1, 1), min_size=3, max_size=3), min_size=2, max_size=10))
@settings(max_examples=100, deadline=None, database=None)
def _pooled_identity(rows):
    n = estimate_null({f"m{i}": r for i, r in enumerate(rows)})
    allv = np.concatenate(rows)
    assert abs(n.mu0 - allv.mean()) <= 1e-12
    assert abs(n.sigma0 ** 2 - allv.var()) <= 1e-12


def test_c09_null_arithmetic():
    n = estimate_null({"a": [0.1], "b": [-0.1]})
    lo, hi = threshold(n, 0.05)
    z = 1.959963984540054
    exact = (abs(n.mu0) <= 1e-12 and abs(n.sigma0 ** 2 - 0.01) <= 1e-12
             and abs(hi - z * 0.1) <= 1e-12 and abs(lo + z * 0.1) <= 1e-12)
    try:
        _pooled_identity()
        identity = True
    except AssertionError:
        identity = False
    check(9, exact and identity, f"hand fixture exact to 1e-12: {exact}; pooled-variance identity on 100 "
                                 f"random tables: {identity}")


# 10 -------------------------------------------------------------------------

def test_c10_multiobjective_selection():
    rows = np.array([[1, 1, 1.0, 3.0], [10, 1, 2.0, 1.0], [100, 1, 4.0, 0.5]])
    hand = select_weighted_l2(ObjectiveTable(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], None, (0.5, 0.5)))
    missing = [k for k, v in CV_TABLES.items() if not v]
    if missing:
        pytest.skip(f"criteria {missing} did not run in this session")
    n_tables, efficient = 0, True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for tables in CV_TABLES.values():
            for t in tables:
                n_tables += 1
                efficient &= is_pareto_efficient(t, select_index(t))
    check(10, hand == (10.0, 1.0) and efficient,
          f"hand-table winner {hand} (expected (10.0, 1.0)); Pareto-efficient selection on all {n_tables} "
          f"CV runs of criteria 5-8: {efficient}")
