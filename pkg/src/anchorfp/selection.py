"""Hyperparameter selection by grouped cross-validation and subagging of fingerprints.

Two validation objectives are computed for every ``(gamma, lambda)`` grid
point: the RMSE and the RMSE of the residual component lying in the
validation anchors' span. The chosen point minimizes the weighted L2
distance to the ideal point after normalizing each objective by its
ideal-to-nadir range, where the nadir is taken over the grid's Pareto front.

Grid sweeps reuse one symmetric eigendecomposition per ``(fold, gamma)``::

    X~^T X~ = X^T X + (gamma - 1) (Q^T X)^T (Q^T X)

so all lambdas on the grid cost a single ``p x p`` factorization.
"""
from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .anchor import LINEAR, AnchorBasis, Fingerprint, HyperParams, anchor_ridge, build_projection
from .dataset import (DEFAULT_WINDOW, Dataset, GroupSplit, PreprocessingState, apply_preprocessing, preprocess,
                      split_models)
from .errors import AnchorFPError, DatasetError

DEFAULT_GAMMAS = (1.0, 2.0, 5.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6)
DEFAULT_WEIGHTS = (0.5, 0.5)


@dataclass(frozen=True)
class Grid:
    gammas: tuple[float, ...] = DEFAULT_GAMMAS
    lambdas: tuple[float, ...] = tuple(np.logspace(0, 9, 50))

    def __post_init__(self):
        g = tuple(float(x) for x in self.gammas)
        lam = tuple(float(x) for x in self.lambdas)
        if not g or not lam:
            raise ValueError("grid must be nonempty")
        if any(x < 0 for x in g) or any(x <= 0 for x in lam):
            raise ValueError("gammas must be >= 0 and lambdas > 0")
        if any(b <= a for a, b in zip(g, g[1:])) or any(b <= a for a, b in zip(lam, lam[1:])):
            raise ValueError("grid values must be strictly increasing")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "lambdas", lam)

    def __len__(self):
        return len(self.gammas) * len(self.lambdas)


@dataclass(eq=False)
class ObjectiveTable:
    """Validation objectives per grid point (gamma-major order) and fold-averaged fingerprints."""

    gamma: np.ndarray
    lam: np.ndarray
    rmse: np.ndarray
    rmse_anchor_span: np.ndarray
    betas: np.ndarray | None = None
    weights: tuple[float, float] = DEFAULT_WEIGHTS

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (2,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError(f"weights must be two nonnegative numbers summing to 1, got {self.weights}")
        if len(self.gamma) == 0:
            raise ValueError("empty objective table")

    def __len__(self):
        return len(self.gamma)

    @property
    def phi(self) -> np.ndarray:
        return np.column_stack([self.rmse, self.rmse_anchor_span])

    def pareto_mask(self) -> np.ndarray:
        return pareto_mask(self.phi)

    @property
    def ideal(self) -> np.ndarray:
        return self.phi.min(axis=0)

    @property
    def nadir(self) -> np.ndarray:
        return self.phi[self.pareto_mask()].max(axis=0)

    def with_rows(self, idx) -> "ObjectiveTable":
        idx = np.asarray(idx)
        return ObjectiveTable(self.gamma[idx], self.lam[idx], self.rmse[idx], self.rmse_anchor_span[idx],
                              None if self.betas is None else self.betas[idx], self.weights)

    def write_csv(self, path, include_gamma: bool = True, include_anchor: bool = True) -> Path:
        path = Path(path)
        cols = (["gamma"] if include_gamma else []) + ["lambda", "rmse"] + (
            ["rmse_anchor_span"] if include_anchor else [])
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(len(self)):
                row = ([self.gamma[i]] if include_gamma else []) + [self.lam[i], self.rmse[i]] + (
                    [self.rmse_anchor_span[i]] if include_anchor else [])
                w.writerow([repr(float(v)) for v in row])
        return path


def pareto_mask(phi: np.ndarray) -> np.ndarray:
    """True for rows not weakly dominated (all <=, one <) by another row."""
    phi = np.asarray(phi, dtype=float)
    le = np.all(phi[:, None, :] <= phi[None, :, :], axis=2)
    lt = np.any(phi[:, None, :] < phi[None, :, :], axis=2)
    dominated = np.any(le & lt, axis=0)
    return ~dominated


def is_pareto_efficient(t: ObjectiveTable, idx: int) -> bool:
    phi = t.phi
    dom = np.all(phi <= phi[idx], axis=1) & np.any(phi < phi[idx], axis=1)
    return not bool(dom.any())


def kfold_groups(train_models, K: int = 3, seed=0) -> list[list[str]]:
    """Split model ids into K near-equal folds (sizes differ by at most one)."""
    models = sorted(train_models)
    if K < 2:
        raise ValueError("K must be >= 2")
    if K > len(models):
        raise DatasetError(f"K={K} folds requested for {len(models)} models")
    perm = np.random.default_rng(seed).permutation(len(models))
    return [[models[i] for i in part] for part in np.array_split(perm, K)]


def _sweep(X, Y, Q, gammas, lambdas):
    """Yield (gamma, p x L coefficient matrix) for every gamma, all lambdas at once."""
    G = X.T @ X
    b = X.T @ Y
    M = Q.T @ X
    H = M.T @ M
    h = M.T @ (Q.T @ Y)
    lam = np.asarray(lambdas)
    for g in gammas:
        w, V = np.linalg.eigh(G + (g - 1.0) * H)
        w = np.clip(w, 0.0, None)
        c = V.T @ (b + (g - 1.0) * h)
        yield g, V @ (c[:, None] / (w[:, None] + lam[None, :]))


def cv_objectives(d: Dataset, folds: Sequence[Sequence[str]], grid: Grid, basis: AnchorBasis = LINEAR,
                  weights=DEFAULT_WEIGHTS) -> ObjectiveTable:
    """Grouped K-fold validation objectives and fold-averaged fingerprints for every grid point."""
    G, L = len(grid.gammas), len(grid.lambdas)
    rmse_sum = np.zeros((G, L))
    span_sum = np.zeros((G, L))
    beta_sum = np.zeros((G, L, d.p))
    for fold in folds:
        val = d.model_mask(fold)
        if not val.any():
            raise DatasetError(f"fold {list(fold)} has no validation rows")
        tr = ~val
        if not tr.any():
            raise DatasetError("a fold leaves no training rows")
        proj_tr = build_projection(d.A[tr], basis, strict=False)
        proj_val = build_projection(d.A[val], basis, strict=False)
        Xv, Yv = d.X[val], d.Y[val]
        nv = Xv.shape[0]
        for gi, (g, B) in enumerate(_sweep(d.X[tr], d.Y[tr], proj_tr.Q, grid.gammas, grid.lambdas)):
            R = Yv[:, None] - Xv @ B
            rmse_sum[gi] += np.sqrt(np.mean(R * R, axis=0))
            PR = proj_val.Q.T @ R
            span_sum[gi] += np.sqrt(np.sum(PR * PR, axis=0) / nv)
            beta_sum[gi] += B.T
    K = len(folds)
    gam = np.repeat(np.asarray(grid.gammas), L)
    lam = np.tile(np.asarray(grid.lambdas), G)
    return ObjectiveTable(gam, lam, (rmse_sum / K).ravel(), (span_sum / K).ravel(),
                          (beta_sum / K).reshape(G * L, d.p), tuple(weights))


def weighted_l2_scores(t: ObjectiveTable, weights=None) -> np.ndarray:
    """Normalized weighted L2 distance of each grid point to the ideal point."""
    w = np.asarray(t.weights if weights is None else weights, dtype=float)
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
        raise ValueError(f"weights must be nonnegative and sum to 1, got {tuple(w)}")
    phi, z_star, z_nad = t.phi, t.ideal, t.nadir
    span = z_nad - z_star
    degenerate = ~(span > 0)
    if degenerate.any():
        dropped = [int(j) for j in np.flatnonzero(degenerate) if w[j] > 0]
        # a one-point front is a clean win, not a degenerate objective
        if dropped and t.pareto_mask().sum() > 1:
            warnings.warn(f"objective(s) {dropped} are constant on the Pareto front; dropped and weights renormalized",
                          RuntimeWarning, stacklevel=3)
        w = np.where(degenerate, 0.0, w)
        w = w / w.sum() if w.sum() > 0 else w
    norm = np.zeros_like(phi)
    ok = ~degenerate
    norm[:, ok] = (phi[:, ok] - z_star[ok]) / span[ok]
    return np.sqrt(np.sum(w * norm ** 2, axis=1))


def select_index(t: ObjectiveTable, weights=None) -> int:
    scores = weighted_l2_scores(t, weights)
    best = scores.min()
    tied = np.flatnonzero(scores <= best + 1e-12 * max(1.0, best))
    if tied.size > 1:
        # a tied point dominated by another tied point is never returned
        front = pareto_mask(t.phi[tied])
        tied = tied[front]
        tied = tied[np.lexsort((t.lam[tied], t.gamma[tied]))]
    return int(tied[-1])


def select_weighted_l2(t: ObjectiveTable, weights=None) -> tuple[float, float]:
    """``(gamma*, lambda*)`` minimizing the weighted L2 criterion; ties go to larger gamma, then larger lambda."""
    i = select_index(t, weights)
    return float(t.gamma[i]), float(t.lam[i])


# subagging ------------------------------------------------------------------


@dataclass(eq=False)
class SubagMember:
    index: int
    split: GroupSplit
    hyper: HyperParams
    fingerprint: Fingerprint
    table: ObjectiveTable
    state: PreprocessingState
    folds: list


@dataclass(eq=False)
class SubagEnsemble:
    members: list
    basis: AnchorBasis = LINEAR
    config: dict = field(default_factory=dict)

    @property
    def B(self) -> int:
        return len(self.members)

    @property
    def aggregate_beta(self) -> np.ndarray:
        return np.mean([m.fingerprint.beta for m in self.members], axis=0)

    def aggregate_fingerprint(self) -> Fingerprint:
        gammas = [m.hyper.gamma for m in self.members]
        lams = [m.hyper.lam for m in self.members]
        # the aggregate carries the median member hyperparameters for reference
        return Fingerprint(self.aggregate_beta, HyperParams(float(np.median(gammas)), float(np.median(lams))),
                           self.basis, None, None,
                           {"B": self.B, "member_gammas": gammas, "member_lambdas": lams})


def fit_member(d: Dataset, split: GroupSplit, seed: int, grid: Grid, basis: AnchorBasis = LINEAR,
               weights=DEFAULT_WEIGHTS, K: int = 3, window: int | None = DEFAULT_WINDOW, scale: bool = True,
               refit: str = "averaged", index: int = 0) -> SubagMember:
    """CV, weighted-L2 selection and fingerprint for one train/test split."""
    train = preprocess(d.subset_models(split.train_models), window, scale)
    folds = kfold_groups(split.train_models, K, seed + 1)
    table = cv_objectives(train, folds, grid, basis, weights)
    i = select_index(table)
    if not is_pareto_efficient(table, i):
        raise AnchorFPError(f"member {index}: selected grid point is not Pareto-efficient")
    hyper = HyperParams(float(table.gamma[i]), float(table.lam[i]))
    if refit == "averaged":
        beta = table.betas[i]
    elif refit == "full":
        proj = build_projection(train.A, basis)
        beta = anchor_ridge(train.X, train.Y, proj, hyper.gamma, hyper.lam)
    else:
        raise ValueError("refit must be 'averaged' or 'full'")
    fp = Fingerprint(beta, hyper, basis, split, train.preprocessing.digest(), {"member": index})
    return SubagMember(index, split, hyper, fp, table, train.preprocessing, folds)


def member_seeds(seed, B: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(B)]


def subag(d: Dataset, B: int = 50, seed=0, grid: Grid | None = None, basis: AnchorBasis = LINEAR,
          weights=DEFAULT_WEIGHTS, K: int = 3, window: int | None = DEFAULT_WINDOW, scale: bool = True,
          train_fraction: float = 0.5, refit: str = "averaged", splits: Sequence[GroupSplit] | None = None,
          jobs: int = 1) -> SubagEnsemble:
    """Fit ``B`` members on random model half-splits and average their fingerprints.

    Members are independent; with ``jobs > 1`` they run in a thread pool and
    are collected in index order, so results do not depend on ``jobs``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    grid = grid or Grid()
    seeds = member_seeds(seed, B)
    if splits is None:
        splits = [split_models(d, s, train_fraction) for s in seeds]
    elif len(splits) != B:
        raise ValueError(f"{len(splits)} splits given for B={B}")

    def run(b):
        try:
            return fit_member(d, splits[b], seeds[b], grid, basis, weights, K, window, scale, refit, b)
        except AnchorFPError as exc:
            raise type(exc)(f"subag member {b}: {exc}") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(run, range(B)))
    else:
        members = [run(b) for b in range(B)]
    cfg = {"B": B, "seed": seed, "K": K, "window": window, "weights": list(weights), "refit": refit,
           "train_fraction": train_fraction, "gammas": list(grid.gammas), "n_lambdas": len(grid.lambdas)}
    return SubagEnsemble(members, basis, cfg)


def member_predict(member: SubagMember, d: Dataset) -> np.ndarray:
    """Member prediction for raw dataset ``d``, in the original units of Y."""
    dp = apply_preprocessing(d, member.state)
    return dp.X @ member.fingerprint.beta + (member.state.y_mean or 0.0)


def ensemble_predict(ensemble: SubagEnsemble, d: Dataset) -> np.ndarray:
    """Subagged prediction: the mean of the member predictions, in original units."""
    return np.mean([member_predict(m, d) for m in ensemble.members], axis=0)


def out_of_bag_predict(ensemble: SubagEnsemble, d: Dataset) -> np.ndarray:
    """Per-row mean of the predictions of members that held the row's model out (NaN if none did)."""
    total = np.zeros(d.n)
    count = np.zeros(d.n)
    for m in ensemble.members:
        mask = d.model_mask(m.split.test_models)
        if mask.any():
            total[mask] += member_predict(m, d.take_rows(mask))
            count[mask] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)
