"""Detection/attribution tests on held-out models with subagged type I error and power.

For each subag member the fingerprint is applied to every run of the
held-out models. A run's statistic is the Spearman rank correlation between
the forcing-of-interest series and the predicted series. For a held-out model
``m`` the null mean and variance are pooled over the *other* held-out models'
null (control) runs, a Gaussian threshold is placed around the pooled mean,
and each of ``m``'s runs is rejected when it falls strictly outside. Type I
error and power are the rejection rates over null and forced runs, averaged
over the members in which ``m`` was held out.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .anchor import LINEAR, AnchorBasis, Fingerprint, predict
from .dataset import DEFAULT_WINDOW, Dataset, apply_preprocessing
from .diagnostics import spearman
from .errors import AnchorFPError, DatasetError, UndefinedStatisticError
from .selection import DEFAULT_WEIGHTS, Grid, SubagEnsemble, SubagMember, subag

TAILS = ("two_tailed", "upper")


def run_statistic(f: Fingerprint, run_rows, forcing_series) -> float:
    """Spearman correlation between ``forcing_series`` and the run's predicted series."""
    forcing = np.asarray(forcing_series, dtype=float).reshape(-1)
    yhat = predict(f, run_rows)
    if yhat.size != forcing.size:
        raise DatasetError(f"run has {yhat.size} steps, forcing series has {forcing.size}")
    if np.ptp(yhat) == 0:
        raise UndefinedStatisticError("predicted series is constant")
    return spearman(forcing, yhat)


@dataclass
class NullEstimate:
    mu0: float
    sigma0: float
    per_model: list  # (model_id, mu_m, sigma_m, R_m)


def estimate_null(stats: Mapping[str, Sequence[float]]) -> NullEstimate:
    """Pooled null mean and standard deviation from per-model lists of null-run statistics.

    Per-model variances use 1/R normalization (zero for a single run); the
    pooled variance is the mean within-model variance plus the spread of the
    per-model means, every model weighted equally.
    """
    per_model = []
    for m, t in stats.items():
        t = np.asarray(t, dtype=float).reshape(-1)
        if t.size == 0:
            continue
        mu = float(t.mean())
        var = float(np.mean((t - mu) ** 2))
        per_model.append((m, mu, math.sqrt(var), int(t.size)))
    if len(per_model) < 2:
        raise DatasetError(f"null estimate needs at least 2 models with null runs, got {len(per_model)}")
    mus = np.array([x[1] for x in per_model])
    vars_ = np.array([x[2] ** 2 for x in per_model])
    mu0 = float(mus.mean())
    var0 = float(vars_.mean() + np.mean((mus - mu0) ** 2))
    return NullEstimate(mu0, math.sqrt(var0), per_model)


def threshold(null: NullEstimate, alpha_star: float = 0.05, tails: str = "two_tailed") -> tuple[float, float]:
    """``(theta_low, theta_high)``; ``theta_low`` is ``-inf`` for an upper-tail test."""
    if not 0 < alpha_star < 1:
        raise ValueError("alpha_star must be in (0, 1)")
    if tails not in TAILS:
        raise ValueError(f"tails must be one of {TAILS}")
    if null.sigma0 == 0:
        warnings.warn("degenerate null distribution (zero variance)", RuntimeWarning, stacklevel=2)
        return (null.mu0 if tails == "two_tailed" else -math.inf), null.mu0
    if tails == "two_tailed":
        z = norm.ppf(1 - alpha_star / 2)
        return null.mu0 - z * null.sigma0, null.mu0 + z * null.sigma0
    z = norm.ppf(1 - alpha_star)
    return -math.inf, null.mu0 + z * null.sigma0


def empirical_threshold(stats: Mapping[str, Sequence[float]], alpha_star: float = 0.05,
                        tails: str = "two_tailed") -> tuple[float, float]:
    """Quantiles of the pooled null statistics; a sensitivity check for :func:`threshold`."""
    pooled = np.concatenate([np.asarray(v, dtype=float).reshape(-1) for v in stats.values()])
    if tails == "two_tailed":
        lo, hi = np.quantile(pooled, [alpha_star / 2, 1 - alpha_star / 2])
        return float(lo), float(hi)
    return -math.inf, float(np.quantile(pooled, 1 - alpha_star))


def rejects(t, theta: tuple[float, float]) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return (t < theta[0]) | (t > theta[1])


@dataclass
class ModelStats:
    """Statistics of one held-out model's runs within one subag member."""

    null: list = field(default_factory=list)
    alt: list = field(default_factory=list)
    undefined: int = 0


def evaluate_model(model_id: str, member_stats: Sequence[Mapping[str, ModelStats]], alpha_star: float = 0.05,
                   tails: str = "two_tailed", mode: str = "gaussian") -> tuple[float | None, float | None, int]:
    """Leave-one-model-out type I error and power of ``model_id``.

    ``member_stats`` holds, per subag member, the statistics of the models
    held out in that member. Returns ``(alpha_m, kappa_m, n_members)``;
    a rate is ``None`` when the model has no run of that kind in any member
    where a threshold could be formed.
    """
    a_rates, k_rates = [], []
    n_used = 0
    for stats in member_stats:
        if model_id not in stats:
            continue
        others = {m: s.null for m, s in stats.items() if m != model_id and len(s.null)}
        if len(others) < 2:
            continue
        if mode == "gaussian":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                theta = threshold(estimate_null(others), alpha_star, tails)
        elif mode == "empirical":
            theta = empirical_threshold(others, alpha_star, tails)
        else:
            raise ValueError("mode must be 'gaussian' or 'empirical'")
        own = stats[model_id]
        n_used += 1
        if own.null:
            a_rates.append(float(rejects(own.null, theta).mean()))
        if own.alt:
            k_rates.append(float(rejects(own.alt, theta).mean()))
    alpha_m = float(np.mean(a_rates)) if a_rates else None
    kappa_m = float(np.mean(k_rates)) if k_rates else None
    return alpha_m, kappa_m, n_used


def reference_forcing(d: Dataset) -> np.ndarray:
    """Per-time-step mean target over the forced runs: the forcing-of-interest series."""
    forced = [i for i, r in enumerate(d.runs) if r.kind == "forced"]
    if not forced:
        raise DatasetError("no forced runs to derive the forcing series from")
    u = d.runs[forced[0]].n_steps
    rows = [d.run_rows(i) for i in forced]
    if any(len(r) != u for r in rows):
        raise DatasetError("forced runs differ in length")
    return np.mean([d.Y[r] for r in rows], axis=0)


def member_statistics(member: SubagMember, d: Dataset, forcing) -> dict[str, ModelStats]:
    """Statistics for every run of the member's held-out models, keyed by model id."""
    test = apply_preprocessing(d.subset_models(member.split.test_models), member.state)
    out: dict[str, ModelStats] = {}
    for i, run in enumerate(test.runs):
        s = out.setdefault(run.model_id, ModelStats())
        rows = test.run_rows(i)
        try:
            t = run_statistic(member.fingerprint, test.X[rows], forcing[: len(rows)])
        except UndefinedStatisticError:
            s.undefined += 1
            continue
        (s.null if run.kind == "control" else s.alt).append(t)
    return {m: out[m] for m in sorted(out)}


@dataclass
class TestConfig:
    __test__ = False  # not a pytest class

    grid: Grid = field(default_factory=Grid)
    basis: AnchorBasis = LINEAR
    weights: tuple = DEFAULT_WEIGHTS
    B: int = 50
    K: int = 3
    alpha_star: float = 0.05
    seed: int = 0
    window: int | None = DEFAULT_WINDOW
    scale: bool = True
    tails: str = "two_tailed"
    threshold_mode: str = "gaussian"
    refit: str = "averaged"
    train_fraction: float = 0.5
    jobs: int = 1
    forcing: np.ndarray | None = None


@dataclass(eq=False)
class TestReport:
    __test__ = False

    alpha_star: float
    tails: str
    B: int
    per_model: list  # dicts: model_id, alpha, power, R0, R1, n_members
    alpha_bar: float | None
    kappa_bar: float | None
    threshold_mode: str = "gaussian"
    missing: list = field(default_factory=list)
    ensemble: SubagEnsemble | None = None
    member_stats: list | None = None

    def to_dict(self) -> dict:
        return {"alpha_star": self.alpha_star, "tails": self.tails, "B": self.B,
                "threshold_mode": self.threshold_mode, "alpha_bar": self.alpha_bar,
                "kappa_bar": self.kappa_bar, "per_model": self.per_model, "missing": self.missing}

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["model_id", "alpha", "power"])
            for row in self.per_model:
                w.writerow([row["model_id"], "" if row["alpha"] is None else repr(row["alpha"]),
                            "" if row["power"] is None else repr(row["power"])])
        return path


def _mean_or_none(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def evaluate_ensemble(ensemble: SubagEnsemble, d: Dataset, alpha_star: float = 0.05, tails: str = "two_tailed",
                      mode: str = "gaussian", forcing=None, jobs: int = 1) -> TestReport:
    """Type I error and power of every model from a fitted ensemble."""
    forcing = reference_forcing(d) if forcing is None else np.asarray(forcing, dtype=float)
    members = ensemble.members
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            stats = list(pool.map(lambda m: member_statistics(m, d, forcing), members))
    else:
        stats = [member_statistics(m, d, forcing) for m in members]
    per_model, missing = [], []
    for m in d.model_ids:
        runs = [r for r in d.runs if r.model_id == m]
        alpha_m, kappa_m, used = evaluate_model(m, stats, alpha_star, tails, mode)
        if used == 0:
            missing.append(m)
        per_model.append({"model_id": m, "alpha": alpha_m, "power": kappa_m,
                          "R0": sum(r.kind == "control" for r in runs), "R1": sum(r.kind == "forced" for r in runs),
                          "n_members": used})
    return TestReport(alpha_star, tails, ensemble.B, per_model,
                      _mean_or_none(r["alpha"] for r in per_model), _mean_or_none(r["power"] for r in per_model),
                      mode, missing, ensemble, stats)


def full_test(d: Dataset, config: TestConfig | None = None) -> TestReport:
    """Subag fingerprints over model half-splits, then evaluate every model."""
    c = config or TestConfig()
    if not any(r.kind == "control" for r in d.runs):
        raise DatasetError("the dataset has no control runs for the null distribution")
    try:
        ens = subag(d, c.B, c.seed, c.grid, c.basis, c.weights, c.K, c.window, c.scale, c.train_fraction,
                    c.refit, jobs=c.jobs)
    except AnchorFPError:
        raise
    return evaluate_ensemble(ens, d, c.alpha_star, c.tails, c.threshold_mode, c.forcing, c.jobs)
