"""Prediction-quality and residual/anchor dependence measures.

Variances use the 1/n normalization throughout, so that the explained and
unexplained parts of :func:`variance_decomposition` add up to ``Var(R)``.

The correlation ratio reported here is *basis-limited*: the conditional mean
``E[R | A]`` is replaced by the projection of ``R`` on the span of the
expanded anchor basis, so it is a lower bound of the population quantity
that tightens as terms are added to the basis.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .anchor import AnchorProjection
from .errors import DatasetError, UndefinedStatisticError


def _vec(v, name="vector"):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise DatasetError(f"{name} is empty")
    return v


def rmse(y, yhat) -> float:
    y, yhat = _vec(y, "y"), _vec(yhat, "yhat")
    if y.shape != yhat.shape:
        raise DatasetError(f"length mismatch: {y.size} vs {yhat.size}")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def rmse_anchor_span(residuals, proj: AnchorProjection) -> float:
    """RMSE of the part of the residuals lying in the anchor span."""
    r = _vec(residuals, "residuals")
    if r.size != proj.n:
        raise DatasetError(f"residuals have length {r.size}, projection has {proj.n} rows")
    return float(np.sqrt(np.mean(proj.project(r) ** 2)))


def pearson(x, y) -> float:
    x, y = _vec(x), _vec(y)
    xc, yc = x - x.mean(), y - y.mean()
    den = np.sqrt(np.sum(xc * xc) * np.sum(yc * yc))
    if den == 0:
        raise UndefinedStatisticError("correlation undefined for a constant series")
    return float(np.sum(xc * yc) / den)


def spearman(y, yhat) -> float:
    """Spearman rank correlation with average ranks for ties."""
    y, yhat = _vec(y, "y"), _vec(yhat, "yhat")
    if y.shape != yhat.shape:
        raise DatasetError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size < 3:
        raise DatasetError("spearman needs at least 3 points")
    return pearson(rankdata(y), rankdata(yhat))


def variance_decomposition(residuals, proj: AnchorProjection) -> tuple[float, float]:
    """``(Var(P R), Var((I - P) R))``: the parts of Var(R) explained and unexplained by the anchors."""
    r = _vec(residuals, "residuals")
    if r.size != proj.n:
        raise DatasetError(f"residuals have length {r.size}, projection has {proj.n} rows")
    pr = proj.project(r)
    return float(np.var(pr)), float(np.var(r - pr))


def correlation_ratio(residuals, proj: AnchorProjection) -> float:
    """Basis-limited correlation ratio ``sqrt(Var(P R) / Var(R))``, in [0, 1]."""
    r = _vec(residuals, "residuals")
    total = np.var(r)
    if total == 0:
        raise UndefinedStatisticError("correlation ratio undefined for zero-variance residuals")
    explained, _ = variance_decomposition(r, proj)
    return float(min(1.0, np.sqrt(explained / total)))


def _equal_frequency_bins(v: np.ndarray, bins: int) -> np.ndarray:
    ranks = np.empty(v.size, dtype=np.intp)
    ranks[np.argsort(v, kind="stable")] = np.arange(v.size)
    return ranks * bins // v.size


def mutual_info(residuals, anchor_col, bins: int = 16) -> float:
    """Plug-in mutual information (nats) on an equal-frequency ``bins`` x ``bins`` histogram."""
    x, y = _vec(residuals, "residuals"), _vec(anchor_col, "anchor_col")
    if x.size != y.size:
        raise DatasetError(f"length mismatch: {x.size} vs {y.size}")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if x.size < 10 * bins:
        raise DatasetError(f"need at least {10 * bins} samples for {bins} bins, got {x.size}")
    bx, by = _equal_frequency_bins(x, bins), _equal_frequency_bins(y, bins)
    joint = np.bincount(bx * bins + by, minlength=bins * bins).reshape(bins, bins) / x.size
    px, py = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(px, py)[nz])))


@dataclass
class DiagnosticsReport:
    rmse: float
    rmse_anchor_span: float
    r2: float
    pearson_anchor: list
    spearman_target: float
    corr_ratio: float
    mutual_info: list
    var_decomposition: tuple
    basis: list
    n: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["var_decomposition"] = {"explained": self.var_decomposition[0], "unexplained": self.var_decomposition[1]}
        d["corr_ratio_note"] = "basis-limited lower bound of the population correlation ratio"
        d["mutual_info_units"] = "nats"
        return d


def diagnostics_report(y, yhat, A, proj: AnchorProjection, bins: int = 16) -> DiagnosticsReport:
    """All measures for one prediction set; ``proj`` must be built on the rows of ``A``."""
    y, yhat = _vec(y, "y"), _vec(yhat, "yhat")
    A = np.asarray(A, dtype=float).reshape(y.size, -1)
    r = y - yhat
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = float(1 - np.sum(r ** 2) / ss_tot) if ss_tot > 0 else float("nan")

    def safe(fn, *args):
        try:
            return fn(*args)
        except (UndefinedStatisticError, DatasetError):
            return float("nan")

    return DiagnosticsReport(
        rmse=rmse(y, yhat),
        rmse_anchor_span=rmse_anchor_span(r, proj),
        r2=r2,
        pearson_anchor=[safe(pearson, r, A[:, j]) for j in range(A.shape[1])],
        spearman_target=safe(spearman, y, yhat),
        corr_ratio=safe(correlation_ratio, r, proj),
        mutual_info=[safe(mutual_info, r, A[:, j], bins) for j in range(A.shape[1])],
        var_decomposition=variance_decomposition(r, proj),
        basis=list(proj.basis.terms),
        n=int(y.size),
    )
