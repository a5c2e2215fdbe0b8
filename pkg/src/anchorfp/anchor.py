"""Anchor regression with a ridge penalty.

For anchors ``A`` with column-space projector ``P``, the estimator solves::

    min_b ||(I - P)(Y - X b)||^2 + gamma * ||P (Y - X b)||^2 + lam * ||b||^2

which is ordinary ridge regression on the transformed pair::

    X~ = (I - P) X + sqrt(gamma) P X,    Y~ = (I - P) Y + sqrt(gamma) P Y

gamma = 0 partials the anchors out, gamma = 1 is plain ridge, and
gamma -> inf approaches ridge on ``(P X, P Y)`` (two-stage least squares when
lam = 0). Nonlinear anchors enter through an :class:`AnchorBasis`, which
expands ``A`` column-wise (``[A, A**2, |A|, ...]``) before projecting.

``P`` is never formed: an orthonormal basis ``Q`` of the centered expanded
anchor matrix is kept and ``P M`` is evaluated as ``Q (Q^T M)``.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from .dataset import Dataset, GroupSplit
from .errors import DatasetError, PreprocessingError, RankDeficientError, SingularSystemError

RANK_TOL = 1e-10

_TERMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda a: a,
    "square": np.square,
    "abs": np.abs,
    "cube": lambda a: a ** 3,
}
_POW = re.compile(r"pow(\d+)$")


def _term(name: str):
    if name in _TERMS:
        return _TERMS[name]
    m = _POW.match(name)
    if m and int(m.group(1)) >= 1:
        k = int(m.group(1))
        return lambda a: a ** k
    raise ValueError(f"unknown anchor basis term {name!r}; use one of {sorted(_TERMS)} or 'powK'")


@dataclass(frozen=True)
class AnchorBasis:
    """Ordered scalar functions applied column-wise to the anchors. The first must be ``identity``."""

    terms: tuple[str, ...] = ("identity",)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms or terms[0] != "identity":
            raise ValueError("the first basis term must be 'identity'")
        if len(set(terms)) != len(terms):
            raise ValueError(f"duplicate basis terms: {terms}")
        for t in terms:
            _term(t)
        object.__setattr__(self, "terms", terms)

    def expand(self, A, names=None) -> tuple[np.ndarray, list[str]]:
        """Return ``A_h = [h_1(A) h_2(A) ...]`` (n x q*len(terms)) and its column labels."""
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        names = list(names) if names else [f"A[{j}]" for j in range(A.shape[1])]
        blocks, labels = [], []
        for t in self.terms:
            blocks.append(_term(t)(A))
            labels += [n if t == "identity" else f"{t}({n})" for n in names]
        Ah = np.hstack(blocks) if blocks else np.zeros((A.shape[0], 0))
        return Ah, labels


LINEAR = AnchorBasis()
QUADRATIC = AnchorBasis(("identity", "square"))


class AnchorProjection:
    """Orthogonal projector onto the span of the centered, expanded anchor columns."""

    def __init__(self, Q: np.ndarray, basis: AnchorBasis, labels=()):
        self.Q = np.asarray(Q)
        self.Q.setflags(write=False)
        self.basis = basis
        self.labels = tuple(labels)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def rank(self) -> int:
        return self.Q.shape[1]

    def _check(self, M):
        M = np.asarray(M, dtype=float)
        if M.shape[0] != self.n:
            raise DatasetError(f"projection built for {self.n} rows, got {M.shape[0]}")
        return M

    def project(self, M) -> np.ndarray:
        """``P M`` for a vector or an n-row matrix."""
        M = self._check(M)
        return self.Q @ (self.Q.T @ M)

    def residual(self, M) -> np.ndarray:
        """``(I - P) M``."""
        M = self._check(M)
        return M - self.Q @ (self.Q.T @ M)


def build_projection(A, basis: AnchorBasis = LINEAR, names=None, rank_tol: float = RANK_TOL,
                     strict: bool = True) -> AnchorProjection:
    """Projector onto the column space of the expanded anchors ``basis.expand(A)``.

    Expanded columns are centered individually before the span is taken.
    Singular values below ``rank_tol`` times the largest count as zero; a
    rank-deficient expansion raises :class:`RankDeficientError` naming the
    dependent columns, unless ``strict=False``, in which case those columns
    are dropped.
    """
    Ah, labels = basis.expand(A, names)
    n, k = Ah.shape
    if k == 0:
        return AnchorProjection(np.zeros((n, 0)), basis, ())
    if n <= k and strict:
        raise RankDeficientError(f"need more rows ({n}) than expanded anchor columns ({k})")
    Ah = Ah - Ah.mean(axis=0)
    U, s, _ = np.linalg.svd(Ah, full_matrices=False)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    if rank == k:
        return AnchorProjection(U[:, :k], basis, labels)
    # identify which columns are dependent via pivoted QR
    _, R, piv = scipy.linalg.qr(Ah, mode="economic", pivoting=True)
    dependent = [labels[j] for j in piv[rank:]]
    if strict:
        raise RankDeficientError(
            f"expanded anchor matrix has rank {rank} < {k}; dependent or constant columns: {dependent}",
            dependent)
    kept = sorted(piv[:rank])
    return AnchorProjection(U[:, :rank], basis, [labels[j] for j in kept])


@dataclass(frozen=True)
class HyperParams:
    gamma: float
    lam: float

    def __post_init__(self):
        if not (self.gamma >= 0):
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.lam >= 0) or math.isinf(self.lam):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Regression coefficients plus the settings that produced them."""

    beta: np.ndarray
    hyper: HyperParams
    basis: AnchorBasis = LINEAR
    split: GroupSplit | None = None
    preprocessing_digest: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def p(self) -> int:
        return self.beta.size

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "gamma": self.hyper.gamma if math.isfinite(self.hyper.gamma) else "inf",
            "lambda": self.hyper.lam,
            "basis": list(self.basis.terms),
            "preprocessing_digest": self.preprocessing_digest,
            "split_digest": None if self.split is None else self.split.digest(),
            "split": None if self.split is None else self.split.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Fingerprint":
        split = obj.get("split")
        if split is not None:
            split = GroupSplit(frozenset(split["train_models"]), frozenset(split["test_models"]))
        gamma = obj["gamma"]
        return cls(np.asarray(obj["beta"], dtype=float),
                   HyperParams(math.inf if gamma == "inf" else float(gamma), float(obj["lambda"])),
                   AnchorBasis(tuple(obj.get("basis", ("identity",)))), split,
                   obj.get("preprocessing_digest"), obj.get("meta", {}))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "Fingerprint":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# solvers --------------------------------------------------------------------


def solve_ridge(X, Y, lam: float) -> np.ndarray:
    """Ridge coefficients ``argmin ||Y - X b||^2 + lam ||b||^2`` via the thin SVD of X."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if lam == 0:
        tol = (s[0] if s.size else 0.0) * max(X.shape) * np.finfo(float).eps
        if X.shape[0] < X.shape[1] or not s.size or s[-1] <= tol:
            raise SingularSystemError("X~^T X~ is singular at lambda = 0; use lambda > 0")
        d = 1.0 / s
    else:
        d = s / (s * s + lam)
    return Vt.T @ (d * (U.T @ Y))


def transform_arrays(X, Y, proj: AnchorProjection, gamma: float):
    """``(X~, Y~)`` for arrays; see the module docstring."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] != proj.n or Y.shape[0] != proj.n:
        raise DatasetError(f"projection built for {proj.n} rows, got X {X.shape[0]}, Y {Y.shape[0]}")
    if gamma == 1:
        return X.copy(), Y.copy()
    c = math.sqrt(gamma) - 1.0
    return X + c * proj.project(X), Y + c * proj.project(Y)


def anchor_ridge(X, Y, proj: AnchorProjection, gamma: float, lam: float) -> np.ndarray:
    """Anchor-ridge coefficients for plain arrays (no preprocessing checks)."""
    Xt, Yt = transform_arrays(X, Y, proj, gamma)
    return solve_ridge(Xt, Yt, lam)


def _require_centered(d: Dataset):
    if not d.preprocessing.is_centered:
        raise PreprocessingError("fit requires centered data (standardize/center_columns and center_targets)")


def transform(d: Dataset, proj: AnchorProjection, gamma: float):
    """Transformed pair ``(X~, Y~)`` of dataset ``d``."""
    return transform_arrays(d.X, d.Y, proj, gamma)


def fit(d: Dataset, proj: AnchorProjection, hyper: HyperParams, split: GroupSplit | None = None) -> Fingerprint:
    """Closed-form anchor-ridge fingerprint on a preprocessed dataset."""
    _require_centered(d)
    beta = anchor_ridge(d.X, d.Y, proj, hyper.gamma, hyper.lam)
    return Fingerprint(beta, hyper, proj.basis, split, d.preprocessing.digest())


def fit_iv_limit(d: Dataset, proj: AnchorProjection, lam: float, split: GroupSplit | None = None) -> Fingerprint:
    """The gamma -> infinity case: ridge on ``(P X, P Y)``."""
    _require_centered(d)
    beta = solve_ridge(proj.project(d.X), proj.project(d.Y), lam)
    return Fingerprint(beta, HyperParams(math.inf, lam), proj.basis, split, d.preprocessing.digest())


def predict(f: Fingerprint, X_star) -> np.ndarray:
    """``X_star @ beta``. A :class:`Dataset` argument must carry the fingerprint's preprocessing."""
    if isinstance(X_star, Dataset):
        if f.preprocessing_digest is not None and X_star.preprocessing.digest() != f.preprocessing_digest:
            raise PreprocessingError("dataset was not preprocessed with the fingerprint's training statistics")
        X_star = X_star.X
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[None, :]
    if X_star.shape[1] != f.p:
        raise DatasetError(f"X_star has {X_star.shape[1]} columns, fingerprint has {f.p}")
    return X_star @ f.beta


def objective(X, Y, proj: AnchorProjection, beta, gamma: float, lam: float = 0.0) -> float:
    """Value of the penalized anchor objective at ``beta``."""
    R = np.asarray(Y, dtype=float) - np.asarray(X, dtype=float) @ beta
    PR = proj.project(R)
    return float(np.sum((R - PR) ** 2) + gamma * np.sum(PR ** 2) + lam * np.sum(np.asarray(beta) ** 2))
