"""Run-structured datasets: ingestion, preprocessing and group-aware splits.

A :class:`Dataset` stacks climate-like fields from several simulation runs
into one sample matrix ``X`` (one row per run and time step), with a scalar
target ``Y`` and anchor matrix ``A`` per row. Every row remembers the run it
came from, and every run remembers its model, so splits can be made by model.

On-disk layout
--------------
A JSON manifest::

    {"p": 4, "q": 1,
     "target_name": "co2", "anchor_names": ["solar"],
     "runs": [{"model_id": "m1", "run_id": "r1", "kind": "forced",
               "x_file": "m1_r1_x.csv", "y_file": "m1_r1_y.csv",
               "a_file": "m1_r1_a.csv"}, ...]}

Matrix files are comma-delimited UTF-8 text, one row per time step, ``.`` as
decimal separator, no header. ``a_file`` may be omitted when ``q == 0``.
Relative paths are resolved against the manifest's directory.

All operations return new datasets; arrays are marked read-only.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError, PreprocessingError

KINDS = ("forced", "control")
DEFAULT_WINDOW = 50
_ZERO_VAR_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _digest_arrays(*items) -> str:
    h = hashlib.sha256()
    for item in items:
        if item is None:
            h.update(b"none")
        elif isinstance(item, np.ndarray):
            h.update(str(item.shape).encode())
            h.update(np.ascontiguousarray(item, dtype=float).tobytes())
        else:
            h.update(repr(item).encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class RunMeta:
    model_id: str
    run_id: str
    kind: str
    n_steps: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DatasetError(f"run {self.model_id}/{self.run_id}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.n_steps < 1:
            raise DatasetError(f"run {self.model_id}/{self.run_id}: n_steps must be >= 1")


@dataclass(frozen=True, eq=False)
class PreprocessingState:
    """Statistics recorded by the preprocessing steps.

    ``run_offsets`` holds the per-run means removed by :func:`center_runs`
    (one row per run of the dataset they were computed on). ``x_mean`` and
    ``x_scale`` are the column statistics of :func:`standardize` (or of
    :func:`center_columns`, with unit scale), ``y_mean``/``a_mean`` those of
    :func:`center_targets`.
    """

    window: int | None = None
    run_offsets: np.ndarray | None = None
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    zero_variance: np.ndarray | None = None
    standardized: bool = False
    y_mean: float | None = None
    a_mean: np.ndarray | None = None

    @property
    def x_centered(self) -> bool:
        return self.x_mean is not None

    @property
    def targets_centered(self) -> bool:
        return self.y_mean is not None

    @property
    def is_centered(self) -> bool:
        return self.x_centered and self.targets_centered

    def digest(self) -> str:
        """Short hash of the statistics that must match between train and test data."""
        return _digest_arrays(
            self.window, self.x_mean, self.x_scale, self.standardized,
            None if self.y_mean is None else float(self.y_mean), self.a_mean,
        )

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "window": self.window,
            "x_mean": arr(self.x_mean),
            "x_scale": arr(self.x_scale),
            "zero_variance": arr(self.zero_variance),
            "standardized": self.standardized,
            "y_mean": self.y_mean,
            "a_mean": arr(self.a_mean),
            "digest": self.digest(),
        }


@dataclass(frozen=True)
class GroupSplit:
    train_models: frozenset
    test_models: frozenset

    def __post_init__(self):
        if self.train_models & self.test_models:
            raise DatasetError(f"models on both sides of split: {sorted(self.train_models & self.test_models)}")

    def digest(self) -> str:
        return _digest_arrays(tuple(sorted(self.train_models)), tuple(sorted(self.test_models)))

    def to_dict(self) -> dict:
        return {"train_models": sorted(self.train_models), "test_models": sorted(self.test_models),
                "digest": self.digest()}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Stacked run data. Build with :meth:`from_runs` or :meth:`from_arrays`."""

    X: np.ndarray
    Y: np.ndarray
    A: np.ndarray
    runs: tuple[RunMeta, ...]
    run_index: np.ndarray
    time_index: np.ndarray
    preprocessing: PreprocessingState = field(default_factory=PreprocessingState)
    target_name: str = "target"
    anchor_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = _frozen(self.X)
        if X.ndim != 2:
            raise DatasetError(f"X must be 2-D, got shape {X.shape}")
        n = X.shape[0]
        Y = _frozen(self.Y).reshape(-1)
        A = _frozen(self.A)
        if A.ndim == 1:
            A = _frozen(A.reshape(n, -1) if A.size else np.zeros((n, 0)))
        run_index = np.asarray(self.run_index, dtype=np.intp).copy()
        time_index = np.asarray(self.time_index, dtype=np.intp).copy()
        run_index.setflags(write=False)
        time_index.setflags(write=False)
        for name, arr in (("Y", Y), ("A", A), ("run_index", run_index), ("time_index", time_index)):
            if arr.shape[0] != n:
                raise DatasetError(f"{name} has {arr.shape[0]} rows, X has {n}")
        runs = tuple(self.runs)
        keys = [(r.model_id, r.run_id) for r in runs]
        if len(set(keys)) != len(keys):
            raise DatasetError("(model_id, run_id) pairs must be unique")
        counts = np.bincount(run_index, minlength=len(runs)) if n else np.zeros(len(runs), int)
        if len(counts) != len(runs):
            raise DatasetError("run_index refers to unknown runs")
        for r, c in zip(runs, counts):
            if c != r.n_steps:
                raise DatasetError(f"run {r.model_id}/{r.run_id} declares {r.n_steps} steps but has {c} rows")
        anchor_names = tuple(self.anchor_names)
        if anchor_names and len(anchor_names) != A.shape[1]:
            raise DatasetError(f"{len(anchor_names)} anchor names for {A.shape[1]} anchor columns")
        for k, v in (("X", X), ("Y", Y), ("A", A), ("run_index", run_index), ("time_index", time_index),
                     ("runs", runs), ("anchor_names", anchor_names)):
            object.__setattr__(self, k, v)

    # construction -------------------------------------------------------

    @classmethod
    def from_runs(cls, runs: Iterable[tuple], target_name="target", anchor_names=()) -> "Dataset":
        """Concatenate ``(RunMeta, X_run, Y_run, A_run)`` tuples in order."""
        metas, xs, ys, as_, ridx, tidx = [], [], [], [], [], []
        for i, (meta, x, y, a) in enumerate(runs):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            y = np.asarray(y, dtype=float).reshape(-1)
            a = np.asarray(a, dtype=float).reshape(x.shape[0], -1) if np.size(a) else np.zeros((x.shape[0], 0))
            metas.append(meta)
            xs.append(x)
            ys.append(y)
            as_.append(a)
            ridx.append(np.full(x.shape[0], i))
            tidx.append(np.arange(x.shape[0]))
        if not metas:
            raise DatasetError("no runs")
        ps = {x.shape[1] for x in xs}
        qs = {a.shape[1] for a in as_}
        if len(ps) != 1 or len(qs) != 1:
            raise DatasetError("runs disagree on the number of X or A columns")
        return cls(np.vstack(xs), np.concatenate(ys), np.vstack(as_), tuple(metas),
                   np.concatenate(ridx), np.concatenate(tidx),
                   target_name=target_name, anchor_names=tuple(anchor_names))

    @classmethod
    def from_arrays(cls, X, Y, A=None, models=None, center=False) -> "Dataset":
        """Wrap plain arrays. Each distinct label in ``models`` becomes one forced run.

        With ``center=True`` the columns of X, Y and A are mean-centered
        (:func:`center_columns` then :func:`center_targets`).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        A = np.zeros((n, 0)) if A is None else np.asarray(A, dtype=float).reshape(n, -1)
        labels = np.zeros(n, dtype=int) if models is None else np.asarray(models)
        uniq = list(dict.fromkeys(labels.tolist()))
        order = {m: i for i, m in enumerate(uniq)}
        run_index = np.array([order[m] for m in labels.tolist()])
        time_index = np.zeros(n, dtype=int)
        metas = []
        for i, m in enumerate(uniq):
            rows = np.flatnonzero(run_index == i)
            time_index[rows] = np.arange(len(rows))
            metas.append(RunMeta(str(m), "r0", "forced", len(rows)))
        d = cls(X, np.asarray(Y, dtype=float), A, tuple(metas), run_index, time_index)
        if center:
            d = center_targets(center_columns(d))
        return d

    # accessors ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.A.shape[1]

    @property
    def model_ids(self) -> list[str]:
        return list(dict.fromkeys(r.model_id for r in self.runs))

    @property
    def rows(self) -> list[tuple[RunMeta, int]]:
        return [(self.runs[i], int(t)) for i, t in zip(self.run_index, self.time_index)]

    def run_rows(self, i: int) -> np.ndarray:
        """Row indices of run ``i`` in time order."""
        rows = np.flatnonzero(self.run_index == i)
        return rows[np.argsort(self.time_index[rows], kind="stable")]

    def model_mask(self, models: Iterable[str]) -> np.ndarray:
        models = set(models)
        in_model = np.array([r.model_id in models for r in self.runs], dtype=bool)
        return in_model[self.run_index] if self.n else np.zeros(0, bool)

    def take_rows(self, rows: np.ndarray) -> "Dataset":
        """Subset by row mask/indices; runs that lose all rows are dropped."""
        rows = np.flatnonzero(rows) if np.asarray(rows).dtype == bool else np.asarray(rows, dtype=np.intp)
        kept = list(dict.fromkeys(self.run_index[rows].tolist()))
        remap = {old: new for new, old in enumerate(kept)}
        ridx = np.array([remap[i] for i in self.run_index[rows].tolist()], dtype=np.intp)
        counts = np.bincount(ridx, minlength=len(kept))
        metas = tuple(dataclasses.replace(self.runs[old], n_steps=int(counts[new])) for new, old in enumerate(kept))
        state = self.preprocessing
        if state.run_offsets is not None:
            state = dataclasses.replace(state, run_offsets=_frozen(state.run_offsets[kept]))
        return Dataset(self.X[rows], self.Y[rows], self.A[rows], metas, ridx, self.time_index[rows],
                       state, self.target_name, self.anchor_names)

    def subset_models(self, models: Iterable[str]) -> "Dataset":
        return self.take_rows(self.model_mask(models))

    def with_(self, **changes) -> "Dataset":
        return dataclasses.replace(self, **changes)


def concat(datasets: Sequence[Dataset]) -> Dataset:
    """Stack datasets with identical columns; preprocessing state is reset."""
    parts = []
    for d in datasets:
        for i, meta in enumerate(d.runs):
            rows = d.run_rows(i)
            parts.append((meta, d.X[rows], d.Y[rows], d.A[rows]))
    first = datasets[0]
    return Dataset.from_runs(parts, first.target_name, first.anchor_names)


# ingestion --------------------------------------------------------------


def _read_matrix(path: Path, ncols: int | None, what: str, run_label: str) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"run {run_label}: {what} file not found: {path}")
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float, encoding="utf-8")
    except ValueError as exc:
        raise DatasetError(f"run {run_label}: cannot parse {path}: {exc}") from exc
    bad = np.argwhere(~np.isfinite(m))
    if bad.size:
        r, c = bad[0]
        raise DatasetError(f"run {run_label}: non-finite value in {path} at row {r}, column {c}")
    if ncols is not None and m.shape[1] != ncols:
        raise DatasetError(f"run {run_label}: {what} file {path.name} has {m.shape[1]} columns, expected {ncols}")
    return m


def load_dataset(manifest_path) -> Dataset:
    """Read a manifest (or a directory holding ``manifest.json``) and its per-run files; no preprocessing."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest is not valid JSON: {exc}") from exc
    base = manifest_path.parent
    p, q = manifest.get("p"), manifest.get("q", 0)
    entries = manifest.get("runs") or []
    if not entries:
        raise DatasetError("manifest lists no runs")
    runs = []
    for e in entries:
        label = f"{e['model_id']}/{e['run_id']}"
        x = _read_matrix(base / e["x_file"], p, "x", label)
        y = _read_matrix(base / e["y_file"], 1, "y", label)[:, 0]
        if q:
            if "a_file" not in e:
                raise DatasetError(f"run {label}: a_file required when q > 0")
            a = _read_matrix(base / e["a_file"], q, "a", label)
        else:
            a = np.zeros((x.shape[0], 0))
        if not (x.shape[0] == y.shape[0] == a.shape[0]):
            raise DatasetError(f"run {label}: x, y and a files have different row counts")
        runs.append((RunMeta(str(e["model_id"]), str(e["run_id"]), e.get("kind", "forced"), x.shape[0]), x, y, a))
    lengths = {r[0].n_steps for r in runs}
    if len(lengths) > 1:
        short = min(runs, key=lambda r: r[0].n_steps)[0]
        raise DatasetError(f"runs must have equal length; {short.model_id}/{short.run_id} has {short.n_steps} steps "
                           f"(lengths found: {sorted(lengths)})")
    return Dataset.from_runs(runs, manifest.get("target_name", "target"), manifest.get("anchor_names", ()))


def save_dataset(d: Dataset, directory, manifest_name="manifest.json") -> Path:
    """Write ``d`` in the manifest layout. Values are written with 17 significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, meta in enumerate(d.runs):
        rows = d.run_rows(i)
        stem = f"{meta.model_id}__{meta.run_id}".replace("/", "_")
        entry = {"model_id": meta.model_id, "run_id": meta.run_id, "kind": meta.kind,
                 "x_file": f"{stem}_x.csv", "y_file": f"{stem}_y.csv"}
        np.savetxt(directory / entry["x_file"], d.X[rows], delimiter=",", fmt="%.17g")
        np.savetxt(directory / entry["y_file"], d.Y[rows][:, None], delimiter=",", fmt="%.17g")
        if d.q:
            entry["a_file"] = f"{stem}_a.csv"
            np.savetxt(directory / entry["a_file"], d.A[rows], delimiter=",", fmt="%.17g")
        entries.append(entry)
    manifest = {"p": d.p, "q": d.q, "target_name": d.target_name,
                "anchor_names": list(d.anchor_names), "runs": entries}
    path = directory / manifest_name
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def dataset_digest(d: Dataset) -> dict:
    """Content hash and shape summary used to tag pipeline artifacts."""
    h = hashlib.sha256()
    for arr in (d.X, d.Y, d.A):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(repr([(r.model_id, r.run_id, r.kind, r.n_steps) for r in d.runs]).encode())
    return {"sha256": h.hexdigest(), "n": d.n, "p": d.p, "q": d.q, "n_runs": len(d.runs),
            "n_models": len(d.model_ids), "target_name": d.target_name, "anchor_names": list(d.anchor_names)}


# preprocessing ------------------------------------------------------------


def center_runs(d: Dataset, window: int = DEFAULT_WINDOW) -> Dataset:
    """Subtract from every run the column means of its first ``window`` time steps."""
    if d.preprocessing.window is not None:
        raise PreprocessingError("center_runs already applied")
    if d.preprocessing.x_centered:
        raise PreprocessingError("center_runs must precede column centering/standardization")
    window = int(window)
    if window < 1:
        raise PreprocessingError("window must be >= 1")
    shortest = min(r.n_steps for r in d.runs)
    if window > shortest:
        raise PreprocessingError(f"window {window} exceeds the shortest run ({shortest} steps)")
    X = np.array(d.X)
    offsets = np.zeros((len(d.runs), d.p))
    for i in range(len(d.runs)):
        rows = np.flatnonzero(d.run_index == i)
        first = rows[d.time_index[rows] < window]
        offsets[i] = X[first].mean(axis=0)
        X[rows] -= offsets[i]
    state = dataclasses.replace(d.preprocessing, window=window, run_offsets=_frozen(offsets))
    return d.with_(X=X, preprocessing=state)


def center_columns(d: Dataset) -> Dataset:
    """Remove the column means of X (no scaling); an alternative to :func:`standardize`."""
    if d.preprocessing.x_centered:
        raise PreprocessingError("X columns already centered")
    mean = d.X.mean(axis=0)
    state = dataclasses.replace(d.preprocessing, x_mean=_frozen(mean), x_scale=_frozen(np.ones(d.p)),
                                zero_variance=None, standardized=False)
    return d.with_(X=d.X - mean, preprocessing=state)


def standardize(d: Dataset, require_run_centering: bool = True) -> Dataset:
    """Center and scale each column of X to unit sample standard deviation.

    Columns whose standard deviation is below 1e-12 are set to zero and
    flagged in ``preprocessing.zero_variance`` instead of being dropped.
    """
    state = d.preprocessing
    if state.standardized or state.x_centered:
        raise PreprocessingError("standardize already applied")
    if require_run_centering and state.window is None:
        raise PreprocessingError("standardize requires center_runs first")
    mean = d.X.mean(axis=0)
    scale = d.X.std(axis=0, ddof=1) if d.n > 1 else np.zeros(d.p)
    zero = scale < _ZERO_VAR_TOL
    scale = np.where(zero, 1.0, scale)
    X = (d.X - mean) / scale
    X[:, zero] = 0.0
    state = dataclasses.replace(state, x_mean=_frozen(mean), x_scale=_frozen(scale),
                                zero_variance=np.array(zero), standardized=True)
    return d.with_(X=X, preprocessing=state)


def center_targets(d: Dataset, y_mean: float | None = None, a_mean=None) -> Dataset:
    """Center Y and the columns of A, by their own means or by supplied (training) means."""
    if d.preprocessing.targets_centered:
        raise PreprocessingError("center_targets already applied")
    y_mean = float(d.Y.mean()) if y_mean is None else float(y_mean)
    a_mean = d.A.mean(axis=0) if a_mean is None else np.asarray(a_mean, dtype=float).reshape(d.q)
    state = dataclasses.replace(d.preprocessing, y_mean=y_mean, a_mean=_frozen(a_mean))
    return d.with_(Y=d.Y - y_mean, A=d.A - a_mean, preprocessing=state)


def preprocess(d: Dataset, window: int | None = DEFAULT_WINDOW, scale: bool = True) -> Dataset:
    """Run centering (if ``window``), column standardization (or centering) and target centering."""
    if window is not None:
        d = center_runs(d, window)
    if scale:
        d = standardize(d, require_run_centering=window is not None)
    else:
        d = center_columns(d)
    return center_targets(d)


def apply_preprocessing(d: Dataset, state: PreprocessingState) -> Dataset:
    """Preprocess fresh data with statistics recorded on training data.

    Run centering is recomputed per run (it only uses each run's own first
    steps); column and target statistics are taken from ``state``.
    """
    if d.preprocessing.window is not None or d.preprocessing.x_centered or d.preprocessing.targets_centered:
        raise PreprocessingError("dataset is already preprocessed")
    if state.window is not None:
        d = center_runs(d, state.window)
    if state.x_mean is not None:
        X = (d.X - state.x_mean) / state.x_scale
        if state.zero_variance is not None:
            X[:, state.zero_variance] = 0.0
        d = d.with_(X=X, preprocessing=dataclasses.replace(
            d.preprocessing, x_mean=state.x_mean, x_scale=state.x_scale,
            zero_variance=state.zero_variance, standardized=state.standardized))
    if state.y_mean is not None:
        d = center_targets(d, state.y_mean, state.a_mean)
    return d


# splitting ------------------------------------------------------------------


def split_models(d: Dataset | Sequence[str], seed, train_fraction: float = 0.5) -> GroupSplit:
    """Random partition of model ids with ``ceil(train_fraction * n_models)`` on the train side."""
    models = d.model_ids if isinstance(d, Dataset) else list(dict.fromkeys(d))
    if len(models) < 2:
        raise DatasetError(f"need at least 2 models to split, got {len(models)}")
    if not 0 < train_fraction <= 1:
        raise DatasetError("train_fraction must be in (0, 1]")
    n_train = math.ceil(round(train_fraction * len(models), 9))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(models))
    train = frozenset(models[i] for i in perm[:n_train])
    return GroupSplit(train, frozenset(models) - train)
