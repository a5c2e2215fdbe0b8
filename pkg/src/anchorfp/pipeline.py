"""Configuration, orchestration and persistence of a full fingerprint analysis.

A run is described by one JSON file::

    {
      "schema_version": 1,
      "mode": "attribution",              # or "detection"
      "target_forcing": "co2",
      "anchor_forcings": ["solar"],
      "basis": ["identity"],
      "grid": {"gammas": [1, 10, 100], "lambdas": {"logspace": [0, 9, 50]}},
      "weights": [0.5, 0.5],
      "B": 50, "K": 3, "alpha_star": 0.05, "seed": 0, "window": 50,
      "data": {"manifest": "data/manifest.json"},   # or {"simulate": {...}}
      "paths": {"out": "runs"}
    }

Relative paths resolve against the config file's directory. Detection mode
ignores anchors: the anchor set is emptied, gamma is fixed to 1 and only the
RMSE objective is used. With simulated data the detection target is the sum
of all forcing series (the total forcing).

:func:`run_pipeline` writes into ``<out>/run-<UTC timestamp>/``::

    config.json            resolved configuration
    dataset_digest.json    data fingerprint (shape, run list, sha256)
    selection/member_NNN.csv
    members.json           per-member split and selected hyperparameters
    fingerprint.json       aggregated (subagged) fingerprint
    diagnostics.json       out-of-bag (and external test) diagnostics
    test_report.json       type I error and power per model
    statistics.json        every run statistic used by the test
    predictions.json       out-of-bag predictions with targets and anchors
    plot_alpha_power.csv, plot_statistics.csv, plot_selection.csv, plot_scatter.csv

The ``plot_*`` files are pure functions of the JSON artifacts and are
regenerated byte for byte by :func:`write_plot_data`.
"""
from __future__ import annotations

import copy
import csv
import datetime as _dt
import json
import math
import shutil
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .anchor import LINEAR, AnchorBasis, build_projection
from .dataset import Dataset, dataset_digest, load_dataset, preprocess
from .diagnostics import diagnostics_report
from .errors import ConfigError, DatasetError
from .hyptest import TAILS, TestReport, evaluate_ensemble, reference_forcing
from .scm import (Intervention, ScmSpec, co2_ramp, ensemble, make_loadings, motivating_scenario,
                  quadratic_scenario)
from .selection import (DEFAULT_GAMMAS, Grid, SubagEnsemble, cv_objectives, ensemble_predict, kfold_groups,
                        out_of_bag_predict, select_index, subag)

SCHEMA_VERSION = 1
MODES = ("detection", "attribution")
SCENARIOS = ("ensemble", "motivating", "quadratic")
FORCING_SHAPES = ("co2_ramp", "linear", "exponential", "sine", "zero", "values")

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "mode": "attribution",
    "anchor_forcings": [],
    "basis": ["identity"],
    "grid": {"gammas": list(DEFAULT_GAMMAS), "lambdas": {"logspace": [0, 9, 50]}},
    "weights": [0.5, 0.5],
    "B": 50,
    "K": 3,
    "alpha_star": 0.05,
    "seed": 0,
    "window": 50,
    "scale": True,
    "tails": "two_tailed",
    "threshold_mode": "gaussian",
    "refit": "averaged",
    "train_fraction": 0.5,
    "paths": {"out": "runs"},
}


# configuration ----------------------------------------------------------


@dataclass
class PipelineConfig:
    """Validated, resolved configuration. Build with :meth:`from_dict` or :meth:`load`."""

    raw: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, obj: dict, base_dir=".") -> "PipelineConfig":
        merged = copy.deepcopy(DEFAULTS)
        for k, v in obj.items():
            merged[k] = copy.deepcopy(v)
        cfg = cls(merged, Path(base_dir))
        findings = validate_dict(merged, cfg.base_dir)
        if findings:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(findings), findings)
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(_read_json(path), path.parent)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def detection(self) -> bool:
        return self.raw["mode"] == "detection"

    @property
    def basis(self) -> AnchorBasis:
        return LINEAR if self.detection else AnchorBasis(tuple(self.raw["basis"]))

    @property
    def grid(self) -> Grid:
        g = _grid_from(self.raw["grid"])
        return Grid((1.0,), g.lambdas) if self.detection else g

    @property
    def weights(self) -> tuple:
        return (1.0, 0.0) if self.detection else tuple(float(w) for w in self.raw["weights"])

    @property
    def out_dir(self) -> Path:
        return self.base_dir / self.raw.get("paths", {}).get("out", "runs")

    def with_overrides(self, seed=None) -> "PipelineConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        return PipelineConfig(raw, self.base_dir)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _read_json(path: Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return obj


def _lambdas_from(spec) -> tuple:
    if isinstance(spec, dict) and "logspace" in spec:
        lo, hi, num = spec["logspace"]
        return tuple(np.logspace(float(lo), float(hi), int(num)))
    return tuple(float(x) for x in spec)


def _grid_from(obj) -> Grid:
    return Grid(tuple(float(g) for g in obj.get("gammas", DEFAULT_GAMMAS)),
                _lambdas_from(obj.get("lambdas", {"logspace": [0, 9, 50]})))


def _available(cfg: dict, base_dir: Path):
    """``(forcing names, target name or None, number of models)`` of the configured data source."""
    data = cfg.get("data") or {}
    if "manifest" in data:
        man = _read_json(base_dir / data["manifest"])
        names = [man.get("target_name", "target")] + list(man.get("anchor_names", []))
        models = list(dict.fromkeys(r.get("model_id") for r in man.get("runs", [])))
        return names, man.get("target_name", "target"), len(models)
    sim = data.get("simulate") or {}
    scenario = sim.get("scenario", "ensemble")
    if scenario == "motivating":
        reps = int(sim.get("replicates", 4))
        return ["co2", "solar"], "co2", reps * len(sim.get("train_levels", (-6, 0, 6)))
    if scenario == "quadratic":
        return ["target", "anchor"], "target", int(sim.get("n_models", 20))
    return list((sim.get("forcings") or {}).keys()), None, int(sim.get("n_models", 20))


def validate_dict(cfg: dict, base_dir: Path = Path(".")) -> list[str]:
    """Every problem found in a merged configuration, as ``"field.path: message"`` strings."""
    f: list[str] = []
    if cfg.get("schema_version") != SCHEMA_VERSION:
        f.append(f"schema_version: must be {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}")
    mode = cfg.get("mode")
    if mode not in MODES:
        f.append(f"mode: must be one of {MODES}, got {mode!r}")
    target = cfg.get("target_forcing")
    anchors = cfg.get("anchor_forcings") or []
    if not isinstance(target, str) or not target:
        f.append("target_forcing: required")
    if not isinstance(anchors, list) or not all(isinstance(a, str) for a in anchors):
        f.append("anchor_forcings: must be a list of names")
        anchors = []
    if target in anchors:
        f.append(f"anchor_forcings: the target forcing {target!r} cannot be an anchor")
    if len(set(anchors)) != len(anchors):
        f.append("anchor_forcings: duplicate names")
    if mode == "attribution" and not anchors:
        f.append("anchor_forcings: attribution mode requires at least one anchor")
    try:
        AnchorBasis(tuple(cfg.get("basis") or ()))
    except ValueError as exc:
        f.append(f"basis: {exc}")
    try:
        _grid_from(cfg.get("grid") or {})
    except (ValueError, TypeError, KeyError) as exc:
        f.append(f"grid: {exc}")
    w = cfg.get("weights")
    try:
        w = [float(x) for x in w]
        if len(w) != 2:
            f.append("weights: need exactly two weights (w1, w2)")
        elif any(x < 0 for x in w):
            f.append("weights: must be nonnegative")
        elif not math.isclose(sum(w), 1.0, abs_tol=1e-9):
            f.append(f"weights: weights must sum to 1, got {sum(w):g}")
    except (TypeError, ValueError):
        f.append("weights: must be two numbers")
    B, K = cfg.get("B"), cfg.get("K")
    if not isinstance(B, int) or B < 1:
        f.append(f"B: must be an integer >= 1, got {B!r}")
    if not isinstance(K, int) or K < 2:
        f.append(f"K: must be an integer >= 2, got {K!r}")
    a = cfg.get("alpha_star")
    if not isinstance(a, (int, float)) or not 0 < a < 1:
        f.append(f"alpha_star: must be in (0, 1), got {a!r}")
    if not isinstance(cfg.get("seed"), int) or cfg["seed"] < 0:
        f.append("seed: must be a nonnegative integer")
    win = cfg.get("window")
    if win is not None and (not isinstance(win, int) or win < 1):
        f.append("window: must be null or an integer >= 1")
    if cfg.get("tails") not in TAILS:
        f.append(f"tails: must be one of {TAILS}")
    if cfg.get("threshold_mode") not in ("gaussian", "empirical"):
        f.append("threshold_mode: must be 'gaussian' or 'empirical'")
    if cfg.get("refit") not in ("averaged", "full"):
        f.append("refit: must be 'averaged' or 'full'")
    tf = cfg.get("train_fraction")
    if not isinstance(tf, (int, float)) or not 0 < tf < 1:
        f.append("train_fraction: must be in (0, 1)")
    f += _validate_data(cfg, base_dir, target, anchors, mode, K, tf)
    return f


def _validate_data(cfg, base_dir, target, anchors, mode, K, tf) -> list[str]:
    f = []
    data = cfg.get("data")
    if not isinstance(data, dict) or not (("manifest" in data) ^ ("simulate" in data)):
        return ["data: must contain exactly one of 'manifest' or 'simulate'"]
    if "manifest" in data and not (base_dir / data["manifest"]).exists():
        return [f"data.manifest: file not found: {data['manifest']}"]
    if "simulate" in data:
        sim = data["simulate"]
        scen = sim.get("scenario", "ensemble")
        if scen not in SCENARIOS:
            return [f"data.simulate.scenario: must be one of {SCENARIOS}, got {scen!r}"]
        if scen == "ensemble":
            forcings = sim.get("forcings")
            if not isinstance(forcings, dict) or len(forcings) < 2:
                return ["data.simulate.forcings: need at least two named forcings"]
            for name, fs in forcings.items():
                shape = (fs or {}).get("shape", "zero")
                if shape not in FORCING_SHAPES:
                    f.append(f"data.simulate.forcings.{name}.shape: must be one of {FORCING_SHAPES}")
            for i, iv in enumerate(sim.get("interventions", [])):
                if iv.get("forcing") == target:
                    f.append(f"data.simulate.interventions[{i}]: interventions cannot act on the target")
    try:
        names, data_target, n_models = _available(cfg, base_dir)
    except ConfigError as exc:
        return [f"data.manifest: {exc}"]
    if mode == "detection" and target == "total" and "simulate" in data:
        pass
    elif isinstance(target, str) and target not in names:
        f.append(f"target_forcing: unknown forcing {target!r}; available: {names}")
    elif data_target is not None and target != data_target:
        f.append(f"target_forcing: the data's target is {data_target!r}, got {target!r}")
    for a in anchors:
        if a not in names:
            f.append(f"anchor_forcings: unknown forcing {a!r}; available: {names}")
    if isinstance(K, int) and isinstance(tf, (int, float)) and 0 < tf < 1:
        n_train = math.ceil(round(tf * n_models, 9))
        if K > n_train:
            f.append(f"K: {K} folds exceed the {n_train} training models per member ({n_models} models)")
    return f


def validate_config(config_path) -> list[str]:
    """All findings for a config file without running anything; raises only if it does not parse."""
    path = Path(config_path)
    merged = copy.deepcopy(DEFAULTS)
    merged.update(_read_json(path))
    return validate_dict(merged, path.parent)


# data -------------------------------------------------------------------


def _forcing_series(fs: dict, u: int) -> np.ndarray:
    shape = fs.get("shape", "zero")
    t = np.arange(u, dtype=float)
    amp = float(fs.get("amplitude", 1.0))
    if shape == "co2_ramp":
        return co2_ramp(u, float(fs.get("rate", 0.01))) * amp
    if shape == "linear":
        return amp * t / max(u - 1, 1)
    if shape == "exponential":
        e = np.exp(t / float(fs.get("scale", u / 3.0)))
        return amp * (e - e[0]) / (e[-1] - e[0])
    if shape == "sine":
        return amp * np.sin(2 * np.pi * t / float(fs.get("period", 11.0)))
    if shape == "values":
        v = np.asarray(fs["values"], dtype=float)
        if v.size != u:
            raise ConfigError(f"forcing values have length {v.size}, expected {u}")
        return v
    return np.zeros(u)


def simulate(cfg: PipelineConfig) -> tuple[Dataset, Dataset | None]:
    """Generate ``(data, external test set or None)`` from ``data.simulate``."""
    sim = dict(cfg["data"]["simulate"])
    scen = sim.pop("scenario", "ensemble")
    seed = int(sim.pop("seed", cfg["seed"]))
    if scen == "motivating":
        return motivating_scenario(seed, **sim)
    if scen == "quadratic":
        return quadratic_scenario(seed, **sim)
    u = int(sim.get("n_steps", 165))
    p = int(sim.get("p", 50))
    forcings = sim["forcings"]
    names = list(forcings)
    target = sim.get("target", cfg["target_forcing"] if cfg["target_forcing"] in forcings else names[0])
    anchors = [n for n in names if n != target]
    ss_load, ss_data = np.random.SeedSequence(seed).spawn(2)
    pats = make_loadings(p, [target] + anchors, ss_load, float(sim.get("cosine", 0.5)))
    loadings = {n: float(forcings[n].get("gain", 1.0)) * pats[n] for n in names}
    spec = ScmSpec(p, {n: _forcing_series(forcings[n], u) for n in names}, loadings, target, tuple(anchors),
                   float(sim.get("noise_sigma", 1.0)), float(sim.get("noise_corr_len", 3.0)), seed)
    ivs = [Intervention(iv["forcing"], iv.get("kind", "shift"), float(iv["magnitude"]), "train")
           for iv in sim.get("interventions", [])]
    d = ensemble(spec, int(sim.get("n_models", 20)), int(sim.get("forced_runs", 5)),
                 int(sim.get("control_runs", 5)), float(sim.get("loading_spread", 0.2)),
                 float(sim.get("noise_spread", 0.2)), ivs, "train", ss_data)
    return d, None


def load_data(cfg: PipelineConfig) -> tuple[Dataset, Dataset | None]:
    """Data for the analysis, restricted to the configured target and anchors."""
    if "manifest" in cfg["data"]:
        d, test = load_dataset(cfg.base_dir / cfg["data"]["manifest"]), None
    else:
        d, test = simulate(cfg)
    return _select_columns(d, cfg), None if test is None else _select_columns(test, cfg)


def _select_columns(d: Dataset, cfg: PipelineConfig) -> Dataset:
    if cfg.detection:
        Y = d.Y + d.A.sum(axis=1) if cfg["target_forcing"] == "total" else d.Y
        return d.with_(Y=Y, A=np.zeros((d.n, 0)), anchor_names=(),
                       target_name="total" if cfg["target_forcing"] == "total" else d.target_name)
    names = list(d.anchor_names) or [f"A{j}" for j in range(d.q)]
    idx = [names.index(a) for a in cfg["anchor_forcings"]]
    return d.with_(A=d.A[:, idx], anchor_names=tuple(cfg["anchor_forcings"]))


# stages -----------------------------------------------------------------


def fit_ensemble(d: Dataset, cfg: PipelineConfig, jobs: int = 1) -> SubagEnsemble:
    with warnings.catch_warnings():
        if cfg.detection:
            warnings.simplefilter("ignore", RuntimeWarning)
        return subag(d, cfg["B"], cfg["seed"], cfg.grid, cfg.basis, cfg.weights, cfg["K"], cfg["window"],
                     cfg["scale"], cfg["train_fraction"], cfg["refit"], jobs=jobs)


def select_all(d: Dataset, cfg: PipelineConfig):
    """Grouped K-fold selection on all models at once: ``(table, gamma*, lambda*)``."""
    dp = preprocess(d, cfg["window"], cfg["scale"])
    folds = kfold_groups(dp.model_ids, cfg["K"], cfg["seed"])
    table = cv_objectives(dp, folds, cfg.grid, cfg.basis, cfg.weights)
    i = select_index(table)
    return table, float(table.gamma[i]), float(table.lam[i])


def _diagnostics(y, yhat, d: Dataset, basis: AnchorBasis) -> dict:
    ok = np.isfinite(yhat)
    A = d.A[ok]
    proj = build_projection(A, basis, strict=False)
    rep = diagnostics_report(y[ok], yhat[ok], A, proj).to_dict()
    rep["n_excluded"] = int((~ok).sum())
    return rep


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(o, float):
        return o if math.isfinite(o) else None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(path: Path, obj) -> Path:
    obj = json.loads(json.dumps(obj, default=_json_default))
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_fit_artifacts(directory: Path, ens: SubagEnsemble, cfg: PipelineConfig) -> None:
    sel = directory / "selection"
    sel.mkdir(exist_ok=True)
    members = []
    for m in ens.members:
        m.table.write_csv(sel / f"member_{m.index:03d}.csv", include_gamma=not cfg.detection,
                          include_anchor=not cfg.detection)
        i = int(np.flatnonzero((m.table.gamma == m.hyper.gamma) & (m.table.lam == m.hyper.lam))[0])
        members.append({"member": m.index, "train_models": sorted(m.split.train_models),
                        "test_models": sorted(m.split.test_models), "gamma": m.hyper.gamma,
                        "lambda": m.hyper.lam, "rmse": float(m.table.rmse[i]),
                        "rmse_anchor_span": float(m.table.rmse_anchor_span[i]),
                        "folds": [sorted(f) for f in m.folds], "preprocessing_digest": m.state.digest()})
    write_json(directory / "members.json", {"members": members, "detection": cfg.detection})
    fp = ens.aggregate_fingerprint()
    write_json(directory / "fingerprint.json", fp.to_dict())


def _statistics_table(report: TestReport) -> list[dict]:
    rows = []
    for b, stats in enumerate(report.member_stats or []):
        for model, s in stats.items():
            for kind, values in (("control", s.null), ("forced", s.alt)):
                for r, t in enumerate(values):
                    rows.append({"member": b, "model_id": model, "kind": kind, "index": r, "statistic": t})
    return rows


def write_plot_data(directory) -> list[Path]:
    """(Re)generate the ``plot_*.csv`` files from the JSON artifacts in ``directory``."""
    directory = Path(directory)
    out = []
    report = json.loads((directory / "test_report.json").read_text(encoding="utf-8"))
    p = directory / "plot_alpha_power.csv"
    with p.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", "alpha", "power"])
        for row in report["per_model"]:
            w.writerow([row["model_id"], "" if row["alpha"] is None else repr(row["alpha"]),
                        "" if row["power"] is None else repr(row["power"])])
    out.append(p)
    stats_path = directory / "statistics.json"
    if stats_path.exists():
        stats = json.loads(stats_path.read_text(encoding="utf-8"))
        p = directory / "plot_statistics.csv"
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member", "model_id", "kind", "index", "statistic"])
            for row in stats["statistics"]:
                w.writerow([row["member"], row["model_id"], row["kind"], row["index"], repr(row["statistic"])])
        out.append(p)
    pred_path = directory / "predictions.json"
    if pred_path.exists():
        pred = json.loads(pred_path.read_text(encoding="utf-8"))
        p = directory / "plot_scatter.csv"
        names = pred["anchor_names"]
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", "yhat", "residual"] + names)
            for y, yhat, a in zip(pred["y"], pred["yhat"], pred["A"]):
                if yhat is None:
                    continue
                w.writerow([repr(y), repr(yhat), repr(y - yhat)] + [repr(v) for v in a])
        out.append(p)
    members_path = directory / "members.json"
    if members_path.exists():
        members = json.loads(members_path.read_text(encoding="utf-8"))
        p = directory / "plot_selection.csv"
        detection = members.get("detection", False)
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member"] + ([] if detection else ["gamma"]) + ["lambda", "rmse"]
                       + ([] if detection else ["rmse_anchor_span"]))
            for m in members["members"]:
                w.writerow([m["member"]] + ([] if detection else [repr(m["gamma"])]) + [repr(m["lambda"]),
                           repr(m["rmse"])] + ([] if detection else [repr(m["rmse_anchor_span"])]))
        out.append(p)
    return out


def _new_run_dir(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    d = out / f"run-{stamp}"
    k = 1
    while d.exists() or d.with_name(d.name + ".partial").exists():
        d = out / f"run-{stamp}-{k}"
        k += 1
    return d


class _Staging:
    """Write into ``<final>.partial`` and rename on success; remove it on failure."""

    def __init__(self, final: Path):
        self.final = final
        self.tmp = final.with_name(final.name + ".partial")

    def __enter__(self) -> Path:
        self.tmp.mkdir(parents=True)
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.tmp.rename(self.final)
        else:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


@dataclass
class PipelineResult:
    directory: Path
    ensemble: SubagEnsemble
    report: TestReport
    diagnostics: dict


def run_pipeline(config, out=None, seed=None, jobs: int = 1) -> PipelineResult:
    """Simulate or load data, fit the subagged fingerprint, test, and persist every artifact.

    ``config`` is a path or a :class:`PipelineConfig`. Raises
    :class:`~anchorfp.errors.ConfigError` for invalid configurations; on any
    failure the partially written directory is removed.
    """
    cfg = config if isinstance(config, PipelineConfig) else PipelineConfig.load(config)
    cfg = cfg.with_overrides(seed)
    out = Path(out) if out is not None else cfg.out_dir
    final = _new_run_dir(out)
    with _Staging(final) as tmp:
        d, test = load_data(cfg)
        write_json(tmp / "config.json", cfg.to_dict())
        write_json(tmp / "dataset_digest.json", dataset_digest(d))
        ens = fit_ensemble(d, cfg, jobs)
        write_fit_artifacts(tmp, ens, cfg)
        forcing = _forcing_of_interest(d, cfg)
        report = evaluate_ensemble(ens, d, cfg["alpha_star"], cfg["tails"], cfg["threshold_mode"], forcing, jobs)
        write_json(tmp / "test_report.json", report.to_dict())
        write_json(tmp / "statistics.json", {"statistics": _statistics_table(report)})
        oob = out_of_bag_predict(ens, d)
        diag = {"out_of_bag": _diagnostics(d.Y, oob, d, cfg.basis)}
        write_json(tmp / "predictions.json", {"anchor_names": list(d.anchor_names), "y": d.Y, "yhat": oob,
                                              "A": d.A})
        if test is not None:
            diag["external_test"] = _diagnostics(test.Y, ensemble_predict(ens, test), test, cfg.basis)
        write_json(tmp / "diagnostics.json", diag)
        write_plot_data(tmp)
    return PipelineResult(final, ens, report, diag)


def _forcing_of_interest(d: Dataset, cfg: PipelineConfig):
    """Series the run statistics correlate with: mean target over forced runs (see ``reference_forcing``)."""
    try:
        return reference_forcing(d)
    except DatasetError as exc:
        raise ConfigError(f"cannot derive the forcing of interest: {exc}") from exc


__all__ = ["PipelineConfig", "PipelineResult", "validate_config", "validate_dict", "run_pipeline", "simulate",
           "load_data", "fit_ensemble", "select_all", "write_plot_data", "write_fit_artifacts", "write_json"]
