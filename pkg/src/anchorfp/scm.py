"""Synthetic structural causal model for climate-like fields.

Every run mixes a few named exogenous forcing series into a ``p``-cell field::

    X_t = sum_f loading_f * F_f(t) + eps_t

with ``eps_t`` Gaussian, standard deviation ``noise_sigma`` in every cell and
a squared-exponential correlation ``exp(-d^2 / (2 l^2))`` between cells ``d``
apart on a 1-D grid. One forcing is the target ``Y``; the others are anchors
``A``. Shift and scale interventions act on anchor series only, so ``Y`` is
never affected by them. An anchor listed in ``ScmSpec.quadratic`` enters the
mixing as ``a * loading + c * a**2 * quadratic_loading`` while ``A`` still
records ``a``; ``quadratic_loading`` defaults to the anchor's own loading,
giving ``(a + c * a**2) * loading``.

Control runs set every forcing series to zero before interventions are
applied, which lets an intervention hold an anchor at a fixed level in an
otherwise unforced run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset, RunMeta, concat

KINDS = ("forced", "control")
PHASES = ("train", "test")

# 1 % per year compounding CO2 gives a radiative forcing 5.35 * ln(C/C0) W m-2
CO2_FORCING_COEF = 5.35


def co2_ramp(n_steps: int = 140, rate: float = 0.01) -> np.ndarray:
    """Forcing of a CO2 concentration compounding at ``rate`` per step, steps 1..n_steps."""
    t = np.arange(1, n_steps + 1, dtype=float)
    return CO2_FORCING_COEF * t * math.log1p(rate)


def solar_radiative_forcing(delta_S0: float, albedo: float) -> float:
    """Radiative forcing of a change ``delta_S0`` in the solar constant: ``delta_S0 * (1 - albedo) / 4``."""
    if not 0 <= albedo <= 1:
        raise ValueError(f"albedo must be in [0, 1], got {albedo}")
    return delta_S0 * (1.0 - albedo) / 4.0


@dataclass(frozen=True)
class Intervention:
    """Shift (add ``magnitude``) or scale (multiply by ``magnitude``) one anchor series."""

    forcing_name: str
    kind: str = "shift"
    magnitude: float = 0.0
    applies_to: str = "test"

    def __post_init__(self):
        if self.kind not in ("shift", "scale"):
            raise ValueError(f"intervention kind must be 'shift' or 'scale', got {self.kind!r}")
        if self.applies_to not in PHASES:
            raise ValueError(f"applies_to must be one of {PHASES}, got {self.applies_to!r}")
        if not math.isfinite(self.magnitude):
            raise ValueError("intervention magnitude must be finite")

    def apply(self, series: np.ndarray) -> np.ndarray:
        return series + self.magnitude if self.kind == "shift" else series * self.magnitude


@dataclass(frozen=True, eq=False)
class ScmSpec:
    """Generator settings. ``forcings`` and ``loadings`` map forcing names to series / p-vectors."""

    p: int
    forcings: Mapping[str, np.ndarray]
    loadings: Mapping[str, np.ndarray]
    target: str
    anchors: tuple[str, ...]
    noise_sigma: float = 1.0
    noise_corr_len: float = 5.0
    seed: int = 0
    quadratic: Mapping[str, float] = field(default_factory=dict)
    quadratic_loadings: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        forcings = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.forcings.items()}
        loadings = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.loadings.items()}
        anchors = tuple(self.anchors)
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be > 0")
        if self.noise_corr_len < 0:
            raise ValueError("noise_corr_len must be >= 0")
        if self.target not in forcings:
            raise ValueError(f"target {self.target!r} is not a forcing")
        if not anchors:
            raise ValueError("at least one anchor forcing is required")
        if self.target in anchors:
            raise ValueError(f"the target {self.target!r} cannot also be an anchor")
        lengths = {v.size for v in forcings.values()}
        if len(lengths) != 1:
            raise ValueError("forcing series differ in length")
        for name in (self.target, *anchors):
            if name not in forcings:
                raise ValueError(f"unknown forcing {name!r}")
        for name, f in forcings.items():
            if name not in loadings:
                raise ValueError(f"forcing {name!r} has no loading")
            if loadings[name].size != self.p or not np.all(np.isfinite(loadings[name])):
                raise ValueError(f"loading of {name!r} must be a finite {self.p}-vector")
            if not np.all(np.isfinite(f)):
                raise ValueError(f"forcing series {name!r} is not finite")
        for name in self.quadratic:
            if name not in anchors:
                raise ValueError(f"quadratic term on {name!r}, which is not an anchor")
        qload = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.quadratic_loadings.items()}
        for name, v in qload.items():
            if name not in self.quadratic:
                raise ValueError(f"quadratic loading for {name!r}, which has no quadratic term")
            if v.size != self.p or not np.all(np.isfinite(v)):
                raise ValueError(f"quadratic loading of {name!r} must be a finite {self.p}-vector")
        object.__setattr__(self, "quadratic_loadings", qload)
        object.__setattr__(self, "forcings", forcings)
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "quadratic", dict(self.quadratic))

    @property
    def n_steps(self) -> int:
        return next(iter(self.forcings.values())).size

    def replace(self, **changes) -> "ScmSpec":
        kw = {k: getattr(self, k) for k in ("p", "forcings", "loadings", "target", "anchors", "noise_sigma",
                                             "noise_corr_len", "seed", "quadratic", "quadratic_loadings")}
        kw.update(changes)
        return ScmSpec(**kw)


def noise_factor(p: int, corr_len: float) -> np.ndarray:
    """Matrix ``L`` with ``L @ L.T`` the squared-exponential correlation matrix of ``p`` cells."""
    if corr_len == 0:
        return np.eye(p)
    d = np.arange(p)[:, None] - np.arange(p)[None, :]
    C = np.exp(-(d * d) / (2.0 * corr_len ** 2))
    w, V = np.linalg.eigh(C)
    L = V * np.sqrt(np.clip(w, 0.0, None))
    # renormalize rows so every cell keeps unit variance after clipping
    return L / np.linalg.norm(L, axis=1, keepdims=True)


def make_loadings(p: int, names: Sequence[str], seed=0, cosine: float = 0.5, smooth: float = 3.0) -> dict:
    """Spatial patterns with cosine similarity ``cosine`` between the first and each other name.

    Patterns are smoothed random fields scaled to norm ``sqrt(p)`` (unit
    root-mean-square per cell). The remaining patterns are orthogonal to each
    other apart from their shared component along the first.
    """
    if not -1 <= cosine <= 1:
        raise ValueError("cosine must be in [-1, 1]")
    rng = np.random.default_rng(seed)
    L = noise_factor(p, smooth)
    raw = L @ rng.standard_normal((p, len(names)))
    Q, _ = np.linalg.qr(raw)
    if Q.shape[1] < len(names):
        raise ValueError(f"p={p} is too small for {len(names)} orthogonal patterns")
    out = {names[0]: Q[:, 0] * math.sqrt(p)}
    s = math.sqrt(1.0 - cosine ** 2)
    for j, name in enumerate(names[1:], start=1):
        out[name] = (cosine * Q[:, 0] + s * Q[:, j]) * math.sqrt(p)
    return out


def _seq(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _noise(spec: ScmSpec, rng: np.random.Generator, u: int, L=None) -> np.ndarray:
    L = noise_factor(spec.p, spec.noise_corr_len) if L is None else L
    return spec.noise_sigma * (rng.standard_normal((u, spec.p)) @ L.T)


def run_series(spec: ScmSpec, kind: str, interventions: Sequence[Intervention] = (), phase: str = "train"):
    """Per-forcing series of one run after control zeroing and interventions."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    series = {k: (v.copy() if kind == "forced" else np.zeros_like(v)) for k, v in spec.forcings.items()}
    for iv in interventions:
        if iv.forcing_name == spec.target:
            raise ValueError(f"intervention on the target forcing {spec.target!r}; interventions act on anchors only")
        if iv.forcing_name not in spec.anchors:
            raise ValueError(f"intervention on unknown anchor {iv.forcing_name!r}")
        if iv.applies_to == phase:
            series[iv.forcing_name] = iv.apply(series[iv.forcing_name])
    return series


def signal(spec: ScmSpec, series: Mapping[str, np.ndarray]) -> np.ndarray:
    """Noise-free field: the loading-weighted sum of the forcing series plus quadratic anchor terms."""
    u = spec.n_steps
    X = np.zeros((u, spec.p))
    for name, f in series.items():
        X += np.outer(f, spec.loadings[name])
        if name in spec.quadratic:
            lq = spec.quadratic_loadings.get(name, spec.loadings[name])
            X += spec.quadratic[name] * np.outer(f * f, lq)
    return X


def generate(spec: ScmSpec, runs: int = 10, kind: str = "forced", interventions: Sequence[Intervention] = (),
             phase: str = "train", model_id: str = "M0", seed=None, run_prefix: str | None = None) -> Dataset:
    """Generate ``runs`` runs of one kind for one model.

    Noise for run ``r`` comes from the ``r``-th child of
    ``SeedSequence(seed if given else spec.seed)``, so the output is
    deterministic and independent of generation order.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    series = run_series(spec, kind, interventions, phase)
    S = signal(spec, series)
    y = series[spec.target]
    A = np.column_stack([series[a] for a in spec.anchors])
    L = noise_factor(spec.p, spec.noise_corr_len)
    children = _seq(spec.seed if seed is None else seed).spawn(runs)
    prefix = run_prefix if run_prefix is not None else kind[0]
    out = []
    for r, child in enumerate(children):
        eps = _noise(spec, np.random.default_rng(child), spec.n_steps, L)
        out.append((RunMeta(model_id, f"{prefix}{r}", kind, spec.n_steps), S + eps, y, A))
    return Dataset.from_runs(out, spec.target, spec.anchors)


def ensemble(spec: ScmSpec, n_models: int = 20, forced_runs: int = 5, control_runs: int = 5,
             loading_spread: float = 0.2, noise_spread: float = 0.2, interventions: Sequence[Intervention] = (),
             phase: str = "train", seed=None) -> Dataset:
    """Multi-model ensemble: each model perturbs the loadings and noise level of ``spec``.

    Model ``m`` uses ``loading_f * (1 + loading_spread * z)`` cellwise with
    ``z`` standard normal, and ``noise_sigma * exp(noise_spread * z')``.
    """
    base = spec.seed if seed is None else seed
    model_seqs = _seq(base).spawn(n_models)
    parts = []
    for m, ss in enumerate(model_seqs):
        pert_ss, forced_ss, control_ss = ss.spawn(3)
        rng = np.random.default_rng(pert_ss)
        loadings = {k: v * (1.0 + loading_spread * rng.standard_normal(spec.p)) for k, v in spec.loadings.items()}
        sigma = spec.noise_sigma * math.exp(noise_spread * rng.standard_normal())
        ms = spec.replace(loadings=loadings, noise_sigma=sigma)
        mid = f"M{m:02d}"
        if forced_runs:
            parts.append(generate(ms, forced_runs, "forced", interventions, phase, mid, forced_ss))
        if control_runs:
            parts.append(generate(ms, control_runs, "control", interventions, phase, mid, control_ss))
    return concat(parts)




def motivating_scenario(seed=0, p: int = 100, n_steps: int = 140, replicates: int = 4,
                        train_levels: Sequence[float] = (-6.0, 0.0, 6.0),
                        test_levels: Sequence[float] = (-25.0, 0.0, 25.0),
                        noise_sigma: float = 1.0, cosine: float = 0.5, solar_gain: float = 0.15,
                        noise_corr_len: float = 3.0) -> tuple[Dataset, Dataset]:
    """Train/test pair for the CO2-plus-solar robustness experiment.

    The target is a 1 %-per-step CO2 ramp; the anchor is a solar-constant
    offset (in the units of ``train_levels``) held fixed within each run. For
    every solar level and replicate there is one model with a ramp run
    (``forced``) and a flat run (``control``: no CO2, solar still set). The
    field responds to the solar offset through ``solar_gain`` times its
    loading, which has cosine ``cosine`` with the CO2 loading. Training uses
    modest offsets, testing uses about four times larger ones. Both sets share
    the loadings drawn from ``seed`` and use different noise seeds.
    """
    ss_load, ss_train, ss_test = _seq(seed).spawn(3)
    loadings = make_loadings(p, ["co2", "solar"], ss_load, cosine)
    loadings["solar"] = loadings["solar"] * solar_gain
    spec = ScmSpec(p, {"co2": co2_ramp(n_steps), "solar": np.zeros(n_steps)}, loadings, "co2", ("solar",),
                   noise_sigma, noise_corr_len)

    def build(levels, ss, phase):
        parts = []
        seqs = iter(ss.spawn(len(levels) * replicates))
        for v in levels:
            iv = [Intervention("solar", "shift", float(v), phase)]
            for r in range(replicates):
                mid = f"solar{v:+g}_r{r}"
                fs, cs = next(seqs).spawn(2)
                parts.append(generate(spec, 1, "forced", iv, phase, mid, fs, run_prefix="ramp"))
                parts.append(generate(spec, 1, "control", iv, phase, mid, cs, run_prefix="flat"))
        return concat(parts)

    return build(train_levels, ss_train, "train"), build(test_levels, ss_test, "test")


def quadratic_scenario(seed=0, p: int = 60, n_steps: int = 100, n_models: int = 20, runs: int = 3,
                       curvature: float = 1.0, anchor_sd: float = 0.5, test_spread: float = 3.0,
                       noise_sigma: float = 1.0, cosine: float = 0.5, anchor_gain: float = 1.0,
                       noise_corr_len: float = 0.0) -> tuple[Dataset, Dataset]:
    """Train/test pair where the anchor acts on the field through ``a`` and ``a**2``.

    The anchor is an independent Gaussian series per run (standard deviation
    ``anchor_sd``, times ``test_spread`` in the test set); the target is a
    linear ramp plus its own Gaussian variability. ``a`` and ``curvature *
    a**2`` imprint through two different patterns, each with cosine
    ``cosine`` to the target pattern and scaled by ``anchor_gain``.
    """
    ss_load, ss_train, ss_test = _seq(seed).spawn(3)
    pats = make_loadings(p, ["target", "anchor", "anchor_sq"], ss_load, cosine)
    loadings = {"target": pats["target"], "anchor": anchor_gain * pats["anchor"]}
    qload = {"anchor": anchor_gain * pats["anchor_sq"]}
    t = np.linspace(0.0, 1.0, n_steps)

    def build(ss, sd, phase):
        parts = []
        for m, ms in enumerate(ss.spawn(n_models)):
            for r, rs in enumerate(ms.spawn(runs)):
                f_ss, n_ss = rs.spawn(2)
                rng = np.random.default_rng(f_ss)
                y = 2.0 * t + 0.5 * rng.standard_normal(n_steps)
                a = sd * rng.standard_normal(n_steps)
                spec = ScmSpec(p, {"target": y, "anchor": a}, loadings, "target", ("anchor",), noise_sigma,
                               noise_corr_len, quadratic={"anchor": curvature}, quadratic_loadings=qload)
                parts.append(generate(spec, 1, "forced", (), phase, f"Q{m:02d}", n_ss, run_prefix=f"r{r}_"))
        return concat(parts)

    return build(ss_train, anchor_sd, "train"), build(ss_test, test_spread * anchor_sd, "test")
