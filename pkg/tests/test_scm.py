import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorfp.scm import (Intervention, ScmSpec, co2_ramp, ensemble, generate, make_loadings, motivating_scenario,
                          noise_factor, quadratic_scenario, run_series, signal, solar_radiative_forcing)


def small_spec(p=8, u=20, sigma=1.0, corr=2.0, seed=0, **kw):
    t = np.linspace(0, 1, u)
    loads = make_loadings(p, ["y", "a"], seed, cosine=0.3)
    return ScmSpec(p, {"y": t, "a": np.sin(6 * t)}, loads, "y", ("a",), sigma, corr, seed, **kw)


class TestForcingHelpers:
    def test_co2_ramp_shape(self):
        f = co2_ramp(140)
        assert f.shape == (140,)
        assert f[0] == pytest.approx(5.35 * math.log(1.01))
        assert f[-1] == pytest.approx(5.35 * 140 * math.log(1.01))
        assert np.all(np.diff(f) > 0)

    @pytest.mark.parametrize("dS, albedo, expected", [(6.0, 0.3, 1.05), (0.0, 0.3, 0.0), (6.0, 1.0, 0.0),
                                                      (-4.0, 0.0, -1.0)])
    def test_solar(self, dS, albedo, expected):
        assert solar_radiative_forcing(dS, albedo) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("albedo", [-0.1, 1.1])
    def test_solar_bad_albedo(self, albedo):
        with pytest.raises(ValueError):
            solar_radiative_forcing(1.0, albedo)


class TestNoiseAndLoadings:
    @pytest.mark.parametrize("corr", [0.0, 1.0, 5.0])
    def test_unit_cell_variance(self, corr):
        L = noise_factor(30, corr)
        np.testing.assert_allclose(np.diag(L @ L.T), 1.0, atol=1e-12)

    def test_correlation_decays(self):
        C = (lambda L: L @ L.T)(noise_factor(30, 3.0))
        assert C[15, 16] > C[15, 18] > C[15, 25]
        assert C[15, 16] == pytest.approx(math.exp(-1 / 18), abs=0.02)

    @pytest.mark.parametrize("cos", [0.0, 0.5, 0.9, -0.4])
    def test_cosine(self, cos):
        ld = make_loadings(40, ["a", "b", "c"], 3, cos)
        for k in ld:
            assert np.linalg.norm(ld[k]) == pytest.approx(math.sqrt(40))
        assert ld["a"] @ ld["b"] / 40 == pytest.approx(cos)
        assert ld["a"] @ ld["c"] / 40 == pytest.approx(cos)


class TestGenerate:
    def test_noiseless_identity(self):
        spec = small_spec(sigma=1e-12)
        d = generate(spec, 2, "forced")
        expected = np.outer(spec.forcings["y"], spec.loadings["y"]) + np.outer(spec.forcings["a"], spec.loadings["a"])
        np.testing.assert_allclose(d.X[:20], expected, atol=1e-9)
        np.testing.assert_array_equal(d.Y[:20], spec.forcings["y"])
        np.testing.assert_array_equal(d.A[:20, 0], spec.forcings["a"])

    def test_deterministic(self):
        a, b = generate(small_spec(), 3, seed=5), generate(small_spec(), 3, seed=5)
        np.testing.assert_array_equal(a.X, b.X)
        assert not np.array_equal(a.X, generate(small_spec(), 3, seed=6).X)

    def test_run_noise_independent_of_run_count(self):
        a, b = generate(small_spec(), 2, seed=5), generate(small_spec(), 4, seed=5)
        np.testing.assert_array_equal(a.X, b.X[:40])

    def test_control_moments(self):
        spec = small_spec(p=20, u=500, sigma=2.0, corr=0.0)
        d = generate(spec, 4, "control", seed=1)
        assert np.all(d.Y == 0) and np.all(d.A == 0)
        assert abs(d.X.mean()) < 0.05
        assert d.X.std() == pytest.approx(2.0, rel=0.03)

    def test_shift_adds_its_pattern(self):
        spec = small_spec()
        iv = [Intervention("a", "shift", 3.0, "train")]
        base, moved = generate(spec, 1, seed=2), generate(spec, 1, interventions=iv, seed=2)
        np.testing.assert_allclose(moved.X - base.X, np.tile(3.0 * spec.loadings["a"], (20, 1)), atol=1e-12)
        np.testing.assert_array_equal(moved.Y, base.Y)
        np.testing.assert_allclose(moved.A - base.A, 3.0)

    def test_scale_intervention(self):
        spec = small_spec()
        iv = [Intervention("a", "scale", -2.0, "train")]
        s = run_series(spec, "forced", iv, "train")
        np.testing.assert_allclose(s["a"], -2 * spec.forcings["a"])
        np.testing.assert_array_equal(s["y"], spec.forcings["y"])

    def test_phase_gating(self):
        iv = [Intervention("a", "shift", 3.0, "test")]
        s = run_series(small_spec(), "forced", iv, "train")
        np.testing.assert_array_equal(s["a"], small_spec().forcings["a"])

    def test_intervention_on_target_rejected(self):
        with pytest.raises(ValueError, match="anchors only"):
            generate(small_spec(), 1, interventions=[Intervention("y", "shift", 1.0, "train")])

    def test_control_with_shift_holds_level(self):
        d = generate(small_spec(), 1, "control", [Intervention("a", "shift", 4.0, "train")])
        np.testing.assert_array_equal(d.A[:, 0], 4.0)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=25, deadline=None)
    def test_linear_in_forcings(self, c1, c2):
        spec = small_spec()
        f1 = {"y": spec.forcings["y"], "a": np.zeros(20)}
        f2 = {"y": np.zeros(20), "a": spec.forcings["a"]}
        mix = {k: c1 * f1[k] + c2 * f2[k] for k in f1}
        np.testing.assert_allclose(signal(spec, mix), c1 * signal(spec, f1) + c2 * signal(spec, f2), atol=1e-10)

    def test_quadratic_term(self):
        spec = small_spec(quadratic={"a": 0.7})
        a = spec.forcings["a"]
        S = signal(spec, {"y": np.zeros(20), "a": a})
        np.testing.assert_allclose(S, np.outer(a + 0.7 * a * a, spec.loadings["a"]), atol=1e-12)

    @pytest.mark.parametrize("kw", [dict(target="a"), dict(anchors=("y",)), dict(noise_sigma=0.0),
                                    dict(quadratic={"y": 1.0})])
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            small_spec().replace(**kw)


class TestScenarios:
    def test_ensemble_layout(self):
        d = ensemble(small_spec(), n_models=4, forced_runs=2, control_runs=3, seed=1)
        assert d.model_ids == ["M00", "M01", "M02", "M03"]
        assert sum(r.kind == "control" for r in d.runs) == 12
        assert sum(r.kind == "forced" for r in d.runs) == 8

    def test_motivating_levels(self):
        tr, te = motivating_scenario(seed=0, p=20, n_steps=30, replicates=2)
        assert set(np.unique(tr.A)) == {-6.0, 0.0, 6.0}
        assert set(np.unique(te.A)) == {-25.0, 0.0, 25.0}
        assert len(tr.model_ids) == 6 and len(tr.runs) == 12
        ramp = [i for i, r in enumerate(tr.runs) if r.kind == "forced"][0]
        np.testing.assert_allclose(tr.Y[tr.run_rows(ramp)], co2_ramp(30))

    def test_quadratic_scenario_spread(self):
        tr, te = quadratic_scenario(seed=0, p=20, n_steps=200, n_models=4, runs=1)
        assert te.A.std() == pytest.approx(3 * tr.A.std(), rel=0.15)
